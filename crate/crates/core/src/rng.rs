//! Deterministic random streams.
//!
//! Every parallel worker draws from its own ChaCha stream keyed by a run seed
//! and a short path of counters (worker index, batch counter, phase...), so
//! results depend only on the seed and the worker count, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed and a path of counters into a single 64-bit key.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Independent stream for `(seed, path...)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// A position in the tree of random streams of a run, plus the number of
/// parallel workers that chunked computations split into.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
    path: Vec<u64>,
    workers: usize,
}

impl Streams {
    pub fn new(seed: u64, workers: usize) -> Self {
        Streams {
            seed,
            path: Vec::new(),
            workers: workers.max(1),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Sub-stream keyed by `key` under this node.
    pub fn child(&self, key: u64) -> Self {
        let mut path = self.path.clone();
        path.push(key);
        Streams {
            seed: self.seed,
            path,
            workers: self.workers,
        }
    }

    /// The rng of this node itself.
    pub fn rng(&self) -> StreamRng {
        stream(self.seed, &self.path)
    }

    /// The private rng of worker `w` under this node.
    pub fn worker_rng(&self, w: usize) -> StreamRng {
        self.child(WORKER_TAG).child(w as u64).rng()
    }

    /// Splits `len` items into at most `workers` contiguous chunks.
    pub fn chunk_len(&self, len: usize) -> usize {
        len.div_ceil(self.workers).max(1)
    }
}

const WORKER_TAG: u64 = 0x574F_524B;
