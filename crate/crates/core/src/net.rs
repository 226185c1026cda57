//! Drift networks `(t, x) ↦ v ∈ T_x S²` with exact directional derivatives and
//! hand-written gradients.
//!
//! Architecture: the input `z = [x, sin(2^j π t/T), cos(2^j π t/T)]_{j<K}` goes
//! through four affine+SiLU blocks of width `W`, then an affine map to R³ whose
//! output `u` is projected onto the tangent plane, `r = u - <u, x> x`. The final
//! affine map is zero-initialized, so a fresh model is the zero drift.
//!
//! Divergence terms need derivatives of the network along tangent directions.
//! These are propagated forward (tangent rows stacked under the primal rows of
//! every layer, so one matmul serves all of them), and gradients of losses that
//! contain them are obtained by reverse mode over that forward-mode
//! computation ("reverse-over-forward"): the backward pass carries adjoints for
//! both primal and tangent activations and picks up the `σ''` cross term.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::manifold::{project_vec, tangent_basis, SpherePoint, Vec3};
use crate::rng::StreamRng;
use crate::sde::TimeDrift;
use crate::{Error, Result};

pub const HIDDEN_LAYERS: usize = 4;
pub const DEFAULT_WIDTH: usize = 128;
pub const PAPER_WIDTH: usize = 512;
pub const DEFAULT_TIME_FEATURES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `a · sigmoid(a)`
    Silu,
    /// Identity; only useful for testing derivative code on a linear network.
    Identity,
}

impl Activation {
    fn code(self) -> u32 {
        match self {
            Activation::Silu => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Silu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Identity => "identity",
        }
    }

    /// `(σ(a), σ'(a), σ''(a))`
    #[inline]
    fn eval(self, a: f64) -> (f64, f64, f64) {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-a).exp());
                let d1 = s * (1.0 + a * (1.0 - s));
                let d2 = s * (1.0 - s) * (2.0 + a * (1.0 - 2.0 * s));
                (a * s, d1, d2)
            }
            Activation::Identity => (a, 1.0, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    pub width: usize,
    /// Number of sinusoid frequencies; the time embedding has `2K` entries.
    pub time_features: usize,
    /// Time horizon `T` used to scale the time embedding.
    pub horizon: f64,
    pub activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            width: DEFAULT_WIDTH,
            time_features: DEFAULT_TIME_FEATURES,
            horizon: 1.0,
            activation: Activation::Silu,
        }
    }
}

impl NetConfig {
    pub fn input_dim(&self) -> usize {
        3 + 2 * self.time_features
    }

    /// `(out, in)` of each affine map.
    fn shapes(&self) -> Vec<(usize, usize)> {
        let w = self.width;
        let mut v = vec![(w, self.input_dim())];
        v.extend(std::iter::repeat((w, w)).take(HIDDEN_LAYERS - 1));
        v.push((3, w));
        v
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    w_off: usize,
    b_off: usize,
    out: usize,
    inp: usize,
}

fn layout(cfg: &NetConfig) -> Vec<Affine> {
    let mut off = 0;
    cfg.shapes()
        .into_iter()
        .map(|(out, inp)| {
            let a = Affine {
                w_off: off,
                b_off: off + out * inp,
                out,
                inp,
            };
            off += out * inp + out;
            a
        })
        .collect()
}

/// Directions along which a taped pass propagates derivatives, with the
/// weights used to contract them into a divergence estimate.
#[derive(Clone, Debug)]
pub struct Probes {
    per_point: usize,
    /// `dirs[i * per_point + j]`, tangent at point `i`.
    dirs: Vec<Vec3>,
    weights: Vec<f64>,
}

impl Probes {
    /// The tangent basis at every point, unit weights: contracting gives the
    /// exact divergence.
    pub fn basis(xs: &[SpherePoint]) -> Self {
        let dirs = xs
            .iter()
            .flat_map(|x| tangent_basis(x).vectors())
            .collect();
        Probes {
            per_point: 2,
            dirs,
            weights: vec![1.0; 2],
        }
    }

    /// `m` projected standard Gaussian probes per point, weights `1/m`.
    /// Since `E[P ξ ξᵀ P] = P`, the contraction is unbiased for the divergence.
    pub fn hutchinson(xs: &[SpherePoint], m: usize, rng: &mut StreamRng) -> Self {
        let m = m.max(1);
        let dirs = xs
            .iter()
            .flat_map(|x| {
                (0..m)
                    .map(|_| {
                        let xi = Vec3::new(
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                        );
                        project_vec(x.coords(), &xi)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Probes {
            per_point: m,
            dirs,
            weights: vec![1.0 / m as f64; m],
        }
    }

    /// Arbitrary directions, `per_point` per point, unit weights.
    pub fn explicit(dirs: Vec<Vec3>, per_point: usize) -> Self {
        Probes {
            per_point,
            dirs,
            weights: vec![1.0; per_point],
        }
    }

    pub fn per_point(&self) -> usize {
        self.per_point
    }

    pub fn dir(&self, i: usize, j: usize) -> &Vec3 {
        &self.dirs[i * self.per_point + j]
    }
}

/// Activations recorded by [`DriftModel::record`], needed by [`DriftModel::backward`].
pub struct Tape {
    version: u64,
    model_id: u64,
    batch: usize,
    probes: Option<Probes>,
    xs: Vec<SpherePoint>,
    /// Stacked inputs of every affine map (primal rows then one block per probe).
    inputs: Vec<Array2<f64>>,
    /// Stacked pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    /// Stacked raw outputs `u` and `u̇_j`.
    u: Array2<f64>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }

    fn u_row(&self, row: usize) -> Vec3 {
        Vec3::new(self.u[[row, 0]], self.u[[row, 1]], self.u[[row, 2]])
    }

    /// Tangent outputs `r_i = P(x_i) u_i`.
    pub fn outputs(&self) -> Vec<Vec3> {
        (0..self.batch)
            .map(|i| project_vec(self.xs[i].coords(), &self.u_row(i)))
            .collect()
    }

    /// Directional derivative of the output map at point `i` along probe `j`,
    /// including the derivative of the projection head.
    pub fn jvp(&self, i: usize, j: usize) -> Option<Vec3> {
        let probes = self.probes.as_ref()?;
        let x = self.xs[i].coords();
        let d = probes.dir(i, j);
        let u = self.u_row(i);
        let ud = self.u_row((1 + j) * self.batch + i);
        Some(ud - x * (ud.dot(x) + u.dot(d)) - d * u.dot(x))
    }

    /// `Σ_j w_j <ṙ_ij, d_ij>` per point; the exact divergence for basis probes.
    pub fn divergence(&self) -> Option<Vec<f64>> {
        let probes = self.probes.as_ref()?;
        Some(
            (0..self.batch)
                .map(|i| {
                    let x = self.xs[i].coords();
                    let ux = self.u_row(i).dot(x);
                    (0..probes.per_point)
                        .map(|j| {
                            let d = probes.dir(i, j);
                            let ud = self.u_row((1 + j) * self.batch + i);
                            // <ṙ, d> = <u̇, d> - <u, x>|d|² for d ⟂ x
                            probes.weights[j] * (ud.dot(d) - ux * d.norm_squared())
                        })
                        .sum()
                })
                .collect(),
        )
    }
}

/// Adjoints of a scalar loss `Σ_i <out_i, r_i> + div_i · divergence_i`.
#[derive(Clone, Debug, Default)]
pub struct LossAdjoints {
    pub out: Vec<Vec3>,
    /// Empty when the loss has no divergence term.
    pub div: Vec<f64>,
}

static NEXT_MODEL_ID: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(1);

/// A drift network with its gradient buffer.
#[derive(Debug)]
pub struct DriftModel {
    config: NetConfig,
    layers: Vec<Affine>,
    params: Vec<f64>,
    grad: Vec<f64>,
    version: u64,
    id: u64,
}

impl Clone for DriftModel {
    fn clone(&self) -> Self {
        DriftModel {
            config: self.config,
            layers: self.layers.clone(),
            params: self.params.clone(),
            grad: self.grad.clone(),
            version: 0,
            id: NEXT_MODEL_ID.fetch_add(1, std::sync::atomic::Ordering::Relaxed),
        }
    }
}

impl PartialEq for DriftModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl DriftModel {
    /// All parameters zero.
    pub fn zeros(config: NetConfig) -> Self {
        let n = config.param_count();
        DriftModel {
            layers: layout(&config),
            config,
            params: vec![0.0; n],
            grad: vec![0.0; n],
            version: 0,
            id: NEXT_MODEL_ID.fetch_add(1, std::sync::atomic::Ordering::Relaxed),
        }
    }

    /// Fan-in scaled uniform init for the hidden blocks, zero output map.
    pub fn new<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Self {
        let mut m = Self::zeros(config);
        let last = m.layers.len() - 1;
        for (li, a) in m.layers.clone().iter().enumerate() {
            if li == last {
                continue;
            }
            let bound = 1.0 / (a.inp as f64).sqrt();
            for p in &mut m.params[a.w_off..a.b_off + a.out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        m
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates existing tapes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// True if the output map is exactly zero, so the model is the zero drift.
    pub fn is_zero_drift(&self) -> bool {
        let a = self.layers.last().unwrap();
        self.params[a.w_off..a.b_off + a.out].iter().all(|&p| p == 0.0)
    }

    /// Copies parameters from a model with the same configuration.
    pub fn warm_start(&mut self, previous: &DriftModel) -> Result<()> {
        if previous.config != self.config {
            return Err(Error::ShapeMismatch(format!(
                "cannot warm start {:?} from {:?}",
                self.config, previous.config
            )));
        }
        self.params.copy_from_slice(&previous.params);
        self.version += 1;
        Ok(())
    }

    fn weight(&self, a: &Affine) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((a.out, a.inp), &self.params[a.w_off..a.b_off]).unwrap()
    }

    fn time_embedding(&self, t: f64, out: &mut [f64]) {
        let base = std::f64::consts::PI * t / self.config.horizon;
        for j in 0..self.config.time_features {
            let arg = base * (1u64 << j) as f64;
            out[2 * j] = arg.sin();
            out[2 * j + 1] = arg.cos();
        }
    }

    /// Forward pass for a batch, recording what the backward pass needs.
    ///
    /// With `probes`, derivatives along each probe direction are propagated too.
    pub fn record(&self, ts: &[f64], xs: &[SpherePoint], probes: Option<Probes>) -> Tape {
        assert_eq!(ts.len(), xs.len());
        let b = xs.len();
        let m = probes.as_ref().map_or(0, |p| p.per_point);
        if let Some(p) = &probes {
            assert_eq!(p.dirs.len(), b * m, "probe count does not match batch");
        }
        let rows = (1 + m) * b;
        let din = self.config.input_dim();
        let mut z = Array2::<f64>::zeros((rows, din));
        for i in 0..b {
            let mut row = z.row_mut(i);
            let c = xs[i].coords();
            row[0] = c.x;
            row[1] = c.y;
            row[2] = c.z;
            self.time_embedding(ts[i], row.as_slice_mut().unwrap().split_at_mut(3).1);
            if let Some(p) = &probes {
                for j in 0..m {
                    let d = p.dir(i, j);
                    let mut r = z.row_mut((1 + j) * b + i);
                    r[0] = d.x;
                    r[1] = d.y;
                    r[2] = d.z;
                }
            }
        }

        let act = self.config.activation;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(HIDDEN_LAYERS);
        let mut current = z;
        let last = self.layers.len() - 1;
        for (li, a) in self.layers.iter().enumerate() {
            let mut out = current.dot(&self.weight(a).t());
            let bias = &self.params[a.b_off..a.b_off + a.out];
            for mut row in out.slice_mut(s![..b, ..]).rows_mut() {
                row.iter_mut().zip(bias).for_each(|(v, bb)| *v += bb);
            }
            inputs.push(current);
            if li == last {
                current = out;
                break;
            }
            let mut h = Array2::<f64>::zeros(out.raw_dim());
            for i in 0..b {
                for k in 0..a.out {
                    let (v, d1, _) = act.eval(out[[i, k]]);
                    h[[i, k]] = v;
                    for j in 0..m {
                        let r = (1 + j) * b + i;
                        h[[r, k]] = d1 * out[[r, k]];
                    }
                }
            }
            pre.push(out);
            current = h;
        }
        Tape {
            version: self.version,
            model_id: self.id,
            batch: b,
            probes,
            xs: xs.to_vec(),
            inputs,
            pre,
            u: current,
        }
    }

    /// Tangent drift at per-point times.
    pub fn forward_batch(&self, ts: &[f64], xs: &[SpherePoint]) -> Vec<Vec3> {
        self.record(ts, xs, None).outputs()
    }

    pub fn forward(&self, t: f64, x: &SpherePoint) -> Vec3 {
        self.forward_batch(&[t], std::slice::from_ref(x))[0]
    }

    /// Output and its directional derivative along `dir`.
    pub fn forward_jvp(&self, t: f64, x: &SpherePoint, dir: &Vec3) -> (Vec3, Vec3) {
        let tape = self.record(&[t], std::slice::from_ref(x), Some(Probes::explicit(vec![*dir], 1)));
        (tape.outputs()[0], tape.jvp(0, 0).unwrap())
    }

    /// Outputs and exact divergences (two derivative passes per point).
    pub fn forward_with_divergence(&self, ts: &[f64], xs: &[SpherePoint]) -> (Vec<Vec3>, Vec<f64>) {
        let tape = self.record(ts, xs, Some(Probes::basis(xs)));
        (tape.outputs(), tape.divergence().unwrap())
    }

    /// Accumulates `∂loss/∂θ` into `grad`.
    pub fn backward_into(&self, tape: &Tape, adj: &LossAdjoints, grad: &mut [f64]) -> Result<()> {
        self.backward_impl(tape, adj, grad, false).map(|_| ())
    }

    /// Accumulates `∂loss/∂θ` into the model's own gradient buffer.
    pub fn backward(&mut self, tape: &Tape, adj: &LossAdjoints) -> Result<()> {
        let mut g = std::mem::take(&mut self.grad);
        let r = self.backward_impl(tape, adj, &mut g, false);
        self.grad = g;
        r.map(|_| ())
    }

    /// Ambient gradient w.r.t. `x` of `<r(t, x), a>`.
    pub fn input_vjp(&self, t: f64, x: &SpherePoint, a: &Vec3) -> Vec3 {
        let tape = self.record(&[t], std::slice::from_ref(x), None);
        let adj = LossAdjoints {
            out: vec![*a],
            div: vec![],
        };
        let mut scratch = vec![0.0; self.params.len()];
        let zbar = self.backward_impl(&tape, &adj, &mut scratch, true).unwrap().unwrap();
        // r = u - <u, x> x contributes its explicit x-dependence
        let u = tape.u_row(0);
        let xc = x.coords();
        zbar - a * u.dot(xc) - u * a.dot(xc)
    }

    fn backward_impl(
        &self,
        tape: &Tape,
        adj: &LossAdjoints,
        grad: &mut [f64],
        want_input: bool,
    ) -> Result<Option<Vec3>> {
        if tape.version != self.version || tape.model_id != self.id {
            return Err(Error::StaleTape);
        }
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch("gradient buffer length".into()));
        }
        let b = tape.batch;
        if adj.out.len() != b || !(adj.div.is_empty() || adj.div.len() == b) {
            return Err(Error::ShapeMismatch("adjoint length".into()));
        }
        let has_div = !adj.div.is_empty();
        if has_div && tape.probes.is_none() {
            return Err(Error::StaleTape);
        }
        let m = tape.probes.as_ref().map_or(0, |p| p.per_point);
        let rows = (1 + m) * b;

        // adjoint of the stacked raw outputs
        let mut g = Array2::<f64>::zeros((rows, 3));
        for i in 0..b {
            let x = tape.xs[i].coords();
            let mut ubar = project_vec(x, &adj.out[i]);
            if has_div {
                let p = tape.probes.as_ref().unwrap();
                let kappa = adj.div[i];
                let mut s = 0.0;
                for j in 0..m {
                    let d = p.dir(i, j);
                    s += p.weights[j] * d.norm_squared();
                    let ud = d * (kappa * p.weights[j]);
                    let r = (1 + j) * b + i;
                    g[[r, 0]] = ud.x;
                    g[[r, 1]] = ud.y;
                    g[[r, 2]] = ud.z;
                }
                ubar -= x * (kappa * s);
            }
            g[[i, 0]] = ubar.x;
            g[[i, 1]] = ubar.y;
            g[[i, 2]] = ubar.z;
        }

        let act = self.config.activation;
        let nl = self.layers.len();
        for li in (0..nl).rev() {
            let a = &self.layers[li];
            if li < nl - 1 {
                // g holds adjoints of this layer's activations; map to pre-activations
                let pre = &tape.pre[li];
                for i in 0..b {
                    for k in 0..a.out {
                        let (_, d1, d2) = act.eval(pre[[i, k]]);
                        let mut primal = g[[i, k]] * d1;
                        for j in 0..m {
                            let r = (1 + j) * b + i;
                            primal += g[[r, k]] * d2 * pre[[r, k]];
                            g[[r, k]] *= d1;
                        }
                        g[[i, k]] = primal;
                    }
                }
            }
            let input = &tape.inputs[li];
            {
                let gw = &mut grad[a.w_off..a.b_off];
                let mut gw = ArrayViewMut2::from_shape((a.out, a.inp), gw).unwrap();
                general_mat_mul(1.0, &g.t(), input, 1.0, &mut gw);
            }
            let gb = g.slice(s![..b, ..]).sum_axis(Axis(0));
            grad[a.b_off..a.b_off + a.out]
                .iter_mut()
                .zip(gb.iter())
                .for_each(|(p, v)| *p += v);
            if li > 0 || want_input {
                g = g.dot(&self.weight(a));
            }
        }
        Ok(want_input.then(|| Vec3::new(g[[0, 0]], g[[0, 1]], g[[0, 2]])))
    }

    // -- checkpoints -------------------------------------------------------

    const MAGIC: [u8; 8] = *b"SBDRIFT\0";
    pub const FORMAT_VERSION: u32 = 1;
    const HEADER_LEN: usize = 8 + 4 * 4 + 8 + 8;

    /// Little-endian: magic `SBDRIFT\0`, u32 version, u32 width, u32 time
    /// features, u32 activation code, f64 horizon, u64 parameter count, then
    /// the raw f64 parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(Self::HEADER_LEN + 8 * self.params.len());
        buf.extend_from_slice(&Self::MAGIC);
        buf.extend_from_slice(&Self::FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.config.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.config.time_features as u32).to_le_bytes());
        buf.extend_from_slice(&self.config.activation.code().to_le_bytes());
        buf.extend_from_slice(&self.config.horizon.to_le_bytes());
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < Self::HEADER_LEN {
            return Err(Error::CorruptFile("truncated header".into()));
        }
        if bytes[..8] != Self::MAGIC {
            return Err(Error::CorruptFile("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != Self::FORMAT_VERSION {
            return Err(Error::FormatMismatch(format!(
                "version {version}, expected {}",
                Self::FORMAT_VERSION
            )));
        }
        let activation = Activation::from_code(u32_at(20))
            .ok_or_else(|| Error::CorruptFile("unknown activation".into()))?;
        let config = NetConfig {
            width: u32_at(12) as usize,
            time_features: u32_at(16) as usize,
            horizon: f64::from_le_bytes(bytes[24..32].try_into().unwrap()),
            activation,
        };
        let count = u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize;
        if count != config.param_count() {
            return Err(Error::CorruptFile(format!(
                "parameter count {count} inconsistent with width {} / features {}",
                config.width, config.time_features
            )));
        }
        let body = &bytes[Self::HEADER_LEN..];
        if body.len() != 8 * count {
            return Err(Error::CorruptFile("parameter block has the wrong length".into()));
        }
        let mut model = DriftModel::zeros(config);
        for (p, chunk) in model.params.iter_mut().zip(body.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// [`DriftModel::load`], failing with `FormatMismatch` unless the file's
    /// configuration equals `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &NetConfig) -> Result<Self> {
        let m = Self::load(path)?;
        if m.config != *expected {
            return Err(Error::FormatMismatch(format!(
                "checkpoint has {:?}, expected {:?}",
                m.config, expected
            )));
        }
        Ok(m)
    }
}

impl TimeDrift for DriftModel {
    fn drift_at(&self, ts: &[f64], xs: &[SpherePoint]) -> Vec<Vec3> {
        if self.is_zero_drift() {
            return vec![Vec3::zeros(); xs.len()];
        }
        self.forward_batch(ts, xs)
    }

    fn is_zero(&self) -> bool {
        self.is_zero_drift()
    }
}

/// Adam with global-norm gradient clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients with a larger global norm are rescaled to this norm.
    pub clip: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

impl OptimizerState {
    pub const DEFAULT_LR: f64 = 2e-4;

    pub fn new(param_count: usize, lr: f64) -> Self {
        OptimizerState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: Some(10.0),
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn for_model(model: &DriftModel, lr: f64) -> Self {
        Self::new(model.param_count(), lr)
    }

    /// Applies one update from the model's gradient buffer and clears it.
    ///
    /// A non-finite gradient aborts the step, leaving parameters and moments untouched.
    pub fn step(&mut self, model: &mut DriftModel) -> Result<StepStats> {
        if self.m.len() != model.params.len() {
            return Err(Error::ShapeMismatch("optimizer state does not match the model".into()));
        }
        if let Some(index) = model.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                index,
                context: String::new(),
            });
        }
        let norm = model.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = match self.clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in model
            .params
            .iter_mut()
            .zip(model.grad.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let g = g * scale;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
        model.version += 1;
        model.zero_grad();
        Ok(StepStats { grad_norm: norm })
    }
}
