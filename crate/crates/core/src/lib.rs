//! Score-based generative modeling and diffusion Schrödinger bridges on the
//! unit 2-sphere.
//!
//! The crate is organized bottom-up:
//!
//! - [`manifold`]: geometry of S² embedded in R³ (projections, exp/log maps,
//!   tangent bases, Riemannian divergence).
//! - [`sde`]: noise schedules, time grids and the geodesic random walk used to
//!   simulate forward (noising) and backward (generating) diffusions.
//! - [`net`]: the drift networks, with exact directional derivatives and
//!   hand-written reverse-mode gradients, plus an Adam optimizer.
//! - [`loss`]: the implicit drift-matching objective, where the intractable
//!   score is traded for a divergence term.
//! - [`ipf`]: the iterative proportional fitting loop alternating backward and
//!   forward drift training.
//! - [`ode`]: probability-flow integration and exact log-likelihoods.
//! - [`data`]: lat/lon ingestion, synthetic samplers, MMD and export.
//! - [`cli`]: run configuration and the workflows behind the `sbridge` binary.

pub mod cli;
pub mod data;
mod error;
pub mod ipf;
pub mod loss;
pub mod manifold;
pub mod net;
pub mod ode;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
pub use manifold::{Sphere2, SpherePoint, TangentBasis, TangentVector};
