//! Implicit drift matching.
//!
//! For a process with marginals `p_t` and forward drift `f`, the drift
//! `b = -f + g² ∇log p_t` minimizes
//!
//! ```text
//! E[ ½ |f(t, X_t) + r(X_t)|² + g²(t) div(r)(X_t) ]
//! ```
//!
//! over tangent fields `r`; the divergence theorem moves the score onto `r`.
//! The same objective trains the backward drift on forward paths and the
//! forward drift on backward paths, with the roles of trainee and frozen
//! model swapped. The divergence is the spatial one at fixed `t`.

use rand::Rng;
use rayon::prelude::*;

use crate::manifold::{divergence, tangent_basis, DivergenceMode, SpherePoint, TangentField, Vec3};
use crate::net::{DriftModel, LossAdjoints, Probes};
use crate::rng::{StreamRng, Streams};
use crate::sde::{Direction, NoiseSchedule, TimeDrift, TrajectoryBatch};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DivergenceEstimator {
    /// Two directional derivatives along the tangent basis.
    Exact,
    /// Average of `<D_z r, z>` over projected Gaussian probes.
    Hutchinson { probes: usize },
    /// Central differences along geodesics; evaluation only (no gradients).
    FiniteDifference { h: f64 },
}

impl DivergenceEstimator {
    pub fn name(&self) -> String {
        match self {
            DivergenceEstimator::Exact => "exact".into(),
            DivergenceEstimator::Hutchinson { probes } => format!("hutchinson:{probes}"),
            DivergenceEstimator::FiniteDifference { h } => format!("fd:{h}"),
        }
    }

    /// Parses `exact`, `hutchinson:<m>` or `fd:<h>`.
    pub fn parse(s: &str) -> Option<Self> {
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "exact" => Some(DivergenceEstimator::Exact),
            "hutchinson" => Some(DivergenceEstimator::Hutchinson {
                probes: arg.parse().ok().filter(|&m| m > 0)?,
            }),
            "fd" | "finite_difference" => Some(DivergenceEstimator::FiniteDifference {
                h: arg.parse().ok().filter(|&h: &f64| h > 0.0)?,
            }),
            _ => None,
        }
    }
}

/// A time-dependent tangent field with directional derivatives.
pub trait DifferentiableDrift: Sync {
    fn value(&self, t: f64, x: &SpherePoint) -> Vec3;

    /// Ambient directional derivative of `x ↦ value(t, x)`, if available.
    fn jvp(&self, t: f64, x: &SpherePoint, dir: &Vec3) -> Option<Vec3>;
}

impl DifferentiableDrift for DriftModel {
    fn value(&self, t: f64, x: &SpherePoint) -> Vec3 {
        self.forward(t, x)
    }

    fn jvp(&self, t: f64, x: &SpherePoint, dir: &Vec3) -> Option<Vec3> {
        Some(self.forward_jvp(t, x, dir).1)
    }
}

/// A time-independent [`TangentField`] viewed as a drift.
pub struct Stationary<F>(pub F);

impl<F: TangentField + Sync> DifferentiableDrift for Stationary<F> {
    fn value(&self, _t: f64, x: &SpherePoint) -> Vec3 {
        self.0.value(x)
    }

    fn jvp(&self, _t: f64, x: &SpherePoint, dir: &Vec3) -> Option<Vec3> {
        self.0.directional_derivative(x, dir)
    }
}

impl<F: TangentField + Sync> TimeDrift for Stationary<F> {
    fn drift_at(&self, _ts: &[f64], xs: &[SpherePoint]) -> Vec<Vec3> {
        xs.iter().map(|x| self.0.value(x)).collect()
    }
}

struct AtTime<'a, D: ?Sized> {
    drift: &'a D,
    t: f64,
}

impl<D: DifferentiableDrift + ?Sized> TangentField for AtTime<'_, D> {
    fn value(&self, x: &SpherePoint) -> Vec3 {
        self.drift.value(self.t, x)
    }

    fn directional_derivative(&self, x: &SpherePoint, dir: &Vec3) -> Option<Vec3> {
        self.drift.jvp(self.t, x, dir)
    }
}

/// Divergence of `x ↦ trainee(t, x)` at `x`.
pub fn divergence_estimate<D: DifferentiableDrift + ?Sized>(
    trainee: &D,
    t: f64,
    x: &SpherePoint,
    mode: DivergenceEstimator,
    rng: &mut StreamRng,
) -> Result<f64> {
    let unsupported = || Error::DivergenceModeUnsupported(mode.name());
    match mode {
        DivergenceEstimator::Exact => {
            let mut div = 0.0;
            for e in tangent_basis(x).vectors() {
                div += trainee.jvp(t, x, &e).ok_or_else(unsupported)?.dot(&e);
            }
            Ok(div)
        }
        DivergenceEstimator::Hutchinson { probes } => {
            let p = Probes::hutchinson(std::slice::from_ref(x), probes, rng);
            let mut acc = 0.0;
            for j in 0..p.per_point() {
                let z = *p.dir(0, j);
                acc += trainee.jvp(t, x, &z).ok_or_else(unsupported)?.dot(&z);
            }
            Ok(acc / p.per_point() as f64)
        }
        DivergenceEstimator::FiniteDifference { h } => divergence(
            &AtTime { drift: trainee, t },
            x,
            DivergenceMode::FiniteDifference { h },
        ),
    }
}

/// Time/point pairs drawn from one trajectory batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBatch {
    /// Forward-time labels of the states; the trainee is evaluated here.
    pub times: Vec<f64>,
    /// Forward time of the simulation step that produced each state. The
    /// frozen drift is evaluated here, so it is never queried at a grid time
    /// its own walk does not visit; `g²` is averaged between the two times,
    /// matching the variance the step injected.
    pub frozen_times: Vec<f64>,
    pub points: Vec<SpherePoint>,
    /// Direction of the trajectories the pairs came from.
    pub direction: Direction,
}

impl LossBatch {
    /// One uniformly drawn simulation index `k ∈ {1..N}` per path: the state
    /// `states[k]` at `forward_time(k)`, produced by the step taken at
    /// `forward_time(k - 1)`.
    pub fn sample<R: Rng + ?Sized>(trajectories: &TrajectoryBatch, rng: &mut R) -> Self {
        let n = trajectories.grid.steps();
        let mut times = Vec::with_capacity(trajectories.len());
        let mut frozen_times = Vec::with_capacity(trajectories.len());
        let mut points = Vec::with_capacity(trajectories.len());
        for path in &trajectories.states {
            let k = rng.gen_range(1..=n);
            times.push(trajectories.forward_time(k));
            frozen_times.push(trajectories.forward_time(k - 1));
            points.push(path[k]);
        }
        LossBatch {
            times,
            frozen_times,
            points,
            direction: trajectories.direction,
        }
    }

    /// Both networks evaluated at the same time label.
    pub fn same_time(times: Vec<f64>, points: Vec<SpherePoint>, direction: Direction) -> Self {
        LossBatch {
            frozen_times: times.clone(),
            times,
            points,
            direction,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub estimator: DivergenceEstimator,
    /// Divide the summed loss by the batch size.
    pub mean: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            estimator: DivergenceEstimator::Exact,
            mean: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValue {
    /// `quadratic + divergence`
    pub loss: f64,
    /// `Σ ½ |frozen + trainee|²` (scaled like `loss`)
    pub quadratic: f64,
    /// `Σ g² div(trainee)` (scaled like `loss`)
    pub divergence: f64,
}

impl std::ops::Add for LossValue {
    type Output = LossValue;
    fn add(self, o: LossValue) -> LossValue {
        LossValue {
            loss: self.loss + o.loss,
            quadratic: self.quadratic + o.quadratic,
            divergence: self.divergence + o.divergence,
        }
    }
}

/// Loss value for any differentiable trainee, without gradients.
pub fn loss_value<D: DifferentiableDrift + ?Sized, F: TimeDrift + ?Sized>(
    trainee: &D,
    frozen: &F,
    batch: &LossBatch,
    schedule: &NoiseSchedule,
    opts: LossOptions,
    rng: &mut StreamRng,
) -> Result<LossValue> {
    let q = frozen.drift_at(&batch.frozen_times, &batch.points);
    let scale = if opts.mean { 1.0 / batch.len().max(1) as f64 } else { 1.0 };
    let mut total = LossValue::default();
    for (i, (&t, x)) in batch.times.iter().zip(&batch.points).enumerate() {
        let r = trainee.value(t, x);
        let div = divergence_estimate(trainee, t, x, opts.estimator, rng)?;
        let quad = 0.5 * (q[i] + r).norm_squared();
        let dv = schedule.mean_g_squared(t, batch.frozen_times[i]) * div;
        total = total
            + LossValue {
                loss: scale * (quad + dv),
                quadratic: scale * quad,
                divergence: scale * dv,
            };
    }
    Ok(total)
}

/// Loss of `trainee` against the `frozen` drift on `batch`; accumulates the
/// gradient w.r.t. the trainee's parameters into its gradient buffer.
///
/// The frozen model is only evaluated, never differentiated. Work is split in
/// `streams.workers()` chunks with private gradient buffers that are summed in
/// chunk order.
pub fn implicit_drift_loss<F: TimeDrift + ?Sized>(
    trainee: &mut DriftModel,
    frozen: &F,
    batch: &LossBatch,
    schedule: &NoiseSchedule,
    opts: LossOptions,
    streams: &Streams,
) -> Result<LossValue> {
    if let DivergenceEstimator::FiniteDifference { .. } = opts.estimator {
        return Err(Error::DivergenceModeUnsupported(format!(
            "{} (no parameter gradients)",
            opts.estimator.name()
        )));
    }
    let scale = if opts.mean { 1.0 / batch.len().max(1) as f64 } else { 1.0 };
    let chunk = streams.chunk_len(batch.len());
    let model: &DriftModel = trainee;
    let parts: Vec<Result<(LossValue, Vec<f64>)>> = batch
        .points
        .par_chunks(chunk)
        .zip(batch.times.par_chunks(chunk))
        .zip(batch.frozen_times.par_chunks(chunk))
        .enumerate()
        .map(|(w, ((xs, ts), fs))| {
            let probes = match opts.estimator {
                DivergenceEstimator::Hutchinson { probes } => {
                    Probes::hutchinson(xs, probes, &mut streams.worker_rng(w))
                }
                _ => Probes::basis(xs),
            };
            let tape = model.record(ts, xs, Some(probes));
            let r = tape.outputs();
            let div = tape.divergence().expect("probed tape");
            let q = frozen.drift_at(fs, xs);
            let mut value = LossValue::default();
            let mut adj = LossAdjoints {
                out: Vec::with_capacity(xs.len()),
                div: Vec::with_capacity(xs.len()),
            };
            for i in 0..xs.len() {
                let g2 = schedule.mean_g_squared(ts[i], fs[i]);
                let resid = q[i] + r[i];
                let quad = 0.5 * resid.norm_squared();
                value = value
                    + LossValue {
                        loss: scale * (quad + g2 * div[i]),
                        quadratic: scale * quad,
                        divergence: scale * g2 * div[i],
                    };
                adj.out.push(resid * scale);
                adj.div.push(g2 * scale);
            }
            let mut grad = vec![0.0; model.param_count()];
            model.backward_into(&tape, &adj, &mut grad)?;
            Ok((value, grad))
        })
        .collect();
    let mut total = LossValue::default();
    for part in parts {
        let (v, g) = part?;
        total = total + v;
        trainee
            .grad_mut()
            .iter_mut()
            .zip(&g)
            .for_each(|(acc, gi)| *acc += gi);
    }
    Ok(total)
}
