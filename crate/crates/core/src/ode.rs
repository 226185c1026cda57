//! Probability-flow ODE and exact log-likelihoods.
//!
//! The flow `dx/dt = v_t(x) = ½ (f(t, x) - b(t, x))` shares the marginals of
//! the noising SDE. Steps are classical RK4 written in normal coordinates at
//! the step's base point: stage states are `exp_x(u)`, and stage velocities are
//! pulled back through the inverse differential of `exp_x` before combining.
//! That makes each step an ordinary RK4 step of a smooth ODE in a chart, so the
//! scheme keeps its fourth order and states stay on the sphere exactly.
//!
//! Densities are with respect to surface measure: the uniform law has density
//! `1/(4π)`.

use rayon::prelude::*;

use crate::data::PointSampler;
use crate::manifold::{divergence, exp_vec, geodesic_distance, project_vec, DivergenceMode, SpherePoint, TangentField, Vec3};
use crate::net::DriftModel;
use crate::{Error, Result};

/// Which way the flow is integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowDirection {
    /// From data (`t = 0`) to the prior (`t = T`).
    Noising,
    /// From the prior (`t = T`) back to data (`t = 0`).
    Generating,
}

/// A time-dependent tangent velocity field with its divergence.
pub trait FlowField: Sync {
    fn velocity(&self, t: f64, xs: &[SpherePoint]) -> Vec<Vec3>;
    fn velocity_with_divergence(&self, t: f64, xs: &[SpherePoint]) -> (Vec<Vec3>, Vec<f64>);
}

/// `½ (f - b)` for a trained drift pair.
#[derive(Clone, Copy)]
pub struct ProbabilityFlow<'a> {
    pub model_f: &'a DriftModel,
    pub model_b: &'a DriftModel,
}

impl<'a> ProbabilityFlow<'a> {
    pub fn new(model_f: &'a DriftModel, model_b: &'a DriftModel) -> Self {
        ProbabilityFlow { model_f, model_b }
    }

    pub fn horizon(&self) -> f64 {
        self.model_b.config().horizon
    }
}

impl FlowField for ProbabilityFlow<'_> {
    fn velocity(&self, t: f64, xs: &[SpherePoint]) -> Vec<Vec3> {
        let ts = vec![t; xs.len()];
        let mut v = vec![Vec3::zeros(); xs.len()];
        if !self.model_f.is_zero_drift() {
            for (vi, f) in v.iter_mut().zip(self.model_f.forward_batch(&ts, xs)) {
                *vi += f * 0.5;
            }
        }
        if !self.model_b.is_zero_drift() {
            for (vi, b) in v.iter_mut().zip(self.model_b.forward_batch(&ts, xs)) {
                *vi -= b * 0.5;
            }
        }
        v
    }

    fn velocity_with_divergence(&self, t: f64, xs: &[SpherePoint]) -> (Vec<Vec3>, Vec<f64>) {
        let ts = vec![t; xs.len()];
        let mut v = vec![Vec3::zeros(); xs.len()];
        let mut div = vec![0.0; xs.len()];
        for (model, sign) in [(self.model_f, 0.5), (self.model_b, -0.5)] {
            if model.is_zero_drift() {
                continue;
            }
            let (r, d) = model.forward_with_divergence(&ts, xs);
            for i in 0..xs.len() {
                v[i] += r[i] * sign;
                div[i] += d[i] * sign;
            }
        }
        (v, div)
    }
}

/// A time-independent analytic field, for tests and examples.
pub struct StationaryFlow<F>(pub F);

impl<F: TangentField + Sync> FlowField for StationaryFlow<F> {
    fn velocity(&self, _t: f64, xs: &[SpherePoint]) -> Vec<Vec3> {
        xs.iter().map(|x| self.0.value(x)).collect()
    }

    fn velocity_with_divergence(&self, t: f64, xs: &[SpherePoint]) -> (Vec<Vec3>, Vec<f64>) {
        let div = xs
            .iter()
            .map(|x| divergence(&self.0, x, DivergenceMode::Exact).unwrap_or(f64::NAN))
            .collect();
        (self.velocity(t, xs), div)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    /// Number of RK4 steps `M`.
    pub steps: usize,
    /// Points are split into this many contiguous chunks integrated in parallel.
    pub workers: usize,
    /// Also integrate with `2M` steps and report the endpoint difference.
    pub error_estimate: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            steps: 200,
            workers: 1,
            error_estimate: false,
        }
    }
}

/// States of a batch of flow lines on a shared time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeTrajectory {
    /// Flow times, in integration order.
    pub times: Vec<f64>,
    /// `states[k][i]`: point `i` at `times[k]`. Only the endpoints are kept
    /// unless the path was requested.
    pub states: Vec<Vec<SpherePoint>>,
    /// `∫ div v dt` along each line, oriented with flow time (so positive `dt`
    /// for noising and negative for generating).
    pub divergence_integral: Vec<f64>,
    /// Step-doubling estimate: max geodesic distance between the `M`- and
    /// `2M`-step endpoints.
    pub error_estimate: Option<f64>,
}

impl OdeTrajectory {
    pub fn terminal(&self) -> &[SpherePoint] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// `(dexp_x)_u^{-1} w` for `w ∈ T_{exp_x(u)}`.
fn pull_back(x: &SpherePoint, u: &Vec3, w: &Vec3) -> Vec3 {
    let r = u.norm();
    if r < 1e-12 {
        return project_vec(x.coords(), w);
    }
    let uh = u / r;
    let uy = -x.coords() * r.sin() + uh * r.cos();
    let wr = w.dot(&uy);
    let stretch = if r < 1e-4 { 1.0 + r * r / 6.0 } else { r / r.sin() };
    uh * wr + (w - uy * wr) * stretch
}

struct Stage<'a> {
    field: &'a dyn FlowField,
    with_div: bool,
}

impl Stage<'_> {
    fn eval(&self, t: f64, xs: &[SpherePoint]) -> (Vec<Vec3>, Vec<f64>) {
        if self.with_div {
            self.field.velocity_with_divergence(t, xs)
        } else {
            (self.field.velocity(t, xs), Vec::new())
        }
    }
}

fn check_finite(xs: &[SpherePoint], vs: &[Vec3], t: f64) -> Result<()> {
    let bad = xs.iter().any(|x| !x.coords().iter().all(|c| c.is_finite()))
        || vs.iter().any(|v| !v.iter().all(|c| c.is_finite()));
    if bad {
        Err(Error::NonFiniteState { t })
    } else {
        Ok(())
    }
}

/// One RK4 step in normal coordinates; returns the new states and the
/// divergence increments.
fn rk4_step(stage: &Stage, t: f64, dt: f64, xs: &[SpherePoint]) -> Result<(Vec<SpherePoint>, Vec<f64>)> {
    let n = xs.len();
    let (k1, d1) = stage.eval(t, xs);
    check_finite(xs, &k1, t)?;
    let k1: Vec<Vec3> = xs.iter().zip(&k1).map(|(x, v)| project_vec(x.coords(), v)).collect();
    let mut ks = vec![k1];
    let mut ds = vec![d1];
    for (c, tc) in [(0.5, t + 0.5 * dt), (0.5, t + 0.5 * dt), (1.0, t + dt)] {
        let prev = ks.last().unwrap();
        let us: Vec<Vec3> = prev.iter().map(|k| k * (c * dt)).collect();
        let ys: Vec<SpherePoint> = xs.iter().zip(&us).map(|(x, u)| exp_vec(x, u)).collect();
        let (w, d) = stage.eval(tc, &ys);
        check_finite(&ys, &w, tc)?;
        ks.push((0..n).map(|i| pull_back(&xs[i], &us[i], &w[i])).collect());
        ds.push(d);
    }
    let next = (0..n)
        .map(|i| {
            let step = (ks[0][i] + ks[1][i] * 2.0 + ks[2][i] * 2.0 + ks[3][i]) * (dt / 6.0);
            exp_vec(&xs[i], &step)
        })
        .collect();
    let dl = if stage.with_div {
        (0..n)
            .map(|i| dt / 6.0 * (ds[0][i] + 2.0 * ds[1][i] + 2.0 * ds[2][i] + ds[3][i]))
            .collect()
    } else {
        Vec::new()
    };
    Ok((next, dl))
}

fn integrate_chunk(
    stage: &Stage,
    horizon: f64,
    direction: FlowDirection,
    steps: usize,
    xs: &[SpherePoint],
    record: bool,
) -> Result<(Vec<Vec<SpherePoint>>, Vec<f64>)> {
    let h = horizon / steps as f64;
    let mut cur = xs.to_vec();
    let mut path = vec![cur.clone()];
    let mut integral = vec![0.0; xs.len()];
    for k in 0..steps {
        let (t, dt) = match direction {
            FlowDirection::Noising => (k as f64 * h, h),
            FlowDirection::Generating => (horizon - k as f64 * h, -h),
        };
        let (next, dl) = rk4_step(stage, t, dt, &cur)?;
        for (acc, d) in integral.iter_mut().zip(&dl) {
            *acc += d;
        }
        cur = next;
        if record || k + 1 == steps {
            path.push(cur.clone());
        }
    }
    if steps == 0 {
        path.push(cur);
    }
    Ok((path, integral))
}

fn integrate(
    field: &dyn FlowField,
    horizon: f64,
    xs: &[SpherePoint],
    direction: FlowDirection,
    opts: &OdeOptions,
    with_div: bool,
    record: bool,
) -> Result<OdeTrajectory> {
    let steps = opts.steps;
    let stage = Stage { field, with_div };
    let chunk = xs.len().div_ceil(opts.workers.max(1)).max(1);
    let parts: Vec<Result<(Vec<Vec<SpherePoint>>, Vec<f64>)>> = xs
        .par_chunks(chunk)
        .map(|c| integrate_chunk(&stage, horizon, direction, steps, c, record))
        .collect();
    let kept = if record { steps + 1 } else { 2 };
    let mut states: Vec<Vec<SpherePoint>> = vec![Vec::with_capacity(xs.len()); kept];
    let mut divergence_integral = Vec::with_capacity(xs.len());
    for part in parts {
        let (path, integral) = part?;
        for (col, p) in states.iter_mut().zip(path) {
            col.extend(p);
        }
        divergence_integral.extend(integral);
    }
    if xs.is_empty() {
        states.iter_mut().for_each(Vec::clear);
    }
    let h = horizon / steps.max(1) as f64;
    let times: Vec<f64> = (0..=steps)
        .filter(|&k| record || k == 0 || k == steps)
        .map(|k| match direction {
            FlowDirection::Noising => k as f64 * h,
            FlowDirection::Generating => horizon - k as f64 * h,
        })
        .collect();
    let error_estimate = if opts.error_estimate && steps > 0 {
        let fine = OdeOptions {
            steps: 2 * steps,
            error_estimate: false,
            ..*opts
        };
        let other = integrate(field, horizon, xs, direction, &fine, false, false)?;
        Some(
            states
                .last()
                .unwrap()
                .iter()
                .zip(other.terminal())
                .map(|(a, b)| geodesic_distance(a, b))
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    Ok(OdeTrajectory {
        times,
        states,
        divergence_integral,
        error_estimate,
    })
}

/// Integrates the flow lines of `field` from every start point, keeping the
/// full path.
pub fn integrate_flow(
    field: &dyn FlowField,
    horizon: f64,
    x_start: &[SpherePoint],
    direction: FlowDirection,
    opts: &OdeOptions,
) -> Result<OdeTrajectory> {
    integrate(field, horizon, x_start, direction, opts, false, true)
}

/// Endpoints only.
pub fn flow_endpoints(
    field: &dyn FlowField,
    horizon: f64,
    x_start: &[SpherePoint],
    direction: FlowDirection,
    opts: &OdeOptions,
) -> Result<Vec<SpherePoint>> {
    Ok(integrate(field, horizon, x_start, direction, opts, false, false)?
        .states
        .pop()
        .unwrap_or_default())
}

/// `log p_0(x) = log p_T(x_T) + ∫_0^T div v_t(x_t) dt` along the noising flow,
/// in nats with respect to surface measure.
pub fn log_likelihood(
    field: &dyn FlowField,
    horizon: f64,
    prior: &dyn PointSampler,
    xs: &[SpherePoint],
    opts: &OdeOptions,
) -> Result<Vec<f64>> {
    let traj = integrate(field, horizon, xs, FlowDirection::Noising, opts, true, false)?;
    traj.terminal()
        .iter()
        .zip(&traj.divergence_integral)
        .map(|(x, integral)| {
            let lp = prior
                .log_density(x)
                .ok_or_else(|| Error::config("prior", "likelihoods need a prior with a density"))?;
            Ok(lp + integral)
        })
        .collect()
}

/// Convenience wrapper for a trained pair.
pub fn pair_log_likelihood(
    model_f: &DriftModel,
    model_b: &DriftModel,
    prior: &dyn PointSampler,
    xs: &[SpherePoint],
    opts: &OdeOptions,
) -> Result<Vec<f64>> {
    let flow = ProbabilityFlow::new(model_f, model_b);
    log_likelihood(&flow, flow.horizon(), prior, xs, opts)
}
