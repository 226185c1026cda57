//! Time-discretized manifold diffusions.
//!
//! The walk follows the classical geodesic random walk: draw an ambient
//! standard Gaussian, project it onto the tangent plane, form the Euler
//! increment `γ f(t, x) + √γ g(t) Z` and move along the exponential map.
//!
//! Time conventions: a forward (noising) trajectory stores `X_{t_k}` at index
//! `k`. A backward (generating) trajectory stores states in simulation order,
//! so index 0 is the prior side; its step `k` evaluates the backward drift at
//! forward time `T - s_k` and index `k` corresponds to forward time `T - s_k`.
//! Use [`TrajectoryBatch::forward_time`], [`TrajectoryBatch::data_side`] and
//! [`TrajectoryBatch::prior_side`] instead of indexing by hand.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::PointSampler;
use crate::manifold::{exp_vec, project_vec, SpherePoint, Vec3};
use crate::rng::Streams;
use crate::{Error, Result};

/// Triangular `g²(t)`: `g2_floor` at `0` and `T`, `g2_peak` at `T/2`, linear in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSchedule {
    horizon: f64,
    g2_peak: f64,
    g2_floor: f64,
}

impl NoiseSchedule {
    pub const DEFAULT_HORIZON: f64 = 1.0;
    pub const DEFAULT_G2_PEAK: f64 = 0.05;
    pub const DEFAULT_G2_FLOOR: f64 = 0.001;

    pub fn new(horizon: f64, g2_peak: f64, g2_floor: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("schedule.T", "horizon must be positive"));
        }
        if !(g2_floor > 0.0 && g2_floor.is_finite()) {
            return Err(Error::config("schedule.g2_floor", "floor must be positive"));
        }
        if !(g2_peak >= g2_floor && g2_peak.is_finite()) {
            return Err(Error::config("schedule.g2_peak", "peak must be at least the floor"));
        }
        Ok(NoiseSchedule {
            horizon,
            g2_peak,
            g2_floor,
        })
    }

    /// Constant `g² ≡ value` on `[0, horizon]`.
    pub fn constant(horizon: f64, value: f64) -> Result<Self> {
        Self::new(horizon, value, value)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn g2_peak(&self) -> f64 {
        self.g2_peak
    }

    pub fn g2_floor(&self) -> f64 {
        self.g2_floor
    }

    pub fn g_squared(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon;
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.g_squared_clamped(t))
    }

    /// `g²` with `t` clamped into the horizon.
    pub fn g_squared_clamped(&self, t: f64) -> f64 {
        let half = 0.5 * self.horizon;
        let t = t.clamp(0.0, self.horizon);
        let dist = (t - half).abs() / half;
        self.g2_peak + (self.g2_floor - self.g2_peak) * dist
    }

    /// `∫₀ᵀ g²(t) dt`.
    pub fn integrated_variance(&self) -> f64 {
        0.5 * self.horizon * (self.g2_peak + self.g2_floor)
    }

    /// `∫₀ᵗ g²(s) ds`, with `t` clamped into the horizon.
    pub fn cumulative_variance(&self, t: f64) -> f64 {
        let half = 0.5 * self.horizon;
        let rising = |t: f64| self.g2_floor * t + 0.5 * (self.g2_peak - self.g2_floor) * t * t / half;
        let t = t.clamp(0.0, self.horizon);
        if t <= half {
            rising(t)
        } else {
            self.integrated_variance() - rising(self.horizon - t)
        }
    }

    /// Mean of `g²` between `a` and `b` (in either order); `g²(a)` when they
    /// coincide.
    pub fn mean_g_squared(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if hi - lo <= 1e-12 * self.horizon {
            return self.g_squared_clamped(a);
        }
        (self.cumulative_variance(hi) - self.cumulative_variance(lo)) / (hi - lo)
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule {
            horizon: Self::DEFAULT_HORIZON,
            g2_peak: Self::DEFAULT_G2_PEAK,
            g2_floor: Self::DEFAULT_G2_FLOOR,
        }
    }
}

/// Diffusion coefficient `g(t)` of a walk.
pub trait Volatility: Sync {
    fn g(&self, t: f64) -> f64;

    /// Coefficient used for a step between forward times `a` and `b`. The
    /// left-point value unless overridden.
    fn step_g(&self, a: f64, _b: f64) -> f64 {
        self.g(a)
    }
}

/// Steps use the root-mean-square `g` over the interval, so a forward step
/// and the backward step across the same interval inject the same variance.
impl Volatility for NoiseSchedule {
    fn g(&self, t: f64) -> f64 {
        self.g_squared_clamped(t).sqrt()
    }

    fn step_g(&self, a: f64, b: f64) -> f64 {
        self.mean_g_squared(a, b).sqrt()
    }
}

/// Any `Fn(t) -> g(t)`, e.g. `|_| 0.0` for a noiseless walk.
impl<F: Fn(f64) -> f64 + Sync> Volatility for F {
    fn g(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Ordered simulation times `t_0 = 0 < t_1 < ... < t_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// `N` steps of size `T / N`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("grid.N", "need at least one step"));
        }
        if !(horizon > 0.0) {
            return Err(Error::config("schedule.T", "horizon must be positive"));
        }
        let gamma = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * gamma).collect();
        times[steps] = horizon;
        Ok(TimeGrid { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("grid", "times must start at 0 and increase"));
        }
        Ok(TimeGrid { times })
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn step_size(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// The grid up to time `t`, ending with a partial step if `t` is off-grid.
    /// `t = 0` yields an empty walk (a single time).
    pub fn truncated(&self, t: f64) -> Self {
        let mut times: Vec<f64> = self.times.iter().copied().take_while(|&s| s < t - 1e-12).collect();
        if times.is_empty() {
            times.push(0.0);
        }
        if t > 1e-12 {
            times.push(t.min(self.horizon()));
        }
        TimeGrid { times }
    }

    /// `s ↦ T - s`, reversed into increasing order.
    pub fn reversed(&self) -> Self {
        let h = self.horizon();
        let mut times: Vec<f64> = self.times.iter().rev().map(|s| h - s).collect();
        times[0] = 0.0;
        TimeGrid { times }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Noising: starts from data at forward time 0.
    Forward,
    /// Generating: starts from the prior at forward time `T`.
    Backward,
}

impl Direction {
    /// Forward-time label of simulation time `s`.
    pub fn forward_time(self, s: f64, horizon: f64) -> f64 {
        match self {
            Direction::Forward => s,
            Direction::Backward => (horizon - s).max(0.0),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// A time-dependent tangent drift `(t, x) ↦ v ∈ T_x S²`.
pub trait TimeDrift: Sync {
    /// Drift at per-point times.
    fn drift_at(&self, ts: &[f64], xs: &[SpherePoint]) -> Vec<Vec3>;

    /// Drift at a shared time.
    fn drift_batch(&self, t: f64, xs: &[SpherePoint]) -> Vec<Vec3> {
        let ts = vec![t; xs.len()];
        self.drift_at(&ts, xs)
    }

    fn drift(&self, t: f64, x: &SpherePoint) -> Vec3 {
        self.drift_batch(t, std::slice::from_ref(x))[0]
    }

    /// True if the drift is identically zero (lets callers skip evaluation).
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroDrift;

impl TimeDrift for ZeroDrift {
    fn drift_at(&self, _ts: &[f64], xs: &[SpherePoint]) -> Vec<Vec3> {
        vec![Vec3::zeros(); xs.len()]
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// Adapts a closure `(t, x) -> v` into a [`TimeDrift`]. The output is projected
/// to the tangent plane.
pub struct FnDrift<F>(pub F);

impl<F: Fn(f64, &SpherePoint) -> Vec3 + Sync> TimeDrift for FnDrift<F> {
    fn drift_at(&self, ts: &[f64], xs: &[SpherePoint]) -> Vec<Vec3> {
        ts.iter()
            .zip(xs)
            .map(|(&t, x)| project_vec(x.coords(), &(self.0)(t, x)))
            .collect()
    }
}

/// A batch of simulated paths, `states[i][k]` for path `i` and simulation index `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub grid: TimeGrid,
    pub states: Vec<Vec<SpherePoint>>,
    pub direction: Direction,
    /// Horizon of the process the grid lives in (differs from `grid.horizon()`
    /// for truncated walks).
    pub horizon: f64,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Forward-time label of simulation index `k`.
    pub fn forward_time(&self, k: usize) -> f64 {
        self.direction.forward_time(self.grid.times()[k], self.horizon)
    }

    /// Last simulated state of every path.
    pub fn terminal(&self) -> Vec<SpherePoint> {
        self.states.iter().map(|p| *p.last().unwrap()).collect()
    }

    /// First state of every path.
    pub fn initial(&self) -> Vec<SpherePoint> {
        self.states.iter().map(|p| p[0]).collect()
    }

    /// The forward-time-0 end of each path.
    pub fn data_side(&self) -> Vec<SpherePoint> {
        match self.direction {
            Direction::Forward => self.initial(),
            Direction::Backward => self.terminal(),
        }
    }

    /// The forward-time-`T` end of each path.
    pub fn prior_side(&self) -> Vec<SpherePoint> {
        match self.direction {
            Direction::Forward => self.terminal(),
            Direction::Backward => self.initial(),
        }
    }

    /// States at simulation index `k` across the batch.
    pub fn column(&self, k: usize) -> Vec<SpherePoint> {
        self.states.iter().map(|p| p[k]).collect()
    }
}

/// One step of the walk: `exp_x(γ f + √γ g P(x) z̄)` for an ambient `z̄`.
pub fn walk_step(x: &SpherePoint, drift: &Vec3, g: f64, gamma: f64, z_ambient: &Vec3) -> SpherePoint {
    let z = project_vec(x.coords(), z_ambient);
    let w = drift * gamma + z * (gamma.sqrt() * g);
    exp_vec(x, &w)
}

fn walk_chunk<D, V, R>(
    drift: &D,
    vol: &V,
    grid: &TimeGrid,
    direction: Direction,
    horizon: f64,
    x0: &[SpherePoint],
    rng: &mut R,
) -> Vec<Vec<SpherePoint>>
where
    D: TimeDrift + ?Sized,
    V: Volatility + ?Sized,
    R: Rng + ?Sized,
{
    let steps = grid.steps();
    let mut paths: Vec<Vec<SpherePoint>> = x0
        .iter()
        .map(|x| {
            let mut p = Vec::with_capacity(steps + 1);
            p.push(*x);
            p
        })
        .collect();
    let mut current: Vec<SpherePoint> = x0.to_vec();
    for k in 0..steps {
        let t = direction.forward_time(grid.times()[k], horizon);
        let gamma = grid.step_size(k);
        let g = vol.step_g(t, direction.forward_time(grid.times()[k + 1], horizon));
        let f = if drift.is_zero() {
            vec![Vec3::zeros(); current.len()]
        } else {
            drift.drift_batch(t, &current)
        };
        for (i, x) in current.iter_mut().enumerate() {
            let zbar = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            *x = walk_step(x, &f[i], g, gamma, &zbar);
            paths[i].push(*x);
        }
    }
    paths
}

/// Single-stream geodesic random walk from `x0` over `grid`.
///
/// For [`Direction::Backward`], step `k` evaluates drift and volatility at
/// forward time `horizon - s_k`.
pub fn geodesic_random_walk<D, V, R>(
    drift: &D,
    vol: &V,
    grid: &TimeGrid,
    direction: Direction,
    horizon: f64,
    x0: &[SpherePoint],
    rng: &mut R,
) -> TrajectoryBatch
where
    D: TimeDrift + ?Sized,
    V: Volatility + ?Sized,
    R: Rng + ?Sized,
{
    TrajectoryBatch {
        grid: grid.clone(),
        states: walk_chunk(drift, vol, grid, direction, horizon, x0, rng),
        direction,
        horizon,
    }
}

/// The walk split over `streams.workers()` contiguous chunks, each with its own
/// rng stream. Deterministic for a fixed worker count.
pub fn geodesic_random_walk_parallel<D, V>(
    drift: &D,
    vol: &V,
    grid: &TimeGrid,
    direction: Direction,
    horizon: f64,
    x0: &[SpherePoint],
    streams: &Streams,
) -> TrajectoryBatch
where
    D: TimeDrift + ?Sized,
    V: Volatility + ?Sized,
{
    let chunk = streams.chunk_len(x0.len());
    let states: Vec<Vec<SpherePoint>> = x0
        .par_chunks(chunk)
        .enumerate()
        .map(|(w, xs)| {
            let mut rng = streams.worker_rng(w);
            walk_chunk(drift, vol, grid, direction, horizon, xs, &mut rng)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    TrajectoryBatch {
        grid: grid.clone(),
        states,
        direction,
        horizon,
    }
}

/// Noising trajectories: `X_0` from the data sampler, drift `f(t, x)`.
///
/// Passing [`ZeroDrift`] gives Brownian motion started at the data.
pub fn simulate_forward<D: TimeDrift + ?Sized>(
    model_f: &D,
    data: &dyn PointSampler,
    schedule: &NoiseSchedule,
    grid: &TimeGrid,
    batch: usize,
    streams: &Streams,
) -> Result<TrajectoryBatch> {
    let x0 = data.sample(batch, &mut streams.child(0).rng())?;
    Ok(geodesic_random_walk_parallel(
        model_f,
        schedule,
        grid,
        Direction::Forward,
        schedule.horizon(),
        &x0,
        &streams.child(1),
    ))
}

/// Generating trajectories: `Y_T` from the prior sampler, drift `b(T - s, y)`.
pub fn simulate_backward<D: TimeDrift + ?Sized>(
    model_b: &D,
    prior: &dyn PointSampler,
    schedule: &NoiseSchedule,
    grid: &TimeGrid,
    batch: usize,
    streams: &Streams,
) -> Result<TrajectoryBatch> {
    let y0 = prior.sample(batch, &mut streams.child(0).rng())?;
    Ok(geodesic_random_walk_parallel(
        model_b,
        schedule,
        grid,
        Direction::Backward,
        schedule.horizon(),
        &y0,
        &streams.child(1),
    ))
}
