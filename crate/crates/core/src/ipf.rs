//! Iterative proportional fitting between a data law and a prior.
//!
//! Iteration `n` trains the backward drift `b^n` on forward paths driven by
//! the frozen `f^n`, then the forward drift `f^{n+1}` on backward paths driven
//! by the frozen `b^n`. `f^0 ≡ 0`, so the first backward phase is plain
//! implicit score matching against Brownian noising. After `L + 1` iterations
//! the output pair is `(f^{L+1}, b^L)`.
//!
//! Checkpoints go to `{dir}/ipf_{n}_b.ckpt` (holding `b^n`) and
//! `{dir}/ipf_{n}_f.ckpt` (holding `f^{n+1}`), metrics to `{dir}/metrics.csv`.
//! Every random draw is keyed by `(seed, n, phase, step)`, so a run resumed
//! from a phase checkpoint retraces the uninterrupted run exactly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{mmd, mmd_bootstrap_se, PointSampler};
use crate::loss::{implicit_drift_loss, DivergenceEstimator, LossBatch, LossOptions};
use crate::manifold::SpherePoint;
use crate::net::{DriftModel, NetConfig, OptimizerState};
use crate::rng::Streams;
use crate::sde::{simulate_backward, simulate_forward, NoiseSchedule, TimeDrift, TimeGrid};
use crate::{Error, Result};

/// Which drift a phase trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    /// Backward drift on forward (noising) paths.
    Backward,
    /// Forward drift on backward (generating) paths.
    Forward,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Backward => "b",
            Phase::Forward => "f",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "b" => Some(Phase::Backward),
            "f" => Some(Phase::Forward),
            _ => None,
        }
    }

    fn key(self) -> u64 {
        match self {
            Phase::Backward => 0xB,
            Phase::Forward => 0xF,
        }
    }

    /// Position in the global phase order `b0, f0, b1, f1, ...`.
    pub fn ordinal(self, n: usize) -> usize {
        2 * n + usize::from(self == Phase::Forward)
    }
}

/// Stop a phase once the moving-average loss stops improving.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStop {
    pub window: usize,
    pub patience: usize,
    /// Minimal relative improvement of the moving average over `patience` steps.
    pub min_rel_improvement: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            window: 200,
            patience: 500,
            min_rel_improvement: 1e-3,
        }
    }
}

impl EarlyStop {
    /// True once the loss history `losses` has plateaued.
    pub fn plateaued(&self, losses: &[f64]) -> bool {
        let (w, p) = (self.window.max(1), self.patience);
        if losses.len() < w + p {
            return false;
        }
        let avg = |end: usize| losses[end - w..end].iter().sum::<f64>() / w as f64;
        let now = avg(losses.len());
        let before = avg(losses.len() - p);
        before - now < self.min_rel_improvement * before.abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IpfConfig {
    pub schedule: NoiseSchedule,
    /// Number of walk steps `N`.
    pub steps: usize,
    pub net: NetConfig,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip: Option<f64>,
    /// Last IPF index `L`; the run performs `L + 1` iterations.
    pub iterations: usize,
    pub inner_steps: usize,
    pub batch: usize,
    pub warm_start: bool,
    pub early_stop: Option<EarlyStop>,
    pub estimator: DivergenceEstimator,
    pub mean_loss: bool,
    /// Leave every forward drift at zero (the score-matching baseline).
    pub skip_forward: bool,
    pub seed: u64,
    pub workers: usize,
    /// Write a metrics row every this many inner steps (and at phase end).
    pub log_every: usize,
    /// Sample size of the end-of-phase MMD diagnostics; 0 disables them.
    pub diag_samples: usize,
    pub diag_bootstrap: usize,
    /// Diagnostic kernel bandwidth; `None` picks the median heuristic once per run.
    pub bandwidth: Option<f64>,
    pub log_wall_time: bool,
}

impl Default for IpfConfig {
    fn default() -> Self {
        IpfConfig {
            schedule: NoiseSchedule::default(),
            steps: 10,
            net: NetConfig::default(),
            lr: OptimizerState::DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            clip: Some(10.0),
            iterations: 4,
            inner_steps: 5000,
            batch: 256,
            warm_start: true,
            early_stop: Some(EarlyStop::default()),
            estimator: DivergenceEstimator::Exact,
            mean_loss: true,
            skip_forward: false,
            seed: 0,
            workers: 1,
            log_every: 50,
            diag_samples: 1000,
            diag_bootstrap: 50,
            bandwidth: None,
            log_wall_time: false,
        }
    }
}

impl IpfConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.schedule.horizon(), self.steps)
    }

    pub fn loss_options(&self) -> LossOptions {
        LossOptions {
            estimator: self.estimator,
            mean: self.mean_loss,
        }
    }

    pub fn streams(&self) -> Streams {
        Streams::new(self.seed, self.workers)
    }
}

/// One line of `metrics.csv`. Diagnostic rows carry MMDs and no loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricRow {
    pub wall_time: Option<f64>,
    pub n: usize,
    pub phase: String,
    pub inner_step: usize,
    pub loss: Option<f64>,
    pub grad_norm: Option<f64>,
    pub mmd_prior: Option<f64>,
    pub mmd_data: Option<f64>,
}

pub const METRIC_COLUMNS: [&str; 8] = [
    "wall_time",
    "n",
    "phase",
    "inner_step",
    "loss",
    "grad_norm",
    "mmd_prior",
    "mmd_data",
];

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::CorruptFile(format!("bad metrics value {s:?}")))
}

impl MetricRow {
    fn record(&self) -> [String; 8] {
        [
            opt_cell(self.wall_time),
            self.n.to_string(),
            self.phase.clone(),
            self.inner_step.to_string(),
            opt_cell(self.loss),
            opt_cell(self.grad_norm),
            opt_cell(self.mmd_prior),
            opt_cell(self.mmd_data),
        ]
    }

    fn ordinal(&self) -> Option<usize> {
        Phase::from_tag(&self.phase).map(|p| p.ordinal(self.n))
    }
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRIC_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != METRIC_COLUMNS.len() {
            return Err(Error::CorruptFile("metrics row with wrong arity".into()));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::CorruptFile(format!("bad metrics index {s:?}")))
        };
        rows.push(MetricRow {
            wall_time: parse_cell(&rec[0])?,
            n: int(&rec[1])?,
            phase: rec[2].to_string(),
            inner_step: int(&rec[3])?,
            loss: parse_cell(&rec[4])?,
            grad_norm: parse_cell(&rec[5])?,
            mmd_prior: parse_cell(&rec[6])?,
            mmd_data: parse_cell(&rec[7])?,
        });
    }
    Ok(rows)
}

/// An end-of-phase MMD measurement with its bootstrap standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostic {
    pub n: usize,
    pub phase: Phase,
    pub mmd: f64,
    pub se: f64,
}

/// Everything a run needs besides its config.
pub struct IpfInputs<'a> {
    pub data: &'a dyn PointSampler,
    pub prior: &'a dyn PointSampler,
    /// Reference points for the backward diagnostic (held-out data); drawn
    /// from `data` when absent.
    pub reference: Option<&'a [SpherePoint]>,
}

#[derive(Debug)]
pub struct IpfState {
    pub n: usize,
    pub phase: Phase,
    pub model_f: DriftModel,
    pub model_b: DriftModel,
    pub checkpoint_dir: Option<PathBuf>,
    pub metrics: Vec<MetricRow>,
    pub diagnostics: Vec<Diagnostic>,
    pub bandwidth: f64,
    /// Inner steps actually run per completed phase, in phase order.
    pub steps_run: Vec<usize>,
    started: Instant,
}

impl IpfState {
    /// Fresh state at `n = 0` with `f^0 ≡ 0` and a freshly initialized `b`.
    pub fn new(config: &IpfConfig, checkpoint_dir: Option<PathBuf>) -> Self {
        IpfState {
            n: 0,
            phase: Phase::Backward,
            model_f: init_model(config, Phase::Forward, 0),
            model_b: init_model(config, Phase::Backward, 0),
            checkpoint_dir,
            metrics: Vec::new(),
            diagnostics: Vec::new(),
            bandwidth: config.bandwidth.unwrap_or(f64::NAN),
            steps_run: Vec::new(),
            started: Instant::now(),
        }
    }

    fn elapsed(&self, config: &IpfConfig) -> Option<f64> {
        config
            .log_wall_time
            .then(|| self.started.elapsed().as_secs_f64())
    }
}

const INIT_KEY: u64 = 0x1417;
const TRAIN_KEY: u64 = 0x7241;
const DIAG_KEY: u64 = 0xD1A6;

/// Fresh network for `phase` at iteration `n`, seeded from the run seed.
pub fn init_model(config: &IpfConfig, phase: Phase, n: usize) -> DriftModel {
    let mut rng = config
        .streams()
        .child(INIT_KEY)
        .child(phase.key())
        .child(n as u64)
        .rng();
    DriftModel::new(config.net, &mut rng)
}

/// Copies the previous same-direction model into the next trainee.
pub fn warm_start(model_next: &mut DriftModel, model_prev: &DriftModel) -> Result<()> {
    model_next.warm_start(model_prev)
}

pub fn checkpoint_path(dir: &Path, n: usize, phase: Phase) -> PathBuf {
    dir.join(format!("ipf_{n}_{}.ckpt", phase.tag()))
}

fn add_context(e: Error, n: usize, phase: Phase, step: usize) -> Error {
    match e {
        Error::NonFiniteGradient { index, .. } => Error::NonFiniteGradient {
            index,
            context: format!("n={n} phase={} step={step}", phase.tag()),
        },
        other => other,
    }
}

/// Runs one training phase on `trainee` against the frozen drift.
#[allow(clippy::too_many_arguments)]
fn train_phase(
    state_n: usize,
    phase: Phase,
    trainee: &mut DriftModel,
    frozen: &DriftModel,
    start: &dyn PointSampler,
    config: &IpfConfig,
    clock: Option<Instant>,
    rows: &mut Vec<MetricRow>,
) -> Result<usize> {
    let grid = config.grid()?;
    let mut opt = OptimizerState::for_model(trainee, config.lr);
    opt.clip = config.clip;
    opt.beta1 = config.beta1;
    opt.beta2 = config.beta2;
    let base = config
        .streams()
        .child(TRAIN_KEY)
        .child(phase.key())
        .child(state_n as u64);
    let frozen_drift: &dyn TimeDrift = if frozen.is_zero_drift() {
        &crate::sde::ZeroDrift
    } else {
        frozen
    };
    let mut losses = Vec::with_capacity(config.inner_steps);
    for step in 0..config.inner_steps {
        let s = base.child(step as u64);
        let traj = match phase {
            Phase::Backward => {
                simulate_forward(frozen_drift, start, &config.schedule, &grid, config.batch, &s.child(0))?
            }
            Phase::Forward => {
                simulate_backward(frozen_drift, start, &config.schedule, &grid, config.batch, &s.child(0))?
            }
        };
        let batch = LossBatch::sample(&traj, &mut s.child(1).rng());
        trainee.zero_grad();
        let value = implicit_drift_loss(
            trainee,
            frozen_drift,
            &batch,
            &config.schedule,
            config.loss_options(),
            &s.child(2),
        )?;
        let stats = opt
            .step(trainee)
            .map_err(|e| add_context(e, state_n, phase, step))?;
        losses.push(value.loss);
        let done = step + 1;
        let stop = config.early_stop.is_some_and(|es| es.plateaued(&losses));
        if done % config.log_every.max(1) == 0 || done == config.inner_steps || stop {
            rows.push(MetricRow {
                wall_time: clock.map(|c| c.elapsed().as_secs_f64()),
                n: state_n,
                phase: phase.tag().into(),
                inner_step: done,
                loss: Some(value.loss),
                grad_norm: Some(stats.grad_norm),
                ..MetricRow::default()
            });
        }
        if stop {
            log::info!("n={state_n} phase={}: plateau after {done} steps", phase.tag());
            return Ok(done);
        }
    }
    Ok(config.inner_steps)
}

fn diag_pair(
    a: &[SpherePoint],
    b: &[SpherePoint],
    bandwidth: f64,
    config: &IpfConfig,
    s: &Streams,
) -> (f64, f64) {
    let v = mmd(a, b, bandwidth);
    let se = if config.diag_bootstrap > 1 {
        mmd_bootstrap_se(a, b, bandwidth, config.diag_bootstrap, &mut s.child(9).rng())
    } else {
        0.0
    };
    (v, se)
}

/// `MMD²(backward terminals under b, reference data)`.
pub fn backward_diagnostic(
    model_b: &DriftModel,
    inputs: &IpfInputs,
    config: &IpfConfig,
    bandwidth: f64,
    s: &Streams,
) -> Result<(f64, f64)> {
    let grid = config.grid()?;
    let m = config.diag_samples;
    let gen = simulate_backward(model_b, inputs.prior, &config.schedule, &grid, m, &s.child(0))?.terminal();
    let reference = match inputs.reference {
        Some(r) => r.to_vec(),
        None => inputs.data.sample(m, &mut s.child(1).rng())?,
    };
    Ok(diag_pair(&gen, &reference, bandwidth, config, s))
}

/// `MMD²(forward terminals under f, prior sample)`.
pub fn forward_diagnostic(
    model_f: &DriftModel,
    inputs: &IpfInputs,
    config: &IpfConfig,
    bandwidth: f64,
    s: &Streams,
) -> Result<(f64, f64)> {
    let grid = config.grid()?;
    let m = config.diag_samples;
    let term = simulate_forward(model_f, inputs.data, &config.schedule, &grid, m, &s.child(0))?.terminal();
    let prior = inputs.prior.sample(m, &mut s.child(1).rng())?;
    Ok(diag_pair(&term, &prior, bandwidth, config, s))
}

fn run_diagnostic(state: &mut IpfState, phase: Phase, inputs: &IpfInputs, config: &IpfConfig) -> Result<()> {
    if config.diag_samples == 0 {
        return Ok(());
    }
    let s = config
        .streams()
        .child(DIAG_KEY)
        .child(phase.key())
        .child(state.n as u64);
    let (v, se) = match phase {
        Phase::Backward => backward_diagnostic(&state.model_b, inputs, config, state.bandwidth, &s)?,
        Phase::Forward => forward_diagnostic(&state.model_f, inputs, config, state.bandwidth, &s)?,
    };
    state.diagnostics.push(Diagnostic {
        n: state.n,
        phase,
        mmd: v,
        se,
    });
    let steps = state.steps_run.last().copied().unwrap_or(0);
    let mut row = MetricRow {
        wall_time: state.elapsed(config),
        n: state.n,
        phase: phase.tag().into(),
        inner_step: steps,
        ..MetricRow::default()
    };
    match phase {
        Phase::Backward => row.mmd_data = Some(v),
        Phase::Forward => row.mmd_prior = Some(v),
    }
    state.metrics.push(row);
    Ok(())
}

/// Fixes the run's diagnostic bandwidth by the median heuristic on data vs prior.
fn resolve_bandwidth(config: &IpfConfig, inputs: &IpfInputs) -> Result<f64> {
    if let Some(h) = config.bandwidth {
        return Ok(h);
    }
    let s = config.streams().child(DIAG_KEY).child(0xBA);
    let a = inputs.data.sample(500, &mut s.child(0).rng())?;
    let b = inputs.prior.sample(500, &mut s.child(1).rng())?;
    Ok(crate::data::median_bandwidth(&a, &b))
}

/// Trains `b^n` with `f^n` frozen. Leaves the model untouched when
/// `inner_steps == 0`.
pub fn train_backward_phase(state: &mut IpfState, inputs: &IpfInputs, config: &IpfConfig) -> Result<()> {
    let mut rows = Vec::new();
    let clock = config.log_wall_time.then_some(state.started);
    let steps = train_phase(
        state.n,
        Phase::Backward,
        &mut state.model_b,
        &state.model_f,
        inputs.data,
        config,
        clock,
        &mut rows,
    )?;
    state.metrics.extend(rows);
    state.steps_run.push(steps);
    state.phase = Phase::Forward;
    Ok(())
}

/// Trains `f^{n+1}` with `b^n` frozen.
pub fn train_forward_phase(state: &mut IpfState, inputs: &IpfInputs, config: &IpfConfig) -> Result<()> {
    let mut rows = Vec::new();
    let clock = config.log_wall_time.then_some(state.started);
    let steps = train_phase(
        state.n,
        Phase::Forward,
        &mut state.model_f,
        &state.model_b,
        inputs.prior,
        config,
        clock,
        &mut rows,
    )?;
    state.metrics.extend(rows);
    state.steps_run.push(steps);
    state.phase = Phase::Backward;
    Ok(())
}

/// Options controlling persistence of a run.
#[derive(Clone, Debug, Default)]
pub struct RunControl {
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from the last completed phase found in `checkpoint_dir`.
    pub resume: bool,
    /// Return after this many phases (counted from the start of the run,
    /// including resumed ones); simulates an interruption.
    pub stop_after_phases: Option<usize>,
}

/// The last completed phase recorded in `dir`, if any.
pub fn last_completed(dir: &Path, iterations: usize) -> Option<(usize, Phase)> {
    let mut last = None;
    for n in 0..=iterations {
        for phase in [Phase::Backward, Phase::Forward] {
            if checkpoint_path(dir, n, phase).exists() {
                last = Some((n, phase));
            } else {
                return last;
            }
        }
    }
    last
}

fn restore(config: &IpfConfig, dir: &Path, state: &mut IpfState) -> Result<usize> {
    let Some((n, phase)) = last_completed(dir, config.iterations) else {
        return Ok(0);
    };
    state.model_b = DriftModel::load_expecting(checkpoint_path(dir, n, Phase::Backward), &config.net)?;
    match phase {
        Phase::Forward => {
            state.model_f = DriftModel::load_expecting(checkpoint_path(dir, n, Phase::Forward), &config.net)?;
            state.n = n + 1;
            state.phase = Phase::Backward;
        }
        Phase::Backward => {
            if n > 0 {
                state.model_f =
                    DriftModel::load_expecting(checkpoint_path(dir, n - 1, Phase::Forward), &config.net)?;
            }
            state.n = n;
            state.phase = Phase::Forward;
        }
    }
    let done = phase.ordinal(n) + 1;
    let metrics = dir.join("metrics.csv");
    if metrics.exists() {
        state.metrics = read_metrics(&metrics)?
            .into_iter()
            .filter(|r| r.ordinal().is_some_and(|o| o < done))
            .collect();
    }
    let diag = dir.join("diagnostics.csv");
    if diag.exists() {
        state.diagnostics = read_diagnostics(&diag)?
            .into_iter()
            .filter(|d| d.phase.ordinal(d.n) < done)
            .collect();
    }
    log::info!("resuming after n={n} phase={}", phase.tag());
    Ok(done)
}

pub fn write_diagnostics(path: impl AsRef<Path>, diags: &[Diagnostic]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "phase", "mmd", "se"])?;
    for d in diags {
        w.write_record([d.n.to_string(), d.phase.tag().into(), d.mmd.to_string(), d.se.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diagnostics(path: impl AsRef<Path>) -> Result<Vec<Diagnostic>> {
    let mut r = csv::Reader::from_path(path)?;
    let bad = |what: &str| Error::CorruptFile(format!("bad diagnostics {what}"));
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(Diagnostic {
                n: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("n"))?,
                phase: rec.get(1).and_then(Phase::from_tag).ok_or_else(|| bad("phase"))?,
                mmd: rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("mmd"))?,
                se: rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("se"))?,
            })
        })
        .collect()
}

fn persist(state: &IpfState, phase: Phase) -> Result<()> {
    let Some(dir) = &state.checkpoint_dir else {
        return Ok(());
    };
    let model = match phase {
        Phase::Backward => &state.model_b,
        Phase::Forward => &state.model_f,
    };
    model.save(checkpoint_path(dir, state.n, phase))?;
    write_metrics(dir.join("metrics.csv"), &state.metrics)?;
    write_diagnostics(dir.join("diagnostics.csv"), &state.diagnostics)?;
    Ok(())
}

/// The full alternating loop. Returns the final state holding
/// `(f^{L+1}, b^L)` (or `f ≡ 0` when forward training is skipped).
pub fn run_ipf(config: &IpfConfig, inputs: &IpfInputs, control: &RunControl) -> Result<IpfState> {
    if config.batch == 0 {
        return Err(Error::config("ipf.batch", "must be positive"));
    }
    let mut state = IpfState::new(config, control.checkpoint_dir.clone());
    if let Some(dir) = &control.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut done = 0;
    if control.resume {
        if let Some(dir) = &control.checkpoint_dir {
            done = restore(config, dir, &mut state)?;
        }
    }
    state.bandwidth = resolve_bandwidth(config, inputs)?;
    let total = 2 * (config.iterations + 1);
    let mut ran = done;
    while done < total {
        if control.stop_after_phases.is_some_and(|k| ran >= k) {
            return Ok(state);
        }
        let n = done / 2;
        let phase = if done % 2 == 0 { Phase::Backward } else { Phase::Forward };
        state.n = n;
        match phase {
            Phase::Backward => {
                if n > 0 && !config.warm_start {
                    state.model_b = init_model(config, Phase::Backward, n);
                }
                train_backward_phase(&mut state, inputs, config)?;
                state.phase = Phase::Backward;
                run_diagnostic(&mut state, Phase::Backward, inputs, config)?;
            }
            Phase::Forward => {
                if !config.skip_forward {
                    if n == 0 || !config.warm_start {
                        let fresh = init_model(config, Phase::Forward, n + 1);
                        state.model_f = fresh;
                    }
                    train_forward_phase(&mut state, inputs, config)?;
                } else {
                    state.steps_run.push(0);
                }
                state.phase = Phase::Forward;
                run_diagnostic(&mut state, Phase::Forward, inputs, config)?;
            }
        }
        persist(&state, phase)?;
        done += 1;
        ran += 1;
    }
    Ok(state)
}

/// Standalone implicit-score-matching trainer: one backward phase against
/// Brownian noising. Bitwise equal to the `b^0` of an IPF run with the same
/// config.
pub fn train_rsgm(config: &IpfConfig, data: &dyn PointSampler) -> Result<DriftModel> {
    let mut model = init_model(config, Phase::Backward, 0);
    let zero = DriftModel::zeros(config.net);
    let mut rows = Vec::new();
    train_phase(0, Phase::Backward, &mut model, &zero, data, config, None, &mut rows)?;
    Ok(model)
}
