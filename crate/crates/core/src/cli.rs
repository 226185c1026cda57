//! Run configuration and the workflows behind the `sbridge` binary.
//!
//! A run directory holds everything needed to reproduce it:
//!
//! ```text
//! config.txt          resolved key=value config (feed back with --config)
//! manifest.json       seed, workers, crate version, command, dataset sizes
//! metrics.csv         training log
//! diagnostics.csv     end-of-phase MMDs with bootstrap SEs
//! ipf_{n}_{b,f}.ckpt  drift checkpoints
//! ```
//!
//! Datasets are given as a CSV path or a synthetic spec:
//! `uniform`, `vmf:<lat>,<lon>,<kappa>[,<weight>][;...]` or
//! `harmonic:<l>,<m>[,abs|pos]`. Synthetic sets draw `data.synthetic_n` points
//! from a stream keyed by `data.split_seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::data::{
    export_samples, export_trajectories, load_latlon_csv, mmd, outlier_fraction, Empirical,
    ExportFormat, GeoDataset, HarmonicDensity, HarmonicMode, PointSampler, Uniform, VmfComponent,
    VmfMixture,
};
use crate::ipf::{checkpoint_path, run_ipf, EarlyStop, IpfConfig, IpfInputs, Phase, RunControl};
use crate::loss::DivergenceEstimator;
use crate::manifold::SpherePoint;
use crate::net::{DriftModel, NetConfig};
use crate::ode::{flow_endpoints, log_likelihood, FlowDirection, OdeOptions, ProbabilityFlow};
use crate::rng::{stream, Streams};
use crate::sde::{geodesic_random_walk_parallel, simulate_backward, Direction, NoiseSchedule, TimeGrid, ZeroDrift};
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SBRIDGE_OUT";

/// Every tunable of a run, as a flat dotted-key namespace.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub horizon: f64,
    pub g2_peak: f64,
    pub g2_floor: f64,
    pub grid_steps: usize,
    pub width: usize,
    pub time_features: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// 0 disables clipping.
    pub clip: f64,
    pub ipf_l: usize,
    pub inner_steps: usize,
    pub batch: usize,
    pub warm_start: bool,
    pub skip_forward: bool,
    pub early_stop: bool,
    pub estimator: DivergenceEstimator,
    pub mean_loss: bool,
    pub log_every: usize,
    pub dataset: String,
    pub prior: String,
    pub synthetic_n: usize,
    pub split_seed: u64,
    pub held_out: f64,
    pub eval_samples: usize,
    pub eval_bootstrap: usize,
    pub bandwidth: Option<f64>,
    pub ode_steps: usize,
    pub log_wall_time: bool,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = NoiseSchedule::default();
        RunConfig {
            horizon: s.horizon(),
            g2_peak: s.g2_peak(),
            g2_floor: s.g2_floor(),
            grid_steps: 10,
            width: 128,
            time_features: 8,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            clip: 10.0,
            ipf_l: 4,
            inner_steps: 5000,
            batch: 256,
            warm_start: true,
            skip_forward: false,
            early_stop: true,
            estimator: DivergenceEstimator::Exact,
            mean_loss: true,
            log_every: 50,
            dataset: String::new(),
            prior: "uniform".into(),
            synthetic_n: 5000,
            split_seed: 0,
            held_out: 0.2,
            eval_samples: 1000,
            eval_bootstrap: 50,
            bandwidth: None,
            ode_steps: 200,
            log_wall_time: false,
            seed: 0,
            workers: 1,
            out: None,
        }
    }
}

pub const CONFIG_KEYS: [&str; 32] = [
    "schedule.T",
    "schedule.g2_peak",
    "schedule.g2_floor",
    "grid.N",
    "net.width",
    "net.time_features",
    "optim.lr",
    "optim.beta1",
    "optim.beta2",
    "optim.clip",
    "ipf.L",
    "ipf.inner_steps",
    "ipf.batch",
    "ipf.warm_start",
    "ipf.skip_forward",
    "ipf.early_stop",
    "ipf.divergence",
    "ipf.mean_loss",
    "ipf.log_every",
    "data.dataset",
    "data.prior",
    "data.synthetic_n",
    "data.split_seed",
    "data.held_out",
    "eval.samples",
    "eval.bootstrap",
    "eval.bandwidth",
    "ode.steps",
    "log.wall_time",
    "run.seed",
    "run.workers",
    "run.out",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got {value:?}"))),
    }
}

impl RunConfig {
    /// Full experimental scale: width 512, `N = 10`, five IPF iterations.
    pub fn paper_scale(&mut self) {
        let s = NoiseSchedule::default();
        self.horizon = s.horizon();
        self.g2_peak = s.g2_peak();
        self.g2_floor = s.g2_floor();
        self.grid_steps = 10;
        self.width = 512;
        self.ipf_l = 4;
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "schedule.T" => self.horizon.to_string(),
            "schedule.g2_peak" => self.g2_peak.to_string(),
            "schedule.g2_floor" => self.g2_floor.to_string(),
            "grid.N" => self.grid_steps.to_string(),
            "net.width" => self.width.to_string(),
            "net.time_features" => self.time_features.to_string(),
            "optim.lr" => self.lr.to_string(),
            "optim.beta1" => self.beta1.to_string(),
            "optim.beta2" => self.beta2.to_string(),
            "optim.clip" => self.clip.to_string(),
            "ipf.L" => self.ipf_l.to_string(),
            "ipf.inner_steps" => self.inner_steps.to_string(),
            "ipf.batch" => self.batch.to_string(),
            "ipf.warm_start" => self.warm_start.to_string(),
            "ipf.skip_forward" => self.skip_forward.to_string(),
            "ipf.early_stop" => self.early_stop.to_string(),
            "ipf.divergence" => self.estimator.name(),
            "ipf.mean_loss" => self.mean_loss.to_string(),
            "ipf.log_every" => self.log_every.to_string(),
            "data.dataset" => self.dataset.clone(),
            "data.prior" => self.prior.clone(),
            "data.synthetic_n" => self.synthetic_n.to_string(),
            "data.split_seed" => self.split_seed.to_string(),
            "data.held_out" => self.held_out.to_string(),
            "eval.samples" => self.eval_samples.to_string(),
            "eval.bootstrap" => self.eval_bootstrap.to_string(),
            "eval.bandwidth" => self.bandwidth.map(|h| h.to_string()).unwrap_or_else(|| "auto".into()),
            "ode.steps" => self.ode_steps.to_string(),
            "log.wall_time" => self.log_wall_time.to_string(),
            "run.seed" => self.seed.to_string(),
            "run.workers" => self.workers.to_string(),
            "run.out" => self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "schedule.T" => self.horizon = parse(key, v)?,
            "schedule.g2_peak" => self.g2_peak = parse(key, v)?,
            "schedule.g2_floor" => self.g2_floor = parse(key, v)?,
            "grid.N" => self.grid_steps = parse(key, v)?,
            "net.width" => self.width = parse(key, v)?,
            "net.time_features" => self.time_features = parse(key, v)?,
            "optim.lr" => self.lr = parse(key, v)?,
            "optim.beta1" => self.beta1 = parse(key, v)?,
            "optim.beta2" => self.beta2 = parse(key, v)?,
            "optim.clip" => self.clip = parse(key, v)?,
            "ipf.L" => self.ipf_l = parse(key, v)?,
            "ipf.inner_steps" => self.inner_steps = parse(key, v)?,
            "ipf.batch" => self.batch = parse(key, v)?,
            "ipf.warm_start" => self.warm_start = parse_bool(key, v)?,
            "ipf.skip_forward" => self.skip_forward = parse_bool(key, v)?,
            "ipf.early_stop" => self.early_stop = parse_bool(key, v)?,
            "ipf.divergence" => {
                self.estimator = DivergenceEstimator::parse(v)
                    .ok_or_else(|| Error::config(key, format!("unknown estimator {v:?}")))?
            }
            "ipf.mean_loss" => self.mean_loss = parse_bool(key, v)?,
            "ipf.log_every" => self.log_every = parse(key, v)?,
            "data.dataset" => self.dataset = v.to_string(),
            "data.prior" => self.prior = v.to_string(),
            "data.synthetic_n" => self.synthetic_n = parse(key, v)?,
            "data.split_seed" => self.split_seed = parse(key, v)?,
            "data.held_out" => self.held_out = parse(key, v)?,
            "eval.samples" => self.eval_samples = parse(key, v)?,
            "eval.bootstrap" => self.eval_bootstrap = parse(key, v)?,
            "eval.bandwidth" => {
                self.bandwidth = if v == "auto" || v.is_empty() { None } else { Some(parse(key, v)?) }
            }
            "ode.steps" => self.ode_steps = parse(key, v)?,
            "log.wall_time" => self.log_wall_time = parse_bool(key, v)?,
            "run.seed" => self.seed = parse(key, v)?,
            "run.workers" => self.workers = parse(key, v)?,
            "run.out" => self.out = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// `key = value` lines in canonical order.
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap()))
            .collect()
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(&format!("line {}", lineno + 1), "expected key = value"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(c)
    }

    /// Applies command-line overrides: `--key value`, `--key=value`,
    /// `--config FILE` (applied in place), `--paper-scale`,
    /// `--skip-forward-phase`, and `--dataset`/`--seed`/`--workers`/`--out`
    /// shorthands.
    pub fn apply_args(&mut self, args: &[String]) -> Result<()> {
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(flag) = arg.strip_prefix("--") else {
                return Err(Error::config(arg, "expected a --flag"));
            };
            match flag {
                "paper-scale" => self.paper_scale(),
                "skip-forward-phase" => self.skip_forward = true,
                _ => {
                    let (key, value) = match flag.split_once('=') {
                        Some((k, v)) => (k.to_string(), v.to_string()),
                        None => {
                            i += 1;
                            let v = args
                                .get(i)
                                .ok_or_else(|| Error::config(flag, "missing value"))?;
                            (flag.to_string(), v.clone())
                        }
                    };
                    let key = match key.as_str() {
                        "dataset" => "data.dataset",
                        "prior" => "data.prior",
                        "seed" => "run.seed",
                        "workers" => "run.workers",
                        "out" => "run.out",
                        k => k,
                    };
                    if key == "config" {
                        self.apply_text(&std::fs::read_to_string(&value)?)?;
                    } else {
                        self.set(key, &value)?;
                    }
                }
            }
            i += 1;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        let positive = [
            ("grid.N", self.grid_steps),
            ("net.width", self.width),
            ("ipf.batch", self.batch),
            ("run.workers", self.workers),
            ("ode.steps", self.ode_steps),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::config(k, "must be positive"));
            }
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("optim.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("optim.beta1", "decays must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.held_out) {
            return Err(Error::config("data.held_out", "must lie in [0, 1)"));
        }
        if self.dataset.is_empty() {
            return Err(Error::config("data.dataset", "no dataset given"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.horizon, self.g2_peak, self.g2_floor)
            .map_err(|e| Error::config("schedule", e.to_string()))
    }

    pub fn net(&self) -> NetConfig {
        NetConfig {
            width: self.width,
            time_features: self.time_features,
            horizon: self.horizon,
            ..NetConfig::default()
        }
    }

    pub fn ipf(&self) -> Result<IpfConfig> {
        Ok(IpfConfig {
            schedule: self.schedule()?,
            steps: self.grid_steps,
            net: self.net(),
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            clip: (self.clip > 0.0).then_some(self.clip),
            iterations: self.ipf_l,
            inner_steps: self.inner_steps,
            batch: self.batch,
            warm_start: self.warm_start,
            early_stop: self.early_stop.then(EarlyStop::default),
            estimator: self.estimator,
            mean_loss: self.mean_loss,
            skip_forward: self.skip_forward,
            seed: self.seed,
            workers: self.workers,
            log_every: self.log_every,
            diag_samples: self.eval_samples,
            diag_bootstrap: self.eval_bootstrap,
            bandwidth: self.bandwidth,
            log_wall_time: self.log_wall_time,
        })
    }

    /// `run.out`, else `$SBRIDGE_OUT/run-<seed>`, else `runs/run-<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        if let Some(p) = &self.out {
            return p.clone();
        }
        let root = std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(format!("run-{}", self.seed))
    }
}

/// Materializes a dataset spec (see the module docs).
pub fn load_dataset(spec: &str, n: usize, seed: u64) -> Result<GeoDataset> {
    let mut rng = stream(seed, &[0xDA7A]);
    let bad = |msg: String| Error::config("data.dataset", msg);
    if spec == "uniform" {
        return Ok(GeoDataset::new("uniform", Uniform.sample(n, &mut rng)?));
    }
    if let Some(rest) = spec.strip_prefix("vmf:") {
        let mut comps = Vec::new();
        for part in rest.split(';').filter(|p| !p.trim().is_empty()) {
            let f: Vec<f64> = part
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("bad vmf component {part:?}")))?;
            if f.len() != 3 && f.len() != 4 {
                return Err(bad(format!("vmf component needs lat,lon,kappa[,weight]: {part:?}")));
            }
            comps.push(VmfComponent {
                mean: SpherePoint::from_latlon_deg(f[0], f[1]),
                kappa: f[2],
                weight: f.get(3).copied().unwrap_or(f64::NAN),
            });
        }
        if comps.iter().all(|c| c.weight.is_nan()) {
            let w = 1.0 / comps.len().max(1) as f64;
            comps.iter_mut().for_each(|c| c.weight = w);
        }
        let mix = VmfMixture::new(comps)?;
        return Ok(GeoDataset::new(spec, mix.sample(n, &mut rng)?));
    }
    if let Some(rest) = spec.strip_prefix("harmonic:") {
        let f: Vec<&str> = rest.split(',').map(str::trim).collect();
        if f.len() < 2 {
            return Err(bad(format!("harmonic spec needs l,m: {spec:?}")));
        }
        let l: usize = f[0].parse().map_err(|_| bad(format!("bad degree {:?}", f[0])))?;
        let m: i64 = f[1].parse().map_err(|_| bad(format!("bad order {:?}", f[1])))?;
        let mode = match f.get(2).copied() {
            None | Some("abs") => HarmonicMode::Absolute,
            Some("pos") => HarmonicMode::PositivePart,
            Some(o) => return Err(bad(format!("unknown harmonic mode {o:?}"))),
        };
        let d = HarmonicDensity::new(l, m, mode)?;
        let draw = d.sample_harmonic(n, &mut rng);
        log::info!("harmonic ({l},{m}) acceptance rate {:.3}", draw.acceptance_rate());
        return Ok(GeoDataset::new(spec, draw.points));
    }
    load_latlon_csv(spec)
}

/// The data and prior a config resolves to.
pub struct RunData {
    pub train: GeoDataset,
    pub held_out: GeoDataset,
    pub train_sampler: Empirical,
    /// `None` means the uniform prior.
    pub prior: Option<Empirical>,
}

impl RunData {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let all = load_dataset(&cfg.dataset, cfg.synthetic_n, cfg.split_seed)?;
        if all.skipped > 0 {
            log::warn!("{}: skipped {} rows", all.name, all.skipped);
        }
        let (train, held_out) = all.split(cfg.held_out, cfg.split_seed);
        let train_sampler = train.sampler()?;
        let prior = if cfg.prior == "uniform" {
            None
        } else {
            Some(load_dataset(&cfg.prior, cfg.synthetic_n, cfg.split_seed ^ 0xB)?.sampler()?)
        };
        Ok(RunData { train, held_out, train_sampler, prior })
    }

    pub fn prior(&self) -> &dyn PointSampler {
        match &self.prior {
            Some(p) => p,
            None => &Uniform,
        }
    }

    /// Held-out points, or the training points when nothing was held out.
    pub fn reference(&self) -> &[SpherePoint] {
        if self.held_out.is_empty() {
            &self.train.points
        } else {
            &self.held_out.points
        }
    }
}

fn write_manifest(dir: &Path, cfg: &RunConfig, command: &str, data: &RunData) -> Result<()> {
    let manifest = json!({
        "command": command,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "version": env!("CARGO_PKG_VERSION"),
        "dataset": cfg.dataset,
        "prior": cfg.prior,
        "train_points": data.train.len(),
        "held_out_points": data.held_out.len(),
        "skipped_rows": data.train.skipped,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// Trains the drift pair described by `cfg`; returns the run directory.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<PathBuf> {
    train_run(cfg, resume, "train")
}

fn train_run(cfg: &RunConfig, resume: bool, command: &str) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir)?;
    let data = RunData::load(cfg)?;
    std::fs::write(dir.join("config.txt"), cfg.to_text())?;
    write_manifest(&dir, cfg, command, &data)?;
    let inputs = IpfInputs {
        data: &data.train_sampler,
        prior: data.prior(),
        reference: Some(data.reference()),
    };
    let control = RunControl {
        checkpoint_dir: Some(dir.clone()),
        resume,
        stop_after_phases: None,
    };
    let state = run_ipf(&cfg.ipf()?, &inputs, &control)?;
    for d in &state.diagnostics {
        log::info!("n={} phase={} mmd={:.6} (se {:.6})", d.n, d.phase.tag(), d.mmd, d.se);
    }
    Ok(dir)
}

/// A trained run loaded back from disk.
pub struct TrainedRun {
    pub dir: PathBuf,
    pub config: RunConfig,
    /// `f^{L+1}`
    pub model_f: DriftModel,
    /// `b^L`
    pub model_b: DriftModel,
}

impl TrainedRun {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let cfg_path = dir.join("config.txt");
        if !cfg_path.exists() {
            return Err(Error::MissingCheckpoint(cfg_path));
        }
        let config = RunConfig::from_file(&cfg_path)?;
        let net = config.net();
        let load = |phase| {
            let p = checkpoint_path(&dir, config.ipf_l, phase);
            if !p.exists() {
                return Err(Error::MissingCheckpoint(p));
            }
            DriftModel::load_expecting(p, &net)
        };
        let model_b = load(Phase::Backward)?;
        let model_f = load(Phase::Forward)?;
        Ok(TrainedRun { dir, config, model_f, model_b })
    }

    pub fn flow(&self) -> ProbabilityFlow<'_> {
        ProbabilityFlow::new(&self.model_f, &self.model_b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    Sde,
    Ode,
}

/// Generates `count` points from the prior by the backward walk (SDE) or the
/// generating flow (ODE).
pub fn generate(run: &TrainedRun, data: &RunData, count: usize, mode: SampleMode, seed: u64) -> Result<Vec<SpherePoint>> {
    let cfg = &run.config;
    let streams = Streams::new(seed, cfg.workers).child(0x5A);
    match mode {
        SampleMode::Sde => {
            let grid = TimeGrid::uniform(cfg.horizon, cfg.grid_steps)?;
            Ok(simulate_backward(&run.model_b, data.prior(), &cfg.schedule()?, &grid, count, &streams)?.terminal())
        }
        SampleMode::Ode => {
            let start = data.prior().sample(count, &mut streams.child(0).rng())?;
            let opts = OdeOptions { steps: cfg.ode_steps, workers: cfg.workers, error_estimate: false };
            flow_endpoints(&run.flow(), cfg.horizon, &start, FlowDirection::Generating, &opts)
        }
    }
}

pub fn cmd_sample(run_dir: &Path, count: usize, mode: SampleMode, out: &Path, seed: u64) -> Result<PathBuf> {
    let run = TrainedRun::open(run_dir)?;
    let data = RunData::load(&run.config)?;
    let pts = generate(&run, &data, count, mode, seed)?;
    export_samples(&pts, out, ExportFormat::from_path(out))?;
    Ok(out.to_path_buf())
}

/// Frame times as fractions of `T`.
pub const DEFAULT_FRAMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Bridge marginals at `t = frac · T`: data points pushed forward by the
/// trained forward drift up to `t`. The `t = 0` frame is the data sample.
pub fn bridge_frames(run: &TrainedRun, data: &RunData, fracs: &[f64], count: usize, seed: u64) -> Result<Vec<(f64, Vec<SpherePoint>)>> {
    let cfg = &run.config;
    let schedule = cfg.schedule()?;
    let grid = TimeGrid::uniform(cfg.horizon, cfg.grid_steps)?;
    let streams = Streams::new(seed, cfg.workers).child(0x1F);
    let x0 = data.train_sampler.sample(count, &mut streams.child(0).rng())?;
    fracs
        .iter()
        .map(|&frac| {
            let t = frac * cfg.horizon;
            let sub = grid.truncated(t);
            let pts = if sub.steps() == 0 {
                x0.clone()
            } else {
                geodesic_random_walk_parallel(&run.model_f, &schedule, &sub, Direction::Forward, cfg.horizon, &x0, &streams.child(1))
                    .terminal()
            };
            Ok((t, pts))
        })
        .collect()
}

/// Trains a bridge between `data.dataset` and `data.prior` and writes one
/// sample file per frame time.
pub fn cmd_interpolate(cfg: &RunConfig, fracs: &[f64], count: usize) -> Result<(PathBuf, Vec<PathBuf>)> {
    if cfg.prior == "uniform" {
        return Err(Error::config("data.prior", "interpolation needs a second dataset"));
    }
    let dir = train_run(cfg, false, "interpolate")?;
    let run = TrainedRun::open(&dir)?;
    let data = RunData::load(cfg)?;
    let mut files = Vec::new();
    for (i, (t, pts)) in bridge_frames(&run, &data, fracs, count, cfg.seed)?.into_iter().enumerate() {
        let path = dir.join(format!("frame_{i}_t{t:.3}.csv"));
        export_samples(&pts, &path, ExportFormat::Csv)?;
        files.push(path);
    }
    Ok((dir, files))
}

/// Log-likelihood of every dataset point; returns `(mean, standard error)`.
pub fn cmd_likelihood(run_dir: &Path, dataset: Option<&str>, out: &Path) -> Result<(f64, f64)> {
    let run = TrainedRun::open(run_dir)?;
    let cfg = &run.config;
    let points = match dataset {
        Some(spec) => load_dataset(spec, cfg.synthetic_n, cfg.split_seed ^ 0x11)?.points,
        None => RunData::load(cfg)?.reference().to_vec(),
    };
    if cfg.prior != "uniform" {
        return Err(Error::config("data.prior", "likelihoods need the uniform prior"));
    }
    let opts = OdeOptions { steps: cfg.ode_steps, workers: cfg.workers, error_estimate: false };
    let ll = log_likelihood(&run.flow(), cfg.horizon, &Uniform, &points, &opts)?;
    let shift = (4.0 * std::f64::consts::PI).ln();
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["lat", "lon", "loglik_surface", "loglik_uniform_base"])?;
    for (p, l) in points.iter().zip(&ll) {
        let (lat, lon) = p.to_latlon_deg();
        w.write_record([lat.to_string(), lon.to_string(), l.to_string(), (l + shift).to_string()])?;
    }
    w.flush()?;
    Ok(mean_se(&ll))
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Outlier radii reported by `eval`.
pub const OUTLIER_RADII: [f64; 3] = [0.1, 0.2, 0.3];

/// Sample-quality report of `generated` against `reference`.
pub fn quality_report(generated: &[SpherePoint], reference: &[SpherePoint], bandwidth: f64, seed: u64) -> Result<serde_json::Value> {
    let uniform = Uniform.sample(generated.len().max(1), &mut stream(seed, &[0x0BA5]))?;
    let mut outliers = serde_json::Map::new();
    for r in OUTLIER_RADII {
        outliers.insert(format!("{r}"), json!(outlier_fraction(generated, reference, r)));
    }
    Ok(json!({
        "count": generated.len(),
        "bandwidth": bandwidth,
        "mmd_heldout": if generated.is_empty() { serde_json::Value::Null } else { json!(mmd(generated, reference, bandwidth)) },
        "mmd_uniform_baseline": mmd(&uniform, reference, bandwidth),
        "outlier_fraction": outliers,
    }))
}

/// Evaluates a run: generated-vs-held-out MMD, forward-terminal-vs-prior MMD
/// and outlier fractions. Writes `eval.json` into the run directory.
pub fn cmd_eval(run_dir: &Path, dataset: Option<&str>, count: usize) -> Result<serde_json::Value> {
    let run = TrainedRun::open(run_dir)?;
    let cfg = &run.config;
    let data = RunData::load(cfg)?;
    let reference = match dataset {
        Some(spec) => load_dataset(spec, cfg.synthetic_n, cfg.split_seed ^ 0x11)?.points,
        None => data.reference().to_vec(),
    };
    let bandwidth = match cfg.bandwidth {
        Some(h) => h,
        None => {
            let u = data.prior().sample(500, &mut stream(cfg.seed, &[0xBA]))?;
            crate::data::median_bandwidth(&reference, &u)
        }
    };
    let generated = generate(&run, &data, count, SampleMode::Sde, cfg.seed)?;
    let mut report = quality_report(&generated, &reference, bandwidth, cfg.seed)?;
    let ipf = cfg.ipf()?;
    let inputs = IpfInputs { data: &data.train_sampler, prior: data.prior(), reference: Some(&reference) };
    let (mp, se) = crate::ipf::forward_diagnostic(&run.model_f, &inputs, &ipf, bandwidth, &Streams::new(cfg.seed, cfg.workers).child(0xE7))?;
    report["mmd_prior"] = json!(mp);
    report["mmd_prior_se"] = json!(se);
    std::fs::write(run.dir.join("eval.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Raw geodesic random walks. With a run directory the trained drifts are
/// used (`f` forward, `b` backward); otherwise the walk is driftless.
pub fn cmd_simulate(cfg: &RunConfig, run_dir: Option<&Path>, direction: Direction, paths: usize, out: &Path) -> Result<PathBuf> {
    let (cfg, run) = match run_dir {
        Some(d) => {
            let r = TrainedRun::open(d)?;
            (r.config.clone(), Some(r))
        }
        None => (cfg.clone(), None),
    };
    let schedule = cfg.schedule()?;
    let grid = TimeGrid::uniform(cfg.horizon, cfg.grid_steps)?;
    let streams = Streams::new(cfg.seed, cfg.workers).child(0x51);
    let start: Vec<SpherePoint> = match direction {
        Direction::Forward => {
            if cfg.dataset.is_empty() {
                Uniform.sample(paths, &mut streams.child(0).rng())?
            } else {
                RunData::load(&cfg)?.train_sampler.sample(paths, &mut streams.child(0).rng())?
            }
        }
        Direction::Backward => {
            if cfg.dataset.is_empty() {
                Uniform.sample(paths, &mut streams.child(0).rng())?
            } else {
                RunData::load(&cfg)?.prior().sample(paths, &mut streams.child(0).rng())?
            }
        }
    };
    let batch = match (&run, direction) {
        (Some(r), Direction::Forward) => geodesic_random_walk_parallel(&r.model_f, &schedule, &grid, direction, cfg.horizon, &start, &streams.child(1)),
        (Some(r), Direction::Backward) => geodesic_random_walk_parallel(&r.model_b, &schedule, &grid, direction, cfg.horizon, &start, &streams.child(1)),
        (None, _) => geodesic_random_walk_parallel(&ZeroDrift, &schedule, &grid, direction, cfg.horizon, &start, &streams.child(1)),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    export_trajectories(&batch, out)?;
    Ok(out.to_path_buf())
}

/// Renders an error as the single-line `error[CODE]: message` form.
pub fn error_line(e: &Error) -> String {
    format!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "))
}

/// Parses `0,0.25,0.5` style frame lists.
pub fn parse_frames(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            let v: f64 = parse("frames", x)?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(Error::config("frames", "fractions of T must lie in [0, 1]"))
            }
        })
        .collect()
}

/// Key/value view of a config, handy for reports.
pub fn config_map(cfg: &RunConfig) -> BTreeMap<String, String> {
    CONFIG_KEYS.iter().map(|k| (k.to_string(), cfg.get(k).unwrap())).collect()
}
