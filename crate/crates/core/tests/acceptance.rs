//! Acceptance suite. Runs every criterion at its pinned tolerance and prints
//! one PASS/FAIL line each; exits nonzero if any fails.
//!
//! cargo test --test acceptance            (all criteria)
//! cargo test --test acceptance -- 1 2 9   (a subset)

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use sphere_bridge::cli::{cmd_train, RunConfig, RunData};
use sphere_bridge::data::{
    median_bandwidth, mmd, mmd_permutation_quantile, outlier_fraction, Empirical, HarmonicDensity, HarmonicMode,
    PointSampler, Uniform, VmfComponent, VmfMixture,
};
use sphere_bridge::ipf::{run_ipf, train_rsgm, EarlyStop, IpfConfig, IpfInputs, Phase, RunControl};
use sphere_bridge::loss::{divergence_estimate, implicit_drift_loss, loss_value, DivergenceEstimator, LossBatch, LossOptions, Stationary};
use sphere_bridge::manifold::{
    divergence, exp_map, geodesic_distance, log_map, project_to_tangent, sample_uniform, DivergenceMode, ProjectedConstant,
    TangentField, Vec3,
};
use sphere_bridge::net::{DriftModel, NetConfig};
use sphere_bridge::ode::{flow_endpoints, log_likelihood, FlowDirection, OdeOptions, ProbabilityFlow};
use sphere_bridge::rng::{stream, Streams};
use sphere_bridge::sde::{geodesic_random_walk_parallel, simulate_backward, Direction, FnDrift, NoiseSchedule, TimeGrid, ZeroDrift};
use sphere_bridge::SpherePoint;

/// Triangular schedule used for the training criteria. The default
/// 0.001/0.05 profile does not mix to the uniform prior within T = 1.
fn training_schedule() -> NoiseSchedule {
    NoiseSchedule::new(1.0, 3.0, 0.06).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Geometry suite.
fn c1() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(1, &[]);
    let (mut worst_rt, mut worst_norm) = (0.0f64, 0.0f64);
    let mut pairs = 0;
    while pairs < 10_000 {
        let x = sample_uniform(&mut rng);
        let y = sample_uniform(&mut rng);
        if x.dot(&y) < -1.0 + 1e-6 {
            continue;
        }
        pairs += 1;
        let v = log_map(&x, &y).unwrap();
        let back = exp_map(&x, &v);
        worst_rt = worst_rt.max((back.coords() - y.coords()).norm());
        worst_norm = worst_norm.max((back.coords().norm() - 1.0).abs());
        // arbitrary tangent vectors, including long ones
        let w = project_to_tangent(&x, &(Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 10.0));
        worst_norm = worst_norm.max((exp_map(&x, &w).coords().norm() - 1.0).abs());
    }
    let t = start.elapsed();
    outcome(
        worst_rt < 1e-9 && worst_norm < 1e-12 && t < Duration::from_secs(1),
        format!("max round-trip {worst_rt:.2e}, max |‖exp‖-1| {worst_norm:.2e}, {:.3}s", t.as_secs_f64()),
    )
}

/// Divergence correctness on `P(x)c`, closed form `-2<c, x>`.
fn c2() -> Outcome {
    let start = Instant::now();
    let c = Vec3::new(0.7, -1.2, 0.4);
    let field = Stationary(ProjectedConstant(c));
    let mut rng = stream(2, &[]);
    let (mut worst_exact, mut worst_fd) = (0.0f64, 0.0f64);
    let (mut sum_err, mut sum_var, mut inside) = (0.0, 0.0, 0);
    let n = 1000;
    for _ in 0..n {
        let x = sample_uniform(&mut rng);
        let want = -2.0 * c.dot(x.coords());
        let exact = divergence_estimate(&field, 0.0, &x, DivergenceEstimator::Exact, &mut rng).unwrap();
        let fd = divergence_estimate(&field, 0.0, &x, DivergenceEstimator::FiniteDifference { h: 1e-4 }, &mut rng).unwrap();
        let hut = divergence_estimate(&field, 0.0, &x, DivergenceEstimator::Hutchinson { probes: 1024 }, &mut rng).unwrap();
        worst_exact = worst_exact.max((exact - want).abs());
        worst_fd = worst_fd.max((fd - want).abs());
        // each probe gives -<c,x>|Pξ|², |Pξ|² ~ χ²(2) with variance 4
        let se = c.dot(x.coords()).abs() * 2.0 / (1024f64).sqrt();
        sum_err += hut - want;
        sum_var += se * se;
        if (hut - want).abs() <= 3.0 * se {
            inside += 1;
        }
    }
    let agg_se = sum_var.sqrt() / n as f64;
    let agg = sum_err / n as f64;
    let t = start.elapsed();
    let pass = worst_exact < 1e-8
        && worst_fd < 1e-3
        && agg.abs() < 3.0 * agg_se
        && inside as f64 >= 0.99 * n as f64
        && t < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "exact {worst_exact:.1e}, fd {worst_fd:.1e}, hutchinson mean error {agg:.1e} (3 SE = {:.1e}), {inside}/{n} points within 3 SE, {:.2}s",
            3.0 * agg_se,
            t.as_secs_f64()
        ),
    )
}

/// `r = A x - <x, A x> x` for a fixed non-symmetric `A`.
struct LinearField;

impl LinearField {
    fn a(v: &Vec3) -> Vec3 {
        Vec3::new(0.3 * v.x - 1.1 * v.y + 0.2 * v.z, 0.9 * v.x + 0.5 * v.z, -0.4 * v.x + 0.8 * v.y - 0.6 * v.z)
    }
}

impl TangentField for LinearField {
    fn value(&self, x: &SpherePoint) -> Vec3 {
        let ax = Self::a(x.coords());
        ax - x.coords() * x.coords().dot(&ax)
    }

    fn directional_derivative(&self, x: &SpherePoint, v: &Vec3) -> Option<Vec3> {
        let xc = x.coords();
        let (ax, av) = (Self::a(xc), Self::a(v));
        Some(av - v * xc.dot(&ax) - xc * (v.dot(&ax) + xc.dot(&av)))
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn random_model(width: usize, seed: u64) -> DriftModel {
    let cfg = NetConfig { width, time_features: 4, ..NetConfig::default() };
    let mut m = DriftModel::new(cfg, &mut stream(seed, &[]));
    let mut rng = stream(seed, &[1]);
    let n = m.param_count();
    for p in &mut m.params_mut()[n - (3 * width + 3)..] {
        *p = rng.gen_range(-0.5..0.5);
    }
    m
}

/// Divergence theorem: the uniform mean of div r vanishes.
fn c3() -> Outcome {
    let start = Instant::now();
    let n = 100_000;
    let xs: Vec<SpherePoint> = {
        let mut rng = stream(3, &[]);
        (0..n).map(|_| sample_uniform(&mut rng)).collect()
    };
    let c = Vec3::new(1.0, 2.0, -0.5);
    let d1: Vec<f64> = xs.iter().map(|x| divergence(&ProjectedConstant(c), x, DivergenceMode::Exact).unwrap()).collect();
    let d2: Vec<f64> = xs.iter().map(|x| divergence(&LinearField, x, DivergenceMode::Exact).unwrap()).collect();
    let net = random_model(32, 33);
    let (_, d3) = net.forward_with_divergence(&vec![0.3; n], &xs);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, d) in [("P(x)c", &d1), ("linear", &d2), ("network", &d3)] {
        let (m, se) = mean_se(d);
        pass &= m.abs() < 3.0 * se;
        parts.push(format!("{name}: {m:+.2e} (SE {se:.1e})"));
    }
    let t = start.elapsed();
    pass &= t < Duration::from_secs(30);
    outcome(pass, format!("{}, {:.2}s", parts.join(", "), t.as_secs_f64()))
}

/// Brownian mixing of the geodesic random walk.
fn c4() -> Outcome {
    let start = Instant::now();
    let grid = TimeGrid::uniform(5.0, 500).unwrap();
    let unit = |_t: f64| 1.0;
    let x0 = vec![SpherePoint::new(0.0, 0.0, 1.0); 10_000];
    let tr = geodesic_random_walk_parallel(&ZeroDrift, &unit, &grid, Direction::Forward, 5.0, &x0, &Streams::new(4, 1));
    let end = tr.terminal();
    let n = end.len() as f64;
    let mean = end.iter().fold(Vec3::zeros(), |a, p| a + p.coords()) / n;
    let second: Vec<f64> = (0..3).map(|i| end.iter().map(|p| p.coords()[i].powi(2)).sum::<f64>() / n).collect();
    let t = start.elapsed();
    let pass = mean.norm() < 0.05 && second.iter().all(|s| (0.31..=0.35).contains(s)) && t < Duration::from_secs(60);
    outcome(pass, format!("|mean| {:.4}, E[x_i²] {:.4} {:.4} {:.4}, {:.2}s", mean.norm(), second[0], second[1], second[2], t.as_secs_f64()))
}

/// Full loss gradient vs central differences.
fn c5() -> Outcome {
    let start = Instant::now();
    let mut m = random_model(16, 5);
    let frozen = FnDrift(|t: f64, x: &SpherePoint| Vec3::new(0.5 - t, x.coords().x * 2.0, 0.3));
    let mut rng = stream(55, &[]);
    let times = (0..32).map(|_| rng.gen()).collect();
    let points = (0..32).map(|_| sample_uniform(&mut rng)).collect();
    let batch = LossBatch::same_time(times, points, Direction::Forward);
    let schedule = NoiseSchedule::constant(1.0, 0.8).unwrap();
    let opts = LossOptions::default();
    m.zero_grad();
    implicit_drift_loss(&mut m, &frozen, &batch, &schedule, opts, &Streams::new(0, 1)).unwrap();
    let grad = m.grad().to_vec();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = rng.gen_range(0..m.param_count());
        let orig = m.params()[k];
        let h = 1e-5 * orig.abs().max(1.0);
        let mut at = |v: f64| {
            m.params_mut()[k] = v;
            loss_value(&m, &frozen, &batch, &schedule, opts, &mut stream(0, &[])).unwrap().loss
        };
        let fd = (at(orig + h) - at(orig - h)) / (2.0 * h);
        m.params_mut()[k] = orig;
        let rel = (fd - grad[k]).abs() / grad[k].abs().max(1e-6);
        worst = worst.max(rel);
    }
    let t = start.elapsed();
    outcome(worst < 1e-3 && t < Duration::from_secs(60), format!("max relative error {worst:.2e} over 20 parameters, {:.2}s", t.as_secs_f64()))
}

fn vmf_pair() -> VmfMixture {
    VmfMixture::new(vec![
        VmfComponent { mean: SpherePoint::new(0.0, 0.0, 1.0), kappa: 20.0, weight: 0.5 },
        VmfComponent { mean: SpherePoint::new(1.0, 0.0, 0.0), kappa: 20.0, weight: 0.5 },
    ])
    .unwrap()
}

struct VmfSetup {
    train: Empirical,
    held: Vec<SpherePoint>,
    bandwidth: f64,
    baseline_mmd: f64,
}

fn vmf_setup() -> VmfSetup {
    let mix = vmf_pair();
    let train = Empirical::new(mix.sample(4000, &mut stream(60, &[])).unwrap()).unwrap();
    let held = mix.sample(1000, &mut stream(61, &[])).unwrap();
    let unif = Uniform.sample(5000, &mut stream(62, &[])).unwrap();
    let bandwidth = median_bandwidth(&held, &unif);
    let baseline_mmd = mmd(&unif, &held, bandwidth);
    VmfSetup { train, held, bandwidth, baseline_mmd }
}

fn vmf_config(iterations: usize) -> IpfConfig {
    IpfConfig {
        schedule: training_schedule(),
        net: NetConfig { width: 128, ..NetConfig::default() },
        steps: 10,
        inner_steps: 5000,
        iterations,
        skip_forward: iterations == 0,
        early_stop: Some(EarlyStop::default()),
        seed: 6,
        diag_samples: 1000,
        diag_bootstrap: 50,
        ..IpfConfig::default()
    }
}

fn generated(model_b: &DriftModel, cfg: &IpfConfig) -> Vec<SpherePoint> {
    simulate_backward(model_b, &Uniform, &cfg.schedule, &cfg.grid().unwrap(), 5000, &Streams::new(600, 1))
        .unwrap()
        .terminal()
}

struct Baseline {
    outliers: f64,
}

/// Score-matching baseline (one backward phase).
fn c6(setup: &VmfSetup, baseline: &mut Option<Baseline>) -> Outcome {
    let start = Instant::now();
    let cfg = IpfConfig { early_stop: None, ..vmf_config(0) };
    let model = train_rsgm(&cfg, &setup.train).unwrap();
    let gen = generated(&model, &cfg);
    let m = mmd(&gen, &setup.held, setup.bandwidth);
    let outliers = outlier_fraction(&gen, &setup.held, 0.2);
    *baseline = Some(Baseline { outliers });
    let ratio = setup.baseline_mmd / m;
    let t = start.elapsed();
    outcome(
        ratio >= 5.0 && t < Duration::from_secs(600),
        format!(
            "MMD² generated {m:.5} vs uniform {:.5} ({ratio:.1}x, need 5x), outliers(0.2) {outliers:.4}, {:.0}s",
            setup.baseline_mmd,
            t.as_secs_f64()
        ),
    )
}

/// Bridge refinement over five IPF iterations.
fn c7(setup: &VmfSetup, baseline: &Option<Baseline>) -> Outcome {
    let start = Instant::now();
    let cfg = vmf_config(4);
    let inputs = IpfInputs { data: &setup.train, prior: &Uniform, reference: Some(&setup.held) };
    let st = run_ipf(&cfg, &inputs, &RunControl::default()).unwrap();
    let fwd: Vec<_> = st.diagnostics.iter().filter(|d| d.phase == Phase::Forward).collect();
    let (first, last) = (fwd[0], fwd[fwd.len() - 1]);
    let a = last.mmd <= first.mmd + 2.0 * last.se;
    let gen = generated(&st.model_b, &cfg);
    let outliers = outlier_fraction(&gen, &setup.held, 0.2);
    let (b, base) = match baseline {
        Some(bl) => (outliers <= bl.outliers, format!("{:.4}", bl.outliers)),
        None => (false, "missing (criterion 6 not run)".into()),
    };
    let t = start.elapsed();
    outcome(
        a && b && t < Duration::from_secs(45 * 60),
        format!(
            "(a) MMD²(fwd terminal, prior) iter 1 {:.5} -> iter 5 {:.5} (+2 SE {:.5}); (b) outliers {outliers:.4} vs baseline {base}; steps {:?}; {:.0}s",
            first.mmd,
            last.mmd,
            2.0 * last.se,
            st.steps_run,
            t.as_secs_f64()
        ),
    )
}

/// Bridge between two harmonic densities.
fn c8() -> Outcome {
    let start = Instant::now();
    let a = HarmonicDensity::new(4, 2, HarmonicMode::Absolute).unwrap();
    let b = HarmonicDensity::new(6, 2, HarmonicMode::Absolute).unwrap();
    let data_a = a.sample_harmonic(4000, &mut stream(80, &[])).points;
    let data_b = b.sample_harmonic(4000, &mut stream(81, &[])).points;
    let ref_a = a.sample_harmonic(1000, &mut stream(82, &[])).points;
    let ref_b = b.sample_harmonic(1000, &mut stream(83, &[])).points;
    let (sa, sb) = (Empirical::new(data_a).unwrap(), Empirical::new(data_b).unwrap());
    let cfg = IpfConfig {
        schedule: training_schedule(),
        net: NetConfig { width: 128, ..NetConfig::default() },
        inner_steps: 5000,
        iterations: 2,
        early_stop: Some(EarlyStop::default()),
        seed: 8,
        diag_samples: 0,
        ..IpfConfig::default()
    };
    let st = run_ipf(&cfg, &IpfInputs { data: &sa, prior: &sb, reference: None }, &RunControl::default()).unwrap();
    let grid = cfg.grid().unwrap();
    let n = 1000;
    let x0 = sa.sample(n, &mut stream(84, &[])).unwrap();
    // t = 0 frame is the data itself; t = T frame pushes it through f^{L+1}
    let frame_t = geodesic_random_walk_parallel(&st.model_f, &cfg.schedule, &grid, Direction::Forward, 1.0, &x0, &Streams::new(85, 1)).terminal();
    // and the reverse end: the backward walk from B should land on A
    let y0 = sb.sample(n, &mut stream(86, &[])).unwrap();
    let frame_0 = geodesic_random_walk_parallel(&st.model_b, &cfg.schedule, &grid, Direction::Backward, 1.0, &y0, &Streams::new(87, 1)).terminal();
    // the median heuristic (~1.5 rad) cannot tell the two densities apart;
    // use the lobe scale of the l = 6 harmonic instead
    let h = 0.25;
    let mut rng = stream(88, &[]);
    let check = |frame: &[SpherePoint], reference: &[SpherePoint], rng: &mut rand_chacha::ChaCha8Rng| {
        let m = mmd(frame, reference, h);
        let q = mmd_permutation_quantile(frame, reference, h, 200, 0.99, rng);
        (m, 3.0 * q)
    };
    let (m0, th0) = check(&x0, &ref_a, &mut rng);
    let (mb, thb) = check(&frame_0, &ref_a, &mut rng);
    let (mt, tht) = check(&frame_t, &ref_b, &mut rng);
    // non-vacuity: A and B are distinguishable at this sample size, and each
    // frame is closer to its own target than to the other one
    let (ab, thab) = check(&ref_a, &ref_b, &mut rng);
    let q99_ab = thab / 3.0;
    let (mt_cross, mb_cross) = (mmd(&frame_t, &ref_a, h), mmd(&frame_0, &ref_b, h));
    let coarse = median_bandwidth(&ref_a, &ref_b);
    let coarse_ab = mmd(&ref_a, &ref_b, coarse);
    let coarse_q = mmd_permutation_quantile(&ref_a, &ref_b, coarse, 200, 0.99, &mut rng);
    let t = start.elapsed();
    outcome(
        m0 < th0 && mt < tht && mb < thb && ab > q99_ab && mt < mt_cross && mb < mb_cross && t < Duration::from_secs(30 * 60),
        format!(
            "(median bandwidth {coarse:.2}: A vs B {coarse_ab:.5}, 3 x q99 {:.5}, not discriminating) bandwidth {h}: t=0 frame {m0:.5} < {th0:.5}; t=T frame {mt:.5} < {tht:.5} (vs A {mt_cross:.5}); backward end {mb:.5} < {thb:.5} (vs B {mb_cross:.5}); A vs B {ab:.5} > q99 {q99_ab:.5}; {:.0}s",
            3.0 * coarse_q,
            t.as_secs_f64()
        ),
    )
}

/// Likelihood: uniform zero model, normalization, round trip.
fn c9() -> Outcome {
    let start = Instant::now();
    let zero = DriftModel::zeros(NetConfig::default());
    let flow0 = ProbabilityFlow::new(&zero, &zero);
    let mut rng = stream(9, &[]);
    let pts: Vec<SpherePoint> = (0..50).map(|_| sample_uniform(&mut rng)).collect();
    let target = -(4.0 * std::f64::consts::PI).ln();
    let mut worst0 = 0.0f64;
    for m in [1, 10, 200] {
        let ll = log_likelihood(&flow0, 1.0, &Uniform, &pts, &OdeOptions { steps: m, ..OdeOptions::default() }).unwrap();
        worst0 = ll.iter().fold(worst0, |w, l| w.max((l - target).abs()));
    }

    let vmf = VmfMixture::single(SpherePoint::new(0.0, 0.0, 1.0), 10.0).unwrap();
    let cfg = IpfConfig {
        schedule: training_schedule(),
        net: NetConfig { width: 64, ..NetConfig::default() },
        inner_steps: 1500,
        iterations: 0,
        skip_forward: true,
        early_stop: None,
        seed: 90,
        ..IpfConfig::default()
    };
    let model_b = train_rsgm(&cfg, &vmf).unwrap();
    let model_f = DriftModel::zeros(cfg.net);
    let flow = ProbabilityFlow::new(&model_f, &model_b);
    let xs = Uniform.sample(10_000, &mut stream(91, &[])).unwrap();
    let ll = log_likelihood(&flow, 1.0, &Uniform, &xs, &OdeOptions { steps: 50, ..OdeOptions::default() }).unwrap();
    let w: Vec<f64> = ll.iter().map(|l| l.exp() * 4.0 * std::f64::consts::PI).collect();
    let (mass, mass_se) = mean_se(&w);
    let held = vmf.sample(500, &mut stream(92, &[])).unwrap();
    let ll_held = log_likelihood(&flow, 1.0, &Uniform, &held, &OdeOptions { steps: 50, ..OdeOptions::default() }).unwrap();
    let (mean_held, _) = mean_se(&ll_held);

    let opts = OdeOptions { steps: 200, ..OdeOptions::default() };
    let starts = &held[..200];
    let there = flow_endpoints(&flow, 1.0, starts, FlowDirection::Noising, &opts).unwrap();
    let back = flow_endpoints(&flow, 1.0, &there, FlowDirection::Generating, &opts).unwrap();
    let rt = starts.iter().zip(&back).map(|(a, b)| geodesic_distance(a, b)).fold(0.0, f64::max);
    let t = start.elapsed();
    outcome(
        worst0 < 1e-6 && (mass - 1.0).abs() < 0.05 && rt < 1e-4 && t < Duration::from_secs(600),
        format!(
            "zero model max error {worst0:.1e}; ∫p = {mass:.4} ± {mass_se:.4}; held-out mean log p {mean_held:.3} (uniform {target:.3}); round trip {rt:.1e}; {:.0}s",
            t.as_secs_f64()
        ),
    )
}

fn small_run_config(out: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    let args: Vec<String> = [
        "--dataset", "vmf:90,0,20;0,0,20",
        "--synthetic_n", "600",
        "--ipf.L", "1",
        "--ipf.inner_steps", "40",
        "--ipf.batch", "32",
        "--ipf.log_every", "5",
        "--net.width", "16",
        "--schedule.g2_peak", "3",
        "--schedule.g2_floor", "0.06",
        "--eval.samples", "200",
        "--eval.bootstrap", "10",
        "--run.workers", "2",
        "--seed", "10",
    ]
    .iter()
    .map(|s| s.replace("--synthetic_n", "--data.synthetic_n"))
    .collect();
    cfg.apply_args(&args).unwrap();
    cfg.out = Some(out.to_path_buf());
    cfg
}

fn run_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ckpt") || n.ends_with(".csv") || n == "config.txt")
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let mut bytes = std::fs::read(dir.join(&n)).unwrap();
            if n == "config.txt" {
                // the output directory is the one setting that differs by construction
                let text = String::from_utf8(bytes).unwrap();
                bytes = text.lines().filter(|l| !l.starts_with("run.out")).collect::<Vec<_>>().join("\n").into_bytes();
            }
            (n, bytes)
        })
        .collect()
}

/// Reproducibility: reruns and resumed runs are bitwise identical.
fn c10() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    cmd_train(&small_run_config(&a), false).unwrap();
    cmd_train(&small_run_config(&b), false).unwrap();
    let rerun = run_files(&a) == run_files(&b);

    // interrupted after two phases, then resumed through the CLI path
    let cfg_c = small_run_config(&c);
    let data = RunData::load(&cfg_c).unwrap();
    let inputs = IpfInputs { data: &data.train_sampler, prior: data.prior(), reference: Some(data.reference()) };
    run_ipf(
        &cfg_c.ipf().unwrap(),
        &inputs,
        &RunControl { checkpoint_dir: Some(c.clone()), resume: false, stop_after_phases: Some(2) },
    )
    .unwrap();
    let partial = std::fs::read_dir(&c).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".ckpt")).count();
    cmd_train(&cfg_c, true).unwrap();
    let resumed = run_files(&a) == run_files(&c);
    let t = start.elapsed();
    outcome(
        rerun && resumed && partial == 2,
        format!(
            "rerun identical: {rerun}; resume after {partial} phases identical: {resumed}; {} files compared; {:.1}s",
            run_files(&a).len(),
            t.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    // libtest flags (e.g. --nocapture, --test-threads) are ignored; bare
    // numbers select criteria
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: usize| selected.is_empty() || selected.contains(&i);
    let mut failed = 0;
    let mut report = |i: usize, name: &str, o: Outcome| {
        println!("criterion {i:2} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    if want(1) {
        report(1, "geometry", c1());
    }
    if want(2) {
        report(2, "divergence estimators", c2());
    }
    if want(3) {
        report(3, "divergence-theorem null test", c3());
    }
    if want(4) {
        report(4, "Brownian mixing", c4());
    }
    if want(5) {
        report(5, "loss gradient", c5());
    }
    let mut baseline = None;
    if want(6) || want(7) {
        let setup = vmf_setup();
        report(6, "score-matching baseline", c6(&setup, &mut baseline));
        if want(7) {
            report(7, "bridge refinement", c7(&setup, &baseline));
        }
    }
    if want(8) {
        report(8, "harmonic interpolation", c8());
    }
    if want(9) {
        report(9, "likelihood", c9());
    }
    if want(10) {
        report(10, "reproducibility", c10());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
