//! Exact log-likelihoods from the probability-flow ODE of a trained pair.
//!
//! cargo run --release --example likelihood

use sphere_bridge::data::{PointSampler, Uniform, VmfMixture};
use sphere_bridge::ipf::{train_rsgm, IpfConfig};
use sphere_bridge::net::{DriftModel, NetConfig};
use sphere_bridge::ode::{flow_endpoints, log_likelihood, FlowDirection, OdeOptions, ProbabilityFlow};
use sphere_bridge::rng::stream;
use sphere_bridge::sde::NoiseSchedule;
use sphere_bridge::SpherePoint;

fn main() -> sphere_bridge::Result<()> {
    let vmf = VmfMixture::single(SpherePoint::new(0.0, 0.0, 1.0), 10.0)?;
    let cfg = IpfConfig {
        schedule: NoiseSchedule::new(1.0, 6.0, 0.12)?,
        net: NetConfig { width: 64, ..NetConfig::default() },
        inner_steps: 800,
        iterations: 0,
        skip_forward: true,
        ..IpfConfig::default()
    };
    let model_b = train_rsgm(&cfg, &vmf)?;
    let model_f = DriftModel::zeros(cfg.net);
    let flow = ProbabilityFlow::new(&model_f, &model_b);
    let opts = OdeOptions { steps: 100, ..OdeOptions::default() };

    let pts = [
        SpherePoint::new(0.0, 0.0, 1.0),
        SpherePoint::from_latlon_deg(60.0, 0.0),
        SpherePoint::from_latlon_deg(0.0, 0.0),
    ];
    let ll = log_likelihood(&flow, 1.0, &Uniform, &pts, &opts)?;
    for (p, l) in pts.iter().zip(&ll) {
        let (lat, lon) = p.to_latlon_deg();
        println!("({lat:5.1}, {lon:5.1}): model {l:+.4}  true {:+.4}", vmf.log_density(p).unwrap());
    }

    // ∫ p dA by uniform importance sampling
    let xs = Uniform.sample(2000, &mut stream(3, &[]))?;
    let ll = log_likelihood(&flow, 1.0, &Uniform, &xs, &opts)?;
    let mass = ll.iter().map(|l| l.exp() * 4.0 * std::f64::consts::PI).sum::<f64>() / xs.len() as f64;
    println!("normalization estimate: {mass:.4}");

    let there = flow_endpoints(&flow, 1.0, &pts, FlowDirection::Noising, &opts)?;
    let back = flow_endpoints(&flow, 1.0, &there, FlowDirection::Generating, &opts)?;
    let err = pts.iter().zip(&back).map(|(a, b)| (a.coords() - b.coords()).norm()).fold(0.0, f64::max);
    println!("noising/generating round trip error: {err:.2e}");
    Ok(())
}
