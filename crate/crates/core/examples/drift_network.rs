//! The drift network: forward passes, directional derivatives, exact
//! divergence, a gradient step and a checkpoint round trip.
//!
//! cargo run --release --example drift_network

use sphere_bridge::net::{DriftModel, LossAdjoints, NetConfig, OptimizerState, Probes};
use sphere_bridge::rng::stream;
use sphere_bridge::SpherePoint;

fn main() -> sphere_bridge::Result<()> {
    let cfg = NetConfig { width: 32, ..NetConfig::default() };
    let mut rng = stream(0, &[]);
    let mut model = DriftModel::new(cfg, &mut rng);
    println!("{} parameters, zero drift at init: {}", model.param_count(), model.is_zero_drift());

    // give the output layer some weight so there is something to look at
    let n = model.param_count();
    for (i, p) in model.params_mut()[n - 99..].iter_mut().enumerate() {
        *p = ((i * 37 % 11) as f64 - 5.0) * 0.02;
    }

    let xs = [SpherePoint::new(0.0, 0.6, 0.8), SpherePoint::new(1.0, 0.0, 0.0)];
    let ts = [0.2, 0.7];
    let (r, div) = model.forward_with_divergence(&ts, &xs);
    for i in 0..2 {
        println!("r = {:?} (tangent: <r,x> = {:.1e}), div = {:+.5}", r[i], r[i].dot(xs[i].coords()), div[i]);
    }

    // one Adam step on ½|r|² + div
    let tape = model.record(&ts, &xs, Some(Probes::basis(&xs)));
    let adj = LossAdjoints { out: tape.outputs(), div: vec![1.0; 2] };
    model.backward(&tape, &adj)?;
    let mut opt = OptimizerState::for_model(&model, 1e-3);
    let stats = opt.step(&mut model)?;
    println!("gradient norm {:.4}", stats.grad_norm);

    let path = std::env::temp_dir().join("drift_example.ckpt");
    model.save(&path)?;
    let loaded = DriftModel::load_expecting(&path, &cfg)?;
    println!("checkpoint round trip exact: {}", loaded.params() == model.params());
    Ok(())
}
