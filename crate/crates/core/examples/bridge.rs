//! Full Schrödinger-bridge training on the earthquake-like fixture, with
//! checkpoints and metrics written to a run directory.
//!
//! cargo run --release --example bridge [-- fixtures/quakes.csv out_dir]

use sphere_bridge::cli::{cmd_eval, cmd_train, RunConfig};

fn main() -> sphere_bridge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let dataset = args.next().unwrap_or_else(|| "fixtures/quakes.csv".into());
    let out = args.next().unwrap_or_else(|| "runs/bridge-example".into());

    let mut cfg = RunConfig::default();
    cfg.apply_args(&[
        "--dataset".into(), dataset,
        "--out".into(), out,
        "--ipf.L".into(), "2".into(),
        "--ipf.inner_steps".into(), "300".into(),
        "--net.width".into(), "64".into(),
        "--schedule.g2_peak".into(), "3".into(),
        "--schedule.g2_floor".into(), "0.06".into(),
    ])?;
    let dir = cmd_train(&cfg, false)?;
    let report = cmd_eval(&dir, None, 2000)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
