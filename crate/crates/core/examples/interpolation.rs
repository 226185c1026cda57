//! Bridge between two spherical-harmonic densities; writes the marginal
//! frames at t = 0, T/4, T/2, 3T/4, T.
//!
//! cargo run --release --example interpolation [-- out_dir]

use sphere_bridge::cli::{cmd_interpolate, RunConfig, DEFAULT_FRAMES};

fn main() -> sphere_bridge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/interpolation-example".into());
    let mut cfg = RunConfig::default();
    cfg.apply_args(&[
        "--dataset".into(), "harmonic:4,2".into(),
        "--prior".into(), "harmonic:6,2".into(),
        "--out".into(), out,
        "--ipf.L".into(), "2".into(),
        "--ipf.inner_steps".into(), "300".into(),
        "--net.width".into(), "64".into(),
        "--schedule.g2_peak".into(), "0.5".into(),
        "--schedule.g2_floor".into(), "0.01".into(),
    ])?;
    let (dir, frames) = cmd_interpolate(&cfg, &DEFAULT_FRAMES, 2000)?;
    println!("run directory {}", dir.display());
    for f in frames {
        println!("  {}", f.display());
    }
    Ok(())
}
