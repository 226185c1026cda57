//! Geodesic random walk: Brownian motion mixing to the uniform law.
//!
//! cargo run --release --example random_walk [-- out.csv]

use sphere_bridge::data::{export_trajectories, mean_resultant_length};
use sphere_bridge::rng::Streams;
use sphere_bridge::sde::{geodesic_random_walk_parallel, Direction, TimeGrid, ZeroDrift};
use sphere_bridge::SpherePoint;

fn main() -> sphere_bridge::Result<()> {
    let grid = TimeGrid::uniform(5.0, 500)?;
    let unit = |_t: f64| 1.0;
    let x0 = vec![SpherePoint::new(0.0, 0.0, 1.0); 10_000];
    let batch = geodesic_random_walk_parallel(&ZeroDrift, &unit, &grid, Direction::Forward, 5.0, &x0, &Streams::new(0, 4));

    for k in [0, 50, 100, 200, 500] {
        let col = batch.column(k);
        let z2 = col.iter().map(|p| p.coords().z.powi(2)).sum::<f64>() / col.len() as f64;
        // E[z] = e^{-t} for Brownian motion started at the pole
        println!(
            "t = {:.1}: |mean| = {:.4} (e^-t = {:.4}), E[z^2] = {:.4}",
            grid.times()[k],
            mean_resultant_length(&col),
            (-grid.times()[k]).exp(),
            z2
        );
    }

    if let Some(out) = std::env::args().nth(1) {
        let short = geodesic_random_walk_parallel(&ZeroDrift, &unit, &TimeGrid::uniform(1.0, 50)?, Direction::Forward, 1.0, &x0[..20], &Streams::new(1, 1));
        export_trajectories(&short, &out)?;
        println!("wrote {out}");
    }
    Ok(())
}
