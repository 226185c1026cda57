//! Loading, synthetic sampling, metrics and export.
//!
//! cargo run --release --example datasets [-- fixtures/quakes.csv]

use sphere_bridge::data::{
    export_samples, load_latlon_csv, median_bandwidth, mmd, mmd_permutation_quantile, sample_vmf_mixture, ExportFormat,
    HarmonicDensity, HarmonicMode, PointSampler, Uniform, VmfMixture,
};
use sphere_bridge::rng::stream;
use sphere_bridge::SpherePoint;

fn main() -> sphere_bridge::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "fixtures/quakes.csv".into());
    let quakes = load_latlon_csv(&path)?;
    let (train, held) = quakes.split(0.2, 0);
    println!("{}: {} points ({} skipped), split {}/{}", quakes.name, quakes.len(), quakes.skipped, train.len(), held.len());

    let mut rng = stream(0, &[]);
    for (l, m) in [(2, 1), (4, 2), (6, 2)] {
        let d = HarmonicDensity::new(l, m, HarmonicMode::Absolute)?;
        let draw = d.sample_harmonic(5000, &mut rng);
        println!("|Re Y_{l}^{m}|: bound {:.4}, acceptance {:.3}", d.bound(), draw.acceptance_rate());
    }
    if let Err(e) = HarmonicDensity::new(2, 4, HarmonicMode::Absolute) {
        println!("(2, 4) rejected: {e}");
    }

    let vmf = VmfMixture::single(SpherePoint::new(0.0, 0.0, 1.0), 10.0)?;
    let a = sample_vmf_mixture(&vmf, 1000, &mut rng);
    let u = Uniform.sample(1000, &mut rng)?;
    let u2 = Uniform.sample(1000, &mut rng)?;
    let h = median_bandwidth(&a, &u);
    let q99 = mmd_permutation_quantile(&u, &u2, h, 200, 0.99, &mut rng);
    println!("bandwidth {h:.3}; MMD² uniform/uniform {:.5}, vMF/uniform {:.5}, null 99% {q99:.5}", mmd(&u, &u2, h), mmd(&a, &u, h));

    std::fs::create_dir_all("runs")?;
    export_samples(&held.points, "runs/quakes_heldout.geojson", ExportFormat::GeoJson)?;
    export_samples(&a, "runs/vmf_samples.csv", ExportFormat::Csv)?;
    println!("wrote runs/quakes_heldout.geojson and runs/vmf_samples.csv");
    Ok(())
}
