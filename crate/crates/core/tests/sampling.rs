use sphere_bridge::data::{HarmonicDensity, HarmonicMode, PointSampler, VmfMixture};
use sphere_bridge::rng::stream;
use sphere_bridge::SpherePoint;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const BANDS: usize = 32;
const SECTORS: usize = 64;

/// Equal-area cell: `BANDS` bands in z, `SECTORS` sectors in longitude.
fn cell(p: &SpherePoint) -> usize {
    let c = p.coords();
    let band = (((c.z + 1.0) / 2.0 * BANDS as f64) as usize).min(BANDS - 1);
    let phi = c.y.atan2(c.x).rem_euclid(std::f64::consts::TAU);
    let sector = ((phi / std::f64::consts::TAU * SECTORS as f64) as usize).min(SECTORS - 1);
    band * SECTORS + sector
}

/// Cell masses of a density given in (z, φ) coordinates, by 8×8
/// midpoint quadrature per cell (dA = dz dφ).
fn cell_masses(density: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let sub = 8;
    let (dz, dphi) = (2.0 / BANDS as f64, std::f64::consts::TAU / SECTORS as f64);
    let mut w = vec![0.0; BANDS * SECTORS];
    for b in 0..BANDS {
        for s in 0..SECTORS {
            let mut acc = 0.0;
            for i in 0..sub {
                for j in 0..sub {
                    let z = -1.0 + dz * (b as f64 + (i as f64 + 0.5) / sub as f64);
                    let phi = dphi * (s as f64 + (j as f64 + 0.5) / sub as f64);
                    acc += density(z, phi);
                }
            }
            w[b * SECTORS + s] = acc;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Pearson test with cells of expected count < 5 pooled.
fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pool_obs += c as f64;
            pool_exp += e;
        } else {
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp).powi(2) / pool_exp.max(1e-12);
        cells += 1;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

fn histogram(points: &[SpherePoint]) -> Vec<usize> {
    let mut counts = vec![0; BANDS * SECTORS];
    for p in points {
        counts[cell(p)] += 1;
    }
    counts
}

#[test]
fn harmonic_4_2_passes_chi_square() {
    let h = HarmonicDensity::new(4, 2, HarmonicMode::Absolute).unwrap();
    let pts = h.sample(100_000, &mut stream(401, &[])).unwrap();
    // Re Y_4^2 ∝ (7z² - 1)(1 - z²) cos 2φ
    let probs = cell_masses(|z, phi| ((7.0 * z * z - 1.0) * (1.0 - z * z) * (2.0 * phi).cos()).abs());
    let p = chi_square_p(&histogram(&pts), &probs);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn harmonic_6_2_positive_part_passes_chi_square() {
    let h = HarmonicDensity::new(6, 2, HarmonicMode::PositivePart).unwrap();
    let pts = h.sample(100_000, &mut stream(402, &[])).unwrap();
    // Re Y_6^2 ∝ (33z⁴ - 18z² + 1)(1 - z²) cos 2φ
    let probs = cell_masses(|z, phi| ((33.0 * z.powi(4) - 18.0 * z * z + 1.0) * (1.0 - z * z) * (2.0 * phi).cos()).max(0.0));
    let p = chi_square_p(&histogram(&pts), &probs);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn vmf_sampler_passes_chi_square() {
    let kappa = 4.0;
    let vmf = VmfMixture::single(SpherePoint::new(0.0, 0.0, 1.0), kappa).unwrap();
    let pts = vmf.sample(100_000, &mut stream(403, &[])).unwrap();
    let probs = cell_masses(|z, _| (kappa * z).exp());
    let p = chi_square_p(&histogram(&pts), &probs);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn harmonic_acceptance_rate_matches_mean_over_bound() {
    for (l, m) in [(4, 2), (6, 2)] {
        let h = HarmonicDensity::new(l, m, HarmonicMode::Absolute).unwrap();
        let draw = h.sample_harmonic(20_000, &mut stream(404, &[l as u64]));
        // mean of the density under the uniform law, by midpoint rule in (z, φ)
        let n = 400;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let z = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
                let phi = std::f64::consts::TAU * (j as f64 + 0.5) / n as f64;
                let s = (1.0 - z * z).sqrt();
                acc += h.unnormalized(&SpherePoint::new(s * phi.cos(), s * phi.sin(), z));
            }
        }
        let ratio = acc / (n * n) as f64 / h.bound();
        let rate = draw.acceptance_rate();
        assert!((rate - ratio).abs() < 0.2 * ratio, "({l},{m}): rate {rate}, analytic {ratio}");
        assert_eq!(draw.inflations, 0);
    }
}
