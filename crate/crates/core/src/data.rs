//! Datasets, synthetic samplers, sample-quality metrics and export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::manifold::{geodesic_distance, sample_uniform, tangent_basis, SpherePoint};
use crate::rng::StreamRng;
use crate::sde::TrajectoryBatch;
use crate::{Error, Result};

/// Anything that can draw i.i.d. points on the sphere.
pub trait PointSampler: Sync {
    fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<SpherePoint>>;

    /// Log-density w.r.t. surface measure, when known in closed form.
    fn log_density(&self, _x: &SpherePoint) -> Option<f64> {
        None
    }
}

/// Uniform surface measure.
#[derive(Clone, Copy, Debug, Default)]
pub struct Uniform;

impl PointSampler for Uniform {
    fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<SpherePoint>> {
        Ok((0..n).map(|_| sample_uniform(rng)).collect())
    }

    fn log_density(&self, _x: &SpherePoint) -> Option<f64> {
        Some(-(4.0 * std::f64::consts::PI).ln())
    }
}

/// Resamples (with replacement) from a fixed set of points.
#[derive(Clone, Debug)]
pub struct Empirical {
    points: Vec<SpherePoint>,
}

impl Empirical {
    pub fn new(points: Vec<SpherePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Empirical { points })
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }
}

impl PointSampler for Empirical {
    fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<SpherePoint>> {
        Ok((0..n)
            .map(|_| self.points[rng.gen_range(0..self.points.len())])
            .collect())
    }
}

/// A named point set loaded from disk or drawn from a synthetic law.
#[derive(Clone, Debug)]
pub struct GeoDataset {
    pub name: String,
    pub source: Option<PathBuf>,
    pub points: Vec<SpherePoint>,
    /// Rows dropped while loading (missing or out-of-range coordinates).
    pub skipped: usize,
}

impl GeoDataset {
    pub fn new(name: impl Into<String>, points: Vec<SpherePoint>) -> Self {
        GeoDataset {
            name: name.into(),
            source: None,
            points,
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Seeded shuffle into disjoint `(train, held_out)` parts.
    pub fn split(&self, held_out_fraction: f64, seed: u64) -> (GeoDataset, GeoDataset) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.shuffle(&mut crate::rng::stream(seed, &[0x5911]));
        let n_held = ((self.points.len() as f64) * held_out_fraction.clamp(0.0, 1.0)).round() as usize;
        let (held, train) = idx.split_at(n_held);
        let pick = |ids: &[usize], suffix: &str| GeoDataset {
            name: format!("{}-{suffix}", self.name),
            source: self.source.clone(),
            points: ids.iter().map(|&i| self.points[i]).collect(),
            skipped: 0,
        };
        (pick(train, "train"), pick(held, "heldout"))
    }

    pub fn sampler(&self) -> Result<Empirical> {
        Empirical::new(self.points.clone())
    }
}

const LAT_NAMES: [&str; 4] = ["lat", "lat_deg", "latitude", "y"];
const LON_NAMES: [&str; 5] = ["lon", "lon_deg", "longitude", "lng", "x"];

/// Loads a CSV with a header containing `lat` and `lon` columns in degrees.
/// Extra columns are ignored; rows with unparsable or out-of-range values are skipped.
pub fn load_latlon_csv(path: impl AsRef<Path>) -> Result<GeoDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |names: &[&str]| {
        names.iter().find_map(|n| {
            headers
                .iter()
                .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(n))
        })
    };
    let (lat_col, lon_col) = match (find(&LAT_NAMES), find(&LON_NAMES)) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let mut missing = Vec::new();
            if a.is_none() {
                missing.push("lat".to_string());
            }
            if b.is_none() {
                missing.push("lon".to_string());
            }
            return Err(Error::MissingColumns(missing));
        }
    };
    let mut points = Vec::new();
    let mut skipped = 0;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let parse = |i: usize| record.get(i).and_then(|s| s.parse::<f64>().ok());
        match (parse(lat_col), parse(lon_col)) {
            (Some(lat), Some(lon))
                if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) =>
            {
                points.push(SpherePoint::from_latlon_deg(lat, lon))
            }
            _ => skipped += 1,
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyAfterFiltering { skipped });
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} invalid rows", path.display());
    }
    Ok(GeoDataset {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into()),
        source: Some(path.to_path_buf()),
        points,
        skipped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    GeoJson,
}

impl ExportFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("geojson") || e.eq_ignore_ascii_case("json") => {
                ExportFormat::GeoJson
            }
            _ => ExportFormat::Csv,
        }
    }
}

/// Writes `lat_deg,lon_deg` rows, or a GeoJSON FeatureCollection of points in
/// `[lon, lat]` order.
pub fn export_samples(points: &[SpherePoint], path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["lat_deg", "lon_deg"])?;
            for p in points {
                let (lat, lon) = p.to_latlon_deg();
                w.write_record([lat.to_string(), lon.to_string()])?;
            }
            w.flush()?;
        }
        ExportFormat::GeoJson => {
            let features: Vec<_> = points
                .iter()
                .map(|p| {
                    let (lat, lon) = p.to_latlon_deg();
                    json!({
                        "type": "Feature",
                        "geometry": {"type": "Point", "coordinates": [lon, lat]},
                        "properties": {}
                    })
                })
                .collect();
            let doc = json!({"type": "FeatureCollection", "features": features});
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer(&mut w, &doc)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Dumps every state of a trajectory batch as `path,k,t,lat_deg,lon_deg`,
/// with `t` the forward-time label.
pub fn export_trajectories(batch: &TrajectoryBatch, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["path", "k", "t", "lat_deg", "lon_deg"])?;
    for (i, states) in batch.states.iter().enumerate() {
        for (k, p) in states.iter().enumerate() {
            let (lat, lon) = p.to_latlon_deg();
            w.write_record([
                i.to_string(),
                k.to_string(),
                batch.forward_time(k).to_string(),
                lat.to_string(),
                lon.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// von Mises–Fisher mixtures

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VmfComponent {
    pub mean: SpherePoint,
    pub kappa: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VmfMixture {
    components: Vec<VmfComponent>,
}

impl VmfMixture {
    pub fn new(components: Vec<VmfComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::BadWeights("no components".into()));
        }
        if let Some(c) = components.iter().find(|c| !(c.kappa >= 0.0 && c.kappa.is_finite())) {
            return Err(Error::BadWeights(format!("concentration {} must be >= 0", c.kappa)));
        }
        if components.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(Error::BadWeights("negative weight".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadWeights(format!("weights sum to {total}, not 1")));
        }
        Ok(VmfMixture { components })
    }

    pub fn single(mean: SpherePoint, kappa: f64) -> Result<Self> {
        Self::new(vec![VmfComponent {
            mean,
            kappa,
            weight: 1.0,
        }])
    }

    pub fn components(&self) -> &[VmfComponent] {
        &self.components
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &VmfComponent {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c;
            }
        }
        self.components.last().unwrap()
    }
}

/// One vMF draw: inverse CDF of the cosine to the mean, uniform azimuth.
pub fn sample_vmf<R: Rng + ?Sized>(mean: &SpherePoint, kappa: f64, rng: &mut R) -> SpherePoint {
    let u: f64 = rng.gen();
    let w = if kappa < 1e-12 {
        2.0 * u - 1.0
    } else {
        (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0)
    };
    let psi = rng.gen::<f64>() * std::f64::consts::TAU;
    let b = tangent_basis(mean);
    let s = (1.0 - w * w).max(0.0).sqrt();
    let v = mean.coords() * w + (b.e1 * psi.cos() + b.e2 * psi.sin()) * s;
    SpherePoint::try_new(v).unwrap_or(*mean)
}

pub fn sample_vmf_mixture<R: Rng + ?Sized>(mixture: &VmfMixture, n: usize, rng: &mut R) -> Vec<SpherePoint> {
    (0..n)
        .map(|_| {
            let c = mixture.pick(rng);
            sample_vmf(&c.mean, c.kappa, rng)
        })
        .collect()
}

/// vMF log-normalizer on S²: `log(κ / (4π sinh κ))`, uniform at `κ = 0`.
fn vmf_log_norm(kappa: f64) -> f64 {
    if kappa < 1e-8 {
        -(4.0 * std::f64::consts::PI).ln()
    } else {
        // normalizer of exp(κ(<μ,x> - 1)): κ / (2π (1 - e^{-2κ}))
        kappa.ln() - (2.0 * std::f64::consts::PI).ln() - (-(-2.0 * kappa).exp()).ln_1p()
    }
}

impl PointSampler for VmfMixture {
    fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<SpherePoint>> {
        Ok(sample_vmf_mixture(self, n, rng))
    }

    fn log_density(&self, x: &SpherePoint) -> Option<f64> {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight.ln() + vmf_log_norm(c.kappa) + c.kappa * (x.dot(&c.mean) - 1.0))
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln())
    }
}

// ---------------------------------------------------------------------------
// Spherical harmonics

/// Associated Legendre function `P_l^m(x)` for `0 <= m <= l`, with the
/// Condon–Shortley phase.
pub fn assoc_legendre(l: usize, m: usize, x: f64) -> f64 {
    debug_assert!(m <= l);
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= -fact * somx2;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = (x * (2 * ll - 1) as f64 * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

/// Real part of the fully normalized `Y_l^m` at `x`.
pub fn real_spherical_harmonic(l: usize, m: i64, x: &SpherePoint) -> f64 {
    let am = m.unsigned_abs() as usize;
    let c = x.coords();
    let cos_theta = c.z.clamp(-1.0, 1.0);
    let phi = c.y.atan2(c.x);
    // (l-m)!/(l+m)! as a running product
    let ratio: f64 = ((l - am + 1)..=(l + am)).map(|k| 1.0 / k as f64).product();
    let norm = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * ratio).sqrt();
    let value = norm * assoc_legendre(l, am, cos_theta) * (am as f64 * phi).cos();
    if m < 0 && am % 2 == 1 {
        -value
    } else {
        value
    }
}

/// How a sign-changing `Re Y_l^m` becomes an unnormalized density.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HarmonicMode {
    /// `|Re Y_l^m|`
    #[default]
    Absolute,
    /// `max(Re Y_l^m, 0)`
    PositivePart,
}

/// Density proportional to `|Re Y_l^m|` (or its positive part).
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicDensity {
    l: usize,
    m: i64,
    mode: HarmonicMode,
    bound: f64,
}

/// Result of a rejection-sampling run.
#[derive(Clone, Debug)]
pub struct HarmonicDraw {
    pub points: Vec<SpherePoint>,
    pub proposals: usize,
    /// Times the rejection bound had to be raised.
    pub inflations: usize,
}

impl HarmonicDraw {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.points.len() as f64 / self.proposals as f64
        }
    }
}

impl HarmonicDensity {
    const BOUND_GRID: (usize, usize) = (256, 512);

    pub fn new(l: usize, m: i64, mode: HarmonicMode) -> Result<Self> {
        if m.unsigned_abs() as usize > l {
            return Err(Error::InvalidHarmonic { l, m });
        }
        let mut d = HarmonicDensity { l, m, mode, bound: 0.0 };
        let (nt, np) = Self::BOUND_GRID;
        let mut max: f64 = 0.0;
        for i in 0..=nt {
            let lat = -90.0 + 180.0 * i as f64 / nt as f64;
            for j in 0..np {
                let lon = -180.0 + 360.0 * j as f64 / np as f64;
                max = max.max(d.unnormalized(&SpherePoint::from_latlon_deg(lat, lon)));
            }
        }
        d.bound = max * 1.02;
        Ok(d)
    }

    pub fn degree(&self) -> usize {
        self.l
    }

    pub fn order(&self) -> i64 {
        self.m
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn unnormalized(&self, x: &SpherePoint) -> f64 {
        let y = real_spherical_harmonic(self.l, self.m, x);
        match self.mode {
            HarmonicMode::Absolute => y.abs(),
            HarmonicMode::PositivePart => y.max(0.0),
        }
    }

    pub fn check_bound(&self, value: f64) -> Result<()> {
        if value > self.bound {
            Err(Error::BoundViolation {
                value,
                bound: self.bound,
            })
        } else {
            Ok(())
        }
    }

    /// Rejection sampling from uniform proposals, accepting with probability
    /// `density / bound`. A proposal above the bound raises the bound for the
    /// rest of the run and is logged.
    pub fn sample_harmonic<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> HarmonicDraw {
        let mut bound = self.bound;
        let mut points = Vec::with_capacity(n);
        let mut proposals = 0;
        let mut inflations = 0;
        while points.len() < n {
            let x = sample_uniform(rng);
            proposals += 1;
            let v = self.unnormalized(&x);
            if v > bound {
                let e = Error::BoundViolation { value: v, bound };
                log::warn!("harmonic sampler: {e}; inflating bound");
                bound = v * 1.05;
                inflations += 1;
            }
            if rng.gen::<f64>() * bound < v {
                points.push(x);
            }
        }
        HarmonicDraw {
            points,
            proposals,
            inflations,
        }
    }
}

impl PointSampler for HarmonicDensity {
    fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<SpherePoint>> {
        Ok(self.sample_harmonic(n, rng).points)
    }
}

// ---------------------------------------------------------------------------
// Metrics

/// `exp(-d²/(2h²))` with `d` the geodesic distance.
pub fn geodesic_gaussian_kernel(x: &SpherePoint, y: &SpherePoint, bandwidth: f64) -> f64 {
    let d = geodesic_distance(x, y);
    (-d * d / (2.0 * bandwidth * bandwidth)).exp()
}

fn kernel_sum(a: &[SpherePoint], b: &[SpherePoint], bandwidth: f64) -> f64 {
    let rows: Vec<f64> = a
        .par_iter()
        .map(|x| b.iter().map(|y| geodesic_gaussian_kernel(x, y, bandwidth)).sum())
        .collect();
    rows.iter().sum()
}

/// Biased (V-statistic) squared MMD with the geodesic Gaussian kernel.
pub fn mmd(a: &[SpherePoint], b: &[SpherePoint], bandwidth: f64) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "mmd of an empty sample");
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let kaa = kernel_sum(a, a, bandwidth) / (na * na);
    let kbb = kernel_sum(b, b, bandwidth) / (nb * nb);
    let kab = kernel_sum(a, b, bandwidth) / (na * nb);
    (kaa + kbb - 2.0 * kab).max(0.0)
}

/// Median pairwise geodesic distance of the pooled samples (first 1000 of each).
pub fn median_bandwidth(a: &[SpherePoint], b: &[SpherePoint]) -> f64 {
    let pool: Vec<SpherePoint> = a.iter().take(1000).chain(b.iter().take(1000)).copied().collect();
    let mut d: Vec<f64> = Vec::with_capacity(pool.len() * pool.len() / 2);
    for i in 0..pool.len() {
        for j in (i + 1)..pool.len() {
            d.push(geodesic_distance(&pool[i], &pool[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    if med > 1e-6 {
        med
    } else {
        1.0
    }
}

/// Pooled kernel matrix for permutation and bootstrap statistics.
struct PooledKernel {
    k: Vec<f64>,
    n: usize,
}

impl PooledKernel {
    fn new(pool: &[SpherePoint], bandwidth: f64) -> Self {
        let n = pool.len();
        let rows: Vec<Vec<f64>> = pool
            .par_iter()
            .map(|x| pool.iter().map(|y| geodesic_gaussian_kernel(x, y, bandwidth)).collect())
            .collect();
        PooledKernel {
            k: rows.concat(),
            n,
        }
    }

    fn mmd2(&self, ia: &[usize], ib: &[usize]) -> f64 {
        let block = |p: &[usize], q: &[usize]| -> f64 {
            let mut s = 0.0;
            for &i in p {
                let row = &self.k[i * self.n..(i + 1) * self.n];
                for &j in q {
                    s += row[j];
                }
            }
            s / (p.len() * q.len()) as f64
        };
        (block(ia, ia) + block(ib, ib) - 2.0 * block(ia, ib)).max(0.0)
    }
}

/// `q`-quantile of the permutation null distribution of [`mmd`] for samples of
/// the sizes of `a` and `b`.
pub fn mmd_permutation_quantile<R: Rng + ?Sized>(
    a: &[SpherePoint],
    b: &[SpherePoint],
    bandwidth: f64,
    permutations: usize,
    q: f64,
    rng: &mut R,
) -> f64 {
    let pool: Vec<SpherePoint> = a.iter().chain(b).copied().collect();
    let kern = PooledKernel::new(&pool, bandwidth);
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let mut stats: Vec<f64> = (0..permutations)
        .map(|_| {
            idx.shuffle(rng);
            let (ia, ib) = idx.split_at(a.len());
            kern.mmd2(ia, ib)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let pos = ((stats.len() as f64 - 1.0) * q).round() as usize;
    stats[pos.min(stats.len() - 1)]
}

/// Bootstrap standard error of [`mmd`], resampling both samples with replacement.
pub fn mmd_bootstrap_se<R: Rng + ?Sized>(
    a: &[SpherePoint],
    b: &[SpherePoint],
    bandwidth: f64,
    reps: usize,
    rng: &mut R,
) -> f64 {
    let pool: Vec<SpherePoint> = a.iter().chain(b).copied().collect();
    let kern = PooledKernel::new(&pool, bandwidth);
    let stats: Vec<f64> = (0..reps)
        .map(|_| {
            let ia: Vec<usize> = (0..a.len()).map(|_| rng.gen_range(0..a.len())).collect();
            let ib: Vec<usize> = (0..b.len()).map(|_| a.len() + rng.gen_range(0..b.len())).collect();
            kern.mmd2(&ia, &ib)
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / reps as f64;
    (stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0).max(1.0)).sqrt()
}

/// Fraction of `generated` farther than `radius` (radians) from every `reference` point.
pub fn outlier_fraction(generated: &[SpherePoint], reference: &[SpherePoint], radius: f64) -> f64 {
    if generated.is_empty() {
        return 0.0;
    }
    let outliers = generated
        .par_iter()
        .filter(|g| reference.iter().all(|r| geodesic_distance(g, r) > radius))
        .count();
    outliers as f64 / generated.len() as f64
}

/// Mean resultant length `|mean(x)|`.
pub fn mean_resultant_length(points: &[SpherePoint]) -> f64 {
    let s = points
        .iter()
        .fold(crate::manifold::Vec3::zeros(), |acc, p| acc + p.coords());
    s.norm() / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Vec3;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn latlon_convention_anchors() {
        let f = write_tmp("id,lat,lon,mag\n1,0,0,5\n2,90,123,4\n3,0,90,6\n");
        let d = load_latlon_csv(f.path()).unwrap();
        assert_eq!(d.len(), 3);
        assert_abs_diff_eq!(*d.points[0].coords(), Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(*d.points[1].coords(), Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(*d.points[2].coords(), Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn bad_rows_are_skipped_and_counted() {
        let f = write_tmp("lat,lon\n10,20\n,5\n95,0\n0,200\nabc,1\n-10,-20\n");
        let d = load_latlon_csv(f.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.skipped, 4);
    }

    #[test]
    fn loader_errors() {
        let f = write_tmp("latitude_x,foo\n1,2\n");
        assert!(matches!(load_latlon_csv(f.path()), Err(Error::MissingColumns(c)) if c.len() == 2));
        let f = write_tmp("lat,lon\n100,0\n");
        assert!(matches!(
            load_latlon_csv(f.path()),
            Err(Error::EmptyAfterFiltering { skipped: 1 })
        ));
    }

    #[test]
    fn export_pole_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = stream(1, &[]);
        let mut pts: Vec<_> = (0..200).map(|_| sample_uniform(&mut rng)).collect();
        pts.push(SpherePoint::new(0.0, 0.0, 1.0));
        let path = dir.path().join("s.csv");
        export_samples(&pts, &path, ExportFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("lat_deg,lon_deg\n"));
        assert!(text.trim_end().ends_with("90,0"));
        let back = load_latlon_csv(&path).unwrap();
        assert_eq!(back.len(), pts.len());
        for (a, b) in pts.iter().zip(&back.points) {
            assert!((a.coords() - b.coords()).norm() < 1e-9);
        }
    }

    #[test]
    fn geojson_structure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.geojson");
        let pts = vec![SpherePoint::from_latlon_deg(10.0, -20.0), SpherePoint::new(0.0, 0.0, -1.0)];
        export_samples(&pts, &path, ExportFormat::GeoJson).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        let feats = v["features"].as_array().unwrap();
        assert_eq!(feats.len(), 2);
        for f in feats {
            assert_eq!(f["type"], "Feature");
            assert_eq!(f["geometry"]["type"], "Point");
            let c = f["geometry"]["coordinates"].as_array().unwrap();
            let (lon, lat) = (c[0].as_f64().unwrap(), c[1].as_f64().unwrap());
            assert!((-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat));
        }
        let c = &feats[0]["geometry"]["coordinates"];
        assert_abs_diff_eq!(c[0].as_f64().unwrap(), -20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c[1].as_f64().unwrap(), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_export_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        export_samples(&[], &path, ExportFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "lat_deg,lon_deg\n");
    }

    #[test]
    fn splits_are_disjoint_and_reproducible() {
        let mut rng = stream(2, &[]);
        let d = GeoDataset::new("u", (0..101).map(|_| sample_uniform(&mut rng)).collect());
        let (tr, ho) = d.split(0.3, 17);
        let (tr2, ho2) = d.split(0.3, 17);
        assert_eq!(tr.points, tr2.points);
        assert_eq!(ho.points, ho2.points);
        assert_eq!(tr.len() + ho.len(), 101);
        assert_eq!(ho.len(), 30);
        let mut all: Vec<_> = tr.points.iter().chain(&ho.points).map(|p| p.coords().x.to_bits()).collect();
        let mut orig: Vec<_> = d.points.iter().map(|p| p.coords().x.to_bits()).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_ne!(d.split(0.3, 18).1.points, ho.points);
    }

    #[test]
    fn vmf_moments() {
        let mut rng = stream(3, &[]);
        let north = SpherePoint::new(0.0, 0.0, 1.0);
        let flat = VmfMixture::single(north, 0.0).unwrap();
        let s = sample_vmf_mixture(&flat, 100_000, &mut rng);
        assert!(mean_resultant_length(&s) < 0.01);

        let sharp = VmfMixture::single(north, 100.0).unwrap();
        let s = sample_vmf_mixture(&sharp, 100_000, &mut rng);
        assert!((mean_resultant_length(&s) - 0.99).abs() < 0.005);

        let anti = VmfMixture::new(vec![
            VmfComponent { mean: north, kappa: 10.0, weight: 0.5 },
            VmfComponent { mean: SpherePoint::new(0.0, 0.0, -1.0), kappa: 10.0, weight: 0.5 },
        ])
        .unwrap();
        let s = sample_vmf_mixture(&anti, 100_000, &mut rng);
        assert!(mean_resultant_length(&s) < 0.01);
    }

    #[test]
    fn vmf_validation_and_density() {
        let north = SpherePoint::new(0.0, 0.0, 1.0);
        assert!(matches!(
            VmfMixture::new(vec![VmfComponent { mean: north, kappa: 1.0, weight: 0.7 }]),
            Err(Error::BadWeights(_))
        ));
        assert!(VmfMixture::single(north, -1.0).is_err());
        let flat = VmfMixture::single(north, 0.0).unwrap();
        assert_abs_diff_eq!(flat.log_density(&north).unwrap(), -(4.0 * PI).ln(), epsilon = 1e-12);
        // normalization of a concentrated density by midpoint quadrature in z
        let v = VmfMixture::single(north, 20.0).unwrap();
        let n = 20_000;
        let integral: f64 = (0..n)
            .map(|i| {
                let z = -1.0 + (i as f64 + 0.5) * 2.0 / n as f64;
                let p = SpherePoint::new((1.0 - z * z).sqrt(), 0.0, z);
                v.log_density(&p).unwrap().exp() * 2.0 * PI * 2.0 / n as f64
            })
            .sum();
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn harmonics_match_closed_forms() {
        let mut rng = stream(4, &[]);
        for _ in 0..200 {
            let x = sample_uniform(&mut rng);
            let c = x.coords();
            let (ct, st, phi) = (c.z, c.x.hypot(c.y), c.y.atan2(c.x));
            let cases = [
                (0, 0, 0.5 / PI.sqrt()),
                (1, 0, (3.0 / (4.0 * PI)).sqrt() * ct),
                (1, 1, -(3.0 / (8.0 * PI)).sqrt() * st * phi.cos()),
                (1, -1, (3.0 / (8.0 * PI)).sqrt() * st * phi.cos()),
                (2, 0, (5.0 / (16.0 * PI)).sqrt() * (3.0 * ct * ct - 1.0)),
                (2, 1, -(15.0 / (8.0 * PI)).sqrt() * st * ct * phi.cos()),
                (2, 2, (15.0 / (32.0 * PI)).sqrt() * st * st * (2.0 * phi).cos()),
            ];
            for (l, m, want) in cases {
                assert_abs_diff_eq!(real_spherical_harmonic(l, m, &x), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn harmonic_validation_and_bound() {
        assert!(matches!(
            HarmonicDensity::new(2, 4, HarmonicMode::Absolute),
            Err(Error::InvalidHarmonic { l: 2, m: 4 })
        ));
        let d = HarmonicDensity::new(4, 2, HarmonicMode::Absolute).unwrap();
        let mut rng = stream(5, &[]);
        for _ in 0..20_000 {
            let x = sample_uniform(&mut rng);
            d.check_bound(d.unnormalized(&x)).unwrap();
        }
        assert!(d.check_bound(d.bound() * 2.0).is_err());
    }

    #[test]
    fn constant_harmonic_samples_uniformly() {
        let d = HarmonicDensity::new(0, 0, HarmonicMode::Absolute).unwrap();
        let draw = d.sample_harmonic(50_000, &mut stream(6, &[]));
        assert!(mean_resultant_length(&draw.points) < 0.015);
        assert!((draw.acceptance_rate() - 1.0 / 1.02).abs() < 0.01);
    }

    #[test]
    fn harmonic_samples_avoid_nodal_lines() {
        // |Re Y_2^1| ∝ |sin θ cos θ cos φ| vanishes on the equator. Latitude
        // marginal in 2° bins: the bins touching the equator hold about 5% of
        // the peak bin.
        let d = HarmonicDensity::new(2, 1, HarmonicMode::Absolute).unwrap();
        let pts = d.sample_harmonic(50_000, &mut stream(7, &[])).points;
        let nlat = 90;
        let mut hist = vec![0usize; nlat];
        for p in &pts {
            let (lat, _) = p.to_latlon_deg();
            hist[(((lat + 90.0) / 180.0 * nlat as f64) as usize).min(nlat - 1)] += 1;
        }
        let peak = *hist.iter().max().unwrap() as f64;
        for i in [nlat / 2 - 1, nlat / 2] {
            assert!((hist[i] as f64) < 0.1 * peak, "{} vs peak {peak}", hist[i]);
        }
    }

    #[test]
    fn mmd_basics() {
        let mut rng = stream(8, &[]);
        let a: Vec<_> = (0..300).map(|_| sample_uniform(&mut rng)).collect();
        assert_eq!(mmd(&a, &a, 0.7), 0.0);
        let b: Vec<_> = (0..200).map(|_| sample_uniform(&mut rng)).collect();
        assert!(mmd(&a, &b, 0.7) >= 0.0);
        assert_eq!(mmd(&a, &b, 0.7), mmd(&a, &b, 0.7));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(geodesic_gaussian_kernel(x, y, 0.5), geodesic_gaussian_kernel(y, x, 0.5));
        }
    }

    #[test]
    fn mmd_permutation_calibration() {
        let mut rng = stream(9, &[]);
        let u1: Vec<_> = (0..1000).map(|_| sample_uniform(&mut rng)).collect();
        let u2: Vec<_> = (0..1000).map(|_| sample_uniform(&mut rng)).collect();
        let bw = median_bandwidth(&u1, &u2);
        let null99 = mmd_permutation_quantile(&u1, &u2, bw, 200, 0.99, &mut rng);
        assert!(mmd(&u1, &u2, bw) < null99);

        let v = sample_vmf_mixture(&VmfMixture::single(SpherePoint::new(1.0, 0.0, 0.0), 10.0).unwrap(), 1000, &mut rng);
        let bw = median_bandwidth(&u1, &v);
        let null99 = mmd_permutation_quantile(&u1, &v, bw, 200, 0.99, &mut rng);
        assert!(mmd(&u1, &v, bw) > null99);
        assert!(mmd_bootstrap_se(&u1, &v, bw, 50, &mut rng) > 0.0);
    }

    #[test]
    fn outlier_fraction_examples() {
        let mut rng = stream(10, &[]);
        let held: Vec<_> = (0..100).map(|_| sample_uniform(&mut rng)).collect();
        assert_eq!(outlier_fraction(&held, &held, 0.2), 0.0);
        let far = vec![SpherePoint::new(0.0, 0.0, 1.0)];
        let near = vec![SpherePoint::new(0.0, 0.0, -1.0)];
        assert_eq!(outlier_fraction(&far, &near, 0.2), 1.0);
    }
}
