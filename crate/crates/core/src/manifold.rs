//! Geometry of the unit sphere S² ⊂ R³ in its ambient (extrinsic) representation.
//!
//! Points are unit 3-vectors and tangent vectors at `x` are 3-vectors orthogonal
//! to `x`. Everything here is a pure function of its inputs (plus an explicit
//! rng where sampling is involved).

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Below this value of `<x, y> + 1` the logarithm map is undefined.
pub const ANTIPODAL_EPS: f64 = 1e-9;

/// A point on the unit sphere. The stored vector is always renormalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint(Vec3);

impl SpherePoint {
    /// Normalizes `v`. Returns `None` for zero or non-finite input.
    pub fn try_new(v: Vec3) -> Option<Self> {
        let n = v.norm();
        if n.is_finite() && n > 0.0 {
            Some(SpherePoint(v / n))
        } else {
            None
        }
    }

    /// Normalizes `(x, y, z)`.
    ///
    /// Panics on the zero vector; use [`SpherePoint::try_new`] for untrusted input.
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self::try_new(Vec3::new(x, y, z)).expect("cannot normalize a zero or non-finite vector")
    }

    pub fn coords(&self) -> &Vec3 {
        &self.0
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        self.0.dot(&other.0)
    }

    /// Latitude and longitude in degrees. Longitude is 0 at the poles.
    pub fn to_latlon_deg(&self) -> (f64, f64) {
        let v = &self.0;
        let lat = v.z.clamp(-1.0, 1.0).asin().to_degrees();
        let lon = if v.x.hypot(v.y) < 1e-15 {
            0.0
        } else {
            v.y.atan2(v.x).to_degrees()
        };
        (lat, lon)
    }

    /// `(cos λ cos φ, cos λ sin φ, sin λ)` for latitude λ and longitude φ in degrees.
    pub fn from_latlon_deg(lat: f64, lon: f64) -> Self {
        let (la, lo) = (lat.to_radians(), lon.to_radians());
        SpherePoint::new(la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin())
    }
}

/// An ambient vector orthogonal to its base point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub base: SpherePoint,
    pub vec: Vec3,
}

impl TangentVector {
    pub fn zero(base: SpherePoint) -> Self {
        TangentVector {
            base,
            vec: Vec3::zeros(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        TangentVector {
            base: self.base,
            vec: self.vec * s,
        }
    }
}

/// Orthonormal basis of the tangent plane at `base`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentBasis {
    pub base: SpherePoint,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl TangentBasis {
    pub fn vectors(&self) -> [Vec3; 2] {
        [self.e1, self.e2]
    }
}

/// `P(x) v = v - <v, x> x`.
pub fn project_to_tangent(x: &SpherePoint, v: &Vec3) -> TangentVector {
    TangentVector {
        base: *x,
        vec: project_vec(x.coords(), v),
    }
}

#[inline]
pub(crate) fn project_vec(x: &Vec3, v: &Vec3) -> Vec3 {
    v - x * v.dot(x)
}

/// `cos(|v|) x + sin(|v|) v / |v|`, renormalized.
pub fn exp_map(x: &SpherePoint, v: &TangentVector) -> SpherePoint {
    exp_vec(x, &v.vec)
}

pub(crate) fn exp_vec(x: &SpherePoint, v: &Vec3) -> SpherePoint {
    let n = v.norm();
    if n == 0.0 {
        return *x;
    }
    // sin(n)/n to full precision for tiny n
    let sinc = if n < 1e-6 { 1.0 - n * n / 6.0 } else { n.sin() / n };
    let y = x.coords() * n.cos() + v * sinc;
    SpherePoint::try_new(y).unwrap_or(*x)
}

/// Inverse of [`exp_map`] on the open set `<x, y> > -1 + ANTIPODAL_EPS`.
pub fn log_map(x: &SpherePoint, y: &SpherePoint) -> Result<TangentVector> {
    let d = x.dot(y);
    if d <= -1.0 + ANTIPODAL_EPS {
        return Err(Error::AntipodalPoints { dot: d });
    }
    let v = project_vec(x.coords(), y.coords());
    let s = v.norm();
    let theta = s.atan2(d);
    let factor = if s < 1e-12 { 1.0 } else { theta / s };
    Ok(TangentVector {
        base: *x,
        vec: v * factor,
    })
}

/// Great-circle distance in radians, in `[0, π]`.
pub fn geodesic_distance(x: &SpherePoint, y: &SpherePoint) -> f64 {
    let c = x.coords().cross(y.coords()).norm();
    c.atan2(x.dot(y).clamp(-1.0, 1.0))
}

/// Uniform surface measure: a normalized standard Gaussian in R³.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> SpherePoint {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(p) = SpherePoint::try_new(v) {
            return p;
        }
    }
}

/// Gram–Schmidt on the standard axis least aligned with `x` (ties go to the
/// lower axis index); `e2 = x × e1`.
pub fn tangent_basis(x: &SpherePoint) -> TangentBasis {
    let c = x.coords();
    let mut axis = 0;
    for i in 1..3 {
        if c[i].abs() < c[axis].abs() {
            axis = i;
        }
    }
    let a = Vec3::ith(axis, 1.0);
    let e1 = project_vec(c, &a).normalize();
    let e2 = c.cross(&e1);
    TangentBasis { base: *x, e1, e2 }
}

/// A tangent vector field on the sphere.
pub trait TangentField {
    /// Field value at `x`; must be orthogonal to `x`.
    fn value(&self, x: &SpherePoint) -> Vec3;

    /// Ambient directional derivative `d/ds value(x + s dir)` at `s = 0`, if the
    /// field can provide it in closed form.
    fn directional_derivative(&self, _x: &SpherePoint, _dir: &Vec3) -> Option<Vec3> {
        None
    }
}

/// The identically zero field.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroField;

impl TangentField for ZeroField {
    fn value(&self, _x: &SpherePoint) -> Vec3 {
        Vec3::zeros()
    }

    fn directional_derivative(&self, _x: &SpherePoint, _dir: &Vec3) -> Option<Vec3> {
        Some(Vec3::zeros())
    }
}

/// `r(x) = P(x) c` for a fixed ambient vector `c`; its divergence is `-2 <c, x>`.
#[derive(Clone, Copy, Debug)]
pub struct ProjectedConstant(pub Vec3);

impl TangentField for ProjectedConstant {
    fn value(&self, x: &SpherePoint) -> Vec3 {
        project_vec(x.coords(), &self.0)
    }

    fn directional_derivative(&self, x: &SpherePoint, dir: &Vec3) -> Option<Vec3> {
        let c = &self.0;
        Some(-(x.coords() * c.dot(dir) + dir * c.dot(x.coords())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DivergenceMode {
    /// Contract the ambient directional derivatives with a tangent basis.
    Exact,
    /// Central differences along the geodesics through `x` in each basis direction.
    FiniteDifference { h: f64 },
}

/// Riemannian divergence `Σᵢ <D_{eᵢ} r, eᵢ>` over the tangent basis at `x`.
///
/// For a tangent field on the embedded sphere the ambient derivative contracted
/// with tangent directions equals the covariant one, since the normal part
/// drops out of the inner product.
pub fn divergence<F: TangentField + ?Sized>(
    field: &F,
    x: &SpherePoint,
    mode: DivergenceMode,
) -> Result<f64> {
    let basis = tangent_basis(x);
    match mode {
        DivergenceMode::Exact => {
            let mut div = 0.0;
            for e in basis.vectors() {
                let d = field
                    .directional_derivative(x, &e)
                    .ok_or_else(|| Error::DivergenceModeUnsupported("exact".into()))?;
                div += d.dot(&e);
            }
            Ok(div)
        }
        DivergenceMode::FiniteDifference { h } => {
            let mut div = 0.0;
            for e in basis.vectors() {
                // the geodesic's own velocity is parallel along it
                let along = |s: f64| {
                    let y = exp_vec(x, &(e * s));
                    let vel = -x.coords() * s.sin() + e * s.cos();
                    field.value(&y).dot(&vel)
                };
                div += (along(h) - along(-h)) / (2.0 * h);
            }
            Ok(div)
        }
    }
}

/// Abstraction boundary for compact manifolds embedded in Euclidean space.
///
/// Only [`Sphere2`] is provided.
pub trait Manifold {
    type Point;
    type Tangent;
    type Ambient;

    fn intrinsic_dim(&self) -> usize;
    fn project(&self, x: &Self::Point, v: &Self::Ambient) -> Self::Tangent;
    fn exp(&self, x: &Self::Point, v: &Self::Tangent) -> Self::Point;
    fn log(&self, x: &Self::Point, y: &Self::Point) -> Result<Self::Tangent>;
    fn distance(&self, x: &Self::Point, y: &Self::Point) -> f64;
    fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Point;
    /// Total volume, so that the uniform density is `1 / volume`.
    fn volume(&self) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Sphere2;

impl Sphere2 {
    pub fn divergence<F: TangentField + ?Sized>(
        &self,
        field: &F,
        x: &SpherePoint,
        mode: DivergenceMode,
    ) -> Result<f64> {
        divergence(field, x, mode)
    }
}

impl Manifold for Sphere2 {
    type Point = SpherePoint;
    type Tangent = TangentVector;
    type Ambient = Vec3;

    fn intrinsic_dim(&self) -> usize {
        2
    }

    fn project(&self, x: &SpherePoint, v: &Vec3) -> TangentVector {
        project_to_tangent(x, v)
    }

    fn exp(&self, x: &SpherePoint, v: &TangentVector) -> SpherePoint {
        exp_map(x, v)
    }

    fn log(&self, x: &SpherePoint, y: &SpherePoint) -> Result<TangentVector> {
        log_map(x, y)
    }

    fn distance(&self, x: &SpherePoint, y: &SpherePoint) -> f64 {
        geodesic_distance(x, y)
    }

    fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> SpherePoint {
        sample_uniform(rng)
    }

    fn volume(&self) -> f64 {
        4.0 * std::f64::consts::PI
    }
}
