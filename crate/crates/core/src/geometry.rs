//! Dimension-generic vector algebra for d in {2, 3}, ray distances, the
//! elastic scattering map, the reflection map on the sphere and uniform
//! sampling of balls and spheres.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{self, McEstimate};

/// Tolerance on |omega| = 1 for unit vectors.
pub const UNIT_TOL: f64 = 1e-12;

pub fn check_dim(d: usize) -> Result<usize> {
    if d == 2 || d == 3 {
        Ok(d)
    } else {
        Err(Error::Dimension(d))
    }
}

/// A point or velocity in R^d, d in {2, 3}.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Vector {
    c: [f64; 3],
    dim: u8,
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        Vector { c: [0.0; 3], dim: dim as u8 }
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Vector { c: [x, y, 0.0], dim: 2 }
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Vector { c: [x, y, z], dim: 3 }
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let dim = check_dim(s.len())?;
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector component"));
        }
        let mut c = [0.0; 3];
        c[..dim].copy_from_slice(s);
        Ok(Vector { c, dim: dim as u8 })
    }

    /// Unit basis vector along `axis`.
    pub fn axis(dim: usize, axis: usize) -> Self {
        let mut v = Vector::zeros(dim);
        v.c[axis] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn dot(&self, o: &Vector) -> f64 {
        debug_assert_eq!(self.dim, o.dim);
        self.c[0] * o.c[0] + self.c[1] * o.c[1] + self.c[2] * o.c[2]
    }

    #[inline]
    pub fn norm2(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }

    /// Cosine of the angle between two vectors; `None` if either is zero.
    pub fn cos_angle(&self, o: &Vector) -> Option<f64> {
        let den = self.norm() * o.norm();
        if den == 0.0 {
            None
        } else {
            Some(self.dot(o) / den)
        }
    }

    pub fn dist(&self, o: &Vector) -> f64 {
        (*self - *o).norm()
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.as_slice().to_vec()
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::from_slice(&v)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    #[inline]
    fn add(mut self, o: Vector) -> Vector {
        self += o;
        self
    }
}

impl AddAssign for Vector {
    #[inline]
    fn add_assign(&mut self, o: Vector) {
        debug_assert_eq!(self.dim, o.dim);
        for k in 0..3 {
            self.c[k] += o.c[k];
        }
    }
}

impl Sub for Vector {
    type Output = Vector;
    #[inline]
    fn sub(mut self, o: Vector) -> Vector {
        self -= o;
        self
    }
}

impl SubAssign for Vector {
    #[inline]
    fn sub_assign(&mut self, o: Vector) {
        debug_assert_eq!(self.dim, o.dim);
        for k in 0..3 {
            self.c[k] -= o.c[k];
        }
    }
}

impl Neg for Vector {
    type Output = Vector;
    #[inline]
    fn neg(self) -> Vector {
        self * -1.0
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    #[inline]
    fn mul(mut self, s: f64) -> Vector {
        for k in 0..3 {
            self.c[k] *= s;
        }
        self
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    #[inline]
    fn mul(self, v: Vector) -> Vector {
        v * self
    }
}

impl Div<f64> for Vector {
    type Output = Vector;
    #[inline]
    fn div(self, s: f64) -> Vector {
        self * (1.0 / s)
    }
}

/// A direction on the unit sphere. Renormalized on construction.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct UnitVec(Vector);

impl UnitVec {
    pub fn new(v: Vector) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::NonFinite("unit vector"));
        }
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::InvalidParam("cannot normalize the zero vector".into()));
        }
        Ok(UnitVec(v / n))
    }

    /// Unit vector at angle `phi` in the plane.
    pub fn from_angle(phi: f64) -> Self {
        UnitVec(Vector::new2(phi.cos(), phi.sin()))
    }

    #[inline]
    pub fn vector(&self) -> Vector {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

impl fmt::Debug for UnitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::ops::Deref for UnitVec {
    type Target = Vector;
    fn deref(&self) -> &Vector {
        &self.0
    }
}

impl From<UnitVec> for Vec<f64> {
    fn from(v: UnitVec) -> Self {
        v.0.into()
    }
}

impl TryFrom<Vec<f64>> for UnitVec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        let v = Vector::from_slice(&v)?;
        if (v.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!("|omega| = {} is not 1", v.norm())));
        }
        UnitVec::new(v)
    }
}

/// `inf_{tau >= 0} |dx - dv tau|`.
pub fn ray_min_distance(dx: Vector, dv: Vector) -> f64 {
    let a = dv.norm2();
    if a == 0.0 {
        return dx.norm();
    }
    let tau = (dx.dot(&dv) / a).max(0.0);
    (dx - dv * tau).norm()
}

/// Elastic exchange of the velocity component along `omega`.
///
/// Returns `(v + w (w.(v1 - v)), v1 - w (w.(v1 - v)))`.
#[inline]
pub fn scatter(v: Vector, v1: Vector, omega: &UnitVec) -> (Vector, Vector) {
    let w = omega.vector();
    let p = w * w.dot(&(v1 - v));
    (v + p, v1 - p)
}

/// `u = |v|^{-1} (2 w (w.v) - v)`: reflection of `-v/|v|` through the axis `w`.
pub fn reflect_direction(v: Vector, omega: &UnitVec) -> Result<UnitVec> {
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::ZeroVelocity);
    }
    let w = omega.vector();
    let u = (w * (2.0 * w.dot(&v)) - v) / n;
    if (u + v / n).norm() < 1e-12 {
        return Err(Error::ExcludedPoint);
    }
    UnitVec::new(u)
}

/// Inverse of [`reflect_direction`] on the hemisphere `w.v > 0`.
pub fn reflect_direction_inverse(v: Vector, u: &UnitVec) -> Result<UnitVec> {
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::ZeroVelocity);
    }
    let s = u.vector() + v / n;
    if s.norm() < 1e-12 {
        return Err(Error::ExcludedPoint);
    }
    UnitVec::new(s)
}

/// Distance from `p` to the line through `point` with direction `dir`.
pub fn distance_to_line(p: Vector, point: Vector, dir: &UnitVec) -> f64 {
    let r = p - point;
    (r - dir.vector() * r.dot(dir)).norm()
}

/// Surface area of S^{d-1}.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Volume of the d-ball of the given radius.
pub fn ball_volume(d: usize, radius: f64) -> f64 {
    match d {
        2 => PI * radius * radius,
        3 => 4.0 / 3.0 * PI * radius.powi(3),
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Volume of the unit (d-1)-ball, i.e. half of `int_{S^{d-1}} |w.e| dw`.
pub fn unit_ball_volume_codim1(d: usize) -> f64 {
    match d {
        2 => 2.0,
        3 => PI,
        _ => panic!("unsupported dimension {d}"),
    }
}

pub fn gaussian_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    let mut v = Vector::zeros(d);
    for k in 0..d {
        v.c[k] = rng.sample(StandardNormal);
    }
    v
}

pub fn sample_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> UnitVec {
    loop {
        let g = gaussian_vector(d, rng);
        let n = g.norm();
        if n > 1e-300 {
            return UnitVec(g / n);
        }
    }
}

pub fn sample_ball<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vector {
    let dir = sample_sphere(d, rng);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    dir.vector() * r
}

/// Monte Carlo surface measure of `{w in S^{d-1} : dist(w, L) <= rho}`.
pub fn cylinder_cap_measure(
    line_point: Vector,
    line_dir: &UnitVec,
    rho: f64,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParam("n_samples must be positive".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidParam(format!("rho must be positive, got {rho}")));
    }
    let d = check_dim(line_point.dim())?;
    if line_dir.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: line_dir.dim() });
    }
    let acc = mc::run_chunked(n_samples, seed, |rng, count, acc| {
        for _ in 0..count {
            let w = sample_sphere(d, rng);
            let hit = distance_to_line(w.vector(), line_point, line_dir) <= rho;
            acc.push(if hit { 1.0 } else { 0.0 });
        }
    });
    Ok(acc.estimate(sphere_area(d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ray_distance_examples() {
        let d = ray_min_distance(Vector::new2(2.0, 0.05), Vector::new2(1.0, 0.0));
        assert!((d - 0.05).abs() < 1e-15);
        let d = ray_min_distance(Vector::new2(2.0, 0.0), Vector::new2(-1.0, 0.0));
        assert_eq!(d, 2.0);
        let d = ray_min_distance(Vector::new2(3.0, 4.0), Vector::new2(0.0, 0.0));
        assert_eq!(d, 5.0);
    }

    #[test]
    fn scatter_examples() {
        let e1 = UnitVec::new(Vector::new2(1.0, 0.0)).unwrap();
        let (a, b) = scatter(Vector::new2(1.0, 0.0), Vector::new2(-1.0, 0.0), &e1);
        assert_eq!(a, Vector::new2(-1.0, 0.0));
        assert_eq!(b, Vector::new2(1.0, 0.0));
        let e2 = UnitVec::new(Vector::new2(0.0, 1.0)).unwrap();
        let (a, b) = scatter(Vector::new2(0.0, 0.0), Vector::new2(1.0, 0.0), &e2);
        assert_eq!(a, Vector::new2(0.0, 0.0));
        assert_eq!(b, Vector::new2(1.0, 0.0));
    }

    #[test]
    fn reflect_examples() {
        let v = Vector::new2(1.0, 0.0);
        let w = UnitVec::from_angle(PI / 4.0);
        let u = reflect_direction(v, &w).unwrap();
        assert!((u.vector() - Vector::new2(0.0, 1.0)).norm() < 1e-15);
        let u = reflect_direction(v, &UnitVec::from_angle(0.0)).unwrap();
        assert!((u.vector() - v).norm() < 1e-15);
    }

    #[test]
    fn reflect_rejects_degenerate_inputs() {
        let w = UnitVec::from_angle(0.3);
        assert!(matches!(reflect_direction(Vector::zeros(2), &w), Err(Error::ZeroVelocity)));
        // w perpendicular to v sends u to -v/|v|
        let v = Vector::new2(1.0, 0.0);
        let perp = UnitVec::from_angle(PI / 2.0);
        assert!(matches!(reflect_direction(v, &perp), Err(Error::ExcludedPoint)));
        let anti = UnitVec::new(-v).unwrap();
        assert!(matches!(reflect_direction_inverse(v, &anti), Err(Error::ExcludedPoint)));
    }

    #[test]
    fn reflect_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2, 3] {
            for _ in 0..2000 {
                let v = gaussian_vector(d, &mut rng);
                let mut w = sample_sphere(d, &mut rng);
                if w.dot(&v) < 0.0 {
                    w = UnitVec::new(-w.vector()).unwrap();
                }
                if w.dot(&v) < 1e-6 * v.norm() {
                    continue;
                }
                let u = reflect_direction(v, &w).unwrap();
                assert!((u.norm() - 1.0).abs() < 1e-12);
                let back = reflect_direction_inverse(v, &u).unwrap();
                assert!((back.vector() - w.vector()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn unit_vec_renormalizes() {
        let u = UnitVec::new(Vector::new3(0.0, 3.0, 4.0)).unwrap();
        assert!((u.norm() - 1.0).abs() < UNIT_TOL);
        assert!(UnitVec::new(Vector::zeros(3)).is_err());
    }

    #[test]
    fn vector_serde_is_a_plain_list() {
        let v = Vector::new3(1.0, -2.0, 0.5);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[1.0,-2.0,0.5]");
        let back: Vector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<Vector>("[1.0]").is_err());
    }

    #[test]
    fn cap_measure_full_sphere_when_rho_large() {
        let e = UnitVec::from_angle(0.0);
        let est = cylinder_cap_measure(Vector::zeros(2), &e, 2.5, 10_000, 1).unwrap();
        assert_eq!(est.measure(), 2.0 * PI);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn cap_measure_rejects_zero_samples() {
        let e = UnitVec::from_angle(0.0);
        assert!(cylinder_cap_measure(Vector::zeros(2), &e, 0.1, 0, 1).is_err());
    }

    #[test]
    fn cap_measure_through_origin_matches_arcsine() {
        // oracle: midpoint quadrature of the arc indicator |sin phi| <= rho
        let rho = 0.25;
        let m = 200_000;
        let h = 2.0 * PI / m as f64;
        let oracle: f64 = (0..m)
            .map(|i| {
                let phi = (i as f64 + 0.5) * h;
                if phi.sin().abs() <= rho {
                    h
                } else {
                    0.0
                }
            })
            .sum();
        assert!((oracle - 4.0 * (0.25f64).asin()).abs() < 1e-3);
        let e = UnitVec::from_angle(0.0);
        let est = cylinder_cap_measure(Vector::zeros(2), &e, rho, 200_000, 5).unwrap();
        let se = est.stderr * est.volume;
        assert!((est.measure() - oracle).abs() < 3.0 * se, "{} vs {}", est.measure(), oracle);
    }
}
