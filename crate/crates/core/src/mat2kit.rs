//! Exact 2×2 matrix calculus: conformal/anticonformal splitting, cofactor,
//! distance to SO(2) and the closest rotation.
//!
//! Every 2×2 real matrix splits orthogonally (Frobenius inner product) into a
//! conformal part `[[a, b], [-b, a]]` and an anticonformal part
//! `[[a, b], [b, -a]]`. Rotations are conformal, so the distance to SO(2)
//! separates into a radial term on the conformal part plus the full
//! anticonformal norm.

use std::f64::consts::{SQRT_2, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Relative threshold below which the conformal part counts as zero.
pub const DEGENERATE_REL_EPS: f64 = 1e-12;

/// A real 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Self { m11, m12, m21, m22 }
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Self {
        Self::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, 0.0, b)
    }

    /// Conformal matrix `[[a, b], [-b, a]]`.
    pub fn conformal(a: f64, b: f64) -> Self {
        Self::new(a, b, -b, a)
    }

    /// Anticonformal matrix `[[a, b], [b, -a]]`.
    pub fn anticonformal(a: f64, b: f64) -> Self {
        Self::new(a, b, b, -a)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.m11, self.m12, self.m21, self.m22]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn transpose(self) -> Self {
        Self::new(self.m11, self.m21, self.m12, self.m22)
    }

    pub fn trace(self) -> f64 {
        self.m11 + self.m22
    }

    pub fn det(self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    /// Frobenius inner product `A : B = tr(AᵀB)`.
    pub fn dot(self, other: Mat2) -> f64 {
        self.m11 * other.m11 + self.m12 * other.m12 + self.m21 * other.m21 + self.m22 * other.m22
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Symmetric part `(F + Fᵀ)/2`.
    pub fn sym(self) -> Self {
        let off = 0.5 * (self.m12 + self.m21);
        Self::new(self.m11, off, off, self.m22)
    }

    pub fn matmul(self, o: Mat2) -> Self {
        Self::new(
            self.m11 * o.m11 + self.m12 * o.m21,
            self.m11 * o.m12 + self.m12 * o.m22,
            self.m21 * o.m11 + self.m22 * o.m21,
            self.m21 * o.m12 + self.m22 * o.m22,
        )
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m11 * v[0] + self.m12 * v[1],
            self.m21 * v[0] + self.m22 * v[1],
        ]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.m11 + o.m11, self.m12 + o.m12, self.m21 + o.m21, self.m22 + o.m22)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.m11 - o.m11, self.m12 - o.m12, self.m21 - o.m21, self.m22 - o.m22)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2::new(-self.m11, -self.m12, -self.m21, -self.m22)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }
}

/// Orthogonal decomposition `F = F^c + F^a`.
///
/// The conformal part is `[[c_a, c_b], [-c_b, c_a]]`, the anticonformal part
/// `[[a_a, a_b], [a_b, -a_a]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalSplit {
    pub c_a: f64,
    pub c_b: f64,
    pub a_a: f64,
    pub a_b: f64,
}

impl ConformalSplit {
    pub fn conformal(&self) -> Mat2 {
        Mat2::conformal(self.c_a, self.c_b)
    }

    pub fn anticonformal(&self) -> Mat2 {
        Mat2::anticonformal(self.a_a, self.a_b)
    }

    /// `|F^c|² = 2(c_a² + c_b²)`.
    pub fn conformal_norm_sq(&self) -> f64 {
        2.0 * (self.c_a * self.c_a + self.c_b * self.c_b)
    }

    /// `|F^a|² = 2(a_a² + a_b²)`.
    pub fn anticonformal_norm_sq(&self) -> f64 {
        2.0 * (self.a_a * self.a_a + self.a_b * self.a_b)
    }

    pub fn recompose(&self) -> Mat2 {
        self.conformal() + self.anticonformal()
    }
}

pub fn split(f: Mat2) -> ConformalSplit {
    ConformalSplit {
        c_a: 0.5 * (f.m11 + f.m22),
        c_b: 0.5 * (f.m12 - f.m21),
        a_a: 0.5 * (f.m11 - f.m22),
        a_b: 0.5 * (f.m12 + f.m21),
    }
}

/// Cofactor matrix `[[m22, -m21], [-m12, m11]]`.
pub fn cofactor(f: Mat2) -> Mat2 {
    Mat2::new(f.m22, -f.m21, -f.m12, f.m11)
}

/// Constant `k` in `det F = k (|F^c|² − |F^a|²)`.
///
/// Direct expansion gives `1/2`; the value is kept as a named constant so the
/// self-test can swap in an alternative and watch the identity break.
pub const DET_SPLIT_CONSTANT: f64 = 0.5;

/// Right-hand side of the determinant identity for a given constant.
pub fn det_from_split(f: Mat2, constant: f64) -> f64 {
    let s = split(f);
    constant * (s.conformal_norm_sq() - s.anticonformal_norm_sq())
}

/// Distance from `F` to SO(2) in the Frobenius norm.
///
/// `dist² = 2 (r_c − 1)² + |F^a|²` with `r_c = |F^c| / √2`.
pub fn dist_so2(f: Mat2) -> f64 {
    dist_so2_sq(f).sqrt()
}

pub fn dist_so2_sq(f: Mat2) -> f64 {
    let s = split(f);
    let rc = s.c_a.hypot(s.c_b);
    let d = rc - 1.0;
    2.0 * d * d + s.anticonformal_norm_sq()
}

/// A planar rotation, angle kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    theta: f64,
}

impl Rotation {
    pub fn new(theta: f64) -> Self {
        Self {
            theta: reduce_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self { theta: 0.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn matrix(&self) -> Mat2 {
        rotation_matrix(self.theta)
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation::new(self.theta + other.theta)
    }
}

/// `R(θ) = [[cos θ, −sin θ], [sin θ, cos θ]]`.
pub fn rotation_matrix(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Reduce an angle to `[0, 2π)`.
pub fn reduce_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed difference `a − b` wrapped to `(−π, π]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = reduce_angle(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Result of [`closest_rotation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosestRotation {
    Unique(Rotation),
    /// `F^c` vanishes: every rotation is at the same distance.
    Degenerate,
}

impl ClosestRotation {
    pub fn rotation(self) -> Option<Rotation> {
        match self {
            ClosestRotation::Unique(r) => Some(r),
            ClosestRotation::Degenerate => None,
        }
    }
}

/// Rotation maximizing `F : R`, i.e. the angle of the conformal part.
pub fn closest_rotation(f: Mat2) -> ClosestRotation {
    let s = split(f);
    let rc = s.c_a.hypot(s.c_b);
    let eps = DEGENERATE_REL_EPS * f.norm().max(1.0);
    if (SQRT_2 * rc) < eps {
        return ClosestRotation::Degenerate;
    }
    // F^c = rc R(φ) with cos φ = c_a / rc, sin φ = −c_b / rc
    ClosestRotation::Unique(Rotation::new((-s.c_b).atan2(s.c_a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn brute_dist(f: Mat2, samples: usize) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..samples {
            let th = TAU * k as f64 / samples as f64;
            let d = (f - rotation_matrix(th)).norm();
            if d < best.0 {
                best = (d, th);
            }
        }
        best
    }

    #[test]
    fn split_of_identity_is_conformal() {
        let s = split(Mat2::IDENTITY);
        assert_eq!((s.c_a, s.c_b, s.a_a, s.a_b), (1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn split_of_reference_matrix() {
        let s = split(Mat2::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!((s.c_a, s.c_b), (2.5, -0.5));
        assert_eq!((s.a_a, s.a_b), (-1.5, 2.5));
    }

    #[test]
    fn split_matches_projection_onto_basis() {
        // orthonormal basis of conformal and anticonformal subspaces
        let h = 1.0 / SQRT_2;
        let basis_c = [Mat2::conformal(h, 0.0), Mat2::conformal(0.0, h)];
        let basis_a = [Mat2::anticonformal(h, 0.0), Mat2::anticonformal(0.0, h)];
        let f = Mat2::new(1.0, 2.0, 3.0, 4.0);
        let pc = basis_c.iter().fold(Mat2::ZERO, |acc, e| acc + *e * f.dot(*e));
        let pa = basis_a.iter().fold(Mat2::ZERO, |acc, e| acc + *e * f.dot(*e));
        let s = split(f);
        assert!((pc - s.conformal()).max_abs() < 1e-15);
        assert!((pa - s.anticonformal()).max_abs() < 1e-15);
    }

    #[test]
    fn rotations_have_no_anticonformal_part() {
        for k in 0..50 {
            let r = rotation_matrix(0.37 * k as f64);
            let s = split(r);
            assert!(s.a_a.abs() < 1e-15 && s.a_b.abs() < 1e-15);
        }
    }

    #[test]
    fn cofactor_examples() {
        assert_eq!(cofactor(Mat2::IDENTITY), Mat2::IDENTITY);
        let f = Mat2::new(1.0, 2.0, 3.0, 4.0);
        let c = cofactor(f);
        assert_eq!(c, Mat2::new(4.0, -3.0, -2.0, 1.0));
        // F · (cof F)ᵀ = det F · Id
        let p = f.matmul(c.transpose());
        assert!((p - Mat2::IDENTITY * f.det()).max_abs() < 1e-14);
        let b = Mat2::diag(1.0, -1.0);
        assert_eq!(cofactor(b), -b);
    }

    #[test]
    fn dist_examples() {
        assert!(dist_so2(Mat2::IDENTITY).abs() < 1e-15);
        assert!((dist_so2(Mat2::IDENTITY * 2.0) - SQRT_2).abs() < 1e-15);
        assert!((dist_so2(Mat2::diag(1.0, -1.0)) - 2.0).abs() < 1e-15);
        let (bd, _) = brute_dist(Mat2::IDENTITY * 2.0, 100_000);
        assert!((bd - SQRT_2).abs() < 1e-9);
        // every rotation is at distance 2 from diag(1, -1)
        for k in 0..16 {
            let th = k as f64 * 0.4;
            assert!(((Mat2::diag(1.0, -1.0) - rotation_matrix(th)).norm() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn closest_rotation_examples() {
        let f = rotation_matrix(1.3) + Mat2::anticonformal(0.7, -0.2);
        let r = closest_rotation(f).rotation().unwrap();
        assert!((r.theta() - 1.3).abs() < 1e-14);
        let (_, th) = brute_dist(f, 1_000_000);
        assert!(angle_difference(th, 1.3).abs() < 1e-5);
        assert_eq!(closest_rotation(Mat2::IDENTITY), ClosestRotation::Unique(Rotation::new(0.0)));
        assert_eq!(closest_rotation(Mat2::diag(1.0, -1.0)), ClosestRotation::Degenerate);
    }

    #[test]
    fn degenerate_threshold_scales_with_norm() {
        // conformal part small relative to a huge anticonformal part
        let f = Mat2::anticonformal(1e6, 0.0) + Mat2::conformal(1e-7, 0.0);
        assert_eq!(closest_rotation(f), ClosestRotation::Degenerate);
        let g = Mat2::conformal(1e-9, 0.0);
        assert!(closest_rotation(g).rotation().is_some());
    }

    #[test]
    fn angles_reduce_into_half_open_interval() {
        assert_eq!(Rotation::new(TAU).theta(), 0.0);
        assert!((Rotation::new(-PI / 2.0).theta() - 1.5 * PI).abs() < 1e-15);
        assert!(Rotation::new(-1e-300).theta() < TAU);
        assert!((angle_difference(0.1, TAU - 0.1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn printed_det_constant_fails_at_identity() {
        // det Id = 1, but 2 (|Id^c|² − |Id^a|²) = 4
        assert_eq!(det_from_split(Mat2::IDENTITY, 2.0), 4.0);
        assert_eq!(det_from_split(Mat2::IDENTITY, DET_SPLIT_CONSTANT), 1.0);
    }

    #[test]
    fn rotation_matrix_is_orthonormal() {
        for k in 0..20 {
            let r = Rotation::new(0.9 * k as f64 - 3.0).matrix();
            assert!((r.det() - 1.0).abs() < 1e-15);
            assert!((r.transpose().matmul(r) - Mat2::IDENTITY).max_abs() < 1e-15);
        }
    }
}
