//! Extremal deformations for the planar geometric rigidity estimate.
//!
//! For a compactly supported angle field `α`, the pipeline builds
//! `f = (sin α, cos α − 1)`, solves `curl g = div f`, `div g = curl f` in
//! Fourier space, and assembles the gradient
//!
//! ```text
//! G = R₀ (R(α) + [[a, b], [b, −a]]),   g = (a, b).
//! ```
//!
//! `G` is curl free, its conformal part lies in SO(2) pointwise, and
//! `∫|G − R₀|² = 2 ∫ dist²(G, SO(2))`: the constant √2 is attained.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridfield::{
    self, ensure_gradient, forward_real, inverse_real, GridError, MatrixField2, Potential, ScalarField,
    VectorField2, CURL_TOL,
};
use crate::mat2kit::{self, angle_difference, rotation_matrix, Mat2, Rotation};
use crate::summation::compensated_sum;

#[derive(Debug, Error)]
pub enum RigidityError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("dist(∇u, SO(2)) vanishes (∫dist² = {rhs:.3e}); the rigidity quotient is undefined")]
    ZeroDistance { rhs: f64 },
    #[error("far-field conformal part vanishes; no closest rotation")]
    DegenerateFarField,
    #[error("angle field has relative mass {fraction:.3e} in the boundary margin; it is not compactly supported")]
    NotCompactlySupported { fraction: f64 },
}

pub type Result<T> = std::result::Result<T, RigidityError>;

/// How the Fourier solve treats bins whose derivative wavevector vanishes
/// (the mean and the Nyquist corners).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMode {
    /// Apply the reflection `[[0, 1], [1, 0]]`, the limit of the symbol along
    /// the `ξ₁` axis. The solve is then an isometry and `‖g‖ = ‖f‖`.
    #[default]
    Isometric,
    /// Set those bins to zero; `‖g‖ = ‖f − mean f‖`.
    Drop,
}

/// `f = (sin α, cos α − 1)`, with `cos α − 1 = −2 sin²(α/2)` to avoid cancellation.
pub fn build_f(alpha: &ScalarField) -> VectorField2 {
    let (s, c): (Vec<f64>, Vec<f64>) = alpha.values.par_iter().map(|&a| (a.sin(), -2.0 * (0.5 * a).sin().powi(2))).unzip();
    VectorField2 {
        grid: alpha.grid,
        comps: [s, c],
    }
}

/// Fourier solve of `curl g = div f`, `div g = curl f` with the default
/// zero-mode convention.
pub fn solve_g(f: &VectorField2) -> VectorField2 {
    solve_g_with(f, ZeroMode::default())
}

/// Per-bin reflection `ĝ = (⟨f̂, ξ^⊥⟩ ξ + ⟨f̂, ξ⟩ ξ^⊥) / |ξ|²`, `ξ^⊥ = (−ξ₂, ξ₁)`.
pub fn solve_g_with(f: &VectorField2, mode: ZeroMode) -> VectorField2 {
    let grid = f.grid;
    let n = grid.n();
    let s1 = forward_real(&f.comps[0], n);
    let s2 = forward_real(&f.comps[1], n);
    let zero = Complex64::new(0.0, 0.0);
    let (h1, h2): (Vec<Complex64>, Vec<Complex64>) = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let [k1, k2] = grid.derivative_wavevector(idx);
            let kk = k1 * k1 + k2 * k2;
            let (a, b) = (s1[idx], s2[idx]);
            if kk == 0.0 {
                return match mode {
                    ZeroMode::Isometric => (b, a),
                    ZeroMode::Drop => (zero, zero),
                };
            }
            let along = (a * k1 + b * k2) / kk; // ⟨f̂, ξ⟩/|ξ|²
            let across = (b * k1 - a * k2) / kk; // ⟨f̂, ξ^⊥⟩/|ξ|²
            (across * k1 - along * k2, across * k2 + along * k1)
        })
        .unzip();
    VectorField2 {
        grid,
        comps: [inverse_real(&h1, n), inverse_real(&h2, n)],
    }
}

/// `G = R₀ (R(α) + [[a, b], [b, −a]])` with `g = (a, b)` given for `R₀ = Id`.
///
/// Fails when `G` is not curl free, i.e. `g` does not solve the system for
/// `f` built from `α`.
pub fn assemble_gradient(alpha: &ScalarField, g: &VectorField2, r0: Rotation) -> Result<MatrixField2> {
    if alpha.grid != g.grid {
        return Err(GridError::GridMismatch.into());
    }
    let rot = r0.matrix();
    let field = MatrixField2::from_fn(alpha.grid, |i| {
        let local = rotation_matrix(alpha.values[i]) + Mat2::anticonformal(g.comps[0][i], g.comps[1][i]);
        rot.matmul(local)
    });
    ensure_gradient(&field, CURL_TOL)?;
    Ok(field)
}

/// Both sides of the rigidity estimate for one gradient field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub curl_residual: f64,
    pub optimal_theta: f64,
    /// `∫|G − R*|²`.
    pub lhs: f64,
    /// `∫dist²(G, SO(2))`.
    pub rhs: f64,
    /// `lhs / (2 rhs)`; at most 1, with equality for extremal fields.
    pub ratio: f64,
}

/// Closest rotation to the far field: the mean conformal part over the
/// boundary margin, where a field with `G − R ∈ L²` has settled to `R`.
pub fn far_field_rotation(g: &MatrixField2) -> Result<Rotation> {
    let grid = &g.grid;
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| grid.in_margin(i)).collect();
    let count = idx.len() as f64;
    let ca = compensated_sum(idx.iter().map(|&i| 0.5 * (g.comps[0][i] + g.comps[3][i]))) / count;
    let cb = compensated_sum(idx.iter().map(|&i| 0.5 * (g.comps[1][i] - g.comps[2][i]))) / count;
    mat2kit::closest_rotation(Mat2::conformal(ca, cb))
        .rotation()
        .ok_or(RigidityError::DegenerateFarField)
}

/// `∫_margin |G − R(θ)|²`, the functional minimized by [`far_field_rotation`].
pub fn far_field_misfit(g: &MatrixField2, theta: f64) -> f64 {
    let r = rotation_matrix(theta);
    let grid = &g.grid;
    compensated_sum((0..grid.len()).filter(|&i| grid.in_margin(i)).map(|i| (g.at(i) - r).norm_sq()))
        * grid.cell_area()
}

/// Rigidity quotient of a gradient field.
pub fn rigidity_ratio(g: &MatrixField2) -> Result<RatioReport> {
    let curl = ensure_gradient(g, CURL_TOL)?;
    let r_star = far_field_rotation(g)?;
    let rm = r_star.matrix();
    let lhs = g.integrate_pointwise(|m| (m - rm).norm_sq());
    let rhs = g.integrate_pointwise(mat2kit::dist_so2_sq);
    let scale = g.integrate_pointwise(Mat2::norm_sq);
    if rhs <= 1e-24 * scale.max(1.0) {
        return Err(RigidityError::ZeroDistance { rhs });
    }
    Ok(RatioReport {
        curl_residual: curl.relative,
        optimal_theta: r_star.theta(),
        lhs,
        rhs,
        ratio: lhs / (2.0 * rhs),
    })
}

/// Everything measured on a synthesized extremal field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalReport {
    pub alpha_norm: f64,
    pub f_norm: f64,
    pub g_norm: f64,
    pub curl_residual: f64,
    pub optimal_theta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Prescribed far-field angle of `R₀`.
    pub r0_theta: f64,
    /// `optimal_theta − r0_theta`, wrapped to `(−π, π]`.
    pub theta_error: f64,
    /// `max_x dist(G^c(x), SO(2))`.
    pub conformal_defect: f64,
    /// `|∫|(G−R₀)^c|² − ∫|(G−R₀)^a|²| / ‖G − R₀‖²`.
    pub det_balance: f64,
    /// `‖R(α) − Id‖² = ∫(4 − 4 cos α)`, bounded by `2‖α‖²`.
    pub rotation_defect_sq: f64,
    pub zero_mode: ZeroMode,
}

/// Output of [`synthesize_extremal`].
#[derive(Debug, Clone)]
pub struct Extremal {
    pub f: VectorField2,
    pub g: VectorField2,
    pub gradient: MatrixField2,
    /// `u(x) = A x + periodic part`, with `A` the mean gradient.
    pub displacement: Potential,
    pub report: ExtremalReport,
}

pub fn synthesize_extremal(alpha: &ScalarField, r0: Rotation) -> Result<Extremal> {
    synthesize_extremal_with(alpha, r0, ZeroMode::default())
}

pub fn synthesize_extremal_with(alpha: &ScalarField, r0: Rotation, mode: ZeroMode) -> Result<Extremal> {
    let fraction = gridfield::margin_mass_fraction(&[&alpha.values], &alpha.grid);
    if fraction >= gridfield::SUPPORT_TOL {
        return Err(RigidityError::NotCompactlySupported { fraction });
    }
    let f = build_f(alpha);
    let g = solve_g_with(&f, mode);
    let gradient = assemble_gradient(alpha, &g, r0)?;
    let displacement = gridfield::potential_from_gradient(&gradient)?;
    let ratio = rigidity_ratio(&gradient)?;

    let r0m = r0.matrix();
    let (mut conf, mut anti) = (Vec::with_capacity(alpha.grid.len()), Vec::with_capacity(alpha.grid.len()));
    let mut conformal_defect = 0.0_f64;
    for i in 0..alpha.grid.len() {
        let s = mat2kit::split(gradient.at(i) - r0m);
        conf.push(s.conformal_norm_sq());
        anti.push(s.anticonformal_norm_sq());
        let gc = mat2kit::split(gradient.at(i)).conformal();
        conformal_defect = conformal_defect.max(mat2kit::dist_so2(gc));
    }
    let (c, a) = (compensated_sum(conf), compensated_sum(anti));
    let det_balance = if c + a > 0.0 { (c - a).abs() / (c + a) } else { 0.0 };
    let rotation_defect_sq = gridfield::integrate(&alpha.map(|v| 4.0 - 4.0 * v.cos()));

    let report = ExtremalReport {
        alpha_norm: alpha.l2_norm(),
        f_norm: f.l2_norm(),
        g_norm: g.l2_norm(),
        curl_residual: ratio.curl_residual,
        optimal_theta: ratio.optimal_theta,
        lhs: ratio.lhs,
        rhs: ratio.rhs,
        ratio: ratio.ratio,
        r0_theta: r0.theta(),
        theta_error: angle_difference(ratio.optimal_theta, r0.theta()),
        conformal_defect,
        det_balance,
        rotation_defect_sq,
        zero_mode: mode,
    };
    Ok(Extremal {
        f,
        g,
        gradient,
        displacement,
        report,
    })
}

/// Named analytic angle profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlphaProfile {
    /// `amplitude · exp(−|x − center|² / width²)`.
    GaussianBump {
        amplitude: f64,
        width: f64,
        center: [f64; 2],
    },
}

impl AlphaProfile {
    pub fn sample(&self, grid: gridfield::PeriodicGrid) -> ScalarField {
        match *self {
            AlphaProfile::GaussianBump {
                amplitude,
                width,
                center,
            } => ScalarField::from_fn(grid, gridfield::gaussian(center, width, amplitude)),
        }
    }
}

impl Default for AlphaProfile {
    fn default() -> Self {
        AlphaProfile::GaussianBump {
            amplitude: 1.0,
            width: 1.0,
            center: [0.0, 0.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfield::{curl, div, PeriodicGrid};
    use nalgebra::{Matrix2, Vector2};
    use std::f64::consts::PI;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(n, 20.0).unwrap()
    }

    fn bump(g: PeriodicGrid, amp: f64) -> ScalarField {
        AlphaProfile::GaussianBump {
            amplitude: amp,
            width: 1.0,
            center: [0.0, 0.0],
        }
        .sample(g)
    }

    #[test]
    fn build_f_examples() {
        let g = grid(16);
        let f = build_f(&ScalarField::zeros(g));
        assert_eq!(f.max_abs(), 0.0);

        let mut a = ScalarField::zeros(g);
        a.values[37] = PI;
        let f = build_f(&a);
        assert!(f.comps[0][37].abs() < 1e-15 && (f.comps[1][37] + 2.0).abs() < 1e-15);

        let a = bump(grid(64), 1e-3);
        let f = build_f(&a);
        for i in 0..a.values.len() {
            let x = a.values[i];
            if x.abs() < 1e-6 {
                continue;
            }
            assert!((f.comps[0][i] - x).abs() <= 1e-6 * x.abs());
            assert!((f.comps[1][i] + 0.5 * x * x).abs() <= 1e-6 * 0.5 * x * x);
        }
    }

    #[test]
    fn f_norm_is_bounded_by_alpha_norm() {
        let a = bump(grid(64), 2.5);
        assert!(build_f(&a).l2_norm() <= a.l2_norm());
    }

    #[test]
    fn zero_f_gives_zero_g() {
        let g = solve_g(&VectorField2::zeros(grid(16)));
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn single_mode_matches_per_frequency_solve() {
        let gr = grid(32);
        let l = gr.length();
        let (k1, k2) = (2.0, 3.0);
        let xi = [std::f64::consts::TAU * k1 / l, std::f64::consts::TAU * k2 / l];
        // f = c cos(ξ·x) ξ: f̂ parallel to ξ
        let f = VectorField2::from_fn(gr, |x| {
            let c = (xi[0] * x[0] + xi[1] * x[1]).cos();
            [c * xi[0], c * xi[1]]
        });
        let g = solve_g(&f);
        let fh = [f.component(0).fft(), f.component(1).fft()];
        let gh = [g.component(0).fft(), g.component(1).fft()];
        let idx = (k1 as usize) * gr.n() + k2 as usize;
        let perp = [-xi[1], xi[0]];
        // rows: ⟨ĝ, ξ^⊥⟩ = ⟨f̂, ξ⟩ and ⟨ĝ, ξ⟩ = ⟨f̂, ξ^⊥⟩
        let m = Matrix2::new(perp[0], perp[1], xi[0], xi[1]);
        let lu = m.lu();
        for part in 0..2 {
            let comp = |s: &gridfield::Spectrum| if part == 0 { s.coeffs[idx].re } else { s.coeffs[idx].im };
            let (f1, f2) = (comp(&fh[0]), comp(&fh[1]));
            let rhs = Vector2::new(f1 * xi[0] + f2 * xi[1], f1 * perp[0] + f2 * perp[1]);
            let sol = lu.solve(&rhs).unwrap();
            let (g1, g2) = (comp(&gh[0]), comp(&gh[1]));
            let scale = f1.abs() + f2.abs() + 1.0;
            assert!((sol[0] - g1).abs() < 1e-9 * scale);
            assert!((sol[1] - g2).abs() < 1e-9 * scale);
            // closed form for f̂ ∥ ξ
            let norm = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let along = (f1 * xi[0] + f2 * xi[1]) / norm;
            assert!((g1 - along * perp[0] / norm).abs() < 1e-9 * scale);
            assert!((g2 - along * perp[1] / norm).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn g_solves_the_system_spectrally() {
        let gr = grid(128);
        let a = bump(gr, 1.0);
        let f = build_f(&a);
        let g = solve_g(&f);
        let (cg, df) = (curl(&g), div(&f));
        let (dg, cf) = (div(&g), curl(&f));
        for i in 0..gr.len() {
            assert!((cg.values[i] - df.values[i]).abs() < 1e-12);
            assert!((dg.values[i] - cf.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn isometric_solve_preserves_norm() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let gr = grid(64);
        for _ in 0..5 {
            let centers: Vec<([f64; 2], f64)> = (0..4)
                .map(|_| ([rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)], rng.random_range(-1.0..1.0)))
                .collect();
            let f = VectorField2::from_fn(gr, |x| {
                let mut v = [0.0, 0.0];
                for (k, (c, a)) in centers.iter().enumerate() {
                    let b = gridfield::gaussian(*c, 0.9, *a)(x);
                    v[k % 2] += b;
                }
                v
            });
            let g = solve_g(&f);
            assert!((g.l2_norm() / f.l2_norm() - 1.0).abs() < 1e-12);
            let m = f.mean();
            let centered = f.sub(&VectorField2::from_fn(gr, |_| m));
            let gd = solve_g_with(&f, ZeroMode::Drop);
            assert!((gd.l2_norm() / centered.l2_norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn printed_sign_breaks_compatibility() {
        // −⟨f̂, ξ^⊥⟩ ξ + ⟨f̂, ξ⟩ ξ^⊥ solves div g = −curl f instead
        let gr = grid(64);
        let a = bump(gr, 1.0);
        let f = build_f(&a);
        let g = solve_g(&f);
        let h = gridfield::helmholtz(&g);
        let flipped = h.divfree_part.sub(&h.gradient_part);
        let err = assemble_gradient(&a, &flipped, Rotation::identity());
        assert!(matches!(err, Err(RigidityError::Grid(GridError::CurlResidualTooLarge { .. }))));
    }

    #[test]
    fn assemble_examples() {
        let gr = grid(32);
        let g = assemble_gradient(&ScalarField::zeros(gr), &VectorField2::zeros(gr), Rotation::identity()).unwrap();
        assert!((0..gr.len()).all(|i| g.at(i) == Mat2::IDENTITY));

        let gr = grid(256);
        let a = bump(gr, 1.0);
        let gg = solve_g(&build_f(&a));
        let big = assemble_gradient(&a, &gg, Rotation::new(0.4)).unwrap();
        let res = gridfield::curl_residual(&big);
        assert!(res.max_abs <= 1e-8 * big.l2_norm());
        for i in 0..gr.len() {
            let m = big.at(i);
            let anti = mat2kit::split(m).anticonformal_norm_sq().sqrt();
            assert!((mat2kit::dist_so2(m) - anti).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_rotation_has_zero_distance() {
        let gr = grid(32);
        let g = MatrixField2::constant(gr, rotation_matrix(0.7));
        assert!(matches!(rigidity_ratio(&g), Err(RigidityError::ZeroDistance { .. })));
    }

    #[test]
    fn zero_alpha_is_rejected_as_degenerate() {
        let gr = grid(32);
        let r = synthesize_extremal(&ScalarField::zeros(gr), Rotation::new(1.0));
        assert!(matches!(r, Err(RigidityError::ZeroDistance { .. })));
    }

    #[test]
    fn perturbed_identity_stays_below_one() {
        // Id + ε ∇(∇^⊥ψ): a gradient whose conformal part leaves SO(2)
        let gr = grid(128);
        let psi = ScalarField::from_fn(gr, gridfield::gaussian([0.3, -0.2], 1.0, 1.0));
        let w = gridfield::perp_grad(&psi);
        let dw = gridfield::grad(&w);
        for eps in [1e-3, 0.05, 0.3] {
            let g = dw.map(|m| Mat2::IDENTITY + m * eps);
            let rep = rigidity_ratio(&g).unwrap();
            assert!(rep.ratio <= 1.0 + 1e-3, "eps {eps}: ratio {}", rep.ratio);
            // brute-force scan of the far-field functional
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..10_000 {
                let th = std::f64::consts::TAU * k as f64 / 10_000.0;
                let v = far_field_misfit(&g, th);
                if v < best.0 {
                    best = (v, th);
                }
            }
            let (mut lo, mut hi) = (best.1 - 1e-3, best.1 + 1e-3);
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if far_field_misfit(&g, m1) < far_field_misfit(&g, m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            assert!(angle_difference(0.5 * (lo + hi), rep.optimal_theta).abs() < 1e-8);
        }
    }

    #[test]
    fn drop_mode_loses_exactly_the_mean_energy() {
        let gr = grid(128);
        let a = bump(gr, 1.0);
        let ex = synthesize_extremal_with(&a, Rotation::identity(), ZeroMode::Drop).unwrap();
        let mean_f = gridfield::integrate_vector(&ex.f);
        let l = gr.length();
        let g2 = ex.report.g_norm.powi(2);
        let predicted = (mean_f[0].powi(2) + mean_f[1].powi(2)) / (2.0 * l * l * g2);
        assert!((ex.report.ratio - 1.0 - predicted).abs() < 1e-10, "{} vs {}", ex.report.ratio - 1.0, predicted);
        assert!(predicted > 1e-3);
    }
}
