//! Invariant suites of every module, one pass/fail line per property.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gridfield::{self, PeriodicGrid, ScalarField, VectorField2};
use crate::kornfem::{self, BoundaryCondition, BuiltinDomain, KornOptions};
use crate::mat2kit::{self, Mat2, Rotation};
use crate::rigidity::{self, AlphaProfile};
use crate::shells::{self, FourierProfile, ShellSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestConfig {
    pub seed: u64,
    pub samples: usize,
    pub break_det_constant: bool,
    pub report: Option<PathBuf>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig {
            seed: 7,
            samples: 100_000,
            break_det_constant: false,
            report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    /// Measured residual (or count, for violation counters).
    pub value: f64,
    pub tol: f64,
}

impl Check {
    fn at_most(name: &'static str, value: f64, tol: f64) -> Check {
        Check {
            name,
            pass: value <= tol,
            value,
            tol,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} value={:.6e} tol={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tol
        )
    }
}

fn random_mat(rng: &mut ChaCha8Rng) -> Mat2 {
    Mat2::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
    )
}

/// `min_θ |F − R(θ)|` by a coarse scan and golden-section refinement.
fn brute_dist_so2(f: Mat2) -> f64 {
    let d = |t: f64| (f - mat2kit::rotation_matrix(t)).norm();
    let m = 256;
    let h = TAU / m as f64;
    let k = (0..m).min_by(|&a, &b| d(a as f64 * h).total_cmp(&d(b as f64 * h))).unwrap();
    let (mut a, mut b) = ((k as f64 - 1.0) * h, (k as f64 + 1.0) * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (c, e) = (b - g * (b - a), a + g * (b - a));
        if d(c) < d(e) {
            b = e;
        } else {
            a = c;
        }
    }
    d(0.5 * (a + b))
}

fn matrix_suite(c: &SelftestConfig, out: &mut Vec<Check>) {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let constant = if c.break_det_constant { 2.0 } else { mat2kit::DET_SPLIT_CONSTANT };
    let (mut recon, mut orth, mut pyth, mut det) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let (mut below_anti, mut cofactor_viol) = (0usize, 0usize);
    let mut brute = 0.0_f64;
    for i in 0..c.samples {
        let f = random_mat(&mut rng);
        let n2 = f.norm_sq().max(f64::MIN_POSITIVE);
        let s = mat2kit::split(f);
        recon = recon.max((s.recompose() - f).norm() / n2.sqrt());
        orth = orth.max(s.conformal().dot(s.anticonformal()).abs() / n2);
        pyth = pyth.max((s.conformal_norm_sq() + s.anticonformal_norm_sq() - f.norm_sq()).abs() / n2);
        det = det.max((f.det() - mat2kit::det_from_split(f, constant)).abs() / n2);
        let dist = mat2kit::dist_so2(f);
        let slack = 1e-12 * n2.sqrt();
        if dist + slack < s.anticonformal_norm_sq().sqrt() {
            below_anti += 1;
        }
        if (mat2kit::cofactor(f) - f).norm() > 2.0 * dist + slack {
            cofactor_viol += 1;
        }
        if i < 1000 {
            brute = brute.max((dist - brute_dist_so2(f)).abs());
        }
    }
    out.push(Check::at_most("split_reconstruction", recon, 1e-12));
    out.push(Check::at_most("split_orthogonality", orth, 1e-12));
    out.push(Check::at_most("split_pythagoras", pyth, 1e-12));
    out.push(Check::at_most("det_identity", det, 1e-12));
    out.push(Check::at_most("dist_so2_brute_force", brute, 1e-9));
    out.push(Check::at_most("dist_ge_anticonformal", below_anti as f64, 0.0));
    out.push(Check::at_most("cofactor_distance_bound", cofactor_viol as f64, 0.0));
    let rot = (0..100)
        .map(|_| {
            let t = rng.random_range(0.0..TAU);
            let a = Mat2::anticonformal(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let r = mat2kit::closest_rotation(mat2kit::rotation_matrix(t) + a).rotation();
            r.map_or(f64::INFINITY, |r| mat2kit::angle_difference(r.theta(), t).abs())
        })
        .fold(0.0, f64::max);
    out.push(Check::at_most("closest_rotation_angle", rot, 1e-12));
}

/// Sum of a few Gaussian bumps well inside the box.
fn random_bumps(grid: PeriodicGrid, rng: &mut ChaCha8Rng) -> ScalarField {
    let bumps: Vec<([f64; 2], f64, f64)> = (0..3)
        .map(|_| {
            let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            (c, rng.random_range(0.6..1.0), rng.random_range(-1.0..1.0))
        })
        .collect();
    ScalarField::from_fn(grid, move |x| bumps.iter().map(|&(c, w, a)| gridfield::gaussian(c, w, a)(x)).sum())
}

fn grid_suite(c: &SelftestConfig, out: &mut Vec<Check>) {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x9e37);
    let grid = PeriodicGrid::new(128, 20.0).expect("valid grid");
    let (mut planch, mut det) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let a = random_bumps(grid, &mut rng);
        let b = random_bumps(grid, &mut rng);
        planch = planch.max((a.fft().l2_norm() / a.l2_norm() - 1.0).abs());
        let u = VectorField2 {
            grid,
            comps: [a.values, b.values],
        };
        let g = gridfield::grad(&u);
        let n2 = g.l2_norm().powi(2);
        det = det.max(gridfield::det_integral(&g).map_or(f64::INFINITY, |d| d.abs() / n2));
    }
    // dilated bumps must stay resolved, hence the finer grid
    let fine = PeriodicGrid::new(512, 20.0).expect("valid grid");
    let u = VectorField2 {
        grid: fine,
        comps: [random_bumps(fine, &mut rng).values, random_bumps(fine, &mut rng).values],
    };
    let g = gridfield::grad(&u);
    let mut scale = 0.0_f64;
    for k in [2, 4] {
        match gridfield::scaling_sequence(&u, k) {
            Ok(uk) => {
                let gk = gridfield::grad(&uk);
                scale = scale.max((gk.l2_norm() / g.l2_norm() - 1.0).abs());
                scale = scale.max((gk.sym().l2_norm() / g.sym().l2_norm() - 1.0).abs());
            }
            Err(_) => scale = f64::INFINITY,
        }
    }
    out.push(Check::at_most("plancherel", planch, 1e-12));
    out.push(Check::at_most("det_integral_vanishes", det, 1e-8));
    out.push(Check::at_most("scaling_invariance", scale, 1e-12));

    let alpha = AlphaProfile::default().sample(grid);
    let (iso, ratio) = match rigidity::synthesize_extremal(&alpha, Rotation::new(1.0)) {
        Ok(e) => ((e.report.g_norm / e.report.f_norm - 1.0).abs(), (e.report.ratio - 1.0).abs()),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };
    out.push(Check::at_most("g_solve_isometry", iso, 1e-10));
    out.push(Check::at_most("extremal_ratio", ratio, 1e-3));
}

fn fem_suite(_c: &SelftestConfig, out: &mut Vec<Check>) {
    let mut worst = 0.0_f64;
    for dom in [
        BuiltinDomain::Square,
        BuiltinDomain::unit_disk(),
        BuiltinDomain::Annulus { inner: 0.5, outer: 1.0 },
    ] {
        let mesh = dom.mesh(2).expect("builtin mesh");
        let f = kornfem::assemble(&mesh, BoundaryCondition::Dirichlet);
        worst = worst.max(kornfem::null_lagrangian_defect(&f) / kornfem::max_abs(&f.a));
    }
    out.push(Check::at_most("null_lagrangian_matrices", worst, 1e-13));

    let sweep = kornfem::korn_sweep(&BuiltinDomain::Square, 1, 4, BoundaryCondition::Tangential, &KornOptions::default());
    let (mono, top) = match &sweep {
        Ok(s) => (
            s.kappa_sq.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max),
            s.kappa_sq.iter().copied().fold(0.0, f64::max),
        ),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };
    out.push(Check::at_most("square_sweep_monotone", mono, 1e-9));
    out.push(Check::at_most("square_kappa_le_two", top - 2.0, 1e-9));

    let rigid = ShellSpec {
        profile: FourierProfile::constant(0.2),
        ..ShellSpec::default()
    };
    let field = shells::shell_field(&rigid);
    let quad = shells::shell_quadrature(&rigid);
    let (mut sym, mut full) = (0.0, 0.0);
    for q in &quad {
        let s = field.eval_unchecked(q.x);
        sym += q.weight * s.grad.sym().norm_sq();
        full += q.weight * s.grad.norm_sq();
    }
    out.push(Check::at_most("constant_shell_is_rigid", (sym / full).sqrt(), 1e-12));
}

pub fn run_selftest(c: &SelftestConfig) -> Vec<Check> {
    let mut out = Vec::new();
    matrix_suite(c, &mut out);
    grid_suite(c, &mut out);
    fem_suite(c, &mut out);
    out
}
