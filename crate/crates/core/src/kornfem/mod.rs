//! Finite-element estimates of the optimal Korn constant
//!
//! ```text
//! κ(Ω)² = sup_u  min_{A ∈ L_Ω} ‖∇u − A‖² / ‖D(u)‖²
//! ```
//!
//! over P1 fields with `u · n = 0` (or `u = 0`) on `∂Ω`. The discrete
//! supremum is the top eigenvalue of the pencil `(Ã, B)`, a lower bound for
//! `κ(Ω)²` that increases under nested refinement.

mod domains;
mod eigen;
mod forms;
mod mesh;
mod quadrature;
mod symmetry;

pub use domains::{polar_mesh, BuiltinDomain};
pub use eigen::{b_solve, cg_solve, dense_eigenpairs, rcm_order, lanczos_top, CgSettings, Eigenpair, LanczosSettings, Pencil};
pub use forms::{
    assemble, assemble_with, constraints_for, dirichlet_constraints, element, free_constraints, max_abs,
    null_lagrangian_defect, quad_form, spmv, tangential_constraints, AssembledForms, BoundaryCondition,
    ConstraintSet, DofMap, P1Element, VertexConstraint, CORNER_ANGLE,
};
pub use mesh::{BoundaryEdge, MeshError, MeshFile, Prolongation, TriMesh};
pub use quadrature::{
    boundary_samples, divfree_bump, evaluate_field_ratio, field_ratio, mesh_quadrature, BoundaryPoint,
    FieldRatio, FieldSample, QuadPoint, RIGID_REL_TOL,
};
pub use symmetry::{detect_l_omega, detect_l_omega_with, LOmegaInfo, LOmegaKind, SYMMETRY_TOL};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KornError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("constrained space is empty (every vertex pinned)")]
    EmptySpace,
    #[error("B is singular on the constrained space: {detail}")]
    SingularB { detail: String },
    #[error("rotation about the detected center is not a null vector of B (relative energy {energy:e})")]
    DeflationMismatch { energy: f64 },
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("D(u) vanishes: the Korn quotient is infinite (rigid motion)")]
    InfiniteQuotient,
}

pub type Result<T> = std::result::Result<T, KornError>;

/// Problems with fewer dofs go to the dense solver under [`EigenMethod::Auto`].
pub const DENSE_THRESHOLD: usize = 200;
/// Eigenvalues within this distance of the top one count as one cluster.
pub const CLUSTER_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KornOptions {
    pub method: EigenMethod,
    pub lanczos: LanczosSettings,
    pub cluster_width: f64,
    /// Eigenpairs computed beyond the first (for the cluster dimension).
    pub extra_pairs: usize,
    pub seed: u64,
    /// Warm start in reduced dofs; a div-free bump is used otherwise.
    pub start: Option<Vec<f64>>,
    /// Apply the `L_Ω` deflation when a rotational symmetry is detected.
    pub deflate: bool,
}

impl Default for KornOptions {
    fn default() -> Self {
        KornOptions {
            method: EigenMethod::Auto,
            lanczos: LanczosSettings::default(),
            cluster_width: CLUSTER_WIDTH,
            extra_pairs: 2,
            seed: 0x5eed,
            start: None,
            deflate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KornEstimate {
    /// Largest discrete Rayleigh quotient, a lower bound for `κ(Ω)²`.
    pub kappa_sq: f64,
    pub maximizer: Vec<f64>,
    /// `B`-orthonormal basis of the top cluster; `maximizer` is its first element.
    #[serde(skip)]
    pub eigenspace: Vec<Vec<f64>>,
    pub eig_residual: f64,
    pub top_eigenspace_dim: usize,
    /// Further computed eigenvalues, decreasing.
    pub next_eigenvalues: Vec<f64>,
    pub dof_count: usize,
    pub iterations: usize,
    pub converged: bool,
    pub method: EigenMethod,
    pub bc: BoundaryCondition,
    pub l_omega: LOmegaInfo,
    pub deflated: bool,
    /// Share of `‖∇u‖²` of the maximizer on triangles touching the boundary.
    pub boundary_energy_fraction: f64,
    pub mesh_size: f64,
}

fn rotation_field(mesh: &TriMesh, dofs: &DofMap, c: [f64; 2]) -> (Vec<f64>, f64) {
    let nodal: Vec<[f64; 2]> = mesh.vertices().iter().map(|x| [-(x[1] - c[1]), x[0] - c[0]]).collect();
    let z = dofs.restrict(&nodal);
    let back = dofs.expand(&z);
    let miss = nodal
        .iter()
        .zip(&back)
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .fold(0.0, f64::max);
    let size = nodal.iter().map(|a| a[0].hypot(a[1])).fold(0.0, f64::max);
    (z, miss / size.max(f64::MIN_POSITIVE))
}

/// Interior vertex farthest from the boundary and its distance to it.
fn deepest_point(mesh: &TriMesh) -> ([f64; 2], f64) {
    let on_bdry = mesh.is_boundary_vertex();
    let bpts: Vec<[f64; 2]> = mesh
        .vertices()
        .iter()
        .zip(&on_bdry)
        .filter(|(_, b)| **b)
        .map(|(x, _)| *x)
        .collect();
    let mut best = (mesh.vertices()[0], 0.0);
    for (x, b) in mesh.vertices().iter().zip(&on_bdry) {
        if *b {
            continue;
        }
        let d = bpts.iter().map(|p| (p[0] - x[0]).hypot(p[1] - x[1])).fold(f64::INFINITY, f64::min);
        if d > best.1 {
            best = (*x, d);
        }
    }
    best
}

/// Div-free bump interpolant plus a seeded random perturbation.
pub fn seed_vector(mesh: &TriMesh, dofs: &DofMap, seed: u64) -> Vec<f64> {
    let (c, d) = deepest_point(mesh);
    let bump = divfree_bump(c, 0.9 * d);
    let nodal: Vec<[f64; 2]> = mesh.vertices().iter().map(|&x| bump(x).u).collect();
    let mut v = dofs.restrict(&nodal);
    perturb(&mut v, seed);
    v
}

fn perturb(v: &mut [f64], seed: u64) {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let scale = if max > 0.0 { 0.1 * max } else { 1.0 };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for x in v.iter_mut() {
        *x += scale * rng.random_range(-1.0..1.0);
    }
}

fn boundary_energy_fraction(mesh: &TriMesh, dofs: &DofMap, x: &[f64]) -> f64 {
    let u = dofs.expand(x);
    let on_bdry = mesh.is_boundary_vertex();
    let (mut near, mut total) = (Vec::new(), Vec::new());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let el = element(mesh, t);
        let mut g = [[0.0; 2]; 2];
        for (a, &v) in tri.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    g[i][j] += u[v][i] * el.grads[a][j];
                }
            }
        }
        let e = el.area * (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2));
        total.push(e);
        near.push(if tri.iter().any(|&v| on_bdry[v]) { e } else { 0.0 });
    }
    let t = crate::compensated_sum(total);
    if t > 0.0 {
        crate::compensated_sum(near) / t
    } else {
        0.0
    }
}

pub fn korn_constant(mesh: &TriMesh, bc: BoundaryCondition) -> Result<KornEstimate> {
    korn_constant_with(mesh, bc, &KornOptions::default())
}

pub fn korn_constant_with(mesh: &TriMesh, bc: BoundaryCondition, opts: &KornOptions) -> Result<KornEstimate> {
    let forms = assemble(mesh, bc);
    let n = forms.dofs.len();
    if n == 0 {
        return Err(KornError::EmptySpace);
    }
    let l_omega = detect_l_omega(mesh);
    let area = mesh.area();

    let mut deflated = false;
    let mut null = None;
    let mut low_rank = None;
    if bc == BoundaryCondition::Tangential {
        match (l_omega.center(), opts.deflate) {
            (Some(c), true) => {
                let (z, _) = rotation_field(mesh, &forms.dofs, c);
                let (za, zb) = (quad_form(&forms.a, &z), quad_form(&forms.b, &z));
                if zb > 1e-10 * za {
                    return Err(KornError::DeflationMismatch { energy: zb / za });
                }
                null = Some(z);
                low_rank = Some((forms.curl.as_slice(), 0.5 / area));
                deflated = true;
            }
            _ => {
                // a rotation that is admissible but undeflated makes B singular
                let c = l_omega.fitted_center;
                if c[0].is_finite() && c[1].is_finite() {
                    let (z, miss) = rotation_field(mesh, &forms.dofs, c);
                    let (za, zb) = (quad_form(&forms.a, &z), quad_form(&forms.b, &z));
                    if miss < 1e-8 && za > 0.0 && zb <= 1e-12 * za {
                        return Err(KornError::SingularB {
                            detail: format!(
                                "rotation about ({:.6}, {:.6}) is admissible and strain free; undeflated rigid mode",
                                c[0], c[1]
                            ),
                        });
                    }
                }
            }
        }
    }
    let pencil = Pencil::new(&forms.a, &forms.b, low_rank, null);
    let use_dense = match opts.method {
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
        EigenMethod::Auto => n < DENSE_THRESHOLD,
    };

    let (pairs, method) = if use_dense {
        (dense_eigenpairs(&pencil)?, EigenMethod::Dense)
    } else {
        let start = match &opts.start {
            Some(s) if s.len() == n => {
                let mut s = s.clone();
                perturb(&mut s, opts.seed);
                s
            }
            _ => seed_vector(mesh, &forms.dofs, opts.seed),
        };
        let mut pairs: Vec<Eigenpair> = Vec::new();
        let mut locked: Vec<Vec<f64>> = Vec::new();
        if let Some(z) = &pencil.null {
            locked.push(z.clone());
        }
        let first = lanczos_top(&pencil, &start, &locked, &opts.lanczos)?;
        locked.push(first.vector.clone());
        pairs.push(first);
        for k in 0..opts.extra_pairs.min(n.saturating_sub(1)) {
            // the third pair only matters inside a cluster
            if k > 0 && pairs[0].value - pairs[k].value > opts.cluster_width {
                break;
            }
            let mut s = seed_vector(mesh, &forms.dofs, opts.seed.wrapping_add(k as u64 + 1));
            perturb(&mut s, opts.seed.wrapping_add(1000 + k as u64));
            let next = lanczos_top(&pencil, &s, &locked, &opts.lanczos)?;
            locked.push(next.vector.clone());
            pairs.push(next);
        }
        (pairs, EigenMethod::Lanczos)
    };

    let top = &pairs[0];
    let kappa_sq = top.value;
    let cluster: Vec<&Eigenpair> = pairs
        .iter()
        .take_while(|p| kappa_sq - p.value <= opts.cluster_width)
        .collect();
    let iterations = pairs.iter().map(|p| p.iterations).sum();
    let converged = pairs.iter().all(|p| p.converged);
    let next_eigenvalues = pairs.iter().skip(1).take(opts.extra_pairs).map(|p| p.value).collect();
    Ok(KornEstimate {
        kappa_sq,
        maximizer: top.vector.clone(),
        eigenspace: cluster.iter().map(|p| p.vector.clone()).collect(),
        eig_residual: eigen::residual(&pencil, &top.vector, kappa_sq),
        top_eigenspace_dim: cluster.len(),
        next_eigenvalues,
        dof_count: n,
        iterations,
        converged,
        method,
        bc,
        l_omega,
        deflated,
        boundary_energy_fraction: boundary_energy_fraction(mesh, &forms.dofs, &top.vector),
        mesh_size: mesh.mesh_size(),
    })
}

/// Rayleigh quotient of an arbitrary reduced vector for the same pencil.
pub fn rayleigh_quotient(mesh: &TriMesh, bc: BoundaryCondition, estimate: &KornEstimate, x: &[f64]) -> f64 {
    let forms = assemble(mesh, bc);
    let area = mesh.area();
    let low_rank = estimate.deflated.then(|| (forms.curl.as_slice(), 0.5 / area));
    let pencil = Pencil::new(&forms.a, &forms.b, low_rank, None);
    eigen::rayleigh(&pencil, x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepLevel {
    pub level: usize,
    pub vertices: usize,
    pub triangles: usize,
    pub estimate: KornEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KornSweep {
    pub domain: BuiltinDomain,
    pub bc: BoundaryCondition,
    pub levels: Vec<SweepLevel>,
    /// `kappa_sq` never decreases by more than the eigensolver tolerance.
    pub monotone: bool,
    pub kappa_sq: Vec<f64>,
}

/// Estimates on levels `first..=last`, each warm-started from the prolonged
/// maximizer of the previous one when the meshes are nested.
pub fn korn_sweep(
    domain: &BuiltinDomain,
    first: usize,
    last: usize,
    bc: BoundaryCondition,
    opts: &KornOptions,
) -> Result<KornSweep> {
    let hierarchy = domain.hierarchy(last)?;
    let mut levels: Vec<SweepLevel> = Vec::new();
    let mut prev: Option<(DofMap, Vec<f64>)> = None;
    for (level, (mesh, prolong)) in hierarchy.iter().enumerate() {
        let dofs = DofMap::new(&constraints_for(mesh, bc));
        let mut o = opts.clone();
        if let (Some((pd, x)), Some(p)) = (&prev, prolong) {
            o.start = Some(dofs.restrict(&p.apply(&pd.expand(x))));
        }
        if level < first {
            prev = None;
            continue;
        }
        let est = korn_constant_with(mesh, bc, &o)?;
        prev = Some((dofs, est.maximizer.clone()));
        levels.push(SweepLevel {
            level,
            vertices: mesh.vertex_count(),
            triangles: mesh.triangles().len(),
            estimate: est,
        });
    }
    let kappa_sq: Vec<f64> = levels.iter().map(|l| l.estimate.kappa_sq).collect();
    let slack = 10.0 * opts.lanczos.tol;
    let monotone = kappa_sq.windows(2).all(|w| w[1] >= w[0] - slack);
    Ok(KornSweep {
        domain: domain.clone(),
        bc,
        levels,
        monotone,
        kappa_sq,
    })
}
