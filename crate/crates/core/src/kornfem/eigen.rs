//! Largest eigenpairs of the pencil `Ã u = λ B u`.
//!
//! Krylov-accelerated power iteration: Lanczos on `B⁻¹Ã` in the `B` inner
//! product. `B` solves go through a sparse Cholesky factor (reverse
//! Cuthill-McKee ordered) or Jacobi-preconditioned CG. Small problems go to a
//! dense Cholesky-reduced symmetric eigensolve.

use std::collections::VecDeque;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use super::forms::spmv;
use super::KornError;
use crate::compensated_sum;

/// `Ã = A − s qqᵀ`, optionally `B + σ ẑẑᵀ` for a known null vector `z` of both.
pub struct Pencil<'a> {
    pub a: &'a CsrMatrix<f64>,
    pub b: &'a CsrMatrix<f64>,
    pub low_rank: Option<(&'a [f64], f64)>,
    pub null: Option<Vec<f64>>,
    sigma: f64,
    diag: Vec<f64>,
    factor: OnceLock<Option<BFactor>>,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl<'a> Pencil<'a> {
    pub fn new(
        a: &'a CsrMatrix<f64>,
        b: &'a CsrMatrix<f64>,
        low_rank: Option<(&'a [f64], f64)>,
        null: Option<Vec<f64>>,
    ) -> Self {
        let n = b.nrows();
        let mut diag = vec![0.0; n];
        for (r, c, v) in b.triplet_iter() {
            if r == c {
                diag[r] += *v;
            }
        }
        let sigma = diag.iter().sum::<f64>() / n.max(1) as f64;
        let null = null.map(|z| {
            let nz = dot(&z, &z).sqrt();
            z.into_iter().map(|v| v / nz).collect::<Vec<f64>>()
        });
        if let Some(z) = &null {
            for (d, zi) in diag.iter_mut().zip(z) {
                *d += sigma * zi * zi;
            }
        }
        Pencil {
            a,
            b,
            low_rank,
            null,
            sigma,
            diag,
            factor: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn apply_a(&self, x: &[f64], y: &mut [f64]) {
        spmv(self.a, x, y);
        if let Some((q, s)) = self.low_rank {
            axpy(-s * dot(q, x), q, y);
        }
    }

    pub fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        spmv(self.b, x, y);
        if let Some(z) = &self.null {
            axpy(self.sigma * dot(z, x), z, y);
        }
    }

    fn factor(&self) -> Option<&BFactor> {
        self.factor.get_or_init(|| BFactor::new(self)).as_ref()
    }

    fn dense(&self, apply: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            apply(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        (&m + m.transpose()) * 0.5
    }
}

/// Reverse Cuthill-McKee ordering of a symmetric sparsity pattern, started
/// from a minimum-degree vertex of each component.
pub fn rcm_order(m: &CsrMatrix<f64>) -> Vec<usize> {
    let n = m.nrows();
    let adj = |i: usize| m.row(i).col_indices().to_vec();
    let degree: Vec<usize> = (0..n).map(|i| m.row(i).nnz()).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| degree[i]);
    for &root in &by_degree {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj(v).into_iter().filter(|&w| !seen[w]).collect();
            next.sort_by_key(|&w| degree[w]);
            for w in next {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `B + σẑẑᵀ` solved as `K + U C Uᵀ` with `K = B + σẑ_j² e_j e_jᵀ` sparse
/// and SPD, `U = [ẑ, e_j]`, `C = diag(σ, −σẑ_j²)` (Woodbury).
struct BFactor {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    chol: CscCholesky<f64>,
    woodbury: Option<Woodbury>,
}

struct Woodbury {
    z: Vec<f64>,
    j: usize,
    kinv_z: Vec<f64>,
    kinv_e: Vec<f64>,
    s_inv: Matrix2<f64>,
}

impl BFactor {
    fn new(p: &Pencil) -> Option<BFactor> {
        let n = p.dim();
        let perm = rcm_order(p.b);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let pin = p.null.as_ref().map(|z| {
            let j = (0..n).max_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs())).unwrap_or(0);
            (j, p.sigma * z[j] * z[j])
        });
        let mut coo = CooMatrix::new(n, n);
        for (r, c, v) in p.b.triplet_iter() {
            coo.push(inv[r], inv[c], *v);
        }
        if let Some((j, d)) = pin {
            coo.push(inv[j], inv[j], d);
        }
        let chol = CscCholesky::factor(&CscMatrix::from(&coo)).ok()?;
        let mut f = BFactor {
            perm,
            chol,
            woodbury: None,
        };
        if let (Some(z), Some((j, d))) = (&p.null, pin) {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let kinv_z = f.solve_k(z);
            let kinv_e = f.solve_k(&e);
            let s = Matrix2::new(
                1.0 / p.sigma + dot(z, &kinv_z),
                dot(z, &kinv_e),
                kinv_z[j],
                kinv_e[j] - 1.0 / d,
            );
            f.woodbury = Some(Woodbury {
                z: z.clone(),
                j,
                kinv_z,
                kinv_e,
                s_inv: s.try_inverse()?,
            });
        }
        Some(f)
    }

    fn solve_k(&self, r: &[f64]) -> Vec<f64> {
        let mut y = DVector::from_iterator(r.len(), self.perm.iter().map(|&o| r[o]));
        self.chol.solve_mut(&mut y);
        let mut x = vec![0.0; r.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let mut x = self.solve_k(r);
        if let Some(w) = &self.woodbury {
            let t = w.s_inv * Vector2::new(dot(&w.z, &x), x[w.j]);
            axpy(-t[0], &w.kinv_z, &mut x);
            axpy(-t[1], &w.kinv_e, &mut x);
        }
        x
    }
}

/// Solves `B x = r` with the sparse factor plus iterative refinement; falls
/// back to CG when `B` cannot be factored.
pub fn b_solve(p: &Pencil, rhs: &[f64], x: &mut [f64], s: CgSettings) -> Result<usize, KornError> {
    let Some(f) = p.factor() else {
        return cg_solve(p, rhs, x, s);
    };
    let rnorm = dot(rhs, rhs).sqrt();
    x.copy_from_slice(&f.solve(rhs));
    let mut bx = vec![0.0; rhs.len()];
    for it in 0..3 {
        p.apply_b(x, &mut bx);
        let r: Vec<f64> = rhs.iter().zip(&bx).map(|(a, b)| a - b).collect();
        if dot(&r, &r).sqrt() <= s.rel_tol * rnorm {
            return Ok(it);
        }
        axpy(1.0, &f.solve(&r), x);
    }
    Ok(3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        CgSettings {
            rel_tol: 1e-13,
            max_iter: 20_000,
        }
    }
}

/// Solves `B x = r` by preconditioned conjugate gradients, warm-started at `x`.
pub fn cg_solve(p: &Pencil, rhs: &[f64], x: &mut [f64], s: CgSettings) -> Result<usize, KornError> {
    let n = rhs.len();
    let rnorm = dot(rhs, rhs).sqrt();
    if rnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut bx = vec![0.0; n];
    p.apply_b(x, &mut bx);
    let mut r: Vec<f64> = rhs.iter().zip(&bx).map(|(a, b)| a - b).collect();
    let mut z: Vec<f64> = r.iter().zip(&p.diag).map(|(a, d)| a / d).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut bd = vec![0.0; n];
    for it in 0..s.max_iter {
        let res = dot(&r, &r).sqrt();
        if res <= s.rel_tol * rnorm {
            return Ok(it);
        }
        p.apply_b(&d, &mut bd);
        let curv = dot(&d, &bd);
        if !(curv > 0.0) {
            return Err(KornError::SingularB {
                detail: format!("non-positive curvature {curv:e} in CG step {it}"),
            });
        }
        let alpha = rz / curv;
        axpy(alpha, &d, x);
        axpy(-alpha, &bd, &mut r);
        for i in 0..n {
            z[i] = r[i] / p.diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }
    let res = dot(&r, &r).sqrt() / rnorm;
    Err(KornError::CgNotConverged {
        iterations: s.max_iter,
        residual: res,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosSettings {
    /// Stop when the top Ritz value changes by less than this.
    pub tol: f64,
    /// Ritz residual `‖B⁻¹Ãx − ρx‖_B`, relative to `max(|ρ|, 1)`, required as well.
    pub res_tol: f64,
    /// Steps before convergence is tested.
    pub min_iter: usize,
    pub max_iter: usize,
    /// Basis size before an explicit restart from the current Ritz vector.
    pub basis: usize,
    pub cg: CgSettings,
}

impl Default for LanczosSettings {
    fn default() -> Self {
        LanczosSettings {
            tol: 1e-10,
            res_tol: 1e-7,
            min_iter: 10,
            max_iter: 3000,
            basis: 400,
            cg: CgSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    /// `B`-normalized.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// B-orthogonalizes `w` against `basis` (with `B`-images `bbasis`), twice.
fn b_orthogonalize(w: &mut [f64], basis: &[Vec<f64>], bbasis: &[Vec<f64>]) {
    for _ in 0..2 {
        for (v, bv) in basis.iter().zip(bbasis) {
            let c = dot(bv, w);
            axpy(-c, v, w);
        }
    }
}

/// Top eigenpair of `(Ã, B)` in the `B`-orthogonal complement of `locked`.
pub fn lanczos_top(
    p: &Pencil,
    start: &[f64],
    locked: &[Vec<f64>],
    s: &LanczosSettings,
) -> Result<Eigenpair, KornError> {
    let n = p.dim();
    // B-normalized copies of the locked vectors and their B-images
    let (locked, blocked): (Vec<Vec<f64>>, Vec<Vec<f64>>) = locked
        .iter()
        .map(|v| {
            let mut bv = vec![0.0; n];
            p.apply_b(v, &mut bv);
            let nb = dot(v, &bv).sqrt();
            (v.iter().map(|x| x / nb).collect(), bv.iter().map(|x| x / nb).collect())
        })
        .unzip();
    let mut x = start.to_vec();
    let mut total = 0usize;
    let mut rho_prev = f64::NEG_INFINITY;
    let mut tmp = vec![0.0; n];
    loop {
        b_orthogonalize(&mut x, &locked, &blocked);
        p.apply_b(&x, &mut tmp);
        let bnorm = dot(&x, &tmp).sqrt();
        if !(bnorm > 0.0) || !bnorm.is_finite() {
            return Err(KornError::SingularB {
                detail: "start vector has no B-energy".into(),
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![x.iter().map(|v| v / bnorm).collect()];
        let mut bbasis: Vec<Vec<f64>> = vec![tmp.iter().map(|v| v / bnorm).collect()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];
        let mut aw = vec![0.0; n];
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut converged = false;
        while basis.len() <= s.basis && total < s.max_iter {
            total += 1;
            let j = basis.len() - 1;
            p.apply_a(&basis[j], &mut aw);
            alphas.push(dot(&basis[j], &aw));
            // warm start from the three-term recurrence prediction
            w.iter_mut().for_each(|v| *v = 0.0);
            axpy(alphas[j], &basis[j], &mut w);
            if j > 0 {
                axpy(betas[j - 1], &basis[j - 1], &mut w);
            }
            b_solve(p, &aw, &mut w, s.cg)?;
            b_orthogonalize(&mut w, &basis, &bbasis);
            b_orthogonalize(&mut w, &locked, &blocked);
            p.apply_b(&w, &mut tmp);
            let beta = dot(&w, &tmp).max(0.0).sqrt();

            let m = alphas.len();
            let scale = alphas.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            let last = beta <= 1e-14 * scale || m + 1 > s.basis || total >= s.max_iter;
            // the dense tridiagonal solve is O(m³); look at it every few steps
            if m < 16 || m % 8 == 0 || last {
                let mut t = DMatrix::zeros(m, m);
                for i in 0..m {
                    t[(i, i)] = alphas[i];
                    if i + 1 < m {
                        t[(i, i + 1)] = betas[i];
                        t[(i + 1, i)] = betas[i];
                    }
                }
                let eig = SymmetricEigen::new(t);
                let k = eig.eigenvalues.imax();
                let rho = eig.eigenvalues[k];
                best = Some((rho, eig.eigenvectors.column(k).into_owned()));
                let scale = rho.abs().max(1.0);
                // ‖B⁻¹Ãx − ρx‖_B of the Ritz pair
                let ritz_res = beta * eig.eigenvectors[(m - 1, k)].abs();
                if m >= s.min_iter.min(p.dim()) && (rho - rho_prev).abs() < s.tol && ritz_res <= s.res_tol * scale {
                    converged = true;
                }
                rho_prev = rho;
                if beta <= 1e-14 * scale {
                    converged = true;
                }
                if converged || last {
                    break;
                }
            }
            betas.push(beta);
            basis.push(w.iter().map(|v| v / beta).collect());
            bbasis.push(tmp.iter().map(|v| v / beta).collect());
        }
        let (rho, y) = best.expect("at least one Lanczos step");
        x = vec![0.0; n];
        for (i, v) in basis.iter().take(y.len()).enumerate() {
            axpy(y[i], v, &mut x);
        }
        if converged || total >= s.max_iter {
            p.apply_b(&x, &mut tmp);
            let nb = dot(&x, &tmp).sqrt();
            x.iter_mut().for_each(|v| *v /= nb);
            return Ok(Eigenpair {
                value: rho,
                vector: x,
                iterations: total,
                converged,
            });
        }
    }
}

/// All eigenpairs by dense reduction, sorted by decreasing eigenvalue.
pub fn dense_eigenpairs(p: &Pencil) -> Result<Vec<Eigenpair>, KornError> {
    let a = p.dense(|x, y| p.apply_a(x, y));
    let b = p.dense(|x, y| p.apply_b(x, y));
    let chol = nalgebra::Cholesky::new(b).ok_or_else(|| KornError::SingularB {
        detail: "dense Cholesky of B failed".into(),
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(p.dim(), p.dim()))
        .ok_or_else(|| KornError::SingularB {
            detail: "triangular solve failed".into(),
        })?;
    let m = &linv * a * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..p.dim()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    Ok(order
        .into_iter()
        .map(|k| {
            let y = eig.eigenvectors.column(k);
            let x = linv.transpose() * y;
            Eigenpair {
                value: eig.eigenvalues[k],
                vector: x.iter().copied().collect(),
                iterations: 0,
                converged: true,
            }
        })
        .collect())
}

/// `‖Ãx − ρBx‖ / ‖Ãx‖`.
pub fn residual(p: &Pencil, x: &[f64], rho: f64) -> f64 {
    let n = x.len();
    let (mut ax, mut bx) = (vec![0.0; n], vec![0.0; n]);
    p.apply_a(x, &mut ax);
    p.apply_b(x, &mut bx);
    let num = compensated_sum(ax.iter().zip(&bx).map(|(a, b)| (a - rho * b).powi(2))).sqrt();
    let den = dot(&ax, &ax).sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

pub fn rayleigh(p: &Pencil, x: &[f64]) -> f64 {
    let n = x.len();
    let (mut ax, mut bx) = (vec![0.0; n], vec![0.0; n]);
    p.apply_a(x, &mut ax);
    p.apply_b(x, &mut bx);
    compensated_sum(x.iter().zip(&ax).map(|(a, b)| a * b)) / compensated_sum(x.iter().zip(&bx).map(|(a, b)| a * b))
}
