//! Spectral calculus on a periodic `n × n` grid.
//!
//! The torus `[−L/2, L/2)²` stands in for ℝ²: fields that are negligible near
//! the box boundary behave like compactly supported fields on the plane.
//! Samples are stored row-major with the first index running along `x₁`, so
//! `values[i1 * n + i2]` sits at `(x₁, x₂) = (−L/2 + i1 Δ, −L/2 + i2 Δ)`.
//!
//! Gradients use the convention `(∇u)_ij = ∂_j u^i`; the rows of a gradient
//! field are the gradients of the components.

pub mod fft;
pub mod io;

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::mat2kit::Mat2;
use crate::summation::compensated_sum;

/// Width of the boundary margin, as a fraction of `L`, used for support checks.
pub const MARGIN_FRACTION: f64 = 1.0 / 8.0;
/// Relative L² mass allowed inside the margin for a field to count as
/// compactly supported.
pub const SUPPORT_TOL: f64 = 1e-10;
/// Default relative curl tolerance for gradient fields.
pub const CURL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field has {found} samples per component, expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("field contains non-finite samples")]
    NonFinite,
    #[error("curl residual {residual:.3e} exceeds tolerance {tol:.3e}: matrix field is not a gradient")]
    CurlResidualTooLarge { residual: f64, tol: f64 },
    #[error("dilation factor must be a positive integer")]
    BadDilation,
    #[error("field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GridError>;

/// Square periodic grid of side `length` with `n` samples per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    n: usize,
    length: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(GridError::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 4"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(GridError::InvalidGrid(format!("box length {length} must be positive")));
        }
        Ok(Self { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.spacing()
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        [self.coord(idx / self.n), self.coord(idx % self.n)]
    }

    /// Signed integer frequency of FFT bin `k`, in `−n/2 .. n/2`.
    pub fn signed_index(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k >= n / 2 {
            k - n
        } else {
            k
        }
    }

    pub fn is_nyquist(&self, k: usize) -> bool {
        k == self.n / 2
    }

    /// Angular frequency `2πk/L` of bin `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        TAU * self.signed_index(k) as f64 / self.length
    }

    /// Frequency used by spectral derivatives: zero on the unpaired Nyquist bin.
    pub fn derivative_frequency(&self, k: usize) -> f64 {
        if self.is_nyquist(k) {
            0.0
        } else {
            self.frequency(k)
        }
    }

    /// Derivative wavevector at spectral index `idx`.
    pub fn derivative_wavevector(&self, idx: usize) -> [f64; 2] {
        [
            self.derivative_frequency(idx / self.n),
            self.derivative_frequency(idx % self.n),
        ]
    }

    /// True when `idx` lies within the boundary margin of width `L/8`.
    pub fn in_margin(&self, idx: usize) -> bool {
        let m = MARGIN_FRACTION * self.length;
        let half = 0.5 * self.length;
        let [x1, x2] = self.point(idx);
        x1.abs().max(x2.abs()) > half - m
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(GridError::BadLength {
                expected: self.len(),
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(())
    }
}

/// Real scalar samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: PeriodicGrid,
    pub values: Vec<f64>,
}

/// Two-component vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    pub grid: PeriodicGrid,
    pub comps: [Vec<f64>; 2],
}

/// 2×2 matrix field, components ordered `m11, m12, m21, m22`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField2 {
    pub grid: PeriodicGrid,
    pub comps: [Vec<f64>; 4],
}

/// Fourier coefficients of a scalar field, same indexing as the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: PeriodicGrid,
    pub coeffs: Vec<Complex64>,
}

impl ScalarField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 2]) -> f64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        Self {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) / self.grid.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.grid, &[&self.values])
    }

    pub fn fft(&self) -> Spectrum {
        Spectrum {
            grid: self.grid,
            coeffs: forward_real(&self.values, self.grid.n),
        }
    }
}

impl VectorField2 {
    pub fn new(grid: PeriodicGrid, c1: Vec<f64>, c2: Vec<f64>) -> Result<Self> {
        grid.check_len(&c1)?;
        grid.check_len(&c2)?;
        Ok(Self { grid, comps: [c1, c2] })
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            comps: [vec![0.0; grid.len()], vec![0.0; grid.len()]],
        }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 2]) -> [f64; 2] + Sync) -> Self {
        let vals: Vec<[f64; 2]> = (0..grid.len()).into_par_iter().map(|i| f(grid.point(i))).collect();
        Self {
            grid,
            comps: [vals.iter().map(|v| v[0]).collect(), vals.iter().map(|v| v[1]).collect()],
        }
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.comps[c].clone(),
        }
    }

    pub fn at(&self, idx: usize) -> [f64; 2] {
        [self.comps[0][idx], self.comps[1][idx]]
    }

    pub fn mean(&self) -> [f64; 2] {
        let n2 = self.grid.len() as f64;
        [
            compensated_sum(self.comps[0].iter().copied()) / n2,
            compensated_sum(self.comps[1].iter().copied()) / n2,
        ]
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.grid, &[&self.comps[0], &self.comps[1]])
    }

    /// `∫ u · v` by grid quadrature.
    pub fn inner(&self, other: &VectorField2) -> f64 {
        let s = compensated_sum(
            (0..self.grid.len())
                .map(|i| self.comps[0][i] * other.comps[0][i] + self.comps[1][i] * other.comps[1][i]),
        );
        s * self.grid.cell_area()
    }

    pub fn add(&self, other: &VectorField2) -> VectorField2 {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VectorField2) -> VectorField2 {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &VectorField2, f: impl Fn(f64, f64) -> f64) -> VectorField2 {
        let c = |k: usize| -> Vec<f64> {
            self.comps[k].iter().zip(&other.comps[k]).map(|(&a, &b)| f(a, b)).collect()
        };
        VectorField2 {
            grid: self.grid,
            comps: [c(0), c(1)],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl MatrixField2 {
    pub fn new(grid: PeriodicGrid, comps: [Vec<f64>; 4]) -> Result<Self> {
        for c in &comps {
            grid.check_len(c)?;
        }
        Ok(Self { grid, comps })
    }

    pub fn constant(grid: PeriodicGrid, m: Mat2) -> Self {
        let a = m.to_array();
        Self {
            grid,
            comps: [0, 1, 2, 3].map(|k| vec![a[k]; grid.len()]),
        }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(usize) -> Mat2 + Sync) -> Self {
        let vals: Vec<[f64; 4]> = (0..grid.len()).into_par_iter().map(|i| f(i).to_array()).collect();
        Self {
            grid,
            comps: [0, 1, 2, 3].map(|k| vals.iter().map(|v| v[k]).collect()),
        }
    }

    pub fn at(&self, idx: usize) -> Mat2 {
        Mat2::new(
            self.comps[0][idx],
            self.comps[1][idx],
            self.comps[2][idx],
            self.comps[3][idx],
        )
    }

    pub fn mean(&self) -> Mat2 {
        let n2 = self.grid.len() as f64;
        Mat2::from_array(self.comps.each_ref().map(|c| compensated_sum(c.iter().copied()) / n2))
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(
            &self.grid,
            &[&self.comps[0], &self.comps[1], &self.comps[2], &self.comps[3]],
        )
    }

    /// `∫ φ(G(x)) dx` for a pointwise scalar function of the matrix.
    pub fn integrate_pointwise(&self, f: impl Fn(Mat2) -> f64 + Sync) -> f64 {
        let vals: Vec<f64> = (0..self.grid.len()).into_par_iter().map(|i| f(self.at(i))).collect();
        compensated_sum(vals) * self.grid.cell_area()
    }

    /// Pointwise map to another matrix field.
    pub fn map(&self, f: impl Fn(Mat2) -> Mat2 + Sync) -> MatrixField2 {
        MatrixField2::from_fn(self.grid, |i| f(self.at(i)))
    }

    /// Symmetric part `(G + Gᵀ)/2` pointwise.
    pub fn sym(&self) -> MatrixField2 {
        self.map(Mat2::sym)
    }

    pub fn row(&self, r: usize) -> VectorField2 {
        VectorField2 {
            grid: self.grid,
            comps: [self.comps[2 * r].clone(), self.comps[2 * r + 1].clone()],
        }
    }
}

impl Spectrum {
    pub fn ifft(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: inverse_real(&self.coeffs, self.grid.n),
        }
    }

    /// `‖·‖₂` matching the field norm: `(L²/n⁴ Σ|c|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let n2 = self.grid.len() as f64;
        let s = compensated_sum(self.coeffs.iter().map(|c| c.norm_sqr()));
        (s * self.grid.cell_area() / n2).sqrt()
    }
}

fn l2_norm(grid: &PeriodicGrid, comps: &[&Vec<f64>]) -> f64 {
    let s = compensated_sum(comps.iter().flat_map(|c| c.iter().map(|v| v * v)));
    (s * grid.cell_area()).sqrt()
}

pub(crate) fn forward_real(values: &[f64], n: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::forward(&mut data, n);
    data
}

pub(crate) fn inverse_real(coeffs: &[Complex64], n: usize) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    fft::inverse(&mut data, n);
    data.into_iter().map(|c| c.re).collect()
}

/// Multiply a spectrum by `i κ_axis` (Nyquist bin zeroed).
fn differentiate_spectrum(grid: &PeriodicGrid, coeffs: &[Complex64], axis: usize) -> Vec<Complex64> {
    coeffs
        .par_iter()
        .enumerate()
        .map(|(idx, &c)| {
            let k = grid.derivative_wavevector(idx)[axis];
            Complex64::new(-k * c.im, k * c.re)
        })
        .collect()
}

/// Spectral partial derivative `∂_axis f` (axis 0 ↔ x₁).
pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    let spec = f.fft();
    let d = differentiate_spectrum(&f.grid, &spec.coeffs, axis);
    ScalarField {
        grid: f.grid,
        values: inverse_real(&d, f.grid.n),
    }
}

/// Both partial derivatives of a scalar field from a single forward transform.
fn partials(grid: &PeriodicGrid, values: &[f64]) -> [Vec<f64>; 2] {
    let spec = forward_real(values, grid.n);
    [0, 1].map(|axis| inverse_real(&differentiate_spectrum(grid, &spec, axis), grid.n))
}

/// `(∇u)_ij = ∂_j u^i`.
pub fn grad(u: &VectorField2) -> MatrixField2 {
    let [d11, d12] = partials(&u.grid, &u.comps[0]);
    let [d21, d22] = partials(&u.grid, &u.comps[1]);
    MatrixField2 {
        grid: u.grid,
        comps: [d11, d12, d21, d22],
    }
}

/// Gradient of a scalar field as a vector field.
pub fn grad_scalar(f: &ScalarField) -> VectorField2 {
    let [d1, d2] = partials(&f.grid, &f.values);
    VectorField2 {
        grid: f.grid,
        comps: [d1, d2],
    }
}

/// `∂₁u¹ + ∂₂u²`.
pub fn div(u: &VectorField2) -> ScalarField {
    let a = partial(&u.component(0), 0);
    let b = partial(&u.component(1), 1);
    ScalarField {
        grid: u.grid,
        values: a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect(),
    }
}

/// `∂₁u² − ∂₂u¹`.
pub fn curl(u: &VectorField2) -> ScalarField {
    let a = partial(&u.component(1), 0);
    let b = partial(&u.component(0), 1);
    ScalarField {
        grid: u.grid,
        values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
    }
}

/// Rotated gradient `∇^⊥ψ = (−∂₂ψ, ∂₁ψ)`, always divergence free.
pub fn perp_grad(psi: &ScalarField) -> VectorField2 {
    let [d1, d2] = partials(&psi.grid, &psi.values);
    VectorField2 {
        grid: psi.grid,
        comps: [d2.iter().map(|v| -v).collect(), d1],
    }
}

/// `∫ f` by the periodic trapezoid rule, `Δ² Σ f`.
pub fn integrate(f: &ScalarField) -> f64 {
    compensated_sum(f.values.iter().copied()) * f.grid.cell_area()
}

/// Componentwise `∫ u`.
pub fn integrate_vector(u: &VectorField2) -> [f64; 2] {
    let a = u.grid.cell_area();
    [
        compensated_sum(u.comps[0].iter().copied()) * a,
        compensated_sum(u.comps[1].iter().copied()) * a,
    ]
}

/// Row-curl diagnostics of a matrix field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurlResidual {
    /// `max_x |∂₁G_i2 − ∂₂G_i1|` over both rows.
    pub max_abs: f64,
    /// `max_abs` divided by the largest first derivative of any entry.
    pub relative: f64,
}

/// Measures how far `G` is from being a gradient.
pub fn curl_residual(g: &MatrixField2) -> CurlResidual {
    let grid = &g.grid;
    let d: Vec<[Vec<f64>; 2]> = g.comps.iter().map(|c| partials(grid, c)).collect();
    let mut max_curl = 0.0_f64;
    let mut max_deriv = 0.0_f64;
    for row in 0..2 {
        let (a, b) = (&d[2 * row], &d[2 * row + 1]);
        for i in 0..grid.len() {
            max_curl = max_curl.max((b[0][i] - a[1][i]).abs());
        }
    }
    for entry in &d {
        for part in entry {
            max_deriv = part.iter().fold(max_deriv, |m, v| m.max(v.abs()));
        }
    }
    let relative = if max_deriv > 0.0 { max_curl / max_deriv } else { 0.0 };
    CurlResidual {
        max_abs: max_curl,
        relative,
    }
}

/// Fails with [`GridError::CurlResidualTooLarge`] if `G` is not a gradient.
pub fn ensure_gradient(g: &MatrixField2, tol: f64) -> Result<CurlResidual> {
    let r = curl_residual(g);
    if r.relative > tol {
        return Err(GridError::CurlResidualTooLarge {
            residual: r.relative,
            tol,
        });
    }
    Ok(r)
}

/// `∫ det G`, after checking that `G` is a gradient.
pub fn det_integral(g: &MatrixField2) -> Result<f64> {
    ensure_gradient(g, CURL_TOL)?;
    Ok(g.integrate_pointwise(Mat2::det))
}

/// Fraction of the L² mass located inside the boundary margin.
pub fn margin_mass_fraction(comps: &[&[f64]], grid: &PeriodicGrid) -> f64 {
    let total = compensated_sum(comps.iter().flat_map(|c| c.iter().map(|v| v * v)));
    if total == 0.0 {
        return 0.0;
    }
    let margin = compensated_sum(
        (0..grid.len())
            .filter(|&i| grid.in_margin(i))
            .flat_map(|i| comps.iter().map(move |c| c[i] * c[i])),
    );
    margin / total
}

/// Support check for the torus surrogate of compact support.
pub fn is_compactly_supported(u: &VectorField2) -> bool {
    margin_mass_fraction(&[&u.comps[0], &u.comps[1]], &u.grid) < SUPPORT_TOL
}

/// Output of [`helmholtz`].
#[derive(Debug, Clone)]
pub struct Helmholtz {
    pub gradient_part: VectorField2,
    pub divfree_part: VectorField2,
    pub mean: [f64; 2],
}

/// Splits `z = ∇φ + ∇^⊥ψ + mean(z)` spectrally.
///
/// Bins whose derivative wavevector vanishes (the zero mode aside) carry no
/// derivative information; their content is assigned to the gradient part.
pub fn helmholtz(z: &VectorField2) -> Helmholtz {
    let grid = z.grid;
    let n = grid.n;
    let s1 = forward_real(&z.comps[0], n);
    let s2 = forward_real(&z.comps[1], n);
    let mut g1 = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut g2 = g1.clone();
    let mut d1 = g1.clone();
    let mut d2 = g1.clone();
    for idx in 1..grid.len() {
        let [k1, k2] = grid.derivative_wavevector(idx);
        let kk = k1 * k1 + k2 * k2;
        if kk == 0.0 {
            g1[idx] = s1[idx];
            g2[idx] = s2[idx];
            continue;
        }
        let proj = (s1[idx] * k1 + s2[idx] * k2) / kk;
        g1[idx] = proj * k1;
        g2[idx] = proj * k2;
        d1[idx] = s1[idx] - g1[idx];
        d2[idx] = s2[idx] - g2[idx];
    }
    Helmholtz {
        gradient_part: VectorField2 {
            grid,
            comps: [inverse_real(&g1, n), inverse_real(&g2, n)],
        },
        divfree_part: VectorField2 {
            grid,
            comps: [inverse_real(&d1, n), inverse_real(&d2, n)],
        },
        mean: z.mean(),
    }
}

/// A periodic displacement together with its affine part.
#[derive(Debug, Clone)]
pub struct Potential {
    /// Mean-zero periodic part.
    pub field: VectorField2,
    /// Constant gradient of the affine part `x ↦ A x`, held off-grid.
    pub affine_gradient: Mat2,
}

/// Integrates a gradient field: returns `u` with `∇u = G − mean(G)`, mean zero.
pub fn potential_from_gradient(g: &MatrixField2) -> Result<Potential> {
    ensure_gradient(g, CURL_TOL)?;
    let grid = g.grid;
    let n = grid.n;
    let spec: Vec<Vec<Complex64>> = g.comps.iter().map(|c| forward_real(c, n)).collect();
    let mut rows = Vec::with_capacity(2);
    for r in 0..2 {
        let (a, b) = (&spec[2 * r], &spec[2 * r + 1]);
        let u_hat: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let [k1, k2] = grid.derivative_wavevector(idx);
                let kk = k1 * k1 + k2 * k2;
                if kk == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                // ∂_j u = i k_j û  ⇒  û = −i (k · Ĝ_row) / |k|²
                let dot = a[idx] * k1 + b[idx] * k2;
                Complex64::new(dot.im, -dot.re) / kk
            })
            .collect();
        rows.push(inverse_real(&u_hat, n));
    }
    let c2 = rows.pop().expect("two rows");
    let c1 = rows.pop().expect("two rows");
    Ok(Potential {
        field: VectorField2 { grid, comps: [c1, c2] },
        affine_gradient: g.mean(),
    })
}

/// `u_k(x) = u(k x)`, the two-dimensional case of `k^{n/2−1} u(k x)`.
///
/// Samples are picked exactly: `k x_i` lands on grid node `k i − (k−1) n/2`.
/// Nodes whose image leaves the box are set to zero, which presumes `u` is
/// compactly supported in the box.
pub fn scaling_sequence(u: &VectorField2, k: usize) -> Result<VectorField2> {
    if k == 0 {
        return Err(GridError::BadDilation);
    }
    let grid = u.grid;
    let n = grid.n as i64;
    let shift = (k as i64 - 1) * n / 2;
    let src = |i: usize| -> Option<usize> {
        let j = k as i64 * i as i64 - shift;
        (0..n).contains(&j).then_some(j as usize)
    };
    let pick = |c: &Vec<f64>| -> Vec<f64> {
        (0..grid.len())
            .map(|idx| {
                let (i1, i2) = (idx / grid.n, idx % grid.n);
                match (src(i1), src(i2)) {
                    (Some(j1), Some(j2)) => c[j1 * grid.n + j2],
                    _ => 0.0,
                }
            })
            .collect()
    };
    Ok(VectorField2 {
        grid,
        comps: [pick(&u.comps[0]), pick(&u.comps[1])],
    })
}

/// Smooth bump `A exp(−|x − c|² / w²)`.
pub fn gaussian(center: [f64; 2], width: f64, amplitude: f64) -> impl Fn([f64; 2]) -> f64 + Sync + Copy {
    move |x: [f64; 2]| {
        let d1 = x[0] - center[0];
        let d2 = x[1] - center[1];
        amplitude * (-(d1 * d1 + d2 * d2) / (width * width)).exp()
    }
}
