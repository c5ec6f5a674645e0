//! Thin shells `Ωʰ = {(1 + t) x : x ∈ S¹, t ∈ (h g(x) − h, h g(x))}` and
//! the explicit fields whose Korn quotient grows like `h⁻¹`.
//!
//! In two dimensions the test field is
//!
//! ```text
//! u(y) = y^⊥ + h g′(θ) ŷ,    y = r ŷ,  ŷ = (cos θ, sin θ),
//! ```
//!
//! tangent to every curve `r = 1 + h g(θ) + const`, with
//! `∇u = J + (h/r) (g″ ŷ⊗e_θ + g′ e_θ⊗e_θ)` and
//! `|D(u)|² = (h/r)² (g″²/2 + g′²)`.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kornfem::{self, BoundaryCondition, BoundaryPoint, FieldSample, MeshError, QuadPoint, TriMesh};
use crate::mat2kit::Mat2;

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("invalid shell spec: {0}")]
    InvalidSpec(String),
    #[error("cannot parse profile {input:?}: {reason}")]
    Profile { input: String, reason: String },
    #[error("point ({0}, {1}) lies outside the shell")]
    OutsideDomain(f64, f64),
    #[error("profile is constant: the shell field is a rigid rotation and the Korn quotient is infinite")]
    InfiniteQuotient,
    #[error("invalid h list: {0}")]
    InvalidHList(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, ShellError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub k: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `g(θ) = a0 + Σ (cos_k cos kθ + sin_k sin kθ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierProfile {
    pub a0: f64,
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
}

impl FourierProfile {
    pub fn constant(a0: f64) -> Self {
        FourierProfile { a0, terms: Vec::new() }
    }

    /// Value and first two derivatives at `θ`.
    pub fn eval(&self, theta: f64) -> [f64; 3] {
        let mut out = [self.a0, 0.0, 0.0];
        for t in &self.terms {
            let k = t.k as f64;
            let (s, c) = (k * theta).sin_cos();
            out[0] += t.cos * c + t.sin * s;
            out[1] += k * (t.sin * c - t.cos * s);
            out[2] -= k * k * (t.cos * c + t.sin * s);
        }
        out
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.k == 0 || (t.cos == 0.0 && t.sin == 0.0))
    }

    /// Parses sums like `0.2+0.05*cos(3t)` or `0.2 - sin(2*t) * 0.01`.
    pub fn parse(input: &str) -> Result<Self> {
        let err = |reason: String| ShellError::Profile {
            input: input.to_string(),
            reason,
        };
        let chars: Vec<char> = input.chars().filter(|c| !c.is_whitespace()).collect();
        if chars.is_empty() {
            return Err(err("empty profile".into()));
        }
        let mut profile = FourierProfile::constant(0.0);
        for (sign, term) in split_top_level(&chars, |c, prev| {
            (c == '+' || c == '-') && !matches!(prev, Some('e' | 'E'))
        }) {
            if term.is_empty() {
                return Err(err("dangling sign".into()));
            }
            let mut coef = if sign == Some('-') { -1.0 } else { 1.0 };
            let mut mode: Option<(bool, u32)> = None;
            for (_, factor) in split_top_level(&term, |c, _| c == '*') {
                let f: String = factor.iter().collect();
                if let Some((is_cos, arg)) = f
                    .strip_prefix("cos(")
                    .map(|a| (true, a))
                    .or_else(|| f.strip_prefix("sin(").map(|a| (false, a)))
                {
                    if mode.is_some() {
                        return Err(err(format!("product of trigonometric factors in {f:?}")));
                    }
                    let arg = arg.strip_suffix(')').ok_or_else(|| err(format!("unclosed {f:?}")))?;
                    let k = arg
                        .strip_suffix('t')
                        .or_else(|| arg.strip_suffix('θ'))
                        .ok_or_else(|| err(format!("argument {arg:?} is not a multiple of t")))?
                        .trim_end_matches('*');
                    let k = if k.is_empty() {
                        1
                    } else {
                        k.parse::<u32>().map_err(|_| err(format!("bad frequency {k:?}")))?
                    };
                    mode = Some((is_cos, k));
                } else {
                    coef *= f.parse::<f64>().map_err(|_| err(format!("bad factor {f:?}")))?;
                }
            }
            match mode {
                None | Some((true, 0)) => profile.a0 += coef,
                Some((false, 0)) => {}
                Some((is_cos, k)) => {
                    let idx = match profile.terms.iter().position(|t| t.k == k) {
                        Some(i) => i,
                        None => {
                            profile.terms.push(FourierTerm { k, cos: 0.0, sin: 0.0 });
                            profile.terms.len() - 1
                        }
                    };
                    let t = &mut profile.terms[idx];
                    if is_cos {
                        t.cos += coef;
                    } else {
                        t.sin += coef;
                    }
                }
            }
        }
        profile.terms.sort_by_key(|t| t.k);
        Ok(profile)
    }
}

/// Splits at separators outside parentheses; each piece carries the
/// separator that preceded it.
fn split_top_level(chars: &[char], is_sep: impl Fn(char, Option<char>) -> bool) -> Vec<(Option<char>, Vec<char>)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut sep = None;
    let mut cur = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        let prev = if i > 0 { Some(chars[i - 1]) } else { None };
        if depth == 0 && is_sep(c, prev) && !(i == 0 && (c == '+' || c == '-')) {
            out.push((sep, std::mem::take(&mut cur)));
            sep = Some(c);
        } else if i == 0 && (c == '+' || c == '-') {
            sep = Some(c);
        } else {
            cur.push(c);
        }
    }
    out.push((sep, cur));
    out
}

impl Default for FourierProfile {
    fn default() -> Self {
        FourierProfile {
            a0: 0.2,
            terms: vec![FourierTerm { k: 3, cos: 0.05, sin: 0.0 }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSpec {
    pub profile: FourierProfile,
    pub h: f64,
    pub angular_resolution: usize,
    pub radial_layers: usize,
}

impl Default for ShellSpec {
    fn default() -> Self {
        ShellSpec {
            profile: FourierProfile::default(),
            h: 0.1,
            angular_resolution: 2048,
            radial_layers: 8,
        }
    }
}

impl ShellSpec {
    pub fn with_h(&self, h: f64) -> Self {
        ShellSpec { h, ..self.clone() }
    }

    /// `g` must map into `(0, 1/3)` and `h` lie in `(0, 1/2)`.
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h < 0.5) {
            return Err(ShellError::InvalidSpec(format!("h = {} outside (0, 0.5)", self.h)));
        }
        if self.angular_resolution < 8 || self.radial_layers < 1 {
            return Err(ShellError::InvalidSpec(format!(
                "resolution {} x {} too small",
                self.angular_resolution, self.radial_layers
            )));
        }
        let n = self.angular_resolution.max(1024);
        for i in 0..n {
            let g = self.profile.eval(TAU * i as f64 / n as f64)[0];
            if !(g > 0.0 && g < 1.0 / 3.0) {
                return Err(ShellError::InvalidSpec(format!("g = {g} leaves (0, 1/3)")));
            }
        }
        Ok(())
    }

    /// Inner and outer radius at angle `θ`.
    pub fn radii(&self, theta: f64) -> (f64, f64) {
        let g = self.profile.eval(theta)[0];
        (1.0 + self.h * g - self.h, 1.0 + self.h * g)
    }
}

pub fn shell_mesh(spec: &ShellSpec) -> Result<TriMesh> {
    spec.validate()?;
    let h = spec.h;
    Ok(kornfem::polar_mesh(
        spec.angular_resolution,
        spec.radial_layers,
        |t, s| {
            let (r0, _) = spec.radii(t);
            r0 + h * s
        },
        "shell",
    )?)
}

#[derive(Debug, Clone)]
pub struct ShellField {
    spec: ShellSpec,
}

pub fn shell_field(spec: &ShellSpec) -> ShellField {
    ShellField { spec: spec.clone() }
}

impl ShellField {
    /// Closed form, valid at any `y ≠ 0`.
    pub fn eval_unchecked(&self, y: [f64; 2]) -> FieldSample {
        let r = y[0].hypot(y[1]);
        let theta = y[1].atan2(y[0]);
        let (s, c) = theta.sin_cos();
        let [_, g1, g2] = self.spec.profile.eval(theta);
        let h = self.spec.h;
        let er = [c, s];
        let et = [-s, c];
        let k = h / r;
        let outer = |a: [f64; 2], b: [f64; 2], w: f64| Mat2::new(w * a[0] * b[0], w * a[0] * b[1], w * a[1] * b[0], w * a[1] * b[1]);
        let grad = Mat2::new(0.0, -1.0, 1.0, 0.0) + outer(er, et, k * g2) + outer(et, et, k * g1);
        FieldSample {
            u: [-y[1] + h * g1 * c, y[0] + h * g1 * s],
            grad,
        }
    }

    pub fn eval(&self, y: [f64; 2]) -> Result<FieldSample> {
        let theta = y[1].atan2(y[0]);
        let (r0, r1) = self.spec.radii(theta);
        let r = y[0].hypot(y[1]);
        let slack = 1e-12 * r1;
        if r < r0 - slack || r > r1 + slack {
            return Err(ShellError::OutsideDomain(y[0], y[1]));
        }
        Ok(self.eval_unchecked(y))
    }

    /// Closed-form `|D(u)|²`.
    pub fn symgrad_sq(&self, y: [f64; 2]) -> f64 {
        let r = y[0].hypot(y[1]);
        let [_, g1, g2] = self.spec.profile.eval(y[1].atan2(y[0]));
        (self.spec.h / r).powi(2) * (0.5 * g2 * g2 + g1 * g1)
    }
}

/// Tensor rule: periodic trapezoid in `θ`, trapezoid across the thickness,
/// area element `r dr dθ`.
pub fn shell_quadrature(spec: &ShellSpec) -> Vec<QuadPoint> {
    let (n, m) = (spec.angular_resolution, spec.radial_layers);
    let dtheta = TAU / n as f64;
    let dr = spec.h / m as f64;
    let mut out = Vec::with_capacity(n * (m + 1));
    for i in 0..n {
        let t = dtheta * i as f64;
        let (s, c) = t.sin_cos();
        let (r0, _) = spec.radii(t);
        for j in 0..=m {
            let r = r0 + dr * j as f64;
            let w = if j == 0 || j == m { 0.5 * dr } else { dr };
            out.push(QuadPoint {
                x: [r * c, r * s],
                weight: dtheta * w * r,
            });
        }
    }
    out
}

/// Seeded random points on both boundary curves with exact unit normals.
pub fn shell_boundary_samples(spec: &ShellSpec, count: usize, seed: u64) -> Vec<BoundaryPoint> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let t = rng.random_range(0.0..TAU);
            let (s, c) = t.sin_cos();
            let (r0, r1) = spec.radii(t);
            let outer = k % 2 == 0;
            let r = if outer { r1 } else { r0 };
            let dr = spec.h * spec.profile.eval(t)[1];
            // r ŷ − r′ e_θ is normal to the curve θ ↦ r(θ) ŷ
            let n = [r * c + dr * s, r * s - dr * c];
            let len = n[0].hypot(n[1]);
            let sign = if outer { 1.0 } else { -1.0 };
            BoundaryPoint {
                x: [r * c, r * s],
                normal: [sign * n[0] / len, sign * n[1] / len],
            }
        })
        .collect()
}

/// Tangency samples per row.
pub const TANGENCY_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupRow {
    pub h: f64,
    pub grad_norm: f64,
    pub symgrad_norm: f64,
    pub ratio: f64,
    pub tangency_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupTable {
    pub rows: Vec<BlowupRow>,
    /// Least-squares slope of `log ratio` against `log h`; needs two rows.
    pub slope: Option<f64>,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn evaluate_shell(spec: &ShellSpec) -> Result<BlowupRow> {
    spec.validate()?;
    let field = shell_field(spec);
    let quad = shell_quadrature(spec);
    let bdry = shell_boundary_samples(spec, TANGENCY_SAMPLES, 0x5e11);
    let r = kornfem::field_ratio(&quad, &bdry, BoundaryCondition::Tangential, |y| field.eval_unchecked(y));
    let ratio = r.korn_quotient.ok_or(ShellError::InfiniteQuotient)?;
    Ok(BlowupRow {
        h: spec.h,
        grad_norm: r.grad_norm,
        symgrad_norm: r.symgrad_norm,
        ratio,
        tangency_residual: r.boundary_residual,
    })
}

pub fn blowup_experiment(template: &ShellSpec, h_list: &[f64]) -> Result<BlowupTable> {
    if h_list.is_empty() {
        return Err(ShellError::InvalidHList("empty".into()));
    }
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ShellError::InvalidHList("values must be strictly decreasing".into()));
    }
    if template.profile.is_constant() {
        return Err(ShellError::InfiniteQuotient);
    }
    let rows = h_list
        .par_iter()
        .map(|&h| evaluate_shell(&template.with_h(h)))
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
    Ok(BlowupTable {
        slope: fit_slope(&lx, &ly),
        rows,
    })
}

impl BlowupTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| ShellError::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn grad_over_sqrt_h(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.grad_norm / r.h.sqrt()).collect()
    }

    pub fn symgrad_over_h32(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.symgrad_norm / r.h.powf(1.5)).collect()
    }
}

/// `max/min − 1` of positive values.
pub fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_profiles() {
        assert_eq!(FourierProfile::parse("0.2+0.05*cos(3t)").unwrap(), FourierProfile::default());
        assert_eq!(FourierProfile::parse(" 0.2 + 0.05 * cos(3*t) ").unwrap(), FourierProfile::default());
        let p = FourierProfile::parse("0.1-2e-2*sin(2t)+cos(t)*0.01+0.05").unwrap();
        assert!((p.a0 - 0.15).abs() < 1e-15);
        assert_eq!(p.terms, vec![FourierTerm { k: 1, cos: 0.01, sin: 0.0 }, FourierTerm { k: 2, cos: 0.0, sin: -0.02 }]);
        assert!(FourierProfile::parse("0.2+").is_err());
        assert!(FourierProfile::parse("0.2+tan(3t)").is_err());
        let json: FourierProfile = serde_json::from_str(r#"{"a0":0.2,"terms":[{"k":3,"cos":0.05}]}"#).unwrap();
        assert_eq!(json, FourierProfile::default());
    }

    #[test]
    fn constant_profile_radii() {
        let spec = ShellSpec {
            profile: FourierProfile::constant(0.2),
            h: 0.1,
            angular_resolution: 64,
            radial_layers: 2,
        };
        let (r0, r1) = spec.radii(1.3);
        assert!((r0 - 0.92).abs() < 1e-15 && (r1 - 1.02).abs() < 1e-15);
        let mesh = shell_mesh(&spec).unwrap();
        let radii: Vec<f64> = mesh.vertices().iter().map(|x| x[0].hypot(x[1])).collect();
        let min = radii.iter().copied().fold(f64::INFINITY, f64::min);
        let max = radii.iter().copied().fold(0.0, f64::max);
        assert!((min - 0.92).abs() < 1e-14 && (max - 1.02).abs() < 1e-14);
        assert_eq!(mesh.boundary_loops().len(), 2);
    }

    #[test]
    fn constant_profile_is_rigid() {
        let spec = ShellSpec {
            profile: FourierProfile::constant(0.2),
            ..ShellSpec::default()
        };
        let f = shell_field(&spec);
        let s = f.eval([0.0, 1.0]).unwrap();
        assert_eq!(s.grad, Mat2::new(0.0, -1.0, 1.0, 0.0));
        assert!(matches!(evaluate_shell(&spec), Err(ShellError::InfiniteQuotient)));
        assert!(matches!(blowup_experiment(&spec, &[0.1, 0.05]), Err(ShellError::InfiniteQuotient)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = ShellSpec::default();
        let f = shell_field(&spec);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let step = 1e-5;
        for _ in 0..200 {
            let t = rng.random_range(0.0..TAU);
            let (r0, r1) = spec.radii(t);
            let r = rng.random_range(r0..r1);
            let y = [r * t.cos(), r * t.sin()];
            let g = f.eval(y).unwrap().grad.to_array();
            for j in 0..2 {
                let (mut yp, mut ym) = (y, y);
                yp[j] += step;
                ym[j] -= step;
                let (up, um) = (f.eval_unchecked(yp).u, f.eval_unchecked(ym).u);
                for i in 0..2 {
                    let fd = (up[i] - um[i]) / (2.0 * step);
                    let rel = (fd - g[2 * i + j]).abs() / g[2 * i + j].abs().max(1.0);
                    assert!(rel <= 1e-6, "entry ({i},{j}): {fd} vs {}", g[2 * i + j]);
                }
            }
            let d = f.eval_unchecked(y).grad.sym().norm_sq();
            assert!((d - f.symgrad_sq(y)).abs() < 1e-14);
        }
        assert!(matches!(f.eval([2.0, 0.0]), Err(ShellError::OutsideDomain(..))));
    }

    #[test]
    fn field_is_tangent_on_both_curves() {
        for h in [0.1, 0.05, 0.025] {
            let spec = ShellSpec::default().with_h(h);
            let f = shell_field(&spec);
            let worst = shell_boundary_samples(&spec, TANGENCY_SAMPLES, 9)
                .iter()
                .map(|b| {
                    let u = f.eval_unchecked(b.x).u;
                    (u[0] * b.normal[0] + u[1] * b.normal[1]).abs()
                })
                .fold(0.0, f64::max);
            assert!(worst <= 1e-3, "h = {h}: {worst}");
            assert!(worst <= 1e-13, "tangency is exact in closed form: {worst}");
        }
    }

    #[test]
    fn quadrature_integrates_the_annulus_area() {
        let spec = ShellSpec::default();
        let area: f64 = shell_quadrature(&spec).iter().map(|q| q.weight).sum();
        // ∫∫ r dr dθ = ∫ h (r0 + h/2) dθ, exact for the linear integrand
        let exact = TAU * spec.h * (1.0 + spec.h * 0.2 - spec.h / 2.0);
        assert!((area - exact).abs() < 1e-12);
    }

    #[test]
    fn single_row_has_no_slope() {
        let t = blowup_experiment(&ShellSpec::default(), &[0.1]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.slope, None);
        assert!(blowup_experiment(&ShellSpec::default(), &[0.05, 0.1]).is_err());
    }

    #[test]
    fn csv_has_the_documented_columns() {
        let t = blowup_experiment(&ShellSpec::default(), &[0.1, 0.05]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "h,grad_norm,symgrad_norm,ratio,tangency_residual");
        assert_eq!(text.lines().count(), 3);
    }
}
