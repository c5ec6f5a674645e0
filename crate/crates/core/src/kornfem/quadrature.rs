//! Quadrature evaluation of `‖∇u‖ / ‖D(u)‖` for explicit fields.

use serde::{Deserialize, Serialize};

use super::forms::BoundaryCondition;
use super::mesh::TriMesh;
use super::KornError;
use crate::compensated_sum;
use crate::mat2kit::Mat2;

/// Value and gradient (`(∇u)_ij = ∂_j u_i`) of a field at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub u: [f64; 2],
    pub grad: Mat2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub x: [f64; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub x: [f64; 2],
    pub normal: [f64; 2],
}

/// Below this `‖D(u)‖/‖∇u‖` the quotient is reported as infinite.
pub const RIGID_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRatio {
    pub grad_norm: f64,
    pub symgrad_norm: f64,
    /// `None` when `D(u)` vanishes (rigid motion).
    pub korn_quotient: Option<f64>,
    /// `max |u · n|` (tangential) or `max |u|` (Dirichlet) over boundary samples.
    pub boundary_residual: f64,
}

impl FieldRatio {
    pub fn quotient(&self) -> Result<f64, KornError> {
        self.korn_quotient.ok_or(KornError::InfiniteQuotient)
    }
}

/// Symmetric order-2 rule: three points at `(2/3, 1/6, 1/6)`, weights `|T|/3`.
pub fn mesh_quadrature(mesh: &TriMesh) -> Vec<QuadPoint> {
    let mut out = Vec::with_capacity(3 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|v| mesh.vertices()[v]);
        let w = mesh.triangle_area(t) / 3.0;
        for k in 0..3 {
            let bary = [1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
            let mut b = bary;
            b[k] = 2.0 / 3.0;
            let x = [
                b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
                b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
            ];
            out.push(QuadPoint { x, weight: w });
        }
    }
    out
}

/// `per_edge` equispaced interior points on every boundary edge, with edge normals.
pub fn boundary_samples(mesh: &TriMesh, per_edge: usize) -> Vec<BoundaryPoint> {
    let mut out = Vec::new();
    for e in mesh.boundary_edges() {
        let (p, q) = (mesh.vertices()[e.vertices[0]], mesh.vertices()[e.vertices[1]]);
        for k in 0..per_edge {
            let s = (k as f64 + 0.5) / per_edge as f64;
            out.push(BoundaryPoint {
                x: [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])],
                normal: e.normal,
            });
        }
    }
    out
}

/// Norms over an arbitrary quadrature rule.
pub fn field_ratio(
    quad: &[QuadPoint],
    boundary: &[BoundaryPoint],
    bc: BoundaryCondition,
    field: impl Fn([f64; 2]) -> FieldSample,
) -> FieldRatio {
    let mut g2 = Vec::with_capacity(quad.len());
    let mut d2 = Vec::with_capacity(quad.len());
    for q in quad {
        let s = field(q.x);
        g2.push(q.weight * s.grad.norm_sq());
        d2.push(q.weight * s.grad.sym().norm_sq());
    }
    let grad_norm = compensated_sum(g2).sqrt();
    let symgrad_norm = compensated_sum(d2).sqrt();
    let boundary_residual = boundary
        .iter()
        .map(|b| {
            let u = field(b.x).u;
            match bc {
                BoundaryCondition::Tangential => (u[0] * b.normal[0] + u[1] * b.normal[1]).abs(),
                BoundaryCondition::Dirichlet => u[0].hypot(u[1]),
            }
        })
        .fold(0.0, f64::max);
    let korn_quotient = (symgrad_norm > RIGID_REL_TOL * grad_norm).then(|| grad_norm / symgrad_norm);
    FieldRatio {
        grad_norm,
        symgrad_norm,
        korn_quotient,
        boundary_residual,
    }
}

pub fn evaluate_field_ratio(
    mesh: &TriMesh,
    field: impl Fn([f64; 2]) -> FieldSample,
    bc: BoundaryCondition,
) -> FieldRatio {
    field_ratio(&mesh_quadrature(mesh), &boundary_samples(mesh, 2), bc, field)
}

/// `u = ∇^⊥ψ` for the compact bump `ψ = (1 − |x − c|²/ρ²)⁴`.
pub fn divfree_bump(center: [f64; 2], radius: f64) -> impl Fn([f64; 2]) -> FieldSample + Copy {
    move |x| {
        let (dx, dy) = ((x[0] - center[0]) / radius, (x[1] - center[1]) / radius);
        let s2 = dx * dx + dy * dy;
        if s2 >= 1.0 {
            return FieldSample {
                u: [0.0, 0.0],
                grad: Mat2::ZERO,
            };
        }
        let m = 1.0 - s2;
        // ∂ψ = −8 m³ d/ρ, ∂²ψ = (48 m² d_i d_j − 8 m³ δ_ij)/ρ²
        let c1 = -8.0 * m.powi(3) / radius;
        let (p1, p2) = (c1 * dx, c1 * dy);
        let r2 = radius * radius;
        let h11 = (48.0 * m * m * dx * dx - 8.0 * m.powi(3)) / r2;
        let h22 = (48.0 * m * m * dy * dy - 8.0 * m.powi(3)) / r2;
        let h12 = 48.0 * m * m * dx * dy / r2;
        FieldSample {
            u: [-p2, p1],
            grad: Mat2::new(-h12, -h22, h11, h12),
        }
    }
}
