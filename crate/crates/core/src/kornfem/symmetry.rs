//! Detection of rotational symmetry, i.e. of a non-trivial `L_Ω`.

use serde::{Deserialize, Serialize};

use super::forms::CORNER_ANGLE;
use super::mesh::TriMesh;

/// Normalized residual below which the boundary counts as rotationally symmetric.
pub const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LOmegaKind {
    Trivial,
    Rotational { center: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LOmegaInfo {
    #[serde(flatten)]
    pub kind: LOmegaKind,
    /// `Σ w ((x − c)^⊥ · n)² / Σ w |x − c|²` at the best center.
    pub residual: f64,
    pub fitted_center: [f64; 2],
}

impl LOmegaInfo {
    pub fn center(&self) -> Option<[f64; 2]> {
        match self.kind {
            LOmegaKind::Rotational { center } => Some(center),
            LOmegaKind::Trivial => None,
        }
    }
}

/// Least-squares fit of a rotation center `c` such that `(x − c)^⊥ · n = 0`
/// on the boundary. Samples: vertices with bisector normals, edge midpoints
/// with edge normals. At a corner no rotation other than about the corner
/// itself is tangential, so corners contribute `|x − c|²`.
pub fn detect_l_omega(mesh: &TriMesh) -> LOmegaInfo {
    detect_l_omega_with(mesh, SYMMETRY_TOL)
}

pub fn detect_l_omega_with(mesh: &TriMesh, tol: f64) -> LOmegaInfo {
    // rows (a, b, w, x): residual b − a·c, weight w, sample point x
    let mut rows: Vec<([f64; 2], f64, f64, [f64; 2])> = Vec::new();
    let mut push_normal = |x: [f64; 2], n: [f64; 2], w: f64| {
        rows.push(([n[1], -n[0]], x[0] * n[1] - x[1] * n[0], w, x));
    };
    let edges = mesh.boundary_edges();
    let mut corner_rows = Vec::new();
    for (v, pair) in mesh.boundary_vertex_edges().into_iter().enumerate() {
        let Some((i, o)) = pair else { continue };
        let (a, b) = (edges[i].normal, edges[o].normal);
        let x = mesh.vertices()[v];
        let w = 0.25 * (edges[i].length + edges[o].length);
        let angle = (a[0] * b[1] - a[1] * b[0]).abs().atan2(a[0] * b[0] + a[1] * b[1]);
        if angle > CORNER_ANGLE {
            corner_rows.push(([1.0, 0.0], x[0], w, x));
            corner_rows.push(([0.0, 1.0], x[1], w, x));
        } else {
            let n = [a[0] + b[0], a[1] + b[1]];
            let len = n[0].hypot(n[1]);
            push_normal(x, [n[0] / len, n[1] / len], w);
        }
    }
    for e in edges {
        push_normal(mesh.edge_midpoint(e), e.normal, 0.5 * e.length);
    }
    rows.extend(corner_rows);

    let (mut n11, mut n12, mut n22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b, w, _) in &rows {
        n11 += w * a[0] * a[0];
        n12 += w * a[0] * a[1];
        n22 += w * a[1] * a[1];
        r1 += w * a[0] * b;
        r2 += w * a[1] * b;
    }
    let det = n11 * n22 - n12 * n12;
    if !(det > 1e-14 * (n11 + n22).powi(2)) {
        return LOmegaInfo {
            kind: LOmegaKind::Trivial,
            residual: f64::INFINITY,
            fitted_center: [f64::NAN; 2],
        };
    }
    let c = [(n22 * r1 - n12 * r2) / det, (n11 * r2 - n12 * r1) / det];
    let misfit = crate::compensated_sum(rows.iter().map(|(a, b, w, _)| {
        let r = b - a[0] * c[0] - a[1] * c[1];
        w * r * r
    }));
    let scale = crate::compensated_sum(rows.iter().map(|(_, _, w, x)| {
        let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
        w * (dx * dx + dy * dy)
    }));
    let residual = if scale > 0.0 { misfit / scale } else { f64::INFINITY };
    let kind = if residual < tol {
        LOmegaKind::Rotational { center: c }
    } else {
        LOmegaKind::Trivial
    };
    LOmegaInfo {
        kind,
        residual,
        fitted_center: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kornfem::domains::BuiltinDomain;
    use crate::shells::ShellSpec;

    #[test]
    fn square_is_trivial_at_every_level() {
        for level in 0..4 {
            let info = detect_l_omega(&BuiltinDomain::Square.mesh(level).unwrap());
            assert_eq!(info.kind, LOmegaKind::Trivial, "level {level}");
        }
    }

    #[test]
    fn shifted_disk_is_rotational_about_its_center() {
        let dom = BuiltinDomain::Disk {
            center: [3.0, -1.0],
            radius: 1.0,
        };
        for level in 2..=4 {
            let info = detect_l_omega(&dom.mesh(level).unwrap());
            let c = info.center().expect("rotational");
            assert!((c[0] - 3.0).hypot(c[1] + 1.0) < 1e-12);
        }
    }

    #[test]
    fn circular_annulus_is_rotational_shell_is_not() {
        let ann = detect_l_omega(&BuiltinDomain::Annulus { inner: 0.5, outer: 1.0 }.mesh(1).unwrap());
        assert!(ann.center().is_some());
        let shell = BuiltinDomain::Shell(ShellSpec::default()).mesh(0).unwrap();
        let info = detect_l_omega(&shell);
        assert_eq!(info.kind, LOmegaKind::Trivial);
        assert!(info.residual > 1e-3 * 1e-3, "residual {}", info.residual);
    }

    #[test]
    fn perturbed_disk_fails_detection() {
        let mesh = BuiltinDomain::unit_disk().mesh(3).unwrap();
        let mut v = mesh.vertices().to_vec();
        for x in v.iter_mut() {
            let r = x[0].hypot(x[1]);
            let t = x[1].atan2(x[0]);
            let s = 1.0 + 1e-2 * (3.0 * t).cos() * r * r;
            *x = [x[0] * s, x[1] * s];
        }
        let bumpy = crate::kornfem::TriMesh::new(v, mesh.triangles().to_vec(), "bumpy").unwrap();
        let info = detect_l_omega(&bumpy);
        assert_eq!(info.kind, LOmegaKind::Trivial);
        assert!(info.residual >= 1e-6, "{}", info.residual);
    }
}
