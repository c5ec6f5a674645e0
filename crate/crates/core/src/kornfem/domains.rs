//! Builtin mesh generators.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::mesh::{MeshError, Prolongation, Result, TriMesh};
use crate::shells::ShellSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinDomain {
    /// `[0, 1]²`, level `k` = `k` red refinements of the two-triangle split.
    Square,
    /// Refined hexagon with boundary midpoints pushed onto the circle.
    Disk { center: [f64; 2], radius: f64 },
    /// Structured polar mesh, `32·2^k` angular by `2^k` radial cells.
    Annulus { inner: f64, outer: f64 },
    /// Thin shell around the unit circle; level `k` scales the `ShellSpec`
    /// resolution by `2^k`.
    Shell(ShellSpec),
}

impl Default for BuiltinDomain {
    fn default() -> Self {
        BuiltinDomain::Square
    }
}

impl BuiltinDomain {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinDomain::Square => "square",
            BuiltinDomain::Disk { .. } => "disk",
            BuiltinDomain::Annulus { .. } => "annulus",
            BuiltinDomain::Shell(_) => "shell",
        }
    }

    pub fn unit_disk() -> Self {
        BuiltinDomain::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }

    fn coarse(&self) -> Result<Option<TriMesh>> {
        match self {
            BuiltinDomain::Square => Ok(Some(TriMesh::new(
                vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                vec![[0, 1, 2], [0, 2, 3]],
                "square",
            )?)),
            BuiltinDomain::Disk { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(MeshError::Degenerate(format!("disk radius {radius}")));
                }
                let mut v = vec![*center];
                v.extend((0..6).map(|k| {
                    let t = PI / 3.0 * k as f64;
                    [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                }));
                let tris = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
                Ok(Some(TriMesh::new(v, tris, "disk")?))
            }
            _ => Ok(None),
        }
    }

    fn project(&self) -> impl Fn([f64; 2]) -> [f64; 2] + '_ {
        move |m| match self {
            BuiltinDomain::Disk { center, radius } => {
                let (dx, dy) = (m[0] - center[0], m[1] - center[1]);
                let s = radius / dx.hypot(dy);
                [center[0] + s * dx, center[1] + s * dy]
            }
            _ => m,
        }
    }

    pub fn mesh(&self, level: usize) -> Result<TriMesh> {
        Ok(self.hierarchy(level)?.pop().expect("non-empty hierarchy").0)
    }

    /// Meshes for levels `0..=level`; entry `k > 0` carries the prolongation
    /// from level `k − 1` when the generator refines.
    pub fn hierarchy(&self, level: usize) -> Result<Vec<(TriMesh, Option<Prolongation>)>> {
        if let Some(mut mesh) = self.coarse()? {
            let mut out = Vec::with_capacity(level + 1);
            out.push((mesh.clone(), None));
            for _ in 0..level {
                let (fine, p) = mesh.refine_projected(self.project())?;
                out.push((fine.clone(), Some(p)));
                mesh = fine;
            }
            return Ok(out);
        }
        (0..=level).map(|k| Ok((self.polar(k)?, None))).collect()
    }

    fn polar(&self, level: usize) -> Result<TriMesh> {
        let scale = 1usize << level;
        match self {
            BuiltinDomain::Annulus { inner, outer } => {
                if !(0.0 < *inner && inner < outer) || !outer.is_finite() {
                    return Err(MeshError::Degenerate(format!("annulus radii {inner}, {outer}")));
                }
                let (a, b) = (*inner, *outer);
                polar_mesh(32 * scale, scale, |_, s| a + (b - a) * s, "annulus")
            }
            BuiltinDomain::Shell(spec) => {
                let mut s = spec.clone();
                s.angular_resolution *= scale;
                s.radial_layers *= scale;
                crate::shells::shell_mesh(&s).map_err(|e| MeshError::Degenerate(e.to_string()))
            }
            _ => unreachable!("refinement-based domain"),
        }
    }
}

/// Structured mesh of `{r(θ, s) (cos θ, sin θ) : θ ∈ [0, 2π), s ∈ [0, 1]}`
/// with `n_theta × n_r` quads, each split into two triangles. `r` must
/// increase in `s` and stay positive.
pub fn polar_mesh(
    n_theta: usize,
    n_r: usize,
    radius: impl Fn(f64, f64) -> f64,
    label: &str,
) -> Result<TriMesh> {
    if n_theta < 3 || n_r < 1 {
        return Err(MeshError::Degenerate(format!("polar grid {n_theta} x {n_r}")));
    }
    let idx = |i: usize, j: usize| (i % n_theta) * (n_r + 1) + j;
    let mut vertices = Vec::with_capacity(n_theta * (n_r + 1));
    for i in 0..n_theta {
        let t = TAU * i as f64 / n_theta as f64;
        let (s, c) = t.sin_cos();
        let mut prev = 0.0;
        for j in 0..=n_r {
            let r = radius(t, j as f64 / n_r as f64);
            if !(r > prev) {
                return Err(MeshError::Degenerate(format!(
                    "radius {r} at angle {t} is not positive and increasing"
                )));
            }
            prev = r;
            vertices.push([r * c, r * s]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n_theta * n_r);
    for i in 0..n_theta {
        for j in 0..n_r {
            let (p, q, r, s) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([p, r, q]);
            triangles.push([p, s, r]);
        }
    }
    TriMesh::new(vertices, triangles, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_level_zero() {
        let m = BuiltinDomain::Square.mesh(0).unwrap();
        assert_eq!(m.triangles().len(), 2);
        assert_eq!(m.boundary_edges().len(), 4);
    }

    #[test]
    fn disk_normals_converge_quadratically() {
        // bisector of adjacent edge normals vs the exact radial direction
        let dom = BuiltinDomain::Disk {
            center: [3.0, -1.0],
            radius: 1.0,
        };
        let mut errs = Vec::new();
        for level in 2..=5 {
            let m = dom.mesh(level).unwrap();
            let edges = m.boundary_edges();
            let mut worst = 0.0_f64;
            for (v, pair) in m.boundary_vertex_edges().iter().enumerate() {
                let Some((i, o)) = pair else { continue };
                let (a, b) = (edges[*i].normal, edges[*o].normal);
                let n = [a[0] + b[0], a[1] + b[1]];
                let nn = n[0].hypot(n[1]);
                let x = m.vertices()[v];
                let r = [x[0] - 3.0, x[1] + 1.0];
                let rr = r[0].hypot(r[1]);
                assert!((rr - 1.0).abs() < 1e-14);
                let cross = (n[0] * r[1] - n[1] * r[0]) / (nn * rr);
                worst = worst.max(cross.abs());
                // edge normals themselves are off by half the edge angle
                let mid = m.edge_midpoint(&edges[*o]);
                let radial = [mid[0] - 3.0, mid[1] + 1.0];
                let c = (b[0] * radial[1] - b[1] * radial[0]).abs() / radial[0].hypot(radial[1]);
                assert!(c < 1e-12, "edge normal not radial at a regular polygon: {c}");
            }
            errs.push((worst, m.mesh_size()));
        }
        // a refined hexagon's boundary is a regular polygon, so the bisector is exactly radial
        for (e, h) in &errs {
            assert!(*e <= 1e-12 + h * h, "normal error {e} at h = {h}");
        }
    }

    #[test]
    fn annulus_loops_have_opposite_orientations() {
        let m = BuiltinDomain::Annulus { inner: 0.5, outer: 1.0 }.mesh(1).unwrap();
        let loops = m.boundary_loops();
        assert_eq!(loops.len(), 2);
        let mut areas: Vec<f64> = loops.iter().map(|l| m.loop_signed_area(l)).collect();
        areas.sort_by(f64::total_cmp);
        assert!(areas[0] < 0.0 && areas[1] > 0.0);
        assert!(areas[1] > -areas[0]);
        let expect = PI * (1.0 - 0.25);
        assert!((m.area() - expect).abs() < 0.05 * expect);
    }

    #[test]
    fn disk_hierarchy_has_prolongations() {
        let h = BuiltinDomain::unit_disk().hierarchy(2).unwrap();
        assert_eq!(h.len(), 3);
        assert!(h[0].1.is_none() && h[1].1.is_some());
        assert_eq!(h[2].0.triangles().len(), 6 * 16);
    }
}
