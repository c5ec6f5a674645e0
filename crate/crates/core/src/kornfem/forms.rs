//! P1 vector elements: boundary constraints, reduced dofs and the three
//! quadratic forms `∫∇u:∇v`, `∫D(u):D(v)`, `∫div u div v`.

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;

/// Adjacent edge normals differing by more than this angle mark a corner.
pub const CORNER_ANGLE: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// `u · n = 0` on the boundary.
    Tangential,
    /// `u = 0` on the boundary.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexConstraint {
    Free,
    NormalConstrained { normal: [f64; 2] },
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSet {
    pub per_vertex: Vec<VertexConstraint>,
}

impl ConstraintSet {
    pub fn count(&self, pred: impl Fn(&VertexConstraint) -> bool) -> usize {
        self.per_vertex.iter().filter(|c| pred(c)).count()
    }
}

/// Angle between two unit normals.
fn normal_angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] * b[1] - a[1] * b[0]).abs().atan2(a[0] * b[0] + a[1] * b[1])
}

/// Straight or gently curved boundary: constrain along the bisector of the
/// adjacent edge normals. Corners: pin.
pub fn tangential_constraints(mesh: &TriMesh) -> ConstraintSet {
    let edges = mesh.boundary_edges();
    let per_vertex = mesh
        .boundary_vertex_edges()
        .into_iter()
        .map(|pair| match pair {
            None => VertexConstraint::Free,
            Some((i, o)) => {
                let (a, b) = (edges[i].normal, edges[o].normal);
                if normal_angle(a, b) > CORNER_ANGLE {
                    VertexConstraint::Pinned
                } else {
                    let n = [a[0] + b[0], a[1] + b[1]];
                    let len = n[0].hypot(n[1]);
                    VertexConstraint::NormalConstrained {
                        normal: [n[0] / len, n[1] / len],
                    }
                }
            }
        })
        .collect();
    ConstraintSet { per_vertex }
}

pub fn dirichlet_constraints(mesh: &TriMesh) -> ConstraintSet {
    ConstraintSet {
        per_vertex: mesh
            .is_boundary_vertex()
            .into_iter()
            .map(|b| if b { VertexConstraint::Pinned } else { VertexConstraint::Free })
            .collect(),
    }
}

pub fn free_constraints(mesh: &TriMesh) -> ConstraintSet {
    ConstraintSet {
        per_vertex: vec![VertexConstraint::Free; mesh.vertex_count()],
    }
}

pub fn constraints_for(mesh: &TriMesh, bc: BoundaryCondition) -> ConstraintSet {
    match bc {
        BoundaryCondition::Tangential => tangential_constraints(mesh),
        BoundaryCondition::Dirichlet => dirichlet_constraints(mesh),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VertexDofs {
    Free(usize),
    Tangential { dof: usize, tangent: [f64; 2] },
    Pinned,
}

/// Map between reduced dof vectors and nodal displacement vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    vertices: Vec<VertexDofs>,
    count: usize,
}

impl DofMap {
    pub fn new(constraints: &ConstraintSet) -> Self {
        let mut count = 0;
        let vertices = constraints
            .per_vertex
            .iter()
            .map(|c| match *c {
                VertexConstraint::Free => {
                    count += 2;
                    VertexDofs::Free(count - 2)
                }
                VertexConstraint::NormalConstrained { normal } => {
                    count += 1;
                    VertexDofs::Tangential {
                        dof: count - 1,
                        tangent: [-normal[1], normal[0]],
                    }
                }
                VertexConstraint::Pinned => VertexDofs::Pinned,
            })
            .collect();
        DofMap { vertices, count }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Reduced dofs and coefficients contributing to component `comp` at `vertex`.
    fn local(&self, vertex: usize, comp: usize) -> Option<(usize, f64)> {
        match self.vertices[vertex] {
            VertexDofs::Free(first) => Some((first + comp, 1.0)),
            VertexDofs::Tangential { dof, tangent } => Some((dof, tangent[comp])),
            VertexDofs::Pinned => None,
        }
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<[f64; 2]> {
        self.vertices
            .iter()
            .map(|v| match *v {
                VertexDofs::Free(f) => [reduced[f], reduced[f + 1]],
                VertexDofs::Tangential { dof, tangent } => [reduced[dof] * tangent[0], reduced[dof] * tangent[1]],
                VertexDofs::Pinned => [0.0, 0.0],
            })
            .collect()
    }

    /// Orthogonal projection of nodal values onto the constrained space.
    pub fn restrict(&self, nodal: &[[f64; 2]]) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        for (v, d) in self.vertices.iter().enumerate() {
            match *d {
                VertexDofs::Free(f) => {
                    out[f] = nodal[v][0];
                    out[f + 1] = nodal[v][1];
                }
                VertexDofs::Tangential { dof, tangent } => {
                    out[dof] = nodal[v][0] * tangent[0] + nodal[v][1] * tangent[1];
                }
                VertexDofs::Pinned => {}
            }
        }
        out
    }
}

/// Element data for one triangle: area and barycentric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1Element {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl P1Element {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
        let g = |a: usize, b: usize| [(p[a][1] - p[b][1]) / det, (p[b][0] - p[a][0]) / det];
        P1Element {
            area: 0.5 * det,
            grads: [g(1, 2), g(2, 0), g(0, 1)],
        }
    }

    /// Local `6 × 6` matrices `(A, B, C)` in the ordering `2a + i`
    /// (vertex `a`, component `i`).
    pub fn matrices(&self) -> [[[f64; 6]; 6]; 3] {
        let (t, g) = (self.area, &self.grads);
        let mut out = [[[0.0; 6]; 6]; 3];
        for a in 0..3 {
            for i in 0..2 {
                for b in 0..3 {
                    for k in 0..2 {
                        let (r, c) = (2 * a + i, 2 * b + k);
                        let aa = if i == k { t * (g[a][0] * g[b][0] + g[a][1] * g[b][1]) } else { 0.0 };
                        let ee = t * g[a][k] * g[b][i];
                        out[0][r][c] = aa;
                        out[1][r][c] = 0.5 * (aa + ee);
                        out[2][r][c] = t * g[a][i] * g[b][k];
                    }
                }
            }
        }
        out
    }

    /// `∫_T curl(φ_a e_i)` in the ordering `2a + i`.
    pub fn curl_row(&self) -> [f64; 6] {
        let mut q = [0.0; 6];
        for a in 0..3 {
            q[2 * a] = -self.area * self.grads[a][1];
            q[2 * a + 1] = self.area * self.grads[a][0];
        }
        q
    }
}

pub fn element(mesh: &TriMesh, t: usize) -> P1Element {
    P1Element::new(mesh.triangles()[t].map(|v| mesh.vertices()[v]))
}

/// The three forms restricted to the constrained space.
#[derive(Debug, Clone)]
pub struct AssembledForms {
    pub a: CsrMatrix<f64>,
    pub b: CsrMatrix<f64>,
    pub c: CsrMatrix<f64>,
    /// `qᵀu = ∫ curl u`.
    pub curl: Vec<f64>,
    pub dofs: DofMap,
    pub constraints: ConstraintSet,
}

type Triplet = (usize, usize, [f64; 3]);

/// Assembles in parallel over triangles; contributions are merged in
/// triangle order, so results do not depend on the thread count.
pub fn assemble_with(mesh: &TriMesh, constraints: ConstraintSet) -> AssembledForms {
    let dofs = DofMap::new(&constraints);
    let n = dofs.len();
    let per_tri: Vec<(Vec<Triplet>, Vec<(usize, f64)>)> = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| {
            let el = element(mesh, t);
            let m = el.matrices();
            let q = el.curl_row();
            let tri = mesh.triangles()[t];
            let local: Vec<Option<(usize, f64)>> =
                (0..6).map(|r| dofs.local(tri[r / 2], r % 2)).collect();
            let mut trips = Vec::with_capacity(36);
            let mut curl = Vec::with_capacity(6);
            for r in 0..6 {
                let Some((p, cp)) = local[r] else { continue };
                curl.push((p, cp * q[r]));
                for c in 0..6 {
                    let Some((s, cs)) = local[c] else { continue };
                    let w = cp * cs;
                    trips.push((p, s, [w * m[0][r][c], w * m[1][r][c], w * m[2][r][c]]));
                }
            }
            (trips, curl)
        })
        .collect();
    let mut coo = [CooMatrix::new(n, n), CooMatrix::new(n, n), CooMatrix::new(n, n)];
    let mut curl = vec![0.0; n];
    for (trips, q) in &per_tri {
        for &(r, c, v) in trips {
            for k in 0..3 {
                coo[k].push(r, c, v[k]);
            }
        }
        for &(p, v) in q {
            curl[p] += v;
        }
    }
    let [a, b, c] = coo.map(|m| CsrMatrix::from(&m));
    AssembledForms {
        a,
        b,
        c,
        curl,
        dofs,
        constraints,
    }
}

pub fn assemble(mesh: &TriMesh, bc: BoundaryCondition) -> AssembledForms {
    assemble_with(mesh, constraints_for(mesh, bc))
}

/// `y = M x`.
pub fn spmv(m: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let (offsets, cols, vals) = (m.row_offsets(), m.col_indices(), m.values());
    y.par_iter_mut().enumerate().for_each(|(r, out)| {
        let mut s = 0.0;
        for k in offsets[r]..offsets[r + 1] {
            s += vals[k] * x[cols[k]];
        }
        *out = s;
    });
}

pub fn quad_form(m: &CsrMatrix<f64>, x: &[f64]) -> f64 {
    let mut y = vec![0.0; x.len()];
    spmv(m, x, &mut y);
    crate::compensated_sum(x.iter().zip(&y).map(|(a, b)| a * b))
}

pub fn max_abs(m: &CsrMatrix<f64>) -> f64 {
    m.values().iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// `max |(2B − A − C)_ij|`, the defect of the null-Lagrangian identity.
pub fn null_lagrangian_defect(f: &AssembledForms) -> f64 {
    let two_b = &f.b * 2.0;
    let diff = &(&two_b - &f.a) - &f.c;
    max_abs(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kornfem::domains::BuiltinDomain;
    use crate::mat2kit::Mat2;
    use nalgebra::{Matrix3, Vector3};

    /// Gradient of the affine interpolant of nodal values, from a 3×3 solve.
    fn affine_gradient(p: [[f64; 2]; 3], u: [[f64; 2]; 3]) -> Mat2 {
        let m = Matrix3::new(1.0, p[0][0], p[0][1], 1.0, p[1][0], p[1][1], 1.0, p[2][0], p[2][1]);
        let lu = m.lu();
        let row = |i: usize| {
            let s = lu.solve(&Vector3::new(u[0][i], u[1][i], u[2][i])).unwrap();
            [s[1], s[2]]
        };
        Mat2::from_rows([row(0), row(1)])
    }

    fn unit(k: usize) -> [[f64; 2]; 3] {
        let mut u = [[0.0; 2]; 3];
        u[k / 2][k % 2] = 1.0;
        u
    }

    #[test]
    fn reference_triangle_by_hand() {
        let el = P1Element::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(el.area, 0.5);
        assert_eq!(el.grads, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
        let [a, b, c] = el.matrices();
        // scalar Laplacian block ½[[2,−1,−1],[−1,1,0],[−1,0,1]] on each component
        let lap = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(a[2 * x][2 * y], lap[x][y]);
                assert_eq!(a[2 * x + 1][2 * y + 1], lap[x][y]);
                assert_eq!(a[2 * x][2 * y + 1], 0.0);
            }
        }
        // div of φ₁e₁ is 1 and of φ₂e₂ is 1: C entry = ½·1·1
        assert_eq!(c[2][5], 0.5);
        assert_eq!(c[2][2], 0.5);
        assert_eq!(c[3][3], 0.0);
        // D(φ₁e₁) = e₁⊗e₁, D(φ₁e₂) = sym(e₂⊗e₁) with |·|² = ½
        assert_eq!(b[2][2], 0.5);
        assert_eq!(b[3][3], 0.25);
    }

    #[test]
    fn element_matrices_match_direct_integration() {
        let p = [[0.3, -0.2], [1.7, 0.4], [0.1, 1.3]];
        let el = P1Element::new(p);
        let [a, b, c] = el.matrices();
        for r in 0..6 {
            for s in 0..6 {
                let (gr, gs) = (affine_gradient(p, unit(r)), affine_gradient(p, unit(s)));
                let tol = 1e-12;
                assert!((a[r][s] - el.area * gr.dot(gs)).abs() < tol);
                assert!((b[r][s] - el.area * gr.sym().dot(gs.sym())).abs() < tol);
                assert!((c[r][s] - el.area * gr.trace() * gs.trace()).abs() < tol);
            }
        }
    }

    #[test]
    fn null_lagrangian_identity_on_dirichlet_space() {
        for dom in [
            BuiltinDomain::Square,
            BuiltinDomain::unit_disk(),
            BuiltinDomain::Annulus { inner: 0.4, outer: 1.0 },
        ] {
            let mesh = dom.mesh(2).unwrap();
            let f = assemble(&mesh, BoundaryCondition::Dirichlet);
            assert!(null_lagrangian_defect(&f) <= 1e-13 * max_abs(&f.a), "{}", dom.name());
            // free space: boundary terms survive
            let free = assemble_with(&mesh, free_constraints(&mesh));
            assert!(null_lagrangian_defect(&free) > 1e-3 * max_abs(&free.a));
        }
    }

    #[test]
    fn skew_affine_field_has_no_strain() {
        let mesh = BuiltinDomain::unit_disk().mesh(3).unwrap();
        let f = assemble(&mesh, BoundaryCondition::Tangential);
        let nodal: Vec<[f64; 2]> = mesh.vertices().iter().map(|x| [-x[1], x[0]]).collect();
        let u = f.dofs.restrict(&nodal);
        assert_eq!(f.dofs.expand(&u).len(), nodal.len());
        assert!(quad_form(&f.b, &u).abs() < 1e-13);
        // ∫ curl u = 2|Ω| for the unit rotation
        let q: f64 = f.curl.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((q - 2.0 * mesh.area()).abs() < 1e-12);
        assert!((quad_form(&f.a, &u) - 2.0 * mesh.area()).abs() < 1e-12);
    }

    #[test]
    fn square_constraints() {
        let mesh = BuiltinDomain::Square.mesh(2).unwrap();
        let cs = tangential_constraints(&mesh);
        for (v, c) in cs.per_vertex.iter().enumerate() {
            let x = mesh.vertices()[v];
            let on_x = x[0] == 0.0 || x[0] == 1.0;
            let on_y = x[1] == 0.0 || x[1] == 1.0;
            match (on_x, on_y) {
                (true, true) => assert_eq!(*c, VertexConstraint::Pinned),
                (true, false) => assert_eq!(
                    *c,
                    VertexConstraint::NormalConstrained {
                        normal: [if x[0] == 0.0 { -1.0 } else { 1.0 }, 0.0]
                    }
                ),
                (false, true) => assert!(matches!(c, VertexConstraint::NormalConstrained { normal } if normal[0] == 0.0)),
                (false, false) => assert_eq!(*c, VertexConstraint::Free),
            }
        }
    }

    #[test]
    fn assembled_forms_are_symmetric() {
        let mesh = BuiltinDomain::Annulus { inner: 0.5, outer: 1.0 }.mesh(1).unwrap();
        let f = assemble(&mesh, BoundaryCondition::Tangential);
        for m in [&f.a, &f.b, &f.c] {
            let t = m.transpose();
            let d = m - &t;
            assert!(max_abs(&d) <= 1e-15 * max_abs(m));
        }
    }
}
