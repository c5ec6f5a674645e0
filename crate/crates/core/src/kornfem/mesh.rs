//! Conforming triangle meshes with derived boundary loops and outward normals.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("triangle {tri} references vertex {vertex}, but the mesh has {count} vertices")]
    VertexOutOfRange { tri: usize, vertex: usize, count: usize },
    #[error("triangle {tri} has non-positive area {area:e}; vertices must be distinct and counterclockwise")]
    NonPositiveArea { tri: usize, area: f64 },
    #[error("non-conforming: edge ({0}, {1}) is shared by more than two triangles")]
    NonConforming(usize, usize),
    #[error("non-conforming: edge ({0}, {1}) is traversed in the same direction by two triangles")]
    InconsistentOrientation(usize, usize),
    #[error("boundary edges do not form closed loops at vertex {0}")]
    OpenBoundary(usize),
    #[error("boundary list entry ({0}, {1}) is not an edge of exactly one triangle")]
    NotABoundaryEdge(usize, usize),
    #[error("boundary list misses boundary edge ({0}, {1})")]
    MissingBoundaryEdge(usize, usize),
    #[error("boundary edge ({0}, {1}) has an inward normal")]
    InwardNormal(usize, usize),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("mesh file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MeshError>;

/// Directed boundary edge; the domain lies to its left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    /// Outward unit normal.
    pub normal: [f64; 2],
    pub length: f64,
    /// The triangle owning this edge.
    pub triangle: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    region_label: String,
}

/// New vertex `coarse_vertices + k` is the midpoint of `parents[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    pub coarse_vertices: usize,
    pub parents: Vec<[usize; 2]>,
}

impl Prolongation {
    /// Interpolates nodal vectors from the coarse to the fine mesh.
    pub fn apply(&self, coarse: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let mut out = coarse.to_vec();
        out.extend(self.parents.iter().map(|&[a, b]| {
            [0.5 * (coarse[a][0] + coarse[b][0]), 0.5 * (coarse[a][1] + coarse[b][1])]
        }));
        out
    }
}

/// On-disk layout; normals are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_label: Option<String>,
}

fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl TriMesh {
    /// Validates the triangles and derives the boundary from edges used once.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, region_label: impl Into<String>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(i) = vertices.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(MeshError::NonFinite(i));
        }
        let count = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= count) {
                return Err(MeshError::VertexOutOfRange { tri: t, vertex: v, count });
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(MeshError::NonPositiveArea { tri: t, area });
            }
        }

        // directed edge -> owning triangle; an interior edge appears once in each direction
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        let mut uses: HashMap<(usize, usize), u8> = HashMap::with_capacity(3 * triangles.len());
        let mut order = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if directed.insert((a, b), t).is_some() {
                    return Err(MeshError::InconsistentOrientation(a, b));
                }
                let n = uses.entry(key(a, b)).or_insert(0);
                *n += 1;
                if *n > 2 {
                    return Err(MeshError::NonConforming(a.min(b), a.max(b)));
                }
                order.push((a, b));
            }
        }
        let mut boundary_edges = Vec::new();
        for (a, b) in order {
            if uses[&key(a, b)] == 1 {
                boundary_edges.push(Self::boundary_edge(&vertices, a, b, directed[&(a, b)]));
            }
        }
        let mesh = TriMesh {
            vertices,
            triangles,
            boundary_edges,
            region_label: region_label.into(),
        };
        mesh.check_boundary()?;
        Ok(mesh)
    }

    fn boundary_edge(vertices: &[[f64; 2]], a: usize, b: usize, triangle: usize) -> BoundaryEdge {
        let (p, q) = (vertices[a], vertices[b]);
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let length = dx.hypot(dy);
        BoundaryEdge {
            vertices: [a, b],
            normal: [dy / length, -dx / length],
            length,
            triangle,
        }
    }

    fn check_boundary(&self) -> Result<()> {
        let n = self.vertices.len();
        let mut outgoing = vec![0u32; n];
        let mut incoming = vec![0u32; n];
        for e in &self.boundary_edges {
            outgoing[e.vertices[0]] += 1;
            incoming[e.vertices[1]] += 1;
            let nn = e.normal[0].hypot(e.normal[1]);
            if (nn - 1.0).abs() > 1e-12 {
                return Err(MeshError::Degenerate(format!("boundary normal of length {nn}")));
            }
            let tri = self.triangles[e.triangle];
            let c = self.centroid(tri);
            let m = self.edge_midpoint(e);
            if (m[0] - c[0]) * e.normal[0] + (m[1] - c[1]) * e.normal[1] <= 0.0 {
                return Err(MeshError::InwardNormal(e.vertices[0], e.vertices[1]));
            }
        }
        if let Some(v) = (0..n).find(|&v| outgoing[v] != incoming[v] || outgoing[v] > 1) {
            return Err(MeshError::OpenBoundary(v));
        }
        Ok(())
    }

    fn centroid(&self, tri: [usize; 3]) -> [f64; 2] {
        let [a, b, c] = tri.map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn edge_midpoint(&self, e: &BoundaryEdge) -> [f64; 2] {
        let (p, q) = (self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn region_label(&self) -> &str {
        &self.region_label
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        crate::compensated_sum((0..self.triangles.len()).map(|t| self.triangle_area(t)))
    }

    /// Longest edge over all triangles.
    pub fn mesh_size(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|tri| {
                (0..3).map(move |k| {
                    let (p, q) = (self.vertices[tri[k]], self.vertices[tri[(k + 1) % 3]]);
                    (q[0] - p[0]).hypot(q[1] - p[1])
                })
            })
            .fold(0.0, f64::max)
    }

    /// For each boundary vertex, the indices of its incoming and outgoing edges.
    pub fn boundary_vertex_edges(&self) -> Vec<Option<(usize, usize)>> {
        let mut inc = vec![None; self.vertices.len()];
        let mut out = vec![None; self.vertices.len()];
        for (k, e) in self.boundary_edges.iter().enumerate() {
            out[e.vertices[0]] = Some(k);
            inc[e.vertices[1]] = Some(k);
        }
        inc.into_iter().zip(out).map(|(i, o)| Some((i?, o?))).collect()
    }

    pub fn is_boundary_vertex(&self) -> Vec<bool> {
        self.boundary_vertex_edges().iter().map(Option::is_some).collect()
    }

    /// Boundary loops as vertex cycles, traversed with the domain on the left.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let mut next = vec![usize::MAX; self.vertices.len()];
        for e in &self.boundary_edges {
            next[e.vertices[0]] = e.vertices[1];
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut loops = Vec::new();
        for e in &self.boundary_edges {
            let start = e.vertices[0];
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut v = start;
            while !seen[v] {
                seen[v] = true;
                cycle.push(v);
                v = next[v];
            }
            loops.push(cycle);
        }
        loops
    }

    /// Shoelace area of a vertex cycle; positive for counterclockwise loops.
    pub fn loop_signed_area(&self, cycle: &[usize]) -> f64 {
        let n = cycle.len();
        0.5 * crate::compensated_sum((0..n).map(|k| {
            let (p, q) = (self.vertices[cycle[k]], self.vertices[cycle[(k + 1) % n]]);
            p[0] * q[1] - q[0] * p[1]
        }))
    }

    /// Red refinement: every triangle splits into four through its edge
    /// midpoints. Boundary midpoints are passed through `project`.
    pub fn refine_projected(&self, project: impl Fn([f64; 2]) -> [f64; 2]) -> Result<(TriMesh, Prolongation)> {
        let boundary: std::collections::HashSet<(usize, usize)> =
            self.boundary_edges.iter().map(|e| key(e.vertices[0], e.vertices[1])).collect();
        let mut vertices = self.vertices.clone();
        let mut parents = Vec::new();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
            *mid.entry(key(a, b)).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                if boundary.contains(&key(a, b)) {
                    m = project(m);
                }
                vertices.push(m);
                parents.push([a, b]);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let fine = TriMesh::new(vertices, triangles, self.region_label.clone())?;
        Ok((
            fine,
            Prolongation {
                coarse_vertices: self.vertices.len(),
                parents,
            },
        ))
    }

    pub fn refine(&self) -> Result<(TriMesh, Prolongation)> {
        self.refine_projected(|m| m)
    }

    pub fn to_file(&self) -> MeshFile {
        MeshFile {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary: self.boundary_edges.iter().map(|e| e.vertices).collect(),
            region_label: Some(self.region_label.clone()),
        }
    }

    /// Builds a mesh from file contents; the listed boundary must coincide
    /// with the edges used by exactly one triangle (either orientation).
    pub fn from_file(file: MeshFile) -> Result<Self> {
        let mesh = TriMesh::new(file.vertices, file.triangles, file.region_label.unwrap_or_default())?;
        let derived: HashMap<(usize, usize), usize> = mesh
            .boundary_edges
            .iter()
            .enumerate()
            .map(|(k, e)| (key(e.vertices[0], e.vertices[1]), k))
            .collect();
        let mut listed = vec![false; mesh.boundary_edges.len()];
        for &[a, b] in &file.boundary {
            match derived.get(&key(a, b)) {
                Some(&k) if !listed[k] => listed[k] = true,
                _ => return Err(MeshError::NotABoundaryEdge(a, b)),
            }
        }
        if let Some(k) = listed.iter().position(|&l| !l) {
            let [a, b] = mesh.boundary_edges[k].vertices;
            return Err(MeshError::MissingBoundaryEdge(a, b));
        }
        Ok(mesh)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text).map_err(|e| MeshError::Format(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("mesh serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}
