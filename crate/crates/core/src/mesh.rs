//! Conforming triangulations with newest-vertex bisection.
//!
//! Every triangle stores the vertex opposite its refinement edge first, so the
//! refinement edge of `[a, b, c]` is `(b, c)`. Local edge `i` is the edge
//! opposite local vertex `i`.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub type Point = [f64; 2];

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Identity stamp of a mesh value. Clones share the stamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeshId(u64);

impl MeshId {
    fn fresh() -> Self {
        MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed))
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("cannot refine an empty mesh")]
    Empty,
    #[error("marked element {index} out of range for {n_elements} elements")]
    MarkedOutOfRange { index: usize, n_elements: usize },
    #[error("element {0} marked twice")]
    DuplicateMark(usize),
    #[error("malformed mesh file: {0}")]
    Parse(String),
}

/// Parent record of a mesh produced by one call to [`refine_nvb`].
#[derive(Clone, Debug)]
pub struct Lineage {
    pub parent_mesh: MeshId,
    /// For every triangle, the index of the coarse triangle containing it.
    pub parent: Vec<u32>,
}

/// Edge structure derived from the triangle list.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Global edges as sorted vertex pairs, in lexicographic order.
    pub edges: Vec<[usize; 2]>,
    /// Global edge index of local edge `i` (opposite local vertex `i`).
    pub element_edges: Vec<[usize; 3]>,
    /// Adjacent triangles per edge, ascending; `usize::MAX` when absent.
    pub edge_elements: Vec<[usize; 2]>,
    /// Number of triangles sharing each edge (more than two is a defect).
    pub edge_multiplicity: Vec<u32>,
}

impl Topology {
    fn build(triangles: &[[usize; 3]]) -> Self {
        let mut half: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                half.push((a.min(b), a.max(b), t, i));
            }
        }
        half.sort_unstable();
        let mut edges = Vec::with_capacity(half.len() / 2 + 1);
        let mut element_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut edge_elements = Vec::with_capacity(half.len() / 2 + 1);
        let mut edge_multiplicity = Vec::with_capacity(half.len() / 2 + 1);
        for (lo, hi, t, i) in half {
            if edges.last() != Some(&[lo, hi]) {
                edges.push([lo, hi]);
                edge_elements.push([usize::MAX; 2]);
                edge_multiplicity.push(0);
            }
            let e = edges.len() - 1;
            element_edges[t][i] = e;
            let slot = edge_multiplicity[e] as usize;
            if slot < 2 {
                edge_elements[e][slot] = t;
            }
            edge_multiplicity[e] += 1;
        }
        Topology { edges, element_edges, edge_elements, edge_multiplicity }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// An edge with a single adjacent triangle. For conforming meshes these
    /// are exactly the edges on the domain boundary.
    pub fn is_boundary(&self, e: usize) -> bool {
        self.edge_multiplicity[e] == 1
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    id: MeshId,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    generation: Vec<u32>,
    lineage: Option<Lineage>,
    topology: Topology,
    boundary_vertex: Vec<bool>,
}

impl Mesh {
    /// Assembles a mesh from raw parts without validation; `triangles` must
    /// already list the vertex opposite the refinement edge first.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, generation: Vec<u32>) -> Self {
        assert_eq!(triangles.len(), generation.len());
        Self::assemble(vertices, triangles, generation, None)
    }

    /// Builds a mesh from arbitrary triangles: orients every triangle
    /// counter-clockwise and picks the longest edge as refinement edge, with
    /// ties going to the smallest opposite vertex index.
    pub fn from_triangles(vertices: Vec<Point>, triangles: &[[usize; 3]]) -> Self {
        let tris: Vec<[usize; 3]> = triangles
            .iter()
            .map(|&t| {
                let mut t = t;
                if signed_area(&vertices, t) < 0.0 {
                    t.swap(1, 2);
                }
                let len2 = |i: usize| dist2(vertices[t[(i + 1) % 3]], vertices[t[(i + 2) % 3]]);
                let mut best = 0;
                for i in 1..3 {
                    let (li, lb) = (len2(i), len2(best));
                    if li > lb || (li == lb && t[i] < t[best]) {
                        best = i;
                    }
                }
                [t[best], t[(best + 1) % 3], t[(best + 2) % 3]]
            })
            .collect();
        let n = tris.len();
        Self::assemble(vertices, tris, vec![0; n], None)
    }

    fn assemble(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        generation: Vec<u32>,
        lineage: Option<Lineage>,
    ) -> Self {
        let topology = Topology::build(&triangles);
        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, &[a, b]) in topology.edges.iter().enumerate() {
            if topology.is_boundary(e) {
                if a < boundary_vertex.len() {
                    boundary_vertex[a] = true;
                }
                if b < boundary_vertex.len() {
                    boundary_vertex[b] = true;
                }
            }
        }
        Mesh { id: MeshId::fresh(), vertices, triangles, generation, lineage, topology, boundary_vertex }
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn generation(&self) -> &[u32] {
        &self.generation
    }

    pub fn lineage(&self) -> Option<&Lineage> {
        self.lineage.as_ref()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.topology.n_edges()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_edge_flags(&self) -> Vec<bool> {
        (0..self.n_edges()).map(|e| self.topology.is_boundary(e)).collect()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// Writes the mesh as plain text: `V T`, then `x y` per vertex, then
    /// `i j k r` per triangle with `r` the local refinement-edge index.
    pub fn export(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.n_vertices(), self.n_triangles()));
        for [x, y] in &self.vertices {
            out.push_str(&format!("{x:?} {y:?}\n"));
        }
        for [a, b, c] in &self.triangles {
            out.push_str(&format!("{a} {b} {c} 0\n"));
        }
        out
    }

    pub fn import(text: &str) -> Result<Mesh, MeshError> {
        let err = |m: &str| MeshError::Parse(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| err("missing header"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| err("bad header")))
            .collect::<Result<_, _>>()?;
        let [nv, nt] = counts[..] else { return Err(err("header must be `V T`")) };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| err("missing vertex line"))?;
            let xy: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| err("bad coordinate")))
                .collect::<Result<_, _>>()?;
            let [x, y] = xy[..] else { return Err(err("vertex line must be `x y`")) };
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| err("missing triangle line"))?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| err("bad index")))
                .collect::<Result<_, _>>()?;
            let [i, j, k, r] = ids[..] else { return Err(err("triangle line must be `i j k r`")) };
            if i.max(j).max(k) >= nv || r > 2 {
                return Err(err("index out of range"));
            }
            let t = [i, j, k];
            triangles.push([t[r], t[(r + 1) % 3], t[(r + 2) % 3]]);
        }
        if lines.next().is_some() {
            return Err(err("trailing content"));
        }
        Ok(Mesh::from_parts(vertices, triangles, vec![0; nt]))
    }
}

pub(crate) fn signed_area(vertices: &[Point], t: [usize; 3]) -> f64 {
    let [a, b, c] = t.map(|i| vertices[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// L-shaped domain (-1,1)^2 \ [0,1)^2 as three unit squares, each cut by the
/// diagonal through the re-entrant corner.
pub fn make_l_shape_initial() -> Mesh {
    let vertices = vec![
        [-1.0, -1.0],
        [0.0, -1.0],
        [1.0, -1.0],
        [-1.0, 0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [-1.0, 1.0],
        [0.0, 1.0],
    ];
    let tris = [[0, 1, 4], [0, 4, 3], [1, 2, 4], [2, 5, 4], [3, 4, 6], [4, 7, 6]];
    Mesh::from_triangles(vertices, &tris)
}

/// Unit square split along the diagonal from (0,0) to (1,1).
pub fn make_unit_square_initial() -> Mesh {
    let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    Mesh::from_triangles(vertices, &[[0, 1, 2], [0, 2, 3]])
}

/// Unit square split into four triangles around its midpoint.
pub fn make_criss_cross_square() -> Mesh {
    let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
    Mesh::from_triangles(vertices, &[[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkedSet {
    indices: Vec<usize>,
}

impl MarkedSet {
    pub fn new(mut indices: Vec<usize>, n_elements: usize) -> Result<Self, MeshError> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(MeshError::DuplicateMark(w[0]));
            }
        }
        if let Some(&index) = indices.last() {
            if index >= n_elements {
                return Err(MeshError::MarkedOutOfRange { index, n_elements });
            }
        }
        Ok(MarkedSet { indices })
    }

    pub fn all(n_elements: usize) -> Self {
        MarkedSet { indices: (0..n_elements).collect() }
    }

    pub fn empty() -> Self {
        MarkedSet { indices: Vec::new() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Newest-vertex bisection of all marked triangles plus the closure needed
/// to keep the mesh conforming.
///
/// Closure marks edges: once an edge is marked, the refinement edge of every
/// triangle touching it is marked too. A triangle with a marked refinement
/// edge is bisected once, and its children are bisected again along any
/// other marked edge, which is always a child's refinement edge.
pub fn refine_nvb(mesh: &Mesh, marked: &MarkedSet) -> Result<Mesh, MeshError> {
    if mesh.n_triangles() == 0 {
        return Err(MeshError::Empty);
    }
    if let Some(&index) = marked.indices().last() {
        if index >= mesh.n_triangles() {
            return Err(MeshError::MarkedOutOfRange { index, n_elements: mesh.n_triangles() });
        }
    }
    let topo = mesh.topology();
    let mut edge_marked = vec![false; topo.n_edges()];
    let mut stack = Vec::new();
    for &t in marked.indices() {
        let e = topo.element_edges[t][0];
        if !edge_marked[e] {
            edge_marked[e] = true;
            stack.push(e);
        }
    }
    while let Some(e) = stack.pop() {
        for t in topo.edge_elements[e] {
            if t == usize::MAX {
                continue;
            }
            let r = topo.element_edges[t][0];
            if !edge_marked[r] {
                edge_marked[r] = true;
                stack.push(r);
            }
        }
    }
    if !edge_marked.iter().any(|&m| m) {
        let mut same = mesh.clone();
        same.id = MeshId::fresh();
        same.lineage = Some(Lineage { parent_mesh: mesh.id, parent: (0..mesh.n_triangles() as u32).collect() });
        return Ok(same);
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint = vec![usize::MAX; topo.n_edges()];
    for (e, &[a, b]) in topo.edges.iter().enumerate() {
        if edge_marked[e] {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            midpoint[e] = vertices.len();
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        }
    }

    let bisect = |t: [usize; 3], m: usize| -> ([usize; 3], [usize; 3]) { ([m, t[0], t[1]], [m, t[2], t[0]]) };

    let n_new = mesh.n_triangles() + 3 * edge_marked.iter().filter(|&&m| m).count();
    let mut triangles = Vec::with_capacity(n_new);
    let mut generation = Vec::with_capacity(n_new);
    let mut parent = Vec::with_capacity(n_new);
    for (t, &tri) in mesh.triangles.iter().enumerate() {
        let edges = topo.element_edges[t];
        let g = mesh.generation[t];
        let mut push = |child: [usize; 3], depth: u32| {
            triangles.push(child);
            generation.push(g + depth);
            parent.push(t as u32);
        };
        if !edge_marked[edges[0]] {
            push(tri, 0);
            continue;
        }
        let (left, right) = bisect(tri, midpoint[edges[0]]);
        // left = [m, a, b] carries edge (a, b) = local edge 2 as refinement edge,
        // right = [m, c, a] carries edge (c, a) = local edge 1.
        if edge_marked[edges[2]] {
            let (l0, l1) = bisect(left, midpoint[edges[2]]);
            push(l0, 2);
            push(l1, 2);
        } else {
            push(left, 1);
        }
        if edge_marked[edges[1]] {
            let (r0, r1) = bisect(right, midpoint[edges[1]]);
            push(r0, 2);
            push(r1, 2);
        } else {
            push(right, 1);
        }
    }
    Ok(Mesh::assemble(vertices, triangles, generation, Some(Lineage { parent_mesh: mesh.id, parent })))
}

/// One bisection pass over every triangle.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    refine_nvb(mesh, &MarkedSet::all(mesh.n_triangles())).expect("uniform refinement of a nonempty mesh")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    InvalidVertexIndex { triangle: usize },
    NegativeArea { triangle: usize, area: f64 },
    OversharedEdge { edge: [usize; 2], count: u32 },
    OrientationMismatch { edge: [usize; 2] },
    NonconformingEdge { edge: [usize; 2], hanging_vertex: usize },
    AreaMismatch { element_sum: f64, boundary_enclosed: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidVertexIndex { triangle } => write!(f, "invalid vertex index in triangle {triangle}"),
            Violation::NegativeArea { triangle, area } => {
                write!(f, "negative area: triangle {triangle} has signed area {area:e}")
            }
            Violation::OversharedEdge { edge, count } => write!(f, "edge {edge:?} shared by {count} triangles"),
            Violation::OrientationMismatch { edge } => {
                write!(f, "inconsistent orientation across edge {edge:?}")
            }
            Violation::NonconformingEdge { edge, hanging_vertex } => {
                write!(f, "nonconforming edge: vertex {hanging_vertex} hangs on edge {edge:?}")
            }
            Violation::AreaMismatch { element_sum, boundary_enclosed } => write!(
                f,
                "overlap: element areas sum to {element_sum} but the boundary encloses {boundary_enclosed}"
            ),
        }
    }
}

/// Lists every violated mesh invariant; an empty list means the mesh is a
/// valid conforming triangulation.
pub fn check_conformity(mesh: &Mesh) -> Vec<Violation> {
    let mut report = Vec::new();
    let nv = mesh.n_vertices();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if tri.iter().any(|&v| v >= nv) || tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            report.push(Violation::InvalidVertexIndex { triangle: t });
        }
    }
    if !report.is_empty() {
        return report;
    }
    for t in 0..mesh.n_triangles() {
        let area = mesh.area(t);
        if area <= 0.0 {
            report.push(Violation::NegativeArea { triangle: t, area });
        }
    }
    let topo = mesh.topology();
    // Direction in which triangle t traverses edge e: +1 if from lo to hi.
    let direction = |t: usize, e: usize| -> i32 {
        let tri = mesh.triangles[t];
        let i = (0..3).find(|&i| topo.element_edges[t][i] == e).unwrap();
        if tri[(i + 1) % 3] == topo.edges[e][0] {
            1
        } else {
            -1
        }
    };
    let mut enclosed = 0.0;
    let mut boundary_edges = Vec::new();
    for (e, &edge) in topo.edges.iter().enumerate() {
        match topo.edge_multiplicity[e] {
            1 => {
                let t = topo.edge_elements[e][0];
                let (p, q) = if direction(t, e) > 0 { (edge[0], edge[1]) } else { (edge[1], edge[0]) };
                let (a, b) = (mesh.vertices[p], mesh.vertices[q]);
                enclosed += 0.5 * (a[0] * b[1] - a[1] * b[0]);
                boundary_edges.push(e);
            }
            2 => {
                let [t0, t1] = topo.edge_elements[e];
                if direction(t0, e) == direction(t1, e) {
                    report.push(Violation::OrientationMismatch { edge });
                }
            }
            count => report.push(Violation::OversharedEdge { edge, count }),
        }
    }
    let element_sum = mesh.total_area();
    if (element_sum - enclosed).abs() > 1e-12 * element_sum.abs().max(1.0) {
        report.push(Violation::AreaMismatch { element_sum, boundary_enclosed: enclosed });
    }
    report.extend(hanging_nodes(mesh, &boundary_edges));
    report
}

/// Vertices lying strictly inside a single-sided edge.
fn hanging_nodes(mesh: &Mesh, boundary_edges: &[usize]) -> Vec<Violation> {
    let topo = mesh.topology();
    let mut candidates: Vec<usize> = boundary_edges.iter().flat_map(|&e| topo.edges[e]).collect();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.is_empty() {
        return Vec::new();
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &v in &candidates {
        for d in 0..2 {
            lo[d] = lo[d].min(mesh.vertices[v][d]);
            hi[d] = hi[d].max(mesh.vertices[v][d]);
        }
    }
    let cells = ((candidates.len() as f64).sqrt().ceil() as usize).max(1);
    let size = [((hi[0] - lo[0]) / cells as f64).max(1e-300), ((hi[1] - lo[1]) / cells as f64).max(1e-300)];
    let cell_of = |p: Point| -> [usize; 2] {
        [0, 1].map(|d| (((p[d] - lo[d]) / size[d]).floor().max(0.0) as usize).min(cells - 1))
    };
    let mut grid: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
    for &v in &candidates {
        grid.entry(cell_of(mesh.vertices[v])).or_default().push(v);
    }
    let mut found = Vec::new();
    for &e in boundary_edges {
        let [a, b] = topo.edges[e];
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let (ca, cb) = (cell_of(pa), cell_of(pb));
        let len2 = dist2(pa, pb);
        for i in ca[0].min(cb[0])..=ca[0].max(cb[0]) {
            for j in ca[1].min(cb[1])..=ca[1].max(cb[1]) {
                let Some(bucket) = grid.get(&[i, j]) else { continue };
                for &v in bucket {
                    if v == a || v == b {
                        continue;
                    }
                    let p = mesh.vertices[v];
                    let d = [pb[0] - pa[0], pb[1] - pa[1]];
                    let r = [p[0] - pa[0], p[1] - pa[1]];
                    let cross = d[0] * r[1] - d[1] * r[0];
                    let dot = d[0] * r[0] + d[1] * r[1];
                    if cross.abs() <= 1e-12 * len2 && dot > 1e-12 * len2 && dot < (1.0 - 1e-12) * len2 {
                        found.push(Violation::NonconformingEdge { edge: [a, b], hanging_vertex: v });
                    }
                }
            }
        }
    }
    found
}

/// Smallest interior angle over all triangles, in degrees.
pub fn min_angle(mesh: &Mesh) -> f64 {
    let mut min = f64::INFINITY;
    for t in 0..mesh.n_triangles() {
        let p = mesh.corners(t);
        for i in 0..3 {
            let (o, u, w) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
            let a = [u[0] - o[0], u[1] - o[1]];
            let b = [w[0] - o[0], w[1] - o[1]];
            let cos = (a[0] * b[0] + a[1] * b[1]) / (dist2(u, o).sqrt() * dist2(w, o).sqrt());
            min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler(mesh: &Mesh) -> i64 {
        mesh.n_vertices() as i64 - mesh.n_edges() as i64 + mesh.n_triangles() as i64
    }

    #[test]
    fn l_shape_counts() {
        let m = make_l_shape_initial();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_edges()), (8, 6, 13));
        assert_eq!(euler(&m), 1);
        assert!((0..8).all(|v| m.is_boundary_vertex(v)));
        assert!((m.total_area() - 3.0).abs() < 1e-12);
        assert!(check_conformity(&m).is_empty());
        assert!((min_angle(&m) - 45.0).abs() < 1e-12);
    }

    #[test]
    fn l_shape_vertices_lie_on_the_boundary() {
        let on_boundary = |[x, y]: Point| {
            let on_outer = x == -1.0 || y == -1.0 || (x == 1.0 && y <= 0.0) || (y == 1.0 && x <= 0.0);
            let on_notch = (x == 0.0 && y >= 0.0) || (y == 0.0 && x >= 0.0);
            on_outer || on_notch
        };
        assert!(make_l_shape_initial().vertices().iter().all(|&p| on_boundary(p)));
    }

    #[test]
    fn unit_square_counts_and_refinement() {
        let m = make_unit_square_initial();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_edges()), (4, 2, 5));
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        for t in 0..2 {
            let [_, b, c] = m.triangles()[t];
            let mut e = [b, c];
            e.sort();
            assert_eq!(e, [0, 2], "refinement edge must be the diagonal");
        }
        let fine = refine_uniform(&m);
        assert_eq!((fine.n_triangles(), fine.n_vertices(), fine.n_edges()), (4, 5, 8));
        assert!(check_conformity(&fine).is_empty());
    }

    #[test]
    fn marking_one_triangle_forces_its_neighbour() {
        let m = make_unit_square_initial();
        let fine = refine_nvb(&m, &MarkedSet::new(vec![0], 2).unwrap()).unwrap();
        assert_eq!(fine.n_triangles(), 4);
        assert!(check_conformity(&fine).is_empty());
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = refine_uniform(&make_l_shape_initial());
        let same = refine_nvb(&m, &MarkedSet::empty()).unwrap();
        assert_eq!(same.export(), m.export());
    }

    #[test]
    fn refining_an_empty_mesh_fails() {
        let m = Mesh::from_parts(vec![], vec![], vec![]);
        assert_eq!(refine_nvb(&m, &MarkedSet::empty()).unwrap_err(), MeshError::Empty);
    }

    #[test]
    fn marked_set_rejects_bad_indices() {
        assert_eq!(MarkedSet::new(vec![1, 1], 3), Err(MeshError::DuplicateMark(1)));
        assert_eq!(
            MarkedSet::new(vec![3], 3),
            Err(MeshError::MarkedOutOfRange { index: 3, n_elements: 3 })
        );
    }

    #[test]
    fn flipped_triangle_is_reported() {
        let m = make_l_shape_initial();
        let mut tris = m.triangles().to_vec();
        tris[2].swap(1, 2);
        let broken = Mesh::from_parts(m.vertices().to_vec(), tris, vec![0; 6]);
        let report = check_conformity(&broken);
        assert!(report.iter().any(|v| matches!(v, Violation::NegativeArea { triangle: 2, .. })));
        assert!(report.iter().any(|v| v.to_string().starts_with("negative area")));
    }

    #[test]
    fn hanging_node_is_reported() {
        // Bisect triangle 0 of the unit square without touching its neighbour.
        let m = make_unit_square_initial();
        let [a, b, c] = m.triangles()[0];
        let mut vertices = m.vertices().to_vec();
        vertices.push([0.5, 0.5]);
        let mid = 4;
        let tris = vec![[mid, a, b], [mid, c, a], m.triangles()[1]];
        let broken = Mesh::from_parts(vertices, tris, vec![1, 1, 0]);
        let report = check_conformity(&broken);
        assert!(
            report.iter().any(|v| matches!(v, Violation::NonconformingEdge { hanging_vertex: 4, .. })),
            "{report:?}"
        );
        assert!(report.iter().any(|v| v.to_string().starts_with("nonconforming edge")));
    }

    #[test]
    fn overlapping_copy_is_reported() {
        let m = make_unit_square_initial();
        let mut tris = m.triangles().to_vec();
        tris.push(tris[0]);
        let broken = Mesh::from_parts(m.vertices().to_vec(), tris, vec![0; 3]);
        assert!(!check_conformity(&broken).is_empty());
    }

    #[test]
    fn min_angle_stabilises_under_uniform_refinement() {
        let mut m = make_unit_square_initial();
        assert!((min_angle(&m) - 45.0).abs() < 1e-12);
        let mut after_two = 0.0;
        for pass in 1..=10 {
            m = refine_uniform(&m);
            if pass == 2 {
                after_two = min_angle(&m);
            }
        }
        assert!((min_angle(&m) - after_two).abs() < 1e-9);
    }

    #[test]
    fn uniform_refinement_doubles_and_nests() {
        let coarse = refine_uniform(&make_l_shape_initial());
        let fine = refine_uniform(&coarse);
        assert_eq!(fine.n_triangles(), 2 * coarse.n_triangles());
        let lineage = fine.lineage().unwrap();
        assert_eq!(lineage.parent_mesh, coarse.id());
        let mut child_area = vec![0.0; coarse.n_triangles()];
        for (t, &p) in lineage.parent.iter().enumerate() {
            child_area[p as usize] += fine.area(t);
            assert_eq!(fine.generation()[t], coarse.generation()[p as usize] + 1);
        }
        for (t, a) in child_area.iter().enumerate() {
            assert!((a - coarse.area(t)).abs() <= 1e-12 * coarse.area(t));
        }
    }

    #[test]
    fn export_import_roundtrip_is_byte_stable() {
        let m = refine_nvb(&make_l_shape_initial(), &MarkedSet::new(vec![1, 4], 6).unwrap()).unwrap();
        let text = m.export();
        let back = Mesh::import(&text).unwrap();
        assert_eq!(back.export(), text);
        assert!(check_conformity(&back).is_empty());
    }

    #[test]
    fn import_honours_refinement_edge_index() {
        let text = "3 1\n0 0\n1 0\n0 1\n0 1 2 1\n";
        let m = Mesh::import(text).unwrap();
        assert_eq!(m.triangles()[0], [1, 2, 0]);
        assert!(Mesh::import("3 1\n0 0\n1 0\n0 1\n0 1 5 0\n").is_err());
        assert!(Mesh::import("3\n").is_err());
    }
}
