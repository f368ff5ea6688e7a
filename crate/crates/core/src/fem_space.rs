//! Lowest-order Raviart-Thomas fluxes and continuous piecewise-linear
//! potentials with homogeneous Dirichlet data.

use std::collections::HashMap;

use thiserror::Error;

use crate::mesh::{Mesh, MeshId, Point};

#[derive(Debug, Error, PartialEq)]
pub enum FemError {
    #[error("point ({x}, {y}) lies outside triangle {triangle}")]
    OutsideTriangle { triangle: usize, x: f64, y: f64 },
    #[error("solution belongs to mesh {found:?}, expected {expected:?}")]
    MeshMismatch { expected: MeshId, found: MeshId },
    #[error("coefficient lengths ({rt}, {s1}) do not match the dof map ({n_rt}, {n_s1})")]
    LengthMismatch { rt: usize, s1: usize, n_rt: usize, n_s1: usize },
    #[error("fine mesh is not a refinement of the coarse mesh: {0}")]
    NotDescendant(String),
}

#[derive(Clone, Debug)]
pub struct DofMap {
    mesh_id: MeshId,
    /// Global edges, lexicographically ordered sorted vertex pairs.
    pub edge_list: Vec<[usize; 2]>,
    /// Global RT index of each local edge (equal to the global edge index).
    pub element_edges: Vec<[usize; 3]>,
    /// Orientation factor of each local RT basis function.
    pub rt_sign: Vec<[f64; 3]>,
    /// Lagrange index of each mesh vertex, `None` on the boundary.
    pub interior_vertex_index: Vec<Option<usize>>,
    pub n_rt: usize,
    pub n_s1: usize,
}

impl DofMap {
    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    pub fn n_dofs(&self) -> usize {
        self.n_rt + self.n_s1
    }

    /// Global index (in the stacked RT then S1 numbering) of the six local
    /// basis functions of a triangle; boundary vertices map to `None`.
    pub fn local_dofs(&self, mesh: &Mesh, t: usize) -> [Option<usize>; 6] {
        let e = self.element_edges[t];
        let v = mesh.triangles()[t].map(|v| self.interior_vertex_index[v].map(|j| self.n_rt + j));
        [Some(e[0]), Some(e[1]), Some(e[2]), v[0], v[1], v[2]]
    }
}

/// Normal orientation: outward on boundary edges, otherwise pointing from the
/// lower-indexed into the higher-indexed adjacent triangle.
pub fn build_dof_map(mesh: &Mesh) -> DofMap {
    let topo = mesh.topology();
    let rt_sign = topo
        .element_edges
        .iter()
        .enumerate()
        .map(|(t, edges)| {
            edges.map(|e| {
                let [t0, t1] = topo.edge_elements[e];
                if t1 == usize::MAX || t0 == t {
                    1.0
                } else {
                    -1.0
                }
            })
        })
        .collect();
    let mut n_s1 = 0;
    let interior_vertex_index = (0..mesh.n_vertices())
        .map(|v| {
            if mesh.is_boundary_vertex(v) {
                None
            } else {
                n_s1 += 1;
                Some(n_s1 - 1)
            }
        })
        .collect();
    DofMap {
        mesh_id: mesh.id(),
        edge_list: topo.edges.clone(),
        element_edges: topo.element_edges.clone(),
        rt_sign,
        interior_vertex_index,
        n_rt: topo.n_edges(),
        n_s1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSolution {
    pub rt_coeffs: Vec<f64>,
    pub s1_coeffs: Vec<f64>,
    pub mesh_id: MeshId,
}

impl DiscreteSolution {
    pub fn zero(dofmap: &DofMap) -> Self {
        DiscreteSolution { rt_coeffs: vec![0.0; dofmap.n_rt], s1_coeffs: vec![0.0; dofmap.n_s1], mesh_id: dofmap.mesh_id }
    }

    /// Splits a stacked coefficient vector (RT first, then S1).
    pub fn from_stacked(dofmap: &DofMap, x: &[f64]) -> Self {
        assert_eq!(x.len(), dofmap.n_dofs());
        DiscreteSolution {
            rt_coeffs: x[..dofmap.n_rt].to_vec(),
            s1_coeffs: x[dofmap.n_rt..].to_vec(),
            mesh_id: dofmap.mesh_id,
        }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut x = self.rt_coeffs.clone();
        x.extend_from_slice(&self.s1_coeffs);
        x
    }

    pub fn check(&self, dofmap: &DofMap) -> Result<(), FemError> {
        if self.mesh_id != dofmap.mesh_id {
            return Err(FemError::MeshMismatch { expected: dofmap.mesh_id, found: self.mesh_id });
        }
        if self.rt_coeffs.len() != dofmap.n_rt || self.s1_coeffs.len() != dofmap.n_s1 {
            return Err(FemError::LengthMismatch {
                rt: self.rt_coeffs.len(),
                s1: self.s1_coeffs.len(),
                n_rt: dofmap.n_rt,
                n_s1: dofmap.n_s1,
            });
        }
        Ok(())
    }

    /// Plain-text snapshot: `k ell n_rt n_s1`, then one coefficient per line.
    pub fn export(&self, k: usize, ell: usize, flux_sign: f64) -> String {
        let mut out = format!("{k} {ell} {} {}\n", self.rt_coeffs.len(), self.s1_coeffs.len());
        for c in &self.rt_coeffs {
            out.push_str(&format!("{:?}\n", flux_sign * c));
        }
        for c in &self.s1_coeffs {
            out.push_str(&format!("{c:?}\n"));
        }
        out
    }
}

/// Geometric data of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct Element {
    pub corners: [Point; 3],
    pub area: f64,
    /// Length of local edge `i`, opposite corner `i`.
    pub edge_len: [f64; 3],
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
}

impl Element {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        Self::from_corners(mesh.corners(t))
    }

    pub fn from_corners(corners: [Point; 3]) -> Self {
        let [p0, p1, p2] = corners;
        let area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]));
        let mut edge_len = [0.0; 3];
        let mut grad_lambda = [[0.0; 2]; 3];
        for i in 0..3 {
            let (a, b) = (corners[(i + 1) % 3], corners[(i + 2) % 3]);
            edge_len[i] = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            grad_lambda[i] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
        }
        Element { corners, area, edge_len, grad_lambda }
    }

    pub fn centroid(&self) -> Point {
        let [a, b, c] = self.corners;
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let mut l = [0.0; 3];
        for i in 0..3 {
            let o = self.corners[(i + 1) % 3];
            l[i] = self.grad_lambda[i][0] * (x[0] - o[0]) + self.grad_lambda[i][1] * (x[1] - o[1]);
        }
        l
    }

    pub fn contains(&self, x: Point, tol: f64) -> bool {
        self.barycentric(x).iter().all(|&l| l >= -tol)
    }

    /// Outward unit normal of local edge `i`.
    pub fn outward_normal(&self, i: usize) -> [f64; 2] {
        let g = self.grad_lambda[i];
        let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
        [-g[0] / n, -g[1] / n]
    }

    pub fn edge_midpoint(&self, i: usize) -> Point {
        let (a, b) = (self.corners[(i + 1) % 3], self.corners[(i + 2) % 3]);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Local RT basis function `i` without orientation sign, as `(alpha, beta)`
    /// with value `alpha + beta * x`.
    pub fn rt_basis(&self, i: usize) -> ([f64; 2], f64) {
        let beta = self.edge_len[i] / (2.0 * self.area);
        let p = self.corners[i];
        ([-beta * p[0], -beta * p[1]], beta)
    }
}

/// An affine flux `alpha + beta * x` on one triangle.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AffineFlux {
    pub alpha: [f64; 2],
    pub beta: f64,
}

impl AffineFlux {
    pub fn at(&self, x: Point) -> [f64; 2] {
        [self.alpha[0] + self.beta * x[0], self.alpha[1] + self.beta * x[1]]
    }

    pub fn div(&self) -> f64 {
        2.0 * self.beta
    }
}

pub fn local_flux(el: &Element, dofmap: &DofMap, t: usize, rt_coeffs: &[f64]) -> AffineFlux {
    let mut f = AffineFlux::default();
    for i in 0..3 {
        let c = dofmap.rt_sign[t][i] * rt_coeffs[dofmap.element_edges[t][i]];
        let (a, b) = el.rt_basis(i);
        f.alpha[0] += c * a[0];
        f.alpha[1] += c * a[1];
        f.beta += c * b;
    }
    f
}

pub fn local_gradient(el: &Element, mesh: &Mesh, dofmap: &DofMap, t: usize, s1_coeffs: &[f64]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (i, &v) in mesh.triangles()[t].iter().enumerate() {
        if let Some(j) = dofmap.interior_vertex_index[v] {
            g[0] += s1_coeffs[j] * el.grad_lambda[i][0];
            g[1] += s1_coeffs[j] * el.grad_lambda[i][1];
        }
    }
    g
}

pub fn local_potential(el: &Element, mesh: &Mesh, dofmap: &DofMap, t: usize, s1_coeffs: &[f64], x: Point) -> f64 {
    let l = el.barycentric(x);
    mesh.triangles()[t]
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| dofmap.interior_vertex_index[v].map(|j| s1_coeffs[j] * l[i]))
        .sum()
}

const INSIDE_TOL: f64 = 1e-10;

pub fn eval_rt0(mesh: &Mesh, dofmap: &DofMap, t: usize, rt_coeffs: &[f64], x: Point) -> Result<[f64; 2], FemError> {
    let el = Element::new(mesh, t);
    if !el.contains(x, INSIDE_TOL) {
        return Err(FemError::OutsideTriangle { triangle: t, x: x[0], y: x[1] });
    }
    Ok(local_flux(&el, dofmap, t, rt_coeffs).at(x))
}

pub fn div_rt0(mesh: &Mesh, dofmap: &DofMap, t: usize, rt_coeffs: &[f64]) -> f64 {
    local_flux(&Element::new(mesh, t), dofmap, t, rt_coeffs).div()
}

pub fn grad_s1(mesh: &Mesh, dofmap: &DofMap, t: usize, s1_coeffs: &[f64]) -> [f64; 2] {
    local_gradient(&Element::new(mesh, t), mesh, dofmap, t, s1_coeffs)
}

pub fn eval_s1(mesh: &Mesh, dofmap: &DofMap, t: usize, s1_coeffs: &[f64], x: Point) -> Result<f64, FemError> {
    let el = Element::new(mesh, t);
    if !el.contains(x, INSIDE_TOL) {
        return Err(FemError::OutsideTriangle { triangle: t, x: x[0], y: x[1] });
    }
    Ok(local_potential(&el, mesh, dofmap, t, s1_coeffs, x))
}

/// Bucket grid over triangle bounding boxes for point location.
pub struct TriangleLocator<'a> {
    mesh: &'a Mesh,
    lo: [f64; 2],
    size: [f64; 2],
    cells: usize,
    buckets: HashMap<(usize, usize), Vec<usize>>,
}

impl<'a> TriangleLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.vertices() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let cells = ((mesh.n_triangles() as f64).sqrt().ceil() as usize).max(1);
        let size = [0, 1].map(|d| ((hi[d] - lo[d]) / cells as f64).max(1e-300));
        let mut loc = TriangleLocator { mesh, lo, size, cells, buckets: HashMap::new() };
        for t in 0..mesh.n_triangles() {
            let c = mesh.corners(t);
            let (mut blo, mut bhi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in c {
                for d in 0..2 {
                    blo[d] = blo[d].min(p[d]);
                    bhi[d] = bhi[d].max(p[d]);
                }
            }
            let (a, b) = (loc.cell(blo), loc.cell(bhi));
            for i in a.0..=b.0 {
                for j in a.1..=b.1 {
                    loc.buckets.entry((i, j)).or_default().push(t);
                }
            }
        }
        loc
    }

    fn cell(&self, p: Point) -> (usize, usize) {
        let f = |d: usize| (((p[d] - self.lo[d]) / self.size[d]).floor().max(0.0) as usize).min(self.cells - 1);
        (f(0), f(1))
    }

    /// Triangle containing `p` (the lowest index on shared boundaries).
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.buckets
            .get(&self.cell(p))?
            .iter()
            .copied()
            .find(|&t| Element::new(self.mesh, t).contains(p, INSIDE_TOL))
    }
}

/// Coarse triangle containing each fine triangle.
fn coarse_parents(coarse: &Mesh, fine: &Mesh) -> Result<Vec<usize>, FemError> {
    if let Some(lineage) = fine.lineage() {
        if lineage.parent_mesh == coarse.id() {
            return Ok(lineage.parent.iter().map(|&p| p as usize).collect());
        }
    }
    if fine.id() == coarse.id() {
        return Ok((0..fine.n_triangles()).collect());
    }
    let locator = TriangleLocator::new(coarse);
    (0..fine.n_triangles())
        .map(|t| {
            let el = Element::new(fine, t);
            let parent = locator
                .locate(el.centroid())
                .ok_or_else(|| FemError::NotDescendant(format!("fine triangle {t} lies outside the coarse mesh")))?;
            let coarse_el = Element::new(coarse, parent);
            let scale = coarse_el.edge_len.iter().fold(0.0f64, |m, &l| m.max(l));
            if el.corners.iter().all(|&p| coarse_el.contains(p, 1e-9 * scale.max(1.0))) {
                Ok(parent)
            } else {
                Err(FemError::NotDescendant(format!("fine triangle {t} straddles coarse triangles")))
            }
        })
        .collect()
}

/// Represents a coarse discrete function exactly on a refined mesh.
pub fn prolongate(
    sol: &DiscreteSolution,
    coarse: &Mesh,
    coarse_dofmap: &DofMap,
    fine: &Mesh,
    fine_dofmap: &DofMap,
) -> Result<DiscreteSolution, FemError> {
    sol.check(coarse_dofmap)?;
    if coarse_dofmap.mesh_id() != coarse.id() {
        return Err(FemError::MeshMismatch { expected: coarse.id(), found: coarse_dofmap.mesh_id() });
    }
    if fine_dofmap.mesh_id() != fine.id() {
        return Err(FemError::MeshMismatch { expected: fine.id(), found: fine_dofmap.mesh_id() });
    }
    let parent = coarse_parents(coarse, fine)?;
    let coarse_elems: Vec<Element> = (0..coarse.n_triangles()).map(|t| Element::new(coarse, t)).collect();
    let fluxes: Vec<AffineFlux> =
        coarse_elems.iter().enumerate().map(|(t, el)| local_flux(el, coarse_dofmap, t, &sol.rt_coeffs)).collect();

    let mut rt = vec![0.0; fine_dofmap.n_rt];
    let mut done = vec![false; fine_dofmap.n_rt];
    let mut s1 = vec![0.0; fine_dofmap.n_s1];
    for t in 0..fine.n_triangles() {
        let el = Element::new(fine, t);
        let p = parent[t];
        for i in 0..3 {
            let e = fine_dofmap.element_edges[t][i];
            if done[e] {
                continue;
            }
            let n = el.outward_normal(i);
            let s = fine_dofmap.rt_sign[t][i];
            let v = fluxes[p].at(el.edge_midpoint(i));
            rt[e] = s * (v[0] * n[0] + v[1] * n[1]);
            done[e] = true;
        }
        for (i, &v) in fine.triangles()[t].iter().enumerate() {
            if let Some(j) = fine_dofmap.interior_vertex_index[v] {
                s1[j] = local_potential(&coarse_elems[p], coarse, coarse_dofmap, p, &sol.s1_coeffs, el.corners[i]);
            }
        }
    }
    Ok(DiscreteSolution { rt_coeffs: rt, s1_coeffs: s1, mesh_id: fine.id() })
}
