//! Least-squares system matrix and right-hand sides over RT0 x S1_0.
//!
//! All forms share the unified weighting
//! `A(p,u; q,v) = w1^2 C_F^2 (div p, div q) + (a p - b grad u, a q - b grad v)`.

pub mod problem;
pub mod quadrature;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem_space::{local_flux, local_gradient, AffineFlux, DiscreteSolution, DofMap, Element, FemError};
use crate::linear_solver::CsrMatrix;
use crate::mesh::{Mesh, MeshId, Point};
use crate::nonlinearity::{Nonlinearity, WeightedScheme};

pub use problem::{DataQuadrature, Domain, ProblemSpec, ScalarField, VectorField, C_F_L_SHAPE};
pub use quadrature::{quadrature_rule, QuadRule};

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("no quadrature rule of degree {0}; supported degrees are 1 to 4")]
    UnsupportedDegree(usize),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Gram matrix of the least-squares form for one mesh and weighting.
#[derive(Clone, Debug)]
pub struct SparseSpdSystem {
    pub matrix: CsrMatrix,
    pub mesh_id: MeshId,
}

impl SparseSpdSystem {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// The six local shape functions of a triangle (three RT, three hat
/// functions) as `div` and the affine test field `a q - b grad v`.
#[derive(Clone, Copy, Debug)]
struct LocalBasis {
    div: [f64; 6],
    test: [AffineFlux; 6],
}

impl LocalBasis {
    fn new(el: &Element, signs: [f64; 3], scheme: &WeightedScheme) -> Self {
        let mut div = [0.0; 6];
        let mut test = [AffineFlux::default(); 6];
        for i in 0..3 {
            let (alpha, beta) = el.rt_basis(i);
            let s = signs[i];
            div[i] = s * 2.0 * beta;
            test[i] = AffineFlux { alpha: [scheme.a * s * alpha[0], scheme.a * s * alpha[1]], beta: scheme.a * s * beta };
            let g = el.grad_lambda[i];
            test[3 + i] = AffineFlux { alpha: [-scheme.b * g[0], -scheme.b * g[1]], beta: 0.0 };
        }
        LocalBasis { div, test }
    }
}

/// Edge-midpoint rule on a physical triangle, exact for quadratics.
pub fn midpoint_rule(el: &Element) -> [(Point, f64); 3] {
    [0, 1, 2].map(|i| (el.edge_midpoint(i), el.area / 3.0))
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn element_matrix(el: &Element, signs: [f64; 3], scheme: &WeightedScheme, c_f: f64) -> [[f64; 6]; 6] {
    let basis = LocalBasis::new(el, signs, scheme);
    let wd = scheme.w1_sq * c_f * c_f * el.area;
    let quad = midpoint_rule(el);
    let values: Vec<[[f64; 2]; 6]> = quad.iter().map(|&(x, _)| basis.test.map(|f| f.at(x))).collect();
    let mut m = [[0.0; 6]; 6];
    for k in 0..6 {
        for l in k..6 {
            let mut v = wd * basis.div[k] * basis.div[l];
            for (q, &(_, w)) in quad.iter().enumerate() {
                v += w * dot(values[q][k], values[q][l]);
            }
            m[k][l] = v;
            m[l][k] = v;
        }
    }
    m
}

fn check_dofmap(mesh: &Mesh, dofmap: &DofMap) -> Result<(), AssemblyError> {
    if dofmap.mesh_id() != mesh.id() {
        return Err(FemError::MeshMismatch { expected: mesh.id(), found: dofmap.mesh_id() }.into());
    }
    Ok(())
}

pub fn assemble_system(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
) -> Result<SparseSpdSystem, AssemblyError> {
    check_dofmap(mesh, dofmap)?;
    let locals: Vec<[[f64; 6]; 6]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| element_matrix(&Element::new(mesh, t), dofmap.rt_sign[t], scheme, c_f))
        .collect();
    let mut triplets = Vec::with_capacity(36 * mesh.n_triangles());
    for (t, m) in locals.iter().enumerate() {
        let dofs = dofmap.local_dofs(mesh, t);
        for k in 0..6 {
            let Some(i) = dofs[k] else { continue };
            for l in 0..6 {
                if let Some(j) = dofs[l] {
                    triplets.push((i, j, m[k][l]));
                }
            }
        }
    }
    Ok(SparseSpdSystem { matrix: CsrMatrix::from_triplets(dofmap.n_dofs(), &triplets), mesh_id: mesh.id() })
}

/// Load vector `l_i = sum_T w1^2 C_F^2 (r_d, div phi_i)_T + (r_c, a q_i - b grad v_i)_T`
/// for element residuals `(r_d, r_c)` evaluated pointwise.
pub fn assemble_residual_load<R>(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
    quad: &DataQuadrature,
    residual: R,
) -> Vec<f64>
where
    R: Fn(usize, &Element, Point) -> (f64, [f64; 2]) + Sync,
{
    let wd = scheme.w1_sq * c_f * c_f;
    let locals: Vec<[f64; 6]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map_init(Vec::new, |pts, t| {
            let el = Element::new(mesh, t);
            let basis = LocalBasis::new(&el, dofmap.rt_sign[t], scheme);
            quad.points(&el, pts);
            let mut out = [0.0; 6];
            for &(x, w) in pts.iter() {
                let (rd, rc) = residual(t, &el, x);
                for k in 0..6 {
                    out[k] += w * (wd * rd * basis.div[k] + dot(rc, basis.test[k].at(x)));
                }
            }
            out
        })
        .collect();
    let mut load = vec![0.0; dofmap.n_dofs()];
    for (t, l) in locals.iter().enumerate() {
        for (k, dof) in dofmap.local_dofs(mesh, t).iter().enumerate() {
            if let Some(i) = dof {
                load[*i] += l[k];
            }
        }
    }
    load
}

/// Per-element state of a discrete pair: flux, gradient and `sigma(grad u)`.
#[derive(Clone, Copy, Debug)]
pub struct ElementState {
    pub flux: AffineFlux,
    pub grad: [f64; 2],
    pub sigma: [f64; 2],
}

pub fn element_states(mesh: &Mesh, dofmap: &DofMap, sol: &DiscreteSolution, nl: &Nonlinearity) -> Vec<ElementState> {
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let el = Element::new(mesh, t);
            let grad = local_gradient(&el, mesh, dofmap, t, &sol.s1_coeffs);
            ElementState { flux: local_flux(&el, dofmap, t, &sol.rt_coeffs), grad, sigma: nl.sigma(grad) }
        })
        .collect()
}

/// Right-hand side of one damped step:
/// `A(prev; .) + delta [F(.) - B(prev; .)]` with
/// `B(p,u; q,v) = w1^2 C_F^2 (div p, div q) + (p - sigma(grad u), a q - b grad v)` and
/// `F(q,v) = -w1^2 C_F^2 (f1, div q) - (f2, a q - b grad v)`.
pub fn assemble_zarantonello_rhs(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
    delta: f64,
    prev: &DiscreteSolution,
    problem: &ProblemSpec,
) -> Result<Vec<f64>, AssemblyError> {
    check_dofmap(mesh, dofmap)?;
    prev.check(dofmap)?;
    let states = element_states(mesh, dofmap, prev, &problem.nonlinearity);
    let quad = problem.data_quadrature();
    let (a, b) = (scheme.a, scheme.b);
    Ok(assemble_residual_load(mesh, dofmap, scheme, c_f, &quad, |t, _, x| {
        let s = &states[t];
        let div = s.flux.div();
        let p = s.flux.at(x);
        let f2 = problem.f2.eval(x);
        let rd = div - delta * (problem.f1.eval(x) + div);
        let rc = [0, 1].map(|d| a * p[d] - b * s.grad[d] - delta * (f2[d] + p[d] - s.sigma[d]));
        (rd, rc)
    }))
}

/// Right-hand side of the linear least-squares problem with data `(g1, g2)`:
/// `-C_F^2 (g1, w1 div q) - (g2, a q - b grad v)`.
pub fn assemble_linear_ls_rhs(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
    g1: &ScalarField,
    g2: &VectorField,
) -> Result<Vec<f64>, AssemblyError> {
    check_dofmap(mesh, dofmap)?;
    let quad = DataQuadrature::new(&[g1]);
    let w1 = scheme.w1();
    Ok(assemble_residual_load(mesh, dofmap, scheme, c_f, &quad, |_, _, x| {
        let g = g2.eval(x);
        (-g1.eval(x) / w1, [-g[0], -g[1]])
    }))
}

/// The functional `B(p,u; .)` tested with every basis function.
pub fn assemble_b_vector(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
    sol: &DiscreteSolution,
    nl: &Nonlinearity,
) -> Result<Vec<f64>, AssemblyError> {
    check_dofmap(mesh, dofmap)?;
    sol.check(dofmap)?;
    let states = element_states(mesh, dofmap, sol, nl);
    let quad = DataQuadrature::new(&[]);
    Ok(assemble_residual_load(mesh, dofmap, scheme, c_f, &quad, |t, _, x| {
        let s = &states[t];
        let p = s.flux.at(x);
        (s.flux.div(), [p[0] - s.sigma[0], p[1] - s.sigma[1]])
    }))
}

/// `w1^2 C_F^2 ||div p||^2 + ||a p||^2 + ||b grad u||^2`.
pub fn weighted_norm_sq(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
    sol: &DiscreteSolution,
) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| {
            let el = Element::new(mesh, t);
            let flux = local_flux(&el, dofmap, t, &sol.rt_coeffs);
            let grad = local_gradient(&el, mesh, dofmap, t, &sol.s1_coeffs);
            let p2: f64 = midpoint_rule(&el).iter().map(|&(x, w)| w * dot(flux.at(x), flux.at(x))).sum();
            scheme.w1_sq * c_f * c_f * el.area * flux.div().powi(2)
                + scheme.a * scheme.a * p2
                + scheme.b * scheme.b * el.area * dot(grad, grad)
        })
        .sum()
}
