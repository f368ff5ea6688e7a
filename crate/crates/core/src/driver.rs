//! Adaptive loops: the linear least-squares method and the adaptive damped
//! (Zarantonello) iteration with nested meshes.

use std::time::Instant;

use log::{debug, info, warn};
use thiserror::Error;

use crate::assembly::{
    assemble_linear_ls_rhs, assemble_system, assemble_zarantonello_rhs, AssemblyError, ProblemSpec, ScalarField,
    SparseSpdSystem, VectorField,
};
use crate::estimator::{doerfler_mark, eta_k, linear_eta, mu_k, nonlinear_functional, EstimatorError};
use crate::fem_space::{build_dof_map, local_gradient, prolongate, DiscreteSolution, DofMap, Element, FemError};
use crate::linear_solver::{SolverError, SolverKind, SystemSolver};
use crate::mesh::{refine_nvb, Mesh, MeshError, MeshId};
use crate::nonlinearity::{compute_weights, norm, NonlinearityError, Scheme, WeightedScheme};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmParams {
    pub delta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub tau: f64,
    pub max_total_dofs: usize,
    pub max_outer_iters: usize,
    pub scheme: Scheme,
    pub solver: SolverKind,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        AlgorithmParams {
            delta: 1.0,
            gamma: 0.9,
            theta: 0.3,
            tau: 0.0,
            max_total_dofs: 200_000,
            max_outer_iters: 60,
            scheme: Scheme::EmphasizedGradient,
            solver: SolverKind::Cholesky,
        }
    }
}

impl AlgorithmParams {
    pub fn validate(&self) -> Result<(), DriverError> {
        let bad = |m: String| Err(DriverError::InvalidParams(m));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return bad(format!("tau must be nonnegative, got {}", self.tau));
        }
        if self.max_total_dofs == 0 || self.max_outer_iters == 0 {
            return bad("budgets must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub k: usize,
    pub ell: usize,
    pub n_elem: usize,
    pub n_rt: usize,
    pub n_s1: usize,
    pub eta: f64,
    pub mu: f64,
    /// Nonlinear least-squares functional (square root); absent for linear runs.
    pub n_functional: Option<f64>,
    pub grad_inf: f64,
    pub marked: usize,
    pub accepted: bool,
    pub mesh_id: MeshId,
    pub wall_ms: f64,
}

impl RunRow {
    pub fn n_dofs(&self) -> usize {
        self.n_rt + self.n_s1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// The linear estimator reached the tolerance.
    Tolerance,
    /// The next mesh would exceed the degree-of-freedom budget.
    DofBudget,
    /// The outer iteration budget was used up.
    OuterBudget,
    /// The system on the next mesh could not be factorized in floating
    /// point, typically after refinement collapsed elements to roundoff size.
    Breakdown,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub termination: Termination,
    pub factorizations: usize,
    pub weights: WeightedScheme,
    pub final_mesh: Mesh,
    pub final_solution: DiscreteSolution,
}

impl RunRecord {
    pub fn budget_exhausted(&self) -> bool {
        self.termination != Termination::Tolerance
    }

    pub fn accepted_rows(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(|r| r.accepted)
    }
}

/// Everything known right after one linear solve.
pub struct SolveEvent<'a> {
    pub k: usize,
    pub ell: usize,
    pub mesh: &'a Mesh,
    pub dofmap: &'a DofMap,
    pub system: &'a SparseSpdSystem,
    pub prev: &'a DiscreteSolution,
    pub current: &'a DiscreteSolution,
    pub weights: &'a WeightedScheme,
    pub c_f: f64,
    pub delta: f64,
}

pub trait RunObserver {
    fn on_solve(&mut self, _event: &SolveEvent<'_>) -> Result<(), DriverError> {
        Ok(())
    }

    fn on_row(&mut self, _row: &RunRow) {}
}

impl RunObserver for () {}

struct Level {
    mesh: Mesh,
    dofmap: DofMap,
    system: SparseSpdSystem,
    solver: SystemSolver,
}

impl Level {
    fn new(mesh: Mesh, weights: &WeightedScheme, c_f: f64, kind: SolverKind) -> Result<Self, DriverError> {
        let dofmap = build_dof_map(&mesh);
        let system = assemble_system(&mesh, &dofmap, weights, c_f)?;
        let solver = SystemSolver::new(kind, &system.matrix)?;
        debug!("factorized system of dimension {}", system.dim());
        Ok(Level { mesh, dofmap, system, solver })
    }
}

/// The discrete minimizer of one damped step on the current mesh.
#[allow(clippy::too_many_arguments)]
pub fn zarantonello_step(
    mesh: &Mesh,
    dofmap: &DofMap,
    solver: &SystemSolver,
    weights: &WeightedScheme,
    c_f: f64,
    delta: f64,
    prev: &DiscreteSolution,
    problem: &ProblemSpec,
) -> Result<DiscreteSolution, DriverError> {
    let rhs = assemble_zarantonello_rhs(mesh, dofmap, weights, c_f, delta, prev, problem)?;
    let x = solver.solve(&rhs)?;
    Ok(DiscreteSolution::from_stacked(dofmap, &x))
}

pub fn grad_inf_norm(mesh: &Mesh, dofmap: &DofMap, sol: &DiscreteSolution) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| norm(local_gradient(&Element::new(mesh, t), mesh, dofmap, t, &sol.s1_coeffs)))
        .fold(0.0, f64::max)
}

fn dofs_of(mesh: &Mesh) -> usize {
    let interior = (0..mesh.n_vertices()).filter(|&v| !mesh.is_boundary_vertex(v)).count();
    mesh.n_edges() + interior
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Adaptive damped iteration: for `k = 1, 2, ...` solve the linearized
/// least-squares problem on a sequence of refined meshes until its built-in
/// estimator drops below `gamma^k`, then accept the iterate and keep the mesh.
pub fn run_adaptive_zarantonello(
    problem: &ProblemSpec,
    params: &AlgorithmParams,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord, DriverError> {
    params.validate()?;
    let nl = &problem.nonlinearity;
    let weights = compute_weights(params.scheme, nl.lambda1, nl.lambda2)?;
    run_adaptive_zarantonello_weighted(problem, params, &weights, observer)
}

/// As [`run_adaptive_zarantonello`] with explicitly given weights.
pub fn run_adaptive_zarantonello_weighted(
    problem: &ProblemSpec,
    params: &AlgorithmParams,
    weights: &WeightedScheme,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord, DriverError> {
    params.validate()?;
    let c_f = problem.c_f;
    let delta = params.delta;
    let mut level = Level::new(problem.domain.initial_mesh(), weights, c_f, params.solver)?;
    let mut factorizations = 1;
    let mut prev = DiscreteSolution::zero(&level.dofmap);
    let mut rows = Vec::new();
    for k in 1..=params.max_outer_iters {
        let bound = params.gamma.powi(k as i32);
        let mut ell = 0;
        loop {
            let start = Instant::now();
            let current =
                zarantonello_step(&level.mesh, &level.dofmap, &level.solver, weights, c_f, delta, &prev, problem)?;
            observer.on_solve(&SolveEvent {
                k,
                ell,
                mesh: &level.mesh,
                dofmap: &level.dofmap,
                system: &level.system,
                prev: &prev,
                current: &current,
                weights,
                c_f,
                delta,
            })?;
            let (mesh, dofmap) = (&level.mesh, &level.dofmap);
            let eta = eta_k(mesh, dofmap, weights, c_f, delta, &prev, &current, problem)?;
            let mu = mu_k(mesh, dofmap, weights, c_f, &prev, &current)?.global();
            let n_functional = nonlinear_functional(mesh, dofmap, problem, c_f, &current)?.global();
            let mut row = RunRow {
                k,
                ell,
                n_elem: mesh.n_triangles(),
                n_rt: dofmap.n_rt,
                n_s1: dofmap.n_s1,
                eta: eta.global(),
                mu,
                n_functional: Some(n_functional),
                grad_inf: grad_inf_norm(mesh, dofmap, &current),
                marked: 0,
                accepted: false,
                mesh_id: mesh.id(),
                wall_ms: 0.0,
            };
            if row.eta <= bound {
                row.accepted = true;
                row.wall_ms = elapsed_ms(start);
                info!("k={k} ell={ell} dofs={} eta={:.3e} mu={:.3e} accepted", row.n_dofs(), row.eta, row.mu);
                observer.on_row(&row);
                rows.push(row);
                prev = current;
                break;
            }
            let marked = doerfler_mark(&eta.locals, params.theta)?;
            row.marked = marked.len();
            let fine = refine_nvb(mesh, &marked)?;
            if dofs_of(&fine) > params.max_total_dofs {
                row.wall_ms = elapsed_ms(start);
                info!("k={k} ell={ell}: next mesh exceeds the budget of {} dofs", params.max_total_dofs);
                observer.on_row(&row);
                rows.push(row);
                return Ok(RunRecord {
                    rows,
                    termination: Termination::DofBudget,
                    factorizations,
                    weights: *weights,
                    final_mesh: level.mesh,
                    final_solution: current,
                });
            }
            let next = match Level::new(fine, weights, c_f, params.solver) {
                Err(DriverError::Solver(SolverError::NotSpd)) => {
                    warn!("k={k} ell={ell}: refined system is numerically indefinite, stopping");
                    row.wall_ms = elapsed_ms(start);
                    observer.on_row(&row);
                    rows.push(row);
                    return Ok(RunRecord {
                        rows,
                        termination: Termination::Breakdown,
                        factorizations,
                        weights: *weights,
                        final_mesh: level.mesh,
                        final_solution: current,
                    });
                }
                other => other?,
            };
            factorizations += 1;
            prev = prolongate(&prev, &level.mesh, &level.dofmap, &next.mesh, &next.dofmap)?;
            level = next;
            row.wall_ms = elapsed_ms(start);
            debug!("k={k} ell={ell} eta={:.3e} > {bound:.3e}, marked {}", row.eta, row.marked);
            observer.on_row(&row);
            rows.push(row);
            ell += 1;
        }
    }
    Ok(RunRecord {
        rows,
        termination: Termination::OuterBudget,
        factorizations,
        weights: *weights,
        final_mesh: level.mesh,
        final_solution: prev,
    })
}

/// Data of a linear first-order problem in least-squares form.
#[derive(Clone, Debug)]
pub struct LinearProblem {
    pub domain_mesh: Mesh,
    pub c_f: f64,
    pub g1: ScalarField,
    pub g2: VectorField,
}

/// Adaptive least-squares method for a linear problem: solve, estimate,
/// stop once the estimator is at most `tau`, mark, refine.
pub fn run_alsfem_linear(
    problem: &LinearProblem,
    weights: &WeightedScheme,
    params: &AlgorithmParams,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord, DriverError> {
    if params.tau.is_nan() || params.tau < 0.0 || !(params.theta > 0.0 && params.theta <= 1.0) || params.max_total_dofs == 0 {
        return Err(DriverError::InvalidParams("need tau >= 0, 0 < theta <= 1 and a positive budget".into()));
    }
    let c_f = problem.c_f;
    let mut mesh = problem.domain_mesh.clone();
    let mut rows = Vec::new();
    let mut factorizations = 0;
    for ell in 0.. {
        let start = Instant::now();
        let level = Level::new(mesh, weights, c_f, params.solver)?;
        factorizations += 1;
        let rhs = assemble_linear_ls_rhs(&level.mesh, &level.dofmap, weights, c_f, &problem.g1, &problem.g2)?;
        let current = DiscreteSolution::from_stacked(&level.dofmap, &level.solver.solve(&rhs)?);
        let zero = DiscreteSolution::zero(&level.dofmap);
        observer.on_solve(&SolveEvent {
            k: 0,
            ell,
            mesh: &level.mesh,
            dofmap: &level.dofmap,
            system: &level.system,
            prev: &zero,
            current: &current,
            weights,
            c_f,
            delta: 1.0,
        })?;
        let eta = linear_eta(&level.mesh, &level.dofmap, weights, c_f, &problem.g1, &problem.g2, &current)?;
        let mut row = RunRow {
            k: 0,
            ell,
            n_elem: level.mesh.n_triangles(),
            n_rt: level.dofmap.n_rt,
            n_s1: level.dofmap.n_s1,
            eta: eta.global(),
            mu: 0.0,
            n_functional: None,
            grad_inf: grad_inf_norm(&level.mesh, &level.dofmap, &current),
            marked: 0,
            accepted: false,
            mesh_id: level.mesh.id(),
            wall_ms: 0.0,
        };
        let finish = |mut row: RunRow, accepted: bool, rows: &mut Vec<RunRow>, observer: &mut dyn RunObserver| {
            row.accepted = accepted;
            row.wall_ms = elapsed_ms(start);
            observer.on_row(&row);
            rows.push(row);
        };
        if row.eta <= params.tau {
            finish(row, true, &mut rows, observer);
            return Ok(RunRecord {
                rows,
                termination: Termination::Tolerance,
                factorizations,
                weights: *weights,
                final_mesh: level.mesh,
                final_solution: current,
            });
        }
        let marked = doerfler_mark(&eta.locals, params.theta)?;
        row.marked = marked.len();
        let fine = refine_nvb(&level.mesh, &marked)?;
        if dofs_of(&fine) > params.max_total_dofs {
            finish(row, false, &mut rows, observer);
            return Ok(RunRecord {
                rows,
                termination: Termination::DofBudget,
                factorizations,
                weights: *weights,
                final_mesh: level.mesh,
                final_solution: current,
            });
        }
        info!("linear ell={ell} dofs={} eta={:.3e}", row.n_dofs(), row.eta);
        finish(row, false, &mut rows, observer);
        mesh = fine;
    }
    unreachable!("the refinement loop only exits through a return")
}
