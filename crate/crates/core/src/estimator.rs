//! Built-in a posteriori estimators and Dörfler marking.

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{
    element_states, midpoint_rule, DataQuadrature, ElementState, ProblemSpec, ScalarField, VectorField,
};
use crate::fem_space::{local_flux, local_gradient, DiscreteSolution, DofMap, Element, FemError};
use crate::mesh::{MarkedSet, Mesh, Point};
use crate::nonlinearity::{Nonlinearity, WeightedScheme};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("cannot mark from an empty indicator list")]
    EmptyIndicators,
    #[error("bulk parameter {0} outside (0, 1]")]
    InvalidTheta(f64),
    #[error("indicator {index} is {value}; indicators must be finite and nonnegative")]
    InvalidIndicator { index: usize, value: f64 },
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    LinearEta,
    EtaK,
    MuK,
    NonlinearN,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorReport {
    pub kind: EstimatorKind,
    /// Squared contribution of every triangle.
    pub locals: Vec<f64>,
}

impl EstimatorReport {
    pub fn global_sq(&self) -> f64 {
        self.locals.iter().sum()
    }

    pub fn global(&self) -> f64 {
        self.global_sq().sqrt()
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn check(mesh: &Mesh, dofmap: &DofMap, sols: &[&DiscreteSolution]) -> Result<(), EstimatorError> {
    if dofmap.mesh_id() != mesh.id() {
        return Err(FemError::MeshMismatch { expected: mesh.id(), found: dofmap.mesh_id() }.into());
    }
    for s in sols {
        s.check(dofmap)?;
    }
    Ok(())
}

/// Sums `div_weight * |rd|^2 + |rc|^2` over the data quadrature of each triangle.
fn integrate_residuals<R>(mesh: &Mesh, quad: &DataQuadrature, div_weight: f64, residual: R) -> Vec<f64>
where
    R: Fn(usize, &Element, Point) -> (f64, [f64; 2]) + Sync,
{
    (0..mesh.n_triangles())
        .into_par_iter()
        .map_init(Vec::new, |pts, t| {
            let el = Element::new(mesh, t);
            quad.points(&el, pts);
            pts.iter()
                .map(|&(x, w)| {
                    let (rd, rc) = residual(t, &el, x);
                    w * (div_weight * rd * rd + dot(rc, rc))
                })
                .sum()
        })
        .collect()
}

fn fluxes_and_gradients(mesh: &Mesh, dofmap: &DofMap, sol: &DiscreteSolution) -> Vec<ElementState> {
    element_states(mesh, dofmap, sol, &Nonlinearity::linear_identity())
}

/// Value of the functional minimized by one damped step, per triangle:
/// `w1^2 C_F^2 |div(q - p') + delta (f1 + div p')|^2
///  + |a (q - p') - b grad(v - u') + delta (f2 + p' - sigma(grad u'))|^2`.
#[allow(clippy::too_many_arguments)]
pub fn eta_k(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
    delta: f64,
    prev: &DiscreteSolution,
    current: &DiscreteSolution,
    problem: &ProblemSpec,
) -> Result<EstimatorReport, EstimatorError> {
    check(mesh, dofmap, &[prev, current])?;
    let old = element_states(mesh, dofmap, prev, &problem.nonlinearity);
    let new = fluxes_and_gradients(mesh, dofmap, current);
    let quad = problem.data_quadrature();
    let (a, b) = (scheme.a, scheme.b);
    let locals = integrate_residuals(mesh, &quad, scheme.w1_sq * c_f * c_f, |t, _, x| {
        let (o, n) = (&old[t], &new[t]);
        let rd = n.flux.div() - o.flux.div() + delta * (problem.f1.eval(x) + o.flux.div());
        let (po, pn, f2) = (o.flux.at(x), n.flux.at(x), problem.f2.eval(x));
        let rc = [0, 1].map(|d| {
            a * (pn[d] - po[d]) - b * (n.grad[d] - o.grad[d]) + delta * (f2[d] + po[d] - o.sigma[d])
        });
        (rd, rc)
    });
    Ok(EstimatorReport { kind: EstimatorKind::EtaK, locals })
}

/// `|||(q - p', v - u')|||^2_A` per triangle.
pub fn mu_k(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
    prev: &DiscreteSolution,
    current: &DiscreteSolution,
) -> Result<EstimatorReport, EstimatorError> {
    check(mesh, dofmap, &[prev, current])?;
    let wd = scheme.w1_sq * c_f * c_f;
    let locals = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let el = Element::new(mesh, t);
            let fo = local_flux(&el, dofmap, t, &prev.rt_coeffs);
            let fn_ = local_flux(&el, dofmap, t, &current.rt_coeffs);
            let go = local_gradient(&el, mesh, dofmap, t, &prev.s1_coeffs);
            let gn = local_gradient(&el, mesh, dofmap, t, &current.s1_coeffs);
            let div = fn_.div() - fo.div();
            let constitutive: f64 = midpoint_rule(&el)
                .iter()
                .map(|&(x, w)| {
                    let (po, pn) = (fo.at(x), fn_.at(x));
                    let r = [0, 1].map(|d| scheme.a * (pn[d] - po[d]) - scheme.b * (gn[d] - go[d]));
                    w * dot(r, r)
                })
                .sum();
            wd * el.area * div * div + constitutive
        })
        .collect();
    Ok(EstimatorReport { kind: EstimatorKind::MuK, locals })
}

/// Least-squares residual of the nonlinear system,
/// `C_F^2 |f1 + div q|^2 + |f2 + q - sigma(grad v)|^2` per triangle.
pub fn nonlinear_functional(
    mesh: &Mesh,
    dofmap: &DofMap,
    problem: &ProblemSpec,
    c_f: f64,
    solution: &DiscreteSolution,
) -> Result<EstimatorReport, EstimatorError> {
    check(mesh, dofmap, &[solution])?;
    let states = element_states(mesh, dofmap, solution, &problem.nonlinearity);
    let quad = problem.data_quadrature();
    let locals = integrate_residuals(mesh, &quad, c_f * c_f, |t, _, x| {
        let s = &states[t];
        let (p, f2) = (s.flux.at(x), problem.f2.eval(x));
        (problem.f1.eval(x) + s.flux.div(), [0, 1].map(|d| f2[d] + p[d] - s.sigma[d]))
    });
    Ok(EstimatorReport { kind: EstimatorKind::NonlinearN, locals })
}

/// Least-squares functional of the linear problem with data `(g1, g2)`,
/// `C_F^2 |g1 + w1 div q|^2 + |g2 + a q - b grad v|^2` per triangle.
#[allow(clippy::too_many_arguments)]
pub fn linear_eta(
    mesh: &Mesh,
    dofmap: &DofMap,
    scheme: &WeightedScheme,
    c_f: f64,
    g1: &ScalarField,
    g2: &VectorField,
    solution: &DiscreteSolution,
) -> Result<EstimatorReport, EstimatorError> {
    check(mesh, dofmap, &[solution])?;
    let states = fluxes_and_gradients(mesh, dofmap, solution);
    let quad = DataQuadrature::new(&[g1]);
    let w1 = scheme.w1();
    let locals = integrate_residuals(mesh, &quad, c_f * c_f, |t, _, x| {
        let s = &states[t];
        let (p, g) = (s.flux.at(x), g2.eval(x));
        (g1.eval(x) + w1 * s.flux.div(), [0, 1].map(|d| g[d] + scheme.a * p[d] - scheme.b * s.grad[d]))
    });
    Ok(EstimatorReport { kind: EstimatorKind::LinearEta, locals })
}

/// Order among equal indicators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieBreak {
    AscendingIndex,
    DescendingIndex,
}

fn validate(indicators: &[f64], theta: f64) -> Result<(), EstimatorError> {
    if indicators.is_empty() {
        return Err(EstimatorError::EmptyIndicators);
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(EstimatorError::InvalidTheta(theta));
    }
    if let Some((index, &value)) = indicators.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(EstimatorError::InvalidIndicator { index, value });
    }
    Ok(())
}

/// Shortest prefix of the indicators sorted descending (equal values by
/// ascending index) whose sum reaches `theta` times the total.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Result<MarkedSet, EstimatorError> {
    doerfler_mark_with_order(indicators, theta, TieBreak::AscendingIndex)
}

pub fn doerfler_mark_with_order(indicators: &[f64], theta: f64, tie: TieBreak) -> Result<MarkedSet, EstimatorError> {
    validate(indicators, theta)?;
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&i, &j| {
        let by_index = match tie {
            TieBreak::AscendingIndex => i.cmp(&j),
            TieBreak::DescendingIndex => j.cmp(&i),
        };
        indicators[j].total_cmp(&indicators[i]).then(by_index)
    });
    // Summing in the sorted order makes the full prefix hit the total exactly.
    let total: f64 = order.iter().map(|&i| indicators[i]).sum();
    let goal = theta * total;
    let mut sum = 0.0;
    let mut count = 0;
    if goal > 0.0 {
        for &i in &order {
            sum += indicators[i];
            count += 1;
            if sum >= goal {
                break;
            }
        }
    }
    order.truncate(count);
    Ok(MarkedSet::new(order, indicators.len()).expect("distinct in-range indices"))
}

/// Exhaustive reference: among the subsets of minimal cardinality reaching
/// the bulk criterion, the one with maximal sum and, among those, the
/// lexicographically smallest sorted index list.
pub fn doerfler_bruteforce(indicators: &[f64], theta: f64) -> Result<MarkedSet, EstimatorError> {
    validate(indicators, theta)?;
    let n = indicators.len();
    assert!(n <= 20, "exhaustive search over {n} elements");
    let goal = theta * indicators.iter().sum::<f64>();
    let mut best: Option<(u32, f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let sum: f64 = set.iter().map(|&i| indicators[i]).sum();
        if sum < goal {
            continue;
        }
        let card = mask.count_ones();
        let better = match &best {
            None => true,
            Some((c, s, b)) => card < *c || (card == *c && (sum > *s || (sum == *s && set < *b))),
        };
        if better {
            best = Some((card, sum, set));
        }
    }
    let (_, _, set) = best.expect("the full set always satisfies the criterion");
    Ok(MarkedSet::new(set, n).expect("distinct in-range indices"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_system, assemble_zarantonello_rhs};
    use crate::fem_space::build_dof_map;
    use crate::linear_solver::factorize;
    use crate::mesh::{make_l_shape_initial, refine_uniform};
    use crate::nonlinearity::{compute_weights, Scheme};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_solution(dm: &DofMap, rng: &mut ChaCha8Rng) -> DiscreteSolution {
        let x: Vec<f64> = (0..dm.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DiscreteSolution::from_stacked(dm, &x)
    }

    fn setup() -> (Mesh, DofMap, WeightedScheme, ProblemSpec) {
        let mesh = refine_uniform(&refine_uniform(&refine_uniform(&make_l_shape_initial())));
        let dm = build_dof_map(&mesh);
        let w = compute_weights(Scheme::EmphasizedGradient, 2.0, 3.0).unwrap();
        (mesh, dm, w, ProblemSpec::convex_energy())
    }

    #[test]
    fn eta_vanishes_at_a_fixed_point() {
        let (mesh, dm, w, problem) = setup();
        let s = random_solution(&dm, &mut ChaCha8Rng::seed_from_u64(1));
        let r = eta_k(&mesh, &dm, &w, problem.c_f, 0.0, &s, &s, &problem).unwrap();
        assert_eq!(r.global(), 0.0);
    }

    #[test]
    fn discrete_minimizer_satisfies_pythagoras() {
        let (mesh, dm, w, problem) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prev = random_solution(&dm, &mut rng);
        let sys = assemble_system(&mesh, &dm, &w, problem.c_f).unwrap();
        let rhs = assemble_zarantonello_rhs(&mesh, &dm, &w, problem.c_f, 0.7, &prev, &problem).unwrap();
        let x = factorize(&sys.matrix).unwrap().solve(&rhs).unwrap();
        let star = DiscreteSolution::from_stacked(&dm, &x);
        let z_star = eta_k(&mesh, &dm, &w, problem.c_f, 0.7, &prev, &star, &problem).unwrap().global_sq();
        for _ in 0..100 {
            let q = random_solution(&dm, &mut rng);
            let z_q = eta_k(&mesh, &dm, &w, problem.c_f, 0.7, &prev, &q, &problem).unwrap().global_sq();
            let d: Vec<f64> = q.stacked().iter().zip(&x).map(|(a, b)| a - b).collect();
            let energy = sys.matrix.quad_form(&d);
            assert!(z_q >= z_star);
            assert!(((z_q - z_star) - energy).abs() <= 1e-9 * energy, "{} vs {energy}", z_q - z_star);
        }
    }

    #[test]
    fn mu_matches_quadratic_form() {
        let (mesh, dm, w, problem) = setup();
        let sys = assemble_system(&mesh, &dm, &w, problem.c_f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zero = DiscreteSolution::zero(&dm);
        for _ in 0..20 {
            let s = random_solution(&dm, &mut rng);
            let mu = mu_k(&mesh, &dm, &w, problem.c_f, &zero, &s).unwrap().global_sq();
            let q = sys.matrix.quad_form(&s.stacked());
            assert!((mu - q).abs() <= 1e-10 * q);
            assert_eq!(mu_k(&mesh, &dm, &w, problem.c_f, &s, &s).unwrap().global(), 0.0);
        }
    }

    #[test]
    fn mu_satisfies_triangle_inequality() {
        let (mesh, dm, w, problem) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (a, b, c) = (random_solution(&dm, &mut rng), random_solution(&dm, &mut rng), random_solution(&dm, &mut rng));
            let ab = mu_k(&mesh, &dm, &w, problem.c_f, &a, &b).unwrap().global();
            let bc = mu_k(&mesh, &dm, &w, problem.c_f, &b, &c).unwrap().global();
            let ac = mu_k(&mesh, &dm, &w, problem.c_f, &a, &c).unwrap().global();
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn functional_of_zero_solution() {
        let (mesh, dm, _, problem) = setup();
        let n = nonlinear_functional(&mesh, &dm, &problem, problem.c_f, &DiscreteSolution::zero(&dm)).unwrap();
        assert!((n.global_sq() - 3.0 * problem.c_f * problem.c_f).abs() < 1e-13);
        assert!(n.locals.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn functional_vanishes_for_representable_solution() {
        // u = 0 and a constant flux c solve the system with f1 = 0, f2 = -c.
        let (mesh, dm, _, _) = setup();
        let c = [0.3, -0.7];
        let problem = ProblemSpec::new(
            crate::assembly::Domain::LShape,
            ScalarField::Constant(0.0),
            VectorField::Constant([-c[0], -c[1]]),
            Nonlinearity::linear_identity(),
        );
        let mut sol = DiscreteSolution::zero(&dm);
        for e in 0..dm.n_rt {
            let t = mesh.topology().edge_elements[e][0];
            let el = Element::new(&mesh, t);
            let i = (0..3).find(|&i| dm.element_edges[t][i] == e).unwrap();
            let n = el.outward_normal(i);
            sol.rt_coeffs[e] = dm.rt_sign[t][i] * (c[0] * n[0] + c[1] * n[1]);
        }
        let n = nonlinear_functional(&mesh, &dm, &problem, problem.c_f, &sol).unwrap();
        assert!(n.global() < 1e-12, "{}", n.global());
    }

    #[test]
    fn linear_eta_of_zero_data() {
        let (mesh, dm, w, _) = setup();
        let z = DiscreteSolution::zero(&dm);
        let r =
            linear_eta(&mesh, &dm, &w, 1.0, &ScalarField::Constant(0.0), &VectorField::zero(), &z).unwrap();
        assert_eq!(r.global(), 0.0);
    }

    #[test]
    fn doerfler_examples() {
        let m = doerfler_mark(&[0.5, 0.3, 0.15, 0.05], 0.6).unwrap();
        assert_eq!(m.indices(), &[0, 1]);
        let all = doerfler_mark(&[0.25, 0.0, 0.5, 0.125], 1.0).unwrap();
        assert_eq!(all.indices(), &[0, 2, 3]);
        assert_eq!(doerfler_mark(&[], 0.5).unwrap_err(), EstimatorError::EmptyIndicators);
        assert!(doerfler_mark(&[1.0], 0.0).is_err());
        assert!(doerfler_mark(&[1.0], 1.5).is_err());
        assert!(doerfler_mark(&[-1.0], 0.5).is_err());
        assert!(doerfler_mark(&[0.0, 0.0], 0.5).unwrap().is_empty());
    }

    #[test]
    fn ties_resolve_by_ascending_index() {
        let v = [0.25, 0.5, 0.25, 0.25];
        assert_eq!(doerfler_mark(&v, 0.6).unwrap().indices(), &[0, 1]);
        assert_eq!(doerfler_mark_with_order(&v, 0.6, TieBreak::DescendingIndex).unwrap().indices(), &[1, 3]);
    }

    fn dyadic(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0u32..16).prop_map(|k| k as f64 / 8.0), 1..=max_len)
    }

    proptest! {
        #[test]
        fn marking_matches_exhaustive_oracle(v in dyadic(10), theta_k in 1u32..=8) {
            let theta = theta_k as f64 / 8.0;
            prop_assert_eq!(doerfler_mark(&v, theta).unwrap(), doerfler_bruteforce(&v, theta).unwrap());
        }

        #[test]
        fn larger_theta_never_shrinks_the_marked_set(v in dyadic(30), t1 in 1u32..=16, t2 in 1u32..=16) {
            let (lo, hi) = (t1.min(t2) as f64 / 16.0, t1.max(t2) as f64 / 16.0);
            let small = doerfler_mark(&v, lo).unwrap();
            let large = doerfler_mark(&v, hi).unwrap();
            prop_assert!(small.indices().iter().all(|i| large.indices().contains(i)));
        }
    }
}
