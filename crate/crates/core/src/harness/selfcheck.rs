//! Fast invariant suite with optional fault injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_b_vector, assemble_system, assemble_zarantonello_rhs, weighted_norm_sq, ProblemSpec, C_F_L_SHAPE,
};
use crate::estimator::{doerfler_bruteforce, doerfler_mark_with_order, eta_k, TieBreak};
use crate::fem_space::{build_dof_map, DiscreteSolution, DofMap};
use crate::linear_solver::factorize;
use crate::mesh::{
    check_conformity, make_criss_cross_square, make_l_shape_initial, min_angle, refine_nvb, refine_uniform, MarkedSet,
    Mesh,
};
use crate::nonlinearity::{compute_weights, contraction_constants, Nonlinearity, Scheme, WeightedScheme};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Assemble the system with half the divergence weight `w1`.
    HalveOmega1,
    /// Resolve ties in Dörfler marking by descending element index.
    ReverseTieBreak,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, failures: usize, total: usize, extra: String) -> Self {
        CheckOutcome { name, passed: failures == 0, detail: format!("{failures}/{total} violations{extra}") }
    }
}

fn random_marking(mesh: &Mesh, rng: &mut ChaCha8Rng) -> MarkedSet {
    let n = mesh.n_triangles();
    let k = rng.gen_range(1..=n.min(8));
    let mut idx: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
    idx.sort_unstable();
    idx.dedup();
    MarkedSet::new(idx, n).expect("indices drawn in range")
}

/// Random mark/refine sequence checking conformity, nestedness (children
/// tile their parent) and the minimum-angle floor of the initial mesh.
pub fn conformity_fuzz(steps: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = make_l_shape_initial();
    let floor = min_angle(&initial) - 1e-9;
    let mut mesh = initial.clone();
    let mut failures = 0;
    let mut first = String::new();
    let mut note = |failures: &mut usize, msg: String| {
        *failures += 1;
        if first.is_empty() {
            first = msg;
        }
    };
    for step in 0..steps {
        if mesh.n_triangles() > 4000 {
            mesh = initial.clone();
        }
        let fine = refine_nvb(&mesh, &random_marking(&mesh, &mut rng)).expect("valid marking");
        if let Some(v) = check_conformity(&fine).first() {
            note(&mut failures, format!("step {step}: {v}"));
        }
        let lineage = fine.lineage().expect("refinement records its parents");
        let mut area = vec![0.0; mesh.n_triangles()];
        for (t, &p) in lineage.parent.iter().enumerate() {
            area[p as usize] += fine.area(t);
        }
        if area.iter().enumerate().any(|(t, a)| (a - mesh.area(t)).abs() > 1e-12 * mesh.area(t)) {
            note(&mut failures, format!("step {step}: children do not tile their parent"));
        }
        if min_angle(&fine) < floor {
            note(&mut failures, format!("step {step}: min angle {} below {floor}", min_angle(&fine)));
        }
        mesh = fine;
    }
    let extra = if first.is_empty() { String::new() } else { format!("; first: {first}") };
    CheckOutcome::new("conformity fuzz", failures, steps, extra)
}

/// Three test meshes: uniform and adaptively graded L-shapes and a refined
/// criss-cross square.
pub fn sample_meshes(seed: u64) -> Vec<Mesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = refine_uniform(&refine_uniform(&refine_uniform(&make_l_shape_initial())));
    let mut graded = make_l_shape_initial();
    for _ in 0..12 {
        graded = refine_nvb(&graded, &random_marking(&graded, &mut rng)).expect("valid marking");
    }
    let square = refine_uniform(&refine_uniform(&make_criss_cross_square()));
    vec![uniform, graded, square]
}

fn random_pair(dm: &DofMap, rng: &mut ChaCha8Rng) -> DiscreteSolution {
    let (sp, su) = (10f64.powf(rng.gen_range(-2.0..2.0)), 10f64.powf(rng.gen_range(-2.0..2.0)));
    let mut x = DiscreteSolution::zero(dm);
    x.rt_coeffs.iter_mut().for_each(|c| *c = sp * rng.gen_range(-1.0..1.0));
    x.s1_coeffs.iter_mut().for_each(|c| *c = su * rng.gen_range(-1.0..1.0));
    x
}

const SLACK: f64 = 1e-10;

/// Two-sided equivalence `lower |||x|||^2 <= x^T A x <= 2 |||x|||^2` in the
/// weighted norm, for every scheme with the given bounds.
pub fn equivalence_bounds(meshes: &[Mesh], pairs: usize, lambda: (f64, f64), seed: u64, fault: Fault) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut failures, mut total) = (0, 0);
    let mut worst = f64::INFINITY;
    for scheme in Scheme::ALL {
        let w = compute_weights(scheme, lambda.0, lambda.1).expect("valid bounds");
        let assembled =
            if fault == Fault::HalveOmega1 { WeightedScheme { w1_sq: 0.25 * w.w1_sq, ..w } } else { w };
        for (m, mesh) in meshes.iter().enumerate() {
            let dm = build_dof_map(mesh);
            let c_f = if m == 2 { 1.0 / (2f64.sqrt() * std::f64::consts::PI) } else { C_F_L_SHAPE };
            let sys = assemble_system(mesh, &dm, &assembled, c_f).expect("matching dof map");
            for _ in 0..pairs {
                let x = random_pair(&dm, &mut rng);
                let q = sys.matrix.quad_form(&x.stacked());
                let n = weighted_norm_sq(mesh, &dm, &w, c_f, &x);
                let lower = w.equivalence_lower();
                worst = worst.min(q / n / lower);
                total += 1;
                if q < lower * n * (1.0 - SLACK) || q > WeightedScheme::EQUIVALENCE_UPPER * n * (1.0 + SLACK) {
                    failures += 1;
                }
            }
        }
    }
    CheckOutcome::new("fundamental equivalence", failures, total, format!("; min ratio to lower bound {worst:.4}"))
}

/// Strong monotonicity and Lipschitz continuity of the nonlinear form in
/// the least-squares norm with the scheme constants.
pub fn monotonicity_constants(mesh: &Mesh, pairs: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nl = Nonlinearity::convex_energy();
    let dm = build_dof_map(mesh);
    let c_f = C_F_L_SHAPE;
    let (mut failures, mut total) = (0, 0);
    let mut worst = (f64::INFINITY, 0.0f64);
    for scheme in Scheme::ALL {
        let w = compute_weights(scheme, nl.lambda1, nl.lambda2).expect("valid bounds");
        let cc = contraction_constants(scheme, nl.lambda1, nl.lambda2).expect("valid bounds");
        let sys = assemble_system(mesh, &dm, &w, c_f).expect("matching dof map");
        for _ in 0..pairs {
            let (x, y, z) = (random_pair(&dm, &mut rng), random_pair(&dm, &mut rng), random_pair(&dm, &mut rng));
            let bx = assemble_b_vector(mesh, &dm, &w, c_f, &x, &nl).expect("matching dof map");
            let by = assemble_b_vector(mesh, &dm, &w, c_f, &y, &nl).expect("matching dof map");
            let db: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
            let d: Vec<f64> = x.stacked().iter().zip(y.stacked()).map(|(a, b)| a - b).collect();
            let zs = z.stacked();
            let dd = sys.matrix.quad_form(&d);
            let zz = sys.matrix.quad_form(&zs);
            let mono: f64 = db.iter().zip(&d).map(|(a, b)| a * b).sum();
            let lip: f64 = db.iter().zip(&zs).map(|(a, b)| a * b).sum::<f64>().abs();
            worst.0 = worst.0.min(mono / dd / cc.alpha_ls);
            worst.1 = worst.1.max(lip / (dd * zz).sqrt() / cc.l_ls);
            total += 1;
            if mono < cc.alpha_ls * dd * (1.0 - SLACK) || lip > cc.l_ls * (dd * zz).sqrt() * (1.0 + SLACK) {
                failures += 1;
            }
        }
    }
    let extra = format!("; min monotonicity ratio {:.3}, max Lipschitz ratio {:.3}", worst.0, worst.1);
    CheckOutcome::new("monotonicity constants", failures, total, extra)
}

/// `Z(q) - Z(x*) = |||q - x*|||^2_A` for the discrete minimizer `x*` of one
/// damped step.
pub fn pythagoras(samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = ProblemSpec::convex_energy();
    let mesh = sample_meshes(seed)[1].clone();
    let dm = build_dof_map(&mesh);
    let w = compute_weights(Scheme::EmphasizedGradient, 2.0, 3.0).expect("valid bounds");
    let sys = assemble_system(&mesh, &dm, &w, problem.c_f).expect("matching dof map");
    let fact = factorize(&sys.matrix).expect("SPD system");
    let prev = random_pair(&dm, &mut rng);
    let rhs = assemble_zarantonello_rhs(&mesh, &dm, &w, problem.c_f, 1.0, &prev, &problem).expect("matching");
    let star = DiscreteSolution::from_stacked(&dm, &fact.solve(&rhs).expect("dimensions match"));
    let z = |q: &DiscreteSolution| eta_k(&mesh, &dm, &w, problem.c_f, 1.0, &prev, q, &problem).expect("match").global_sq();
    let z_star = z(&star);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let q = random_pair(&dm, &mut rng);
        let d: Vec<f64> = q.stacked().iter().zip(star.stacked()).map(|(a, b)| a - b).collect();
        let energy = sys.matrix.quad_form(&d);
        let err = ((z(&q) - z_star) - energy).abs() / energy;
        worst = worst.max(err);
        if err > 1e-9 {
            failures += 1;
        }
    }
    CheckOutcome::new("Pythagoras identity", failures, samples, format!("; max relative error {worst:.2e}"))
}

/// Dörfler marking against the exhaustive-subset oracle on dyadic
/// indicators with frequent ties.
pub fn doerfler_oracle(instances: usize, max_len: usize, seed: u64, fault: Fault) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tie = if fault == Fault::ReverseTieBreak { TieBreak::DescendingIndex } else { TieBreak::AscendingIndex };
    let mut failures = 0;
    let mut first = String::new();
    for _ in 0..instances {
        let n = rng.gen_range(1..=max_len);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
        let theta = rng.gen_range(1..=8) as f64 / 8.0;
        let got = doerfler_mark_with_order(&v, theta, tie).expect("valid input");
        let want = doerfler_bruteforce(&v, theta).expect("valid input");
        if got != want {
            failures += 1;
            if first.is_empty() {
                first = format!("; first: {v:?} theta {theta}: {:?} vs {:?}", got.indices(), want.indices());
            }
        }
    }
    CheckOutcome::new("Dörfler oracle", failures, instances, first)
}

pub fn run_selfcheck(fault: Fault) -> Vec<CheckOutcome> {
    let meshes = sample_meshes(1);
    vec![
        conformity_fuzz(300, 2),
        equivalence_bounds(&meshes, 40, (2.0, 3.0), 3, fault),
        monotonicity_constants(&meshes[0], 20, 4),
        pythagoras(20, 5),
        doerfler_oracle(300, 12, 6, fault),
    ]
}
