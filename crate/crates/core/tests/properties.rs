//! Randomized invariants over refinement, transfer, assembly and marking.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zlsfem::assembly::{assemble_system, C_F_L_SHAPE};
use zlsfem::driver::run_adaptive_zarantonello;
use zlsfem::estimator::doerfler_mark;
use zlsfem::fem_space::{build_dof_map, eval_rt0, eval_s1, prolongate, DiscreteSolution, Element};
use zlsfem::mesh::{check_conformity, make_l_shape_initial, refine_nvb, MarkedSet, Mesh};
use zlsfem::nonlinearity::{compute_weights, Scheme};
use zlsfem::{AlgorithmParams, ProblemSpec};

fn random_mesh(seed: u64, steps: usize) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = make_l_shape_initial();
    for _ in 0..steps {
        let n = mesh.n_triangles();
        let mut idx: Vec<usize> = (0..rng.gen_range(1..=n.min(6))).map(|_| rng.gen_range(0..n)).collect();
        idx.sort_unstable();
        idx.dedup();
        mesh = refine_nvb(&mesh, &MarkedSet::new(idx, n).unwrap()).unwrap();
    }
    mesh
}

fn random_solution(mesh: &Mesh, seed: u64) -> DiscreteSolution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dm = build_dof_map(mesh);
    let mut s = DiscreteSolution::zero(&dm);
    s.rt_coeffs.iter_mut().chain(s.s1_coeffs.iter_mut()).for_each(|c| *c = rng.gen_range(-1.0..1.0));
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prolongation_reproduces_coarse_functions(seed in 0u64..10_000, steps in 0usize..8, extra in 1usize..4) {
        let coarse = random_mesh(seed, steps);
        let cdm = build_dof_map(&coarse);
        let sol = random_solution(&coarse, seed + 1);
        let mut fine = coarse.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
        for _ in 0..extra {
            let n = fine.n_triangles();
            let idx: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
            fine = refine_nvb(&fine, &MarkedSet::new(idx, n).unwrap()).unwrap();
        }
        let fdm = build_dof_map(&fine);
        let fsol = prolongate(&sol, &coarse, &cdm, &fine, &fdm).unwrap();
        let parents: Vec<usize> = (0..fine.n_triangles())
            .map(|t| {
                let c = Element::new(&fine, t).centroid();
                (0..coarse.n_triangles()).find(|&p| Element::new(&coarse, p).contains(c, 1e-12)).unwrap()
            })
            .collect();
        for (t, &p) in parents.iter().enumerate() {
            let c = Element::new(&fine, t).centroid();
            let (fv, cv) = (eval_rt0(&fine, &fdm, t, &fsol.rt_coeffs, c).unwrap(), eval_rt0(&coarse, &cdm, p, &sol.rt_coeffs, c).unwrap());
            prop_assert!((fv[0] - cv[0]).abs() < 1e-9 && (fv[1] - cv[1]).abs() < 1e-9);
            let (fu, cu) = (eval_s1(&fine, &fdm, t, &fsol.s1_coeffs, c).unwrap(), eval_s1(&coarse, &cdm, p, &sol.s1_coeffs, c).unwrap());
            prop_assert!((fu - cu).abs() < 1e-12);
        }
    }

    #[test]
    fn export_import_roundtrip(seed in 0u64..10_000, steps in 0usize..10) {
        let mesh = random_mesh(seed, steps);
        let back = Mesh::import(&mesh.export()).unwrap();
        prop_assert_eq!(back.vertices(), mesh.vertices());
        prop_assert_eq!(back.triangles(), mesh.triangles());
        prop_assert!(check_conformity(&back).is_empty());
    }

    #[test]
    fn assembled_matrix_is_symmetric_positive(seed in 0u64..10_000, steps in 0usize..10, s in 0usize..4) {
        let mesh = random_mesh(seed, steps);
        let dm = build_dof_map(&mesh);
        let w = compute_weights(Scheme::ALL[s], 2.0, 3.0).unwrap();
        let sys = assemble_system(&mesh, &dm, &w, C_F_L_SHAPE).unwrap();
        prop_assert!(sys.matrix.asymmetry() < 1e-12);
        let x = random_solution(&mesh, seed).stacked();
        prop_assert!(sys.matrix.quad_form(&x) > 0.0);
    }

    #[test]
    fn doerfler_set_is_minimal_bulk(values in prop::collection::vec(0.0f64..1.0, 1..60), theta in 0.01f64..=1.0) {
        let m = doerfler_mark(&values, theta).unwrap();
        let total: f64 = values.iter().sum();
        let sum: f64 = m.indices().iter().map(|&i| values[i]).sum();
        prop_assert!(sum >= theta * total * (1.0 - 1e-12));
        // No set of one fewer element can reach the bulk.
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if !m.is_empty() {
            let best_smaller: f64 = sorted[..m.len() - 1].iter().sum();
            prop_assert!(best_smaller < theta * total);
        }
    }
}

#[test]
fn porous_gradient_stays_within_constant_validity() {
    let problem = ProblemSpec::porous_media();
    let params = AlgorithmParams { max_total_dofs: 20_000, ..AlgorithmParams::default() };
    let rec = run_adaptive_zarantonello(&problem, &params, &mut ()).unwrap();
    let max = rec.accepted_rows().map(|r| r.grad_inf).fold(0.0, f64::max);
    // The monotonicity constant 1.1835 holds for |grad u| below this radius.
    let radius = (1.0 / 1.1835f64.powi(2) - 0.04) / 20.0;
    assert!(max > 0.01 && max < radius, "{max} vs {radius}");
}

#[test]
fn reruns_are_identical_up_to_timing() {
    let problem = ProblemSpec::convex_energy();
    let params = AlgorithmParams { max_total_dofs: 3000, ..AlgorithmParams::default() };
    let strip = |p: &AlgorithmParams| {
        let r = run_adaptive_zarantonello(&problem, p, &mut ()).unwrap();
        let rows: Vec<_> = r.rows.iter().map(|r| (r.k, r.ell, r.n_elem, r.eta.to_bits(), r.mu.to_bits(), r.marked)).collect();
        (rows, r.final_mesh.export())
    };
    assert_eq!(strip(&params), strip(&params));
}
