//! Frozen reference values checked through the public API.

use std::f64::consts::PI;

use zlsfem::assembly::{assemble_linear_ls_rhs, assemble_system, Domain, C_F_L_SHAPE};
use zlsfem::fem_space::{build_dof_map, eval_s1, DiscreteSolution, Element};
use zlsfem::harness::{manufactured_exact, manufactured_problem};
use zlsfem::linear_solver::factorize;
use zlsfem::mesh::{make_l_shape_initial, refine_uniform};
use zlsfem::nonlinearity::{compute_weights, contraction_constants, Nonlinearity, Scheme};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn l_shape_initial_mesh_counts() {
    let m = make_l_shape_initial();
    assert_eq!((m.n_vertices(), m.n_triangles(), m.n_edges()), (8, 6, 13));
    assert_eq!(m.total_area(), 3.0);
    let dm = build_dof_map(&m);
    assert_eq!((dm.n_rt, dm.n_s1), (13, 0));
    let fine = refine_uniform(&refine_uniform(&m));
    assert_eq!(fine.n_triangles(), 24);
    assert_eq!(build_dof_map(&fine).n_s1, 5);
}

#[test]
fn weight_table_for_convex_energy_bounds() {
    let r = 4.5f64.sqrt();
    let expected = [
        (Scheme::EmphasizedGradient, 4.5, 1.0, 4.5),
        (Scheme::Balanced, r, 1.0 / r, r),
        (Scheme::DownscaledFlux, 1.0, 1.0 / 4.5, 1.0),
        (Scheme::Split, 9.0, 2.0, 9.0),
    ];
    for (scheme, w1_sq, a, b) in expected {
        let w = compute_weights(scheme, 2.0, 3.0).unwrap();
        assert!(close(w.w1_sq, w1_sq, 1e-15) && close(w.a, a, 1e-15) && close(w.b, b, 1e-15), "{scheme}: {w:?}");
    }
    let c = contraction_constants(Scheme::EmphasizedGradient, 2.0, 3.0).unwrap();
    assert!(close(c.alpha_ls, 1.0 / 18.0, 1e-15) && close(c.l_ls, 8.0, 1e-15));
    assert!(close(c.rho_z(c.delta_star / 2.0).unwrap(), (1.0f64 - 1.0 / 20736.0).sqrt(), 1e-14));
}

#[test]
fn forchheimer_constants() {
    let fo = Nonlinearity::forchheimer_default();
    assert!(close(fo.lambda1, 1.183503419072274, 1e-12), "{}", fo.lambda1);
    assert_eq!(fo.lambda2, 5.0);
    // phi(0) = 1/k1 and sigma is radial.
    assert!(close(fo.phi(0.0), 5.0, 1e-15));
    let s = fo.sigma([3e-3, -4e-3]);
    assert!(close(s[0] / s[1], -0.75, 1e-14));
}

#[test]
fn friedrichs_constants() {
    assert_eq!(Domain::LShape.default_c_f(), C_F_L_SHAPE);
    assert!(close(Domain::UnitSquare.default_c_f(), 1.0 / (2f64.sqrt() * PI), 1e-15));
}

#[test]
fn manufactured_potential_converges_in_l2() {
    let w = compute_weights(Scheme::EmphasizedGradient, 1.0, 1.0).unwrap();
    let c_f = Domain::UnitSquare.default_c_f();
    let problem = manufactured_problem(w.w1(), c_f);
    let mut mesh = problem.domain_mesh.clone();
    let mut errs = Vec::new();
    for _ in 0..5 {
        for _ in 0..2 {
            mesh = refine_uniform(&mesh);
        }
        let dm = build_dof_map(&mesh);
        let sys = assemble_system(&mesh, &dm, &w, c_f).unwrap();
        let rhs = assemble_linear_ls_rhs(&mesh, &dm, &w, c_f, &problem.g1, &problem.g2).unwrap();
        let sol = DiscreteSolution::from_stacked(&dm, &factorize(&sys.matrix).unwrap().solve(&rhs).unwrap());
        let err_sq: f64 = (0..mesh.n_triangles())
            .map(|t| {
                let el = Element::new(&mesh, t);
                let c = el.centroid();
                let e = eval_s1(&mesh, &dm, t, &sol.s1_coeffs, c).unwrap() - manufactured_exact(c).0;
                e * e * el.area
            })
            .sum();
        errs.push(err_sq.sqrt());
    }
    // Centroid-sampled L2 error of the potential is second order once resolved.
    for w in errs[2..].windows(2) {
        assert!(w[0] / w[1] > 3.5, "{errs:?}");
    }
    assert!(errs[4] < 3e-3, "{errs:?}");
}
