use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use zlsfem::assembly::{assemble_system, assemble_zarantonello_rhs};
use zlsfem::driver::run_adaptive_zarantonello;
use zlsfem::estimator::{doerfler_mark, eta_k};
use zlsfem::fem_space::{build_dof_map, DiscreteSolution};
use zlsfem::linear_solver::factorize;
use zlsfem::mesh::{refine_nvb, MarkedSet};
use zlsfem::nonlinearity::compute_weights;
use zlsfem::{AlgorithmParams, ProblemSpec, Scheme};
use zlsfem_bench::{corner_graded_l_shape, uniform_l_shape};

fn refinement(c: &mut Criterion) {
    let mut g = c.benchmark_group("refine");
    for passes in [8, 12] {
        let mesh = uniform_l_shape(passes);
        let n = mesh.n_triangles();
        let marked = MarkedSet::new((0..n).step_by(7).collect(), n).unwrap();
        g.bench_with_input(BenchmarkId::new("nvb_every_7th", n), &mesh, |b, m| {
            b.iter(|| refine_nvb(black_box(m), &marked).unwrap())
        });
    }
    g.bench_function("corner_grading_40", |b| b.iter(|| corner_graded_l_shape(black_box(40))));
    g.finish();
}

fn assembly_and_solve(c: &mut Criterion) {
    let problem = ProblemSpec::convex_energy();
    let w = compute_weights(Scheme::EmphasizedGradient, 2.0, 3.0).unwrap();
    let mut g = c.benchmark_group("linear_algebra");
    g.sample_size(20);
    for passes in [8, 10, 12] {
        let mesh = uniform_l_shape(passes);
        let dm = build_dof_map(&mesh);
        let sys = assemble_system(&mesh, &dm, &w, problem.c_f).unwrap();
        let prev = DiscreteSolution::zero(&dm);
        g.bench_with_input(BenchmarkId::new("assemble", dm.n_dofs()), &mesh, |b, m| {
            b.iter(|| assemble_system(m, &dm, &w, problem.c_f).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("rhs", dm.n_dofs()), &mesh, |b, m| {
            b.iter(|| assemble_zarantonello_rhs(m, &dm, &w, problem.c_f, 1.0, &prev, &problem).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("factorize", dm.n_dofs()), &sys, |b, s| {
            b.iter(|| factorize(&s.matrix).unwrap())
        });
        let fact = factorize(&sys.matrix).unwrap();
        let rhs = assemble_zarantonello_rhs(&mesh, &dm, &w, problem.c_f, 1.0, &prev, &problem).unwrap();
        g.bench_with_input(BenchmarkId::new("solve", dm.n_dofs()), &rhs, |b, r| b.iter(|| fact.solve(r).unwrap()));
        let cur = DiscreteSolution::from_stacked(&dm, &fact.solve(&rhs).unwrap());
        g.bench_with_input(BenchmarkId::new("estimate_and_mark", dm.n_dofs()), &mesh, |b, m| {
            b.iter(|| {
                let eta = eta_k(m, &dm, &w, problem.c_f, 1.0, &prev, &cur, &problem).unwrap();
                doerfler_mark(&eta.locals, 0.3).unwrap()
            })
        });
    }
    g.finish();
}

fn full_run(c: &mut Criterion) {
    let problem = ProblemSpec::convex_energy();
    let params = AlgorithmParams { max_total_dofs: 20_000, ..AlgorithmParams::default() };
    let mut g = c.benchmark_group("driver");
    g.sample_size(10);
    g.bench_function("convex_energy_20k_dofs", |b| b.iter(|| run_adaptive_zarantonello(&problem, &params, &mut ()).unwrap()));
    g.finish();
}

criterion_group!(benches, refinement, assembly_and_solve, full_run);
criterion_main!(benches);
