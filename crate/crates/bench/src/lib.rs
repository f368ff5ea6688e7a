//! Shared fixtures for the criterion benchmarks.

use zlsfem::mesh::{make_l_shape_initial, refine_nvb, refine_uniform, MarkedSet};
use zlsfem::Mesh;

/// L-shape after `passes` uniform bisection passes.
pub fn uniform_l_shape(passes: usize) -> Mesh {
    (0..passes).fold(make_l_shape_initial(), |m, _| refine_uniform(&m))
}

/// Mesh graded towards the re-entrant corner by repeatedly bisecting the
/// triangles touching the origin.
pub fn corner_graded_l_shape(steps: usize) -> Mesh {
    let mut mesh = make_l_shape_initial();
    for _ in 0..steps {
        let touching: Vec<usize> = (0..mesh.n_triangles())
            .filter(|&t| mesh.corners(t).iter().any(|p| p[0] == 0.0 && p[1] == 0.0))
            .collect();
        let n = mesh.n_triangles();
        mesh = refine_nvb(&mesh, &MarkedSet::new(touching, n).expect("indices in range")).expect("valid marking");
    }
    mesh
}
