//! Adaptive least-squares finite elements for quasilinear elliptic problems
//! `-div sigma(grad u) = f`, solved by a damped fixed-point (Zarantonello)
//! iteration on adaptively refined triangulations.

pub mod assembly;
pub mod driver;
pub mod estimator;
pub mod fem_space;
pub mod harness;
pub mod linear_solver;
pub mod mesh;
pub mod nonlinearity;

pub use assembly::{Domain, ProblemSpec, ScalarField, SparseSpdSystem, VectorField};
pub use driver::{AlgorithmParams, RunRecord, RunRow, Termination};
pub use fem_space::{DiscreteSolution, DofMap};
pub use mesh::{MarkedSet, Mesh, MeshId};
pub use nonlinearity::{Nonlinearity, Scheme, WeightedScheme};
