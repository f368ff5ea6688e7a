//! Configuration-driven benchmark runs producing CSV convergence histories.

pub mod config;
pub mod csv;
pub mod selfcheck;

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{Domain, ProblemSpec, ScalarField, VectorField};
use crate::driver::{
    run_adaptive_zarantonello, run_alsfem_linear, AlgorithmParams, DriverError, LinearProblem, RunObserver, RunRecord,
};
use crate::nonlinearity::{compute_weights, Scheme};

pub use config::{Benchmark, BenchmarkConfig, Budgets};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub struct BenchmarkRun {
    pub config: BenchmarkConfig,
    pub record: RunRecord,
    /// Sign applied to flux coefficients when exporting them.
    pub flux_sign: f64,
}

impl BenchmarkRun {
    pub fn csv(&self, timings: bool) -> String {
        csv::render_csv(&self.config, &self.record, timings)
    }

    pub fn snapshot(&self) -> String {
        let last = self.record.rows.last().map(|r| (r.k, r.ell)).unwrap_or((0, 0));
        self.record.final_solution.export(last.0, last.1, self.flux_sign)
    }
}

pub fn algorithm_params(config: &BenchmarkConfig) -> AlgorithmParams {
    AlgorithmParams {
        delta: config.delta,
        gamma: config.gamma,
        theta: config.theta,
        max_total_dofs: config.budgets.max_total_dofs,
        max_outer_iters: config.budgets.max_outer_iters,
        scheme: config.scheme,
        ..AlgorithmParams::default()
    }
}

/// Smooth solution `u = sin(pi x) sin(pi y)` with `p = grad u` on the unit
/// square, as data `(g1, g2)` of the linear least-squares functional.
pub fn manufactured_problem(w1: f64, c_f: f64) -> LinearProblem {
    LinearProblem {
        domain_mesh: Domain::UnitSquare.initial_mesh(),
        c_f,
        g1: ScalarField::Smooth(Arc::new(move |x| w1 * 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin())),
        g2: VectorField::zero(),
    }
}

pub fn manufactured_exact(x: [f64; 2]) -> (f64, [f64; 2]) {
    let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
    (sx * sy, [PI * (PI * x[0]).cos() * sy, PI * sx * (PI * x[1]).cos()])
}

pub fn problem_for(config: &BenchmarkConfig) -> Option<ProblemSpec> {
    let p = match config.benchmark {
        Benchmark::ConvexEnergy => ProblemSpec::convex_energy(),
        Benchmark::PorousMedia => ProblemSpec::porous_media(),
        Benchmark::LinearManufactured => return None,
    };
    Some(match config.c_f {
        Some(c) => p.with_c_f(c),
        None => p,
    })
}

pub fn run_benchmark(config: &BenchmarkConfig, observer: &mut dyn RunObserver) -> Result<BenchmarkRun, HarnessError> {
    config.validate()?;
    let params = algorithm_params(config);
    let (record, flux_sign) = match problem_for(config) {
        Some(problem) => {
            let sign = if config.benchmark == Benchmark::PorousMedia { -1.0 } else { 1.0 };
            (run_adaptive_zarantonello(&problem, &params, observer)?, sign)
        }
        None => {
            let weights = compute_weights(config.scheme, 1.0, 1.0).map_err(DriverError::from)?;
            let c_f = config.c_f.unwrap_or(Domain::UnitSquare.default_c_f());
            let problem = manufactured_problem(weights.w1(), c_f);
            (run_alsfem_linear(&problem, &weights, &params, observer)?, 1.0)
        }
    };
    Ok(BenchmarkRun { config: config.clone(), record, flux_sign })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Delta,
    Gamma,
    Theta,
    Scheme,
}

impl std::str::FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delta" => Ok(SweepParam::Delta),
            "gamma" => Ok(SweepParam::Gamma),
            "theta" => Ok(SweepParam::Theta),
            "scheme" => Ok(SweepParam::Scheme),
            other => Err(HarnessError::Config(format!("cannot sweep over `{other}`"))),
        }
    }
}

/// One configuration per sweep value, validated up front.
pub fn sweep_configs(
    base: &BenchmarkConfig,
    param: SweepParam,
    values: &[String],
) -> Result<Vec<BenchmarkConfig>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Config("a sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            let num = || v.trim().parse::<f64>().map_err(|_| HarnessError::Config(format!("`{v}` is not a number")));
            match param {
                SweepParam::Delta => c.delta = num()?,
                SweepParam::Gamma => c.gamma = num()?,
                SweepParam::Theta => c.theta = num()?,
                SweepParam::Scheme => {
                    c.scheme = v.trim().parse::<Scheme>().map_err(|e| HarnessError::Config(e.to_string()))?
                }
            }
            c.validate()?;
            Ok(c)
        })
        .collect()
}

/// Runs every configuration and concatenates their rows under a single
/// header, in configuration order regardless of `parallel`.
pub fn run_sweep(
    configs: &[BenchmarkConfig],
    timings: bool,
    parallel: bool,
) -> Result<(String, Vec<BenchmarkRun>), HarnessError> {
    let runs: Vec<BenchmarkRun> = if parallel {
        configs.par_iter().map(|c| run_benchmark(c, &mut ())).collect::<Result<_, _>>()?
    } else {
        configs.iter().map(|c| run_benchmark(c, &mut ())).collect::<Result<_, _>>()?
    };
    let mut out = String::from(csv::HEADER);
    out.push('\n');
    for run in &runs {
        csv::render_rows(&run.config, &run.record, timings, &mut out);
    }
    Ok((out, runs))
}
