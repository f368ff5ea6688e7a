use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::nonlinearity::Scheme;

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    ConvexEnergy,
    PorousMedia,
    LinearManufactured,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::ConvexEnergy => "convex-energy",
            Benchmark::PorousMedia => "porous-media",
            Benchmark::LinearManufactured => "linear-manufactured",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    #[serde(default = "default_max_dofs")]
    pub max_total_dofs: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer_iters: usize,
}

fn default_max_dofs() -> usize {
    200_000
}

fn default_max_outer() -> usize {
    60
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { max_total_dofs: default_max_dofs(), max_outer_iters: default_max_outer() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub benchmark: Benchmark,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub c_f: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_scheme() -> Scheme {
    Scheme::EmphasizedGradient
}

fn default_delta() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    0.9
}

fn default_theta() -> f64 {
    0.3
}

impl BenchmarkConfig {
    pub fn new(benchmark: Benchmark) -> Self {
        BenchmarkConfig {
            benchmark,
            scheme: default_scheme(),
            delta: default_delta(),
            gamma: default_gamma(),
            theta: default_theta(),
            budgets: Budgets::default(),
            c_f: None,
            output: None,
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: BenchmarkConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if self.budgets.max_total_dofs == 0 || self.budgets.max_outer_iters == 0 {
            return bad("budgets must be positive".to_string());
        }
        if let Some(c) = self.c_f {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("c_f must be positive, got {c}"));
            }
        }
        Ok(())
    }
}
