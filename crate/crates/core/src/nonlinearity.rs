//! Nonlinear flux laws `sigma(xi) = phi(|xi|) xi`, their bounds, and the four
//! residual weighting schemes with their contraction constants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NonlinearityError {
    #[error("invalid bounds: need 0 < lambda1 <= lambda2 < inf, got ({0}, {1})")]
    InvalidBounds(f64, f64),
    #[error("damping {delta} outside (0, {delta_star}); contraction factor would be {raw}")]
    DeltaOutOfRange { delta: f64, delta_star: f64, raw: f64 },
    #[error("unknown weighting scheme `{0}`")]
    UnknownScheme(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NonlinearityKind {
    /// `phi(t) = 2 + 1/(1 + t)`.
    ConvexEnergy,
    /// `phi(t) = 2 / (k1 + sqrt(k1^2 + k2 t))`, bounds valid for `t <= t_max`.
    Forchheimer { k1: f64, k2: f64, t_max: f64 },
    LinearIdentity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Nonlinearity {
    pub fn convex_energy() -> Self {
        Nonlinearity { kind: NonlinearityKind::ConvexEnergy, lambda1: 2.0, lambda2: 3.0 }
    }

    pub fn forchheimer(k1: f64, k2: f64, t_max: f64) -> Self {
        let s = (k1 * k1 + k2 * t_max).sqrt();
        Nonlinearity {
            kind: NonlinearityKind::Forchheimer { k1, k2, t_max },
            lambda1: 2.0 * k1 / ((k1 + s) * s),
            lambda2: 1.0 / k1,
        }
    }

    pub fn forchheimer_default() -> Self {
        Self::forchheimer(0.2, 20.0, 1e-2)
    }

    pub fn linear_identity() -> Self {
        Nonlinearity { kind: NonlinearityKind::LinearIdentity, lambda1: 1.0, lambda2: 1.0 }
    }

    pub fn phi(&self, t: f64) -> f64 {
        match self.kind {
            NonlinearityKind::ConvexEnergy => 2.0 + 1.0 / (1.0 + t),
            NonlinearityKind::Forchheimer { k1, k2, .. } => 2.0 / (k1 + (k1 * k1 + k2 * t).sqrt()),
            NonlinearityKind::LinearIdentity => 1.0,
        }
    }

    pub fn dphi(&self, t: f64) -> f64 {
        match self.kind {
            NonlinearityKind::ConvexEnergy => -1.0 / (1.0 + t).powi(2),
            NonlinearityKind::Forchheimer { k1, k2, .. } => {
                let s = (k1 * k1 + k2 * t).sqrt();
                -k2 / ((k1 + s).powi(2) * s)
            }
            NonlinearityKind::LinearIdentity => 0.0,
        }
    }

    /// Largest gradient modulus for which `lambda1`, `lambda2` are valid.
    pub fn validity_radius(&self) -> f64 {
        match self.kind {
            NonlinearityKind::Forchheimer { t_max, .. } => t_max,
            _ => f64::INFINITY,
        }
    }

    pub fn sigma(&self, xi: [f64; 2]) -> [f64; 2] {
        let phi = self.phi(norm(xi));
        [phi * xi[0], phi * xi[1]]
    }

    /// Jacobian `phi(|xi|) I + phi'(|xi|) |xi| s s^T` with `s = xi/|xi|`.
    pub fn dsigma(&self, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let t = norm(xi);
        let phi = self.phi(t);
        if t == 0.0 {
            return [[phi, 0.0], [0.0, phi]];
        }
        let c = self.dphi(t) / t;
        let off = c * xi[0] * xi[1];
        [[phi + c * xi[0] * xi[0], off], [off, phi + c * xi[1] * xi[1]]]
    }
}

pub(crate) fn norm(x: [f64; 2]) -> f64 {
    x[0].hypot(x[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    EmphasizedGradient,
    Balanced,
    DownscaledFlux,
    Split,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::EmphasizedGradient, Scheme::Balanced, Scheme::DownscaledFlux, Scheme::Split];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::EmphasizedGradient => "emphasized-gradient",
            Scheme::Balanced => "balanced",
            Scheme::DownscaledFlux => "downscaled-flux",
            Scheme::Split => "split",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = NonlinearityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| NonlinearityError::UnknownScheme(s.to_string()))
    }
}

/// Residual weights: the constitutive residual reads `a p - b grad u` and the
/// divergence residual carries `w1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedScheme {
    pub scheme: Scheme,
    pub w1_sq: f64,
    pub a: f64,
    pub b: f64,
}

impl WeightedScheme {
    pub fn w1(&self) -> f64 {
        self.w1_sq.sqrt()
    }

    /// Lower constant of the two-sided equivalence between the quadratic form
    /// and the weighted norm; the upper constant is 2.
    pub fn equivalence_lower(&self) -> f64 {
        0.5f64.min(1.0 / (1.0 + 4.0 * self.a * self.a / self.w1_sq))
    }

    pub const EQUIVALENCE_UPPER: f64 = 2.0;
}

fn check_bounds(l1: f64, l2: f64) -> Result<(), NonlinearityError> {
    if l1 > 0.0 && l1 <= l2 && l2.is_finite() {
        Ok(())
    } else {
        Err(NonlinearityError::InvalidBounds(l1, l2))
    }
}

pub fn compute_weights(scheme: Scheme, l1: f64, l2: f64) -> Result<WeightedScheme, NonlinearityError> {
    check_bounds(l1, l2)?;
    let w = match scheme {
        Scheme::EmphasizedGradient => {
            let w2_sq = l2 * l2 / l1;
            WeightedScheme { scheme, w1_sq: 2.0 * w2_sq / l1, a: 1.0, b: w2_sq }
        }
        Scheme::Balanced => {
            let w2 = (l2 * l2 / l1).sqrt();
            WeightedScheme { scheme, w1_sq: 2.0 * w2 / l1, a: 1.0 / w2, b: w2 }
        }
        Scheme::DownscaledFlux => {
            let w2_sq = l2 * l2 / l1;
            WeightedScheme { scheme, w1_sq: 2.0 / l1, a: 1.0 / w2_sq, b: 1.0 }
        }
        Scheme::Split => WeightedScheme { scheme, w1_sq: 2.0 * l2 * l2 / l1, a: l1, b: l2 * l2 },
    };
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionConstants {
    pub alpha_ls: f64,
    pub l_ls: f64,
    pub delta_star: f64,
}

impl ContractionConstants {
    /// `sqrt(1 - 2 delta alpha + delta^2 L^2)` clamped to `[0, 1)`; outside
    /// `(0, delta_star)` the unclamped value is carried in the error.
    pub fn rho_z(&self, delta: f64) -> Result<f64, NonlinearityError> {
        let raw = (1.0 - 2.0 * delta * self.alpha_ls + delta * delta * self.l_ls * self.l_ls).max(0.0).sqrt();
        if delta > 0.0 && delta < self.delta_star {
            Ok(raw.min(1.0 - f64::EPSILON))
        } else {
            Err(NonlinearityError::DeltaOutOfRange { delta, delta_star: self.delta_star, raw })
        }
    }
}

pub fn contraction_constants(scheme: Scheme, l1: f64, l2: f64) -> Result<ContractionConstants, NonlinearityError> {
    check_bounds(l1, l2)?;
    let (alpha_ls, l_ls) = match scheme {
        Scheme::EmphasizedGradient => {
            let r = l1 * l1 / (l2 * l2);
            (r / 8.0, 4.0 * 2f64.max(1.0 + 2.0 * r))
        }
        Scheme::Balanced => {
            let (s1, l1_32) = (l1.sqrt(), l1.powf(1.5));
            let alpha = 0.5 * 0.5f64.min(l2 / s1).min(l1_32 / (4.0 * l2));
            let l = 4.0 * 1f64.max(l2 / s1).max(l1_32 / (2.0 * l2)) * 2f64.max(1.0 + 2.0 * l1.powf(2.5) / l2.powi(3));
            (alpha, l)
        }
        Scheme::DownscaledFlux => {
            let alpha = 0.5 * 0.5f64.min(l2 * l2 / (2.0 * l1)).min(l1 / 4.0);
            let l = 4.0
                * 1f64.max(l2 * l2 / l1).max(l2).max((l1 / 2.0).sqrt())
                * 2f64.max(1.0 + 2.0 * l1.powi(3) / l2.powi(4));
            (alpha, l)
        }
        Scheme::Split => {
            let alpha = 0.5 * 0.5f64.min(1.0 / (2.0 * l1)).min(l1 / (4.0 * l2 * l2));
            let l = 4.0
                * 1f64.max(1.0 / l1).max(1.0 / l2).max(l1 / (2.0 * l2 * l2))
                * 2f64.max(1.0 + 2.0 * l1.powi(3) / (l2 * l2));
            (alpha, l)
        }
    };
    Ok(ContractionConstants { alpha_ls, l_ls, delta_star: 2.0 * alpha_ls / (l_ls * l_ls) })
}
