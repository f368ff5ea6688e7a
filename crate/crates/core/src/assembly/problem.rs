//! Data of the first-order system `-div p = f1`, `p - sigma(grad u) = -f2`.

use std::fmt;
use std::sync::Arc;

use crate::fem_space::Element;
use crate::mesh::{make_l_shape_initial, make_unit_square_initial, Mesh, Point};
use crate::nonlinearity::Nonlinearity;

use super::quadrature::{clipped_points, quadrature_rule, Breakline, QuadRule};

/// Friedrichs constant of the L-shaped domain (-1,1)^2 \ [0,1)^2.
pub const C_F_L_SHAPE: f64 = 0.32208292665417854;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    LShape,
    UnitSquare,
}

impl Domain {
    pub fn initial_mesh(self) -> Mesh {
        match self {
            Domain::LShape => make_l_shape_initial(),
            Domain::UnitSquare => make_unit_square_initial(),
        }
    }

    pub fn default_c_f(self) -> f64 {
        match self {
            Domain::LShape => C_F_L_SHAPE,
            Domain::UnitSquare => 1.0 / (2f64.sqrt() * std::f64::consts::PI),
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    /// `value` on the open box `(lo, hi)`, zero elsewhere.
    BoxIndicator { lo: Point, hi: Point, value: f64 },
    Smooth(ScalarFn),
}

impl ScalarField {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::BoxIndicator { lo, hi, value } => {
                if x[0] > lo[0] && x[0] < hi[0] && x[1] > lo[1] && x[1] < hi[1] {
                    *value
                } else {
                    0.0
                }
            }
            ScalarField::Smooth(f) => f(x),
        }
    }

    fn breaklines(&self) -> Vec<Breakline> {
        match self {
            ScalarField::BoxIndicator { lo, hi, .. } => vec![
                Breakline { axis: 0, value: lo[0] },
                Breakline { axis: 0, value: hi[0] },
                Breakline { axis: 1, value: lo[1] },
                Breakline { axis: 1, value: hi[1] },
            ],
            _ => Vec::new(),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::BoxIndicator { lo, hi, value } => write!(f, "BoxIndicator({lo:?}, {hi:?}, {value})"),
            ScalarField::Smooth(_) => f.write_str("Smooth(..)"),
        }
    }
}

#[derive(Clone)]
pub enum VectorField {
    Constant([f64; 2]),
    Smooth(VectorFn),
}

impl VectorField {
    pub fn zero() -> Self {
        VectorField::Constant([0.0, 0.0])
    }

    pub fn eval(&self, x: Point) -> [f64; 2] {
        match self {
            VectorField::Constant(c) => *c,
            VectorField::Smooth(f) => f(x),
        }
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Constant(c) => write!(f, "Constant({c:?})"),
            VectorField::Smooth(_) => f.write_str("Smooth(..)"),
        }
    }
}

/// Element quadrature for data terms: the degree-4 rule, applied piecewise on
/// triangles cut by the breaklines of discontinuous data.
#[derive(Clone, Debug)]
pub struct DataQuadrature {
    rule: QuadRule,
    breaklines: Vec<Breakline>,
}

impl DataQuadrature {
    pub fn new(fields: &[&ScalarField]) -> Self {
        let mut breaklines: Vec<Breakline> = fields.iter().flat_map(|f| f.breaklines()).collect();
        breaklines.dedup();
        DataQuadrature { rule: quadrature_rule(4).expect("degree 4 is supported"), breaklines }
    }

    pub fn points(&self, el: &Element, out: &mut Vec<(Point, f64)>) {
        out.clear();
        if self.breaklines.is_empty() {
            self.rule.map_to(el.corners, out);
        } else {
            clipped_points(&self.rule, el.corners, &self.breaklines, out);
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub f1: ScalarField,
    pub f2: VectorField,
    pub nonlinearity: Nonlinearity,
    pub c_f: f64,
}

impl ProblemSpec {
    pub fn new(domain: Domain, f1: ScalarField, f2: VectorField, nonlinearity: Nonlinearity) -> Self {
        ProblemSpec { domain, f1, f2, nonlinearity, c_f: domain.default_c_f() }
    }

    /// `-div sigma(grad u) = 1` on the L-shape with `phi(t) = 2 + 1/(1+t)`.
    pub fn convex_energy() -> Self {
        Self::new(Domain::LShape, ScalarField::Constant(1.0), VectorField::zero(), Nonlinearity::convex_energy())
    }

    /// Forchheimer flow driven by the indicator of (-0.6,-0.4) x (0.4,0.6),
    /// posed for the flux `sigma(grad u)`, which is the negated velocity.
    pub fn porous_media() -> Self {
        Self::new(
            Domain::LShape,
            ScalarField::BoxIndicator { lo: [-0.6, 0.4], hi: [-0.4, 0.6], value: 1.0 },
            VectorField::zero(),
            Nonlinearity::forchheimer_default(),
        )
    }

    pub fn with_c_f(mut self, c_f: f64) -> Self {
        self.c_f = c_f;
        self
    }

    pub fn data_quadrature(&self) -> DataQuadrature {
        DataQuadrature::new(&[&self.f1])
    }
}
