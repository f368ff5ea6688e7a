//! Quadrature on triangles, including exact integration of piecewise
//! constant data with axis-aligned breaklines.

use crate::mesh::Point;

use super::AssemblyError;

/// Rule on the reference triangle (0,0), (1,0), (0,1); weights sum to 1/2.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

const D4_A: [f64; 2] = [0.108103018168070, 0.445948490915965];
const D4_B: [f64; 2] = [0.816847572980459, 0.091576213509771];
const D4_WA: f64 = 0.223381589678011;
const D4_WB: f64 = 0.109951743655322;

pub fn quadrature_rule(degree: usize) -> Result<QuadRule, AssemblyError> {
    let (points, weights) = match degree {
        1 => (vec![[1.0 / 3.0, 1.0 / 3.0]], vec![0.5]),
        2 => (vec![[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]], vec![1.0 / 6.0; 3]),
        3 | 4 => {
            let mut pts = Vec::with_capacity(6);
            let mut w = Vec::with_capacity(6);
            for ([a, b], wt) in [(D4_A, D4_WA), (D4_B, D4_WB)] {
                // Barycentric (a, b, b) and its rotations; reference coordinates
                // are the last two barycentrics.
                for bary in [[a, b, b], [b, a, b], [b, b, a]] {
                    pts.push([bary[1], bary[2]]);
                    w.push(0.5 * wt);
                }
            }
            (pts, w)
        }
        d => return Err(AssemblyError::UnsupportedDegree(d)),
    };
    Ok(QuadRule { degree, points, weights })
}

impl QuadRule {
    /// Physical points and weights on the triangle with the given corners.
    pub fn map_to(&self, corners: [Point; 3], out: &mut Vec<(Point, f64)>) {
        let [p0, p1, p2] = corners;
        let jac = ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])).abs();
        for (q, &w) in self.points.iter().zip(&self.weights) {
            let x = [
                p0[0] + q[0] * (p1[0] - p0[0]) + q[1] * (p2[0] - p0[0]),
                p0[1] + q[0] * (p1[1] - p0[1]) + q[1] * (p2[1] - p0[1]),
            ];
            out.push((x, w * jac));
        }
    }
}

/// Axis-aligned line `coord[axis] = value`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakline {
    pub axis: usize,
    pub value: f64,
}

/// Splits a convex polygon into the parts below and above a breakline.
fn split(poly: &[Point], line: Breakline) -> (Vec<Point>, Vec<Point>) {
    let side = |p: &Point| p[line.axis] - line.value;
    let (mut below, mut above) = (Vec::new(), Vec::new());
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(&p), side(&q));
        if sp <= 0.0 {
            below.push(p);
        }
        if sp >= 0.0 {
            above.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            let mut x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
            x[line.axis] = line.value;
            below.push(x);
            above.push(x);
        }
    }
    (below, above)
}

fn polygon_area(poly: &[Point]) -> f64 {
    let mut a = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        a += p[0] * q[1] - p[1] * q[0];
    }
    0.5 * a
}

/// Quadrature points on a triangle cut along the breaklines into convex
/// pieces, each fan-triangulated and integrated with the given rule.
pub fn clipped_points(rule: &QuadRule, corners: [Point; 3], lines: &[Breakline], out: &mut Vec<(Point, f64)>) {
    let scale = corners.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, &c| m.max(c.abs())).max(1.0);
    let mut pieces = vec![corners.to_vec()];
    for &line in lines {
        let lo = corners.iter().map(|p| p[line.axis]).fold(f64::INFINITY, f64::min);
        let hi = corners.iter().map(|p| p[line.axis]).fold(f64::NEG_INFINITY, f64::max);
        if line.value <= lo || line.value >= hi {
            continue;
        }
        pieces = pieces
            .into_iter()
            .flat_map(|poly| {
                let (a, b) = split(&poly, line);
                [a, b]
            })
            .filter(|poly| poly.len() >= 3 && polygon_area(poly) > 1e-15 * scale * scale)
            .collect();
    }
    for poly in pieces {
        for i in 1..poly.len() - 1 {
            let tri = [poly[0], poly[i], poly[i + 1]];
            let a = polygon_area(&tri);
            if a > 0.0 {
                rule.map_to(tri, out);
            }
        }
    }
}
