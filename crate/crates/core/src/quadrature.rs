//! Gauss rules on intervals, segments and triangles.

use crate::geometry::triangle_area;
use crate::Point;

/// A physical quadrature point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub point: Point,
    pub weight: f64,
}

/// Gauss–Legendre rule with `n` points on `[0, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let legendre = |z: f64| {
            let (mut p_prev, mut p) = (0.0, 1.0);
            for j in 1..=n {
                let p_next = ((2 * j - 1) as f64 * z * p - (j - 1) as f64 * p_prev) / j as f64;
                p_prev = p;
                p = p_next;
            }
            (p, n as f64 * (z * p - p_prev) / (z * z - 1.0))
        };
        // Newton iteration on P_n from the usual cosine guess
        for _ in 0..100 {
            let (p, dp) = legendre(z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(z);
        let weight = 1.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    (x, w)
}

/// Number of Gauss points on a segment for polynomial exactness `degree`.
pub fn segment_points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// Reference-triangle rule on `(0,0), (1,0), (0,1)`; weights sum to 1/2.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed (Duffy) tensor Gauss rule exact for polynomials of total
    /// degree `degree`.
    pub fn new(degree: usize) -> Self {
        // the Duffy Jacobian adds one degree in the collapsed direction
        let n = (degree + 2).div_ceil(2).max(1);
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let s = x[i];
                let t = x[j];
                points.push([s, t * (1.0 - s)]);
                weights.push(w[i] * w[j] * (1.0 - s));
            }
        }
        TriangleRule {
            degree,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps the rule onto a physical triangle.
    pub fn map(&self, tri: &[Point; 3]) -> impl Iterator<Item = QuadPoint> + '_ {
        let area = triangle_area(tri);
        let (a, b, c) = (tri[0], tri[1], tri[2]);
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(p, &w)| QuadPoint {
                point: a + (b - a) * p[0] + (c - a) * p[1],
                weight: 2.0 * area * w,
            })
    }
}

/// Gauss rule on the segment `a → b` exact to `degree`.
pub fn segment_rule(a: &Point, b: &Point, degree: usize) -> Vec<QuadPoint> {
    let (x, w) = gauss_legendre(segment_points_for_degree(degree));
    let len = (b - a).norm();
    x.iter()
        .zip(&w)
        .map(|(&t, &wt)| QuadPoint {
            point: a + (b - a) * t,
            weight: wt * len,
        })
        .collect()
}
