//! Legendre polynomials, Gauss–Legendre rules and Gauss–Lobatto points.

use std::f64::consts::PI;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Evaluates `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
pub fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    (p, p_prev)
}

/// Returns `(P_n(x), P_n'(x))`. Valid for |x| < 1.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (p, p_prev) = legendre_pair(n, x);
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// `P_n'(x)` valid on the closed interval, endpoints included.
pub fn legendre_derivative(n: usize, x: f64) -> f64 {
    if (x.abs() - 1.0).abs() < f64::EPSILON {
        let nf = n as f64;
        let s = if x > 0.0 || n % 2 == 1 { 1.0 } else { -1.0 };
        return s * nf * (nf + 1.0) / 2.0;
    }
    legendre_with_derivative(n, x).1
}

/// A quadrature rule on a reference interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `n`-point Gauss–Legendre rule on [-1, 1], exact for degree `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..NEWTON_MAX_ITER {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() <= NEWTON_TOL {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = -x;
            points[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        QuadratureRule { points, weights }
    }

    /// Affine map of the rule from [-1, 1] to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> Self {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        QuadratureRule {
            points: self.points.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Lobatto points on [-1, 1] in increasing order, `m + 1` of them.
///
/// Interior points are the roots of `P_m'`, found by Newton iteration seeded
/// with the Chebyshev–Gauss–Lobatto points. The result is symmetrized.
pub fn gauss_lobatto_points(m: usize) -> Vec<f64> {
    assert!(m >= 1);
    let mut pts = vec![0.0; m + 1];
    pts[0] = -1.0;
    pts[m] = 1.0;
    for k in 1..m {
        let mut x = -(PI * k as f64 / m as f64).cos();
        for _ in 0..NEWTON_MAX_ITER {
            // q = P_m', q' = P_m'' = (2x P_m' - m(m+1) P_m) / (1 - x^2)
            let (p, dp) = legendre_with_derivative(m, x);
            let d2p = (2.0 * x * dp - (m * (m + 1)) as f64 * p) / (1.0 - x * x);
            let dx = dp / d2p;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        pts[k] = x;
    }
    for k in 1..=(m / 2) {
        let s = 0.5 * (pts[m - k] - pts[k]);
        pts[k] = -s;
        pts[m - k] = s;
    }
    if m % 2 == 0 {
        pts[m / 2] = 0.0;
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..=12 {
            let rule = QuadratureRule::gauss_legendre(n);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let q = rule.integrate(|x| x.powi(deg as i32));
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn lobatto_four_points() {
        let p = gauss_lobatto_points(3);
        let r = 1.0 / 5f64.sqrt();
        assert!((p[1] + r).abs() < 1e-15 && (p[2] - r).abs() < 1e-15);
    }

    #[test]
    fn lobatto_roots_of_derivative() {
        for m in 2..=14 {
            let p = gauss_lobatto_points(m);
            for &x in &p[1..m] {
                let (_, dp) = legendre_with_derivative(m, x);
                assert!(dp.abs() < 1e-12, "m={m} x={x} residual {dp}");
            }
        }
    }

    #[test]
    fn endpoint_derivative() {
        // P_2 = (3x^2 - 1)/2, P_2'(±1) = ±3
        assert_eq!(legendre_derivative(2, 1.0), 3.0);
        assert_eq!(legendre_derivative(2, -1.0), -3.0);
        assert_eq!(legendre_derivative(3, -1.0), 6.0);
    }
}
