//! One-dimensional interpolants on strictly increasing abscissae.

use serde::{Deserialize, Serialize};

fn locate(x: &[f64], t: f64) -> usize {
    x.partition_point(|&v| v <= t).clamp(1, x.len() - 1) - 1
}

/// Piecewise cubic Hermite interpolant with Fritsch–Carlson slopes; it
/// never overshoots monotone data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "pchip needs >= 2 paired points");
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![s[0]; 2];
        } else {
            for i in 1..n - 1 {
                if s[i - 1] * s[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
                }
            }
            let end = |h0: f64, h1: f64, s0: f64, s1: f64| {
                let mut e = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
                if e * s0 <= 0.0 {
                    e = 0.0;
                } else if s0 * s1 <= 0.0 && e.abs() > 3.0 * s0.abs() {
                    e = 3.0 * s0;
                }
                e
            };
            d[0] = end(h[0], h[1], s[0], s[1]);
            d[n - 1] = end(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
        }
        Pchip { x, y, d }
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    /// Value, clamped to the end values outside the data range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = locate(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[i]
            + (s3 - 2.0 * s2 + s) * h * self.d[i]
            + (-2.0 * s3 + 3.0 * s2) * self.y[i + 1]
            + (s3 - s2) * h * self.d[i + 1]
    }
}

/// Not-a-knot cubic spline, used where a smooth derivative is needed.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 4 && y.len() == n, "spline needs >= 4 paired points");
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        // dense tridiagonal-plus-corners system; n is small (tables, not grids)
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut rhs = nalgebra::DVector::<f64>::zeros(n);
        for i in 1..n - 1 {
            a[(i, i - 1)] = h[i - 1];
            a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
            a[(i, i + 1)] = h[i];
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        // third derivative continuous across the second and penultimate knots
        a[(0, 0)] = h[1];
        a[(0, 1)] = -(h[0] + h[1]);
        a[(0, 2)] = h[0];
        a[(n - 1, n - 3)] = h[n - 2];
        a[(n - 1, n - 2)] = -(h[n - 3] + h[n - 2]);
        a[(n - 1, n - 1)] = h[n - 3];
        let m = a.lu().solve(&rhs).map(|v| v.iter().copied().collect()).unwrap_or_else(|| vec![0.0; n]);
        CubicSpline { x, y, m }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).1
    }

    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let i = locate(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let (a, b) = ((self.x[i + 1] - t) / h, (t - self.x[i]) / h);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let v = a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (self.y[i + 1] - self.y[i]) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        (v, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pchip_is_monotone_and_interpolates() {
        let x = vec![0.0, 1.0, 1.5, 4.0, 5.0];
        let y = vec![0.0, 0.1, 3.0, 3.1, 10.0];
        let p = Pchip::new(x.clone(), y.clone());
        for (xi, yi) in x.iter().zip(&y) {
            assert!((p.eval(*xi) - yi).abs() < 1e-14);
        }
        let mut prev = -1.0;
        for k in 0..=500 {
            let v = p.eval(5.0 * k as f64 / 500.0);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn spline_reproduces_cubics() {
        let x: Vec<f64> = vec![0.0, 0.3, 0.35, 1.0, 1.7, 2.0];
        let f = |t: f64| t * t * t - 2.0 * t + 1.0;
        let s = CubicSpline::new(x.clone(), x.iter().map(|&t| f(t)).collect());
        for t in [0.1, 0.5, 1.2, 1.9] {
            let (v, d) = s.eval_with_derivative(t);
            assert!((v - f(t)).abs() < 1e-12);
            assert!((d - (3.0 * t * t - 2.0)).abs() < 1e-11);
        }
    }
}
