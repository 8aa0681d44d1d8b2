//! Forward-mode automatic differentiation in two variables.
//!
//! [`Dual2`] carries a value and gradient, [`Jet2`] additionally carries the
//! (symmetric) Hessian. Both implement [`Real`], so a Hamiltonian written once
//! as a generic function yields `H`, `∇H` and `∇²H` by monomorphization.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64` and the dual number types.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(c: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn powf(self, p: Self) -> Self {
        (p * self.ln()).exp()
    }

    fn scale(self, c: f64) -> Self {
        self * Self::cst(c)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn powf(self, p: Self) -> Self {
        f64::powf(self, p)
    }
}

/// Value plus gradient with respect to `(x1, x2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub g: [f64; 2],
}

impl Dual2 {
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; 2];
        g[i] = 1.0;
        Dual2 { v, g }
    }

    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        Dual2 { v: f, g: [df * self.g[0], df * self.g[1]] }
    }
}

impl Add for Dual2 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual2 { v: self.v + o.v, g: [self.g[0] + o.g[0], self.g[1] + o.g[1]] }
    }
}

impl Sub for Dual2 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual2 { v: self.v - o.v, g: [self.g[0] - o.g[0], self.g[1] - o.g[1]] }
    }
}

impl Mul for Dual2 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual2 {
            v: self.v * o.v,
            g: [self.v * o.g[0] + o.v * self.g[0], self.v * o.g[1] + o.v * self.g[1]],
        }
    }
}

impl Div for Dual2 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        Dual2 { v, g: [(self.g[0] - v * o.g[0]) * inv, (self.g[1] - v * o.g[1]) * inv] }
    }
}

impl Neg for Dual2 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual2 { v: -self.v, g: [-self.g[0], -self.g[1]] }
    }
}

impl Real for Dual2 {
    #[inline]
    fn cst(c: f64) -> Self {
        Dual2 { v: c, g: [0.0; 2] }
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::cst(1.0),
            1 => self,
            2 => self * self,
            _ => self.chain(self.v.powi(n), n as f64 * self.v.powi(n - 1)),
        }
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Dual2 { v: self.v * c, g: [self.g[0] * c, self.g[1] * c] }
    }
}

/// Value, gradient and Hessian. The Hessian is stored as `[h11, h12, h22]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [f64; 3],
}

impl Jet2 {
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; 2];
        g[i] = 1.0;
        Jet2 { v, g, h: [0.0; 3] }
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        [[self.h[0], self.h[1]], [self.h[1], self.h[2]]]
    }

    /// Applies a scalar function with derivatives `df`, `d2f` at `self.v`.
    #[inline]
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let g = self.g;
        Jet2 {
            v: f,
            g: [df * g[0], df * g[1]],
            h: [
                df * self.h[0] + d2f * g[0] * g[0],
                df * self.h[1] + d2f * g[0] * g[1],
                df * self.h[2] + d2f * g[1] * g[1],
            ],
        }
    }
}

impl Add for Jet2 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Jet2 {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl Sub for Jet2 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for Jet2 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let (a, b) = (self, o);
        Jet2 {
            v: a.v * b.v,
            g: [a.v * b.g[0] + b.v * a.g[0], a.v * b.g[1] + b.v * a.g[1]],
            h: [
                a.v * b.h[0] + b.v * a.h[0] + 2.0 * a.g[0] * b.g[0],
                a.v * b.h[1] + b.v * a.h[1] + a.g[0] * b.g[1] + a.g[1] * b.g[0],
                a.v * b.h[2] + b.v * a.h[2] + 2.0 * a.g[1] * b.g[1],
            ],
        }
    }
}

impl Div for Jet2 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        self * o.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Neg for Jet2 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Jet2 {
            v: -self.v,
            g: [-self.g[0], -self.g[1]],
            h: [-self.h[0], -self.h[1], -self.h[2]],
        }
    }
}

impl Real for Jet2 {
    #[inline]
    fn cst(c: f64) -> Self {
        Jet2 { v: c, g: [0.0; 2], h: [0.0; 3] }
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(self.v.ln(), inv, -inv * inv)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::cst(1.0),
            1 => self,
            2 => self * self,
            _ => {
                let nf = n as f64;
                self.chain(
                    self.v.powi(n),
                    nf * self.v.powi(n - 1),
                    nf * (nf - 1.0) * self.v.powi(n - 2),
                )
            }
        }
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Jet2 {
            v: self.v * c,
            g: [self.g[0] * c, self.g[1] * c],
            h: [self.h[0] * c, self.h[1] * c, self.h[2] * c],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(x: T, y: T) -> T {
        (x * y).sin() + (x / (T::cst(2.0) + y.cos())).exp() - y.powi(3)
    }

    #[test]
    fn jet_matches_finite_differences() {
        let (x, y) = (0.37, -0.81);
        let j = f(Jet2::var(x, 0), Jet2::var(y, 1));
        let h = 1e-5;
        let fx = |x: f64, y: f64| f(x, y);
        let gx = (fx(x + h, y) - fx(x - h, y)) / (2.0 * h);
        let gy = (fx(x, y + h) - fx(x, y - h)) / (2.0 * h);
        assert!((j.g[0] - gx).abs() < 1e-8);
        assert!((j.g[1] - gy).abs() < 1e-8);
        let hxy = (fx(x + h, y + h) - fx(x + h, y - h) - fx(x - h, y + h) + fx(x - h, y - h))
            / (4.0 * h * h);
        assert!((j.h[1] - hxy).abs() < 1e-5);
        let d = f(Dual2::var(x, 0), Dual2::var(y, 1));
        assert!((d.g[0] - j.g[0]).abs() < 1e-14 && (d.g[1] - j.g[1]).abs() < 1e-14);
    }

    #[test]
    fn powf_of_jet() {
        let x = Jet2::var(1.7, 0);
        let p = x.powf(Jet2::cst(2.5));
        assert!((p.v - 1.7f64.powf(2.5)).abs() < 1e-12);
        assert!((p.g[0] - 2.5 * 1.7f64.powf(1.5)).abs() < 1e-12);
        assert!((p.h[0] - 2.5 * 1.5 * 1.7f64.powf(0.5)).abs() < 1e-12);
    }
}
