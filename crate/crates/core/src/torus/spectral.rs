//! FFT-based operations on uniformly sampled periodic functions on `[0, 2π)`.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

/// Planned forward/inverse transforms for one grid size.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Grid nodes `y_i = 2π i / n`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| TAU * i as f64 / self.n as f64).collect()
    }

    /// Signed integer wavenumber of FFT slot `i`; the Nyquist slot maps to `None`.
    fn wavenumber(&self, i: usize) -> Option<f64> {
        let n = self.n;
        if 2 * i == n {
            None
        } else if i < n / 2 {
            Some(i as f64)
        } else {
            Some(i as f64 - n as f64)
        }
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        assert_eq!(f.len(), self.n);
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut c);
        let scale = 1.0 / self.n as f64;
        c.iter().map(|z| z.re * scale).collect()
    }

    fn apply(&self, f: &[f64], mult: impl Fn(Option<f64>) -> Complex64) -> Vec<f64> {
        let mut c = self.forward(f);
        for (i, z) in c.iter_mut().enumerate() {
            *z *= mult(self.wavenumber(i));
        }
        self.inverse(c)
    }

    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f, |k| k.map_or(Complex64::new(0.0, 0.0), |k| Complex64::new(0.0, k)))
    }

    pub fn second_derivative(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f, |k| k.map_or(Complex64::new(0.0, 0.0), |k| Complex64::new(-k * k, 0.0)))
    }

    /// Periodic solution `S` of `S' + κ S = f`.
    ///
    /// For `κ = 0` this is the mean-zero antiderivative and the mean of `f`
    /// is discarded; callers check solvability themselves.
    pub fn resolvent(&self, f: &[f64], kappa: f64) -> Vec<f64> {
        self.apply(f, |k| match k {
            None => Complex64::new(0.0, 0.0),
            Some(k) if k == 0.0 && kappa == 0.0 => Complex64::new(0.0, 0.0),
            Some(k) => Complex64::new(1.0, 0.0) / Complex64::new(kappa, k),
        })
    }

    pub fn mean(f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

/// Truncated real Fourier series `a0 + Σ_k (a_k cos ky + b_k sin ky)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct FourierSeries {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl FourierSeries {
    pub fn constant(c: f64) -> Self {
        FourierSeries { mean: c, cos: vec![], sin: vec![] }
    }

    pub fn cos_k(k: usize, amp: f64) -> Self {
        let mut cos = vec![0.0; k];
        cos[k - 1] = amp;
        FourierSeries { mean: 0.0, cos, sin: vec![] }
    }

    pub fn sin_k(k: usize, amp: f64) -> Self {
        let mut sin = vec![0.0; k];
        sin[k - 1] = amp;
        FourierSeries { mean: 0.0, cos: vec![], sin }
    }

    /// Fits grid samples, dropping trailing modes below `tol` times the largest.
    pub fn from_samples(spectral: &Spectral, f: &[f64], tol: f64) -> Self {
        let n = f.len();
        let c = spectral.forward(f);
        let scale = 2.0 / n as f64;
        let kmax = n / 2 - 1;
        let mut cos: Vec<f64> = (1..=kmax).map(|k| c[k].re * scale).collect();
        let mut sin: Vec<f64> = (1..=kmax).map(|k| -c[k].im * scale).collect();
        let biggest = cos.iter().chain(&sin).fold(c[0].re.abs() / n as f64, |m, x| m.max(x.abs()));
        let keep = (0..kmax)
            .rev()
            .find(|&k| cos[k].abs().max(sin[k].abs()) > tol * biggest)
            .map_or(0, |k| k + 1);
        cos.truncate(keep);
        sin.truncate(keep);
        FourierSeries { mean: c[0].re / n as f64, cos, sin }
    }

    fn order(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.eval_with_derivative(y).0
    }

    pub fn eval_with_derivative(&self, y: f64) -> (f64, f64) {
        let (s1, c1) = y.sin_cos();
        let (mut sk, mut ck) = (0.0, 1.0);
        let (mut f, mut df) = (self.mean, 0.0);
        for k in 0..self.order() {
            let (s, c) = (sk * c1 + ck * s1, ck * c1 - sk * s1);
            sk = s;
            ck = c;
            let a = self.cos.get(k).copied().unwrap_or(0.0);
            let b = self.sin.get(k).copied().unwrap_or(0.0);
            let kf = (k + 1) as f64;
            f += a * ck + b * sk;
            df += kf * (b * ck - a * sk);
        }
        (f, df)
    }

    pub fn sample(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&y| self.eval(y)).collect()
    }
}

/// Several periodic functions sampled on one grid, interpolated by cubic
/// Hermite segments using spectral nodal derivatives.
#[derive(Clone, Debug)]
pub struct TorusTable {
    n: usize,
    channels: usize,
    inv_h: f64,
    h: f64,
    // layout: node-major, then channel, then (value, derivative)
    data: Vec<[f64; 2]>,
}

impl TorusTable {
    pub fn new(spectral: &Spectral, columns: &[Vec<f64>]) -> Self {
        let n = spectral.len();
        let derivs: Vec<Vec<f64>> = columns.iter().map(|c| spectral.derivative(c)).collect();
        let channels = columns.len();
        let mut data = Vec::with_capacity(n * channels);
        for i in 0..n {
            for c in 0..channels {
                data.push([columns[c][i], derivs[c][i]]);
            }
        }
        TorusTable { n, channels, inv_h: n as f64 / TAU, h: TAU / n as f64, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Evaluates every channel at `y ∈ [0, 2π)` into `out`.
    #[inline]
    pub fn eval_into(&self, y: f64, out: &mut [f64]) {
        let t = y * self.inv_h;
        let mut i = t as usize;
        let mut s = t - i as f64;
        if i >= self.n {
            i = self.n - 1;
            s = 1.0;
        }
        let j = if i + 1 == self.n { 0 } else { i + 1 };
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * self.h;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * self.h;
        let a = &self.data[i * self.channels..(i + 1) * self.channels];
        let b = &self.data[j * self.channels..(j + 1) * self.channels];
        for c in 0..self.channels {
            out[c] = h00 * a[c][0] + h10 * a[c][1] + h01 * b[c][0] + h11 * b[c][1];
        }
    }
}

/// Wraps an angle into `[0, 2π)` by floored modulo.
#[inline]
pub fn wrap_angle(y: f64) -> f64 {
    let r = y.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_and_resolvent_are_spectral() {
        let sp = Spectral::new(64);
        let y = sp.nodes();
        let f: Vec<f64> = y.iter().map(|y| (y.cos()).exp()).collect();
        let df = sp.derivative(&f);
        for (i, y) in y.iter().enumerate() {
            assert!((df[i] + y.sin() * y.cos().exp()).abs() < 1e-12);
        }
        // S' + 2 S = cos y has S = (2 cos y + sin y) / 5
        let g: Vec<f64> = y.iter().map(|y| y.cos()).collect();
        let s = sp.resolvent(&g, 2.0);
        for (i, y) in y.iter().enumerate() {
            assert!((s[i] - (2.0 * y.cos() + y.sin()) / 5.0).abs() < 1e-14);
        }
    }

    #[test]
    fn fourier_fit_recovers_coefficients() {
        let sp = Spectral::new(32);
        let y = sp.nodes();
        let f: Vec<f64> = y.iter().map(|y| 0.5 - 1.5 * y.sin() + 0.25 * (3.0 * y).cos()).collect();
        let fs = FourierSeries::from_samples(&sp, &f, 1e-14);
        assert_eq!(fs.cos.len(), 3);
        assert!((fs.mean - 0.5).abs() < 1e-15);
        assert!((fs.sin[0] + 1.5).abs() < 1e-14);
        assert!((fs.cos[2] - 0.25).abs() < 1e-14);
        let (v, d) = fs.eval_with_derivative(0.7);
        assert!((v - (0.5 - 1.5 * 0.7f64.sin() + 0.25 * 2.1f64.cos())).abs() < 1e-14);
        assert!((d - (-1.5 * 0.7f64.cos() - 0.75 * 2.1f64.sin())).abs() < 1e-13);
    }

    #[test]
    fn hermite_table_accuracy() {
        let sp = Spectral::new(512);
        let y = sp.nodes();
        let f: Vec<f64> = y.iter().map(|y| y.cos().exp()).collect();
        let table = TorusTable::new(&sp, &[f]);
        let mut out = [0.0];
        let mut worst: f64 = 0.0;
        for k in 0..1000 {
            let yy = TAU * (k as f64 + 0.37) / 1000.0;
            table.eval_into(yy, &mut out);
            worst = worst.max((out[0] - yy.cos().exp()).abs());
        }
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn wrap_is_floored() {
        assert_eq!(wrap_angle(-1e-18), 0.0);
        assert!((wrap_angle(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert!((wrap_angle(TAU + 0.25) - 0.25).abs() < 1e-15);
    }
}
