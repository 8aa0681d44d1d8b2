//! Summation, interval estimates, the two-sample KS test and log-log fits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const Z95: f64 = 1.959_963_984_540_054;
pub const Z99: f64 = 2.575_829_303_548_901;

/// Pairwise (cascade) summation, so the result does not depend on how
/// many workers produced the inputs.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() <= 16 {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// Sample mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = pairwise_sum(x) / n;
    if x.len() < 2 {
        return (m, f64::INFINITY);
    }
    let dev: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Exact two-sample KS statistic with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 100 || b.len() < 100 {
        return Err(Error::Stats(format!("KS needs at least 100 samples per side, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Stats("NaN in KS sample".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] <= t {
            i += 1;
        }
        while j < m && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let p_value = kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult { statistic: d, p_value })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% bootstrap interval for the slope.
    pub ci: (f64, f64),
}

fn wls(lx: &[f64], ly: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = lx.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ly.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxy: f64 = lx.iter().zip(ly).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().zip(w).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Weighted least squares of `log y` on `log x`.
///
/// With standard errors `se` the weights are `(y/se)²` and the interval comes
/// from a parametric bootstrap; without them the residuals are resampled.
pub fn scaling_fit(xs: &[f64], ys: &[f64], se: Option<&[f64]>, seed: u64) -> Result<ScalingFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Stats(format!("scaling fit needs >= 3 paired points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Stats("scaling fit requires positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let sig: Option<Vec<f64>> = se.map(|s| s.iter().zip(ys).map(|(s, y)| (s / y).max(1e-300)).collect());
    let w: Vec<f64> = match &sig {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; xs.len()],
    };
    let (slope, intercept) = wls(&lx, &ly, &w);
    let resid: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut boot: Vec<f64> = (0..2000)
        .map(|_| {
            let yb: Vec<f64> = (0..lx.len())
                .map(|i| {
                    let fit = intercept + slope * lx[i];
                    match &sig {
                        Some(s) => fit + s[i] * std_normal.sample(&mut rng),
                        None => fit + resid[rand::Rng::random_range(&mut rng, 0..resid.len())],
                    }
                })
                .collect();
            wls(&lx, &yb, &w).0
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let ci = (boot[50], boot[1949]);
    Ok(ScalingFit { slope, intercept, ci })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn pairwise_matches_naive() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert!((pairwise_sum(&x) - x.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!((r.statistic - 0.5).abs() < 0.03, "{}", r.statistic);
        assert!(r.p_value < 1e-10);
        assert!(ks_two_sample(&a[..50], &a).is_err());
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // classic critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn wilson_brackets_estimate() {
        let (lo, hi) = wilson(30, 100, Z95);
        assert!(lo < 0.3 && hi > 0.3);
        assert!((lo - 0.2189).abs() < 1e-3 && (hi - 0.3958).abs() < 1e-3);
    }

    #[test]
    fn power_law_fits() {
        let xs = [0.04, 0.02, 0.01, 0.005];
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let f = scaling_fit(&xs, &ys, None, 1).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        let c = scaling_fit(&xs, &[3.0; 4], Some(&[0.1; 4]), 1).unwrap();
        assert!(c.slope.abs() < 1e-12 && c.ci.0 <= 0.0 && c.ci.1 >= 0.0);
        assert!(scaling_fit(&xs, &[1.0, 0.0, 1.0, 1.0], None, 1).is_err());
    }
}
