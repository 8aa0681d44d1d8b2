//! The fast diffusion on the circle: model description, invariant measure
//! and the Euler–Maruyama step used inside the coupled integrator.

pub mod spectral;

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use spectral::{wrap_angle, FourierSeries, Spectral, TorusTable};

/// Smallest admissible `σ²` on the grid.
pub const LAMBDA_MIN: f64 = 1e-10;
/// Drift-to-diffusion means below this are treated as the zero-flux case.
const KAPPA_ZERO: f64 = 1e-12;
pub const DEFAULT_GRID: usize = 512;

/// `dξ = v(ξ) dt + σ(ξ) dW` on `[0, 2π)`, both coefficients given as Fourier series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastProcessSpec {
    pub v: FourierSeries,
    pub sigma: FourierSeries,
    pub grid_n: usize,
}

impl FastProcessSpec {
    pub fn new(v: FourierSeries, sigma: FourierSeries, grid_n: usize) -> Self {
        FastProcessSpec { v, sigma, grid_n }
    }

    /// `v = −k sin y`, constant `σ`. The density is `∝ exp(2k cos y / σ²)`.
    pub fn von_mises(k: f64, sigma: f64) -> Self {
        Self::new(FourierSeries::sin_k(1, -k), FourierSeries::constant(sigma), DEFAULT_GRID)
    }

    pub fn constant_drift(c: f64, sigma: f64) -> Self {
        Self::new(FourierSeries::constant(c), FourierSeries::constant(sigma), DEFAULT_GRID)
    }

    /// Looks up a named model. Known names: `von_mises` (`k`, `sigma`),
    /// `constant_drift` (`c`, `sigma`) and `brownian` (`sigma`).
    pub fn from_registry(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "von_mises" => &["k", "sigma", "grid_n"],
            "constant_drift" => &["c", "sigma", "grid_n"],
            "brownian" => &["sigma", "grid_n"],
            other => return Err(Error::Config(format!("unknown fast process `{other}`"))),
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("parameter `{bad}` not accepted by `{name}`")));
        }
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        let sigma = get("sigma", std::f64::consts::SQRT_2);
        let mut spec = match name {
            "von_mises" => Self::von_mises(get("k", 1.0), sigma),
            "constant_drift" => Self::constant_drift(get("c", 0.0), sigma),
            _ => Self::constant_drift(0.0, sigma),
        };
        spec.grid_n = get("grid_n", DEFAULT_GRID as f64) as usize;
        Ok(spec)
    }

    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid_n = n;
        self
    }

    /// Checks the grid size, finiteness and ellipticity on the grid.
    pub fn validate(&self) -> Result<()> {
        let (s2, at) = self.min_sigma2()?;
        if s2 < LAMBDA_MIN {
            return Err(Error::NonElliptic { min_sigma2: s2, at });
        }
        Ok(())
    }

    /// Smallest `σ²` on the grid and where it occurs.
    fn min_sigma2(&self) -> Result<(f64, f64)> {
        let n = self.grid_n;
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::BadGrid(n));
        }
        let nodes = Spectral::new(n).nodes();
        let mut worst = (f64::INFINITY, 0.0);
        for &y in &nodes {
            let v = self.v.eval(y);
            let s = self.sigma.eval(y);
            if !v.is_finite() || !s.is_finite() {
                return Err(Error::NonFinite { at: y });
            }
            if s * s < worst.0 {
                worst = (s * s, y);
            }
        }
        Ok(worst)
    }

    /// Copy with `σ` multiplied by `c`.
    pub fn scaled_sigma(&self, c: f64) -> Self {
        let s = &self.sigma;
        let sigma = FourierSeries {
            mean: s.mean * c,
            cos: s.cos.iter().map(|a| a * c).collect(),
            sin: s.sin.iter().map(|a| a * c).collect(),
        };
        FastProcessSpec { sigma, ..self.clone() }
    }
}

/// The invariant probability measure `μ(dy) = p(y) dy` on the grid.
#[derive(Clone, Debug)]
pub struct InvariantMeasure {
    pub nodes: Vec<f64>,
    pub density: Vec<f64>,
    /// `Σ weights[i]·f(y_i)` integrates `f` against `μ`.
    pub weights: Vec<f64>,
    /// The unnormalized density was divided by this constant.
    pub normalization: f64,
    /// Probability flux `J` in `(σ²p/2)′ − v p = −J`.
    pub flux: f64,
    /// Max-norm of `L*p` relative to `max p`.
    pub residual: f64,
    pub spectral: Spectral,
    cdf: Vec<f64>,
    /// Grid samples of `v` and `σ²/2`, reused by the cell problems.
    pub(crate) drift: Vec<f64>,
    pub(crate) diff: Vec<f64>,
}

impl InvariantMeasure {
    pub fn grid_n(&self) -> usize {
        self.nodes.len()
    }

    /// Quadrature of `f` sampled on the grid against `μ`.
    pub fn mean_of(&self, f: &[f64]) -> f64 {
        crate::stats::pairwise_dot(&self.weights, f)
    }

    /// Inverse-CDF sample for `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.nodes.len();
        let h = TAU / n as f64;
        // cdf has n + 1 entries, cdf[0] = 0, cdf[n] = 1
        let i = match self.cdf.binary_search_by(|c| c.total_cmp(&u)) {
            Ok(i) => return self.nodes.get(i).copied().unwrap_or(0.0),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        let (f0, f1) = (self.cdf[i], self.cdf[i + 1]);
        let (d0, d1) = (self.density[i] * h, self.density[(i + 1) % n] * h);
        let herm = |s: f64| {
            let (s2, s3) = (s * s, s * s * s);
            (2.0 * s3 - 3.0 * s2 + 1.0) * f0
                + (s3 - 2.0 * s2 + s) * d0
                + (-2.0 * s3 + 3.0 * s2) * f1
                + (s3 - s2) * d1
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if herm(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        wrap_angle(self.nodes[i] + 0.5 * (lo + hi) * h)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Density at an off-grid point, by trigonometric interpolation.
    pub fn density_at(&self, y: f64) -> f64 {
        FourierSeries::from_samples(&self.spectral, &self.density, 0.0).eval(y)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,p\n");
        for (y, p) in self.nodes.iter().zip(&self.density) {
            let _ = writeln!(out, "{y:.15e},{p:.15e}");
        }
        out
    }
}

/// Solves the stationary forward equation on the circle.
pub fn stationary_density(spec: &FastProcessSpec) -> Result<InvariantMeasure> {
    spec.validate()?;
    let n = spec.grid_n;
    let sp = Spectral::new(n);
    let nodes = sp.nodes();
    let drift = spec.v.sample(&nodes);
    let diff: Vec<f64> = spec.sigma.sample(&nodes).iter().map(|s| 0.5 * s * s).collect();
    // With q = D p, the equation reads q′ − ρ q = −J where ρ = v / D.
    let rho: Vec<f64> = drift.iter().zip(&diff).map(|(v, d)| v / d).collect();
    let kappa = Spectral::mean(&rho);
    let centered: Vec<f64> = rho.iter().map(|r| r - kappa).collect();
    let big_r = sp.resolvent(&centered, 0.0);
    let shift = big_r.iter().fold(f64::NEG_INFINITY, |m, &r| m.max(r));
    let q: Vec<f64> = if kappa.abs() < KAPPA_ZERO {
        big_r.iter().map(|r| (r - shift).exp()).collect()
    } else {
        // q = e^R T with T′ − κ T = e^{−R}, i.e. flux J = −1 before normalization
        let rhs: Vec<f64> = big_r.iter().map(|r| (-(r - shift)).exp()).collect();
        let t = sp.resolvent(&rhs, -kappa);
        big_r.iter().zip(&t).map(|(r, t)| (r - shift).exp() * t).collect()
    };
    let unnorm: Vec<f64> = q.iter().zip(&diff).map(|(q, d)| q / d).collect();
    let h = TAU / n as f64;
    let z = unnorm.iter().sum::<f64>() * h;
    let density: Vec<f64> = unnorm.iter().map(|p| p / z).collect();
    if let Some(i) = density.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::Residual { what: "invariant density positivity", residual: density[i], tol: 0.0 });
    }
    let flux = if kappa.abs() < KAPPA_ZERO { 0.0 } else { -1.0 / z };
    // L*p = −(v p)′ + (D p)″
    let vp: Vec<f64> = drift.iter().zip(&density).map(|(v, p)| v * p).collect();
    let dp: Vec<f64> = diff.iter().zip(&density).map(|(d, p)| d * p).collect();
    let a = sp.derivative(&vp);
    let b = sp.second_derivative(&dp);
    let pmax = density.iter().fold(0.0f64, |m, &p| m.max(p));
    let residual = a.iter().zip(&b).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max) / pmax;
    let weights: Vec<f64> = density.iter().map(|p| p * h).collect();
    let mean_p = 1.0 / TAU;
    let centered_p: Vec<f64> = density.iter().map(|p| p - mean_p).collect();
    let anti = sp.resolvent(&centered_p, 0.0);
    let mut cdf: Vec<f64> = nodes.iter().zip(&anti).map(|(y, a)| y * mean_p + a - anti[0]).collect();
    cdf.push(1.0);
    cdf[0] = 0.0;
    Ok(InvariantMeasure {
        nodes,
        density,
        weights,
        normalization: z,
        flux,
        residual,
        spectral: sp,
        cdf,
        drift,
        diff,
    })
}

/// `∫ f dμ` for a closure, with the grid quadrature of `mu`.
pub fn measure_mean(f: impl Fn(f64) -> f64, mu: &InvariantMeasure) -> f64 {
    let vals: Vec<f64> = mu.nodes.iter().map(|&y| f(y)).collect();
    mu.mean_of(&vals)
}

/// Extra drift `c(x, y)` on the fast variable.
pub trait TorusDrift: Sync {
    fn drift(&self, x: [f64; 2], y: f64) -> f64;
}

/// Hot-loop form of the fast SDE: `v` and `σ` tabulated on the grid.
#[derive(Clone, Debug)]
pub struct FastStepper {
    table: TorusTable,
    /// Largest admitted `dt / ε²`.
    pub c_fast_max: f64,
}

impl FastStepper {
    /// Unlike [`stationary_density`], a degenerate `σ` is allowed here.
    pub fn new(spec: &FastProcessSpec) -> Result<Self> {
        spec.min_sigma2()?;
        let sp = Spectral::new(spec.grid_n);
        let nodes = sp.nodes();
        let table = TorusTable::new(&sp, &[spec.v.sample(&nodes), spec.sigma.sample(&nodes)]);
        Ok(FastStepper { table, c_fast_max: 0.1 })
    }

    pub fn check_dt(&self, dt: f64, eps: f64) -> Result<()> {
        let dt_max = self.c_fast_max * eps * eps;
        if dt > dt_max * (1.0 + 1e-12) || !(dt > 0.0) {
            return Err(Error::StepTooLarge { dt, dt_max, eps });
        }
        Ok(())
    }

    /// Coefficients `(v(y), σ(y))`.
    #[inline]
    pub fn coefficients(&self, y: f64) -> (f64, f64) {
        let mut out = [0.0; 2];
        self.table.eval_into(y, &mut out);
        (out[0], out[1])
    }

    /// One step given a standard normal `z`; `extra` is added to the drift
    /// before the `ε⁻²` scaling is applied to `v`.
    #[inline]
    pub fn advance(&self, y: f64, dt: f64, eps: f64, extra: f64, z: f64) -> f64 {
        let (v, s) = self.coefficients(y);
        wrap_angle(y + (v / (eps * eps) + extra) * dt + s * (dt.sqrt() / eps) * z)
    }

    /// Euler–Maruyama step of `dξ = ε⁻² v dt + ε⁻¹ c(x, ξ) dt + ε⁻¹ σ dW`,
    /// the rescaled-time form of the fast equation.
    pub fn step(
        &self,
        y: f64,
        x: [f64; 2],
        dt: f64,
        eps: f64,
        c: Option<&dyn TorusDrift>,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        self.check_dt(dt, eps)?;
        let extra = c.map_or(0.0, |c| c.drift(x, y) / eps);
        let z: f64 = rng.sample(StandardNormal);
        Ok(self.advance(y, dt, eps, extra, z))
    }
}

/// Free-function form of [`FastStepper::step`].
pub fn step_fast(
    stepper: &FastStepper,
    y: f64,
    x: [f64; 2],
    dt: f64,
    eps: f64,
    c: Option<&dyn TorusDrift>,
    rng: &mut impl Rng,
) -> Result<f64> {
    stepper.step(y, x, dt, eps, c, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn von_mises_density() {
        let mu = stationary_density(&FastProcessSpec::von_mises(1.0, std::f64::consts::SQRT_2)).unwrap();
        let z: f64 = mu.nodes.iter().map(|y| y.cos().exp()).sum::<f64>() * TAU / 512.0;
        for (y, p) in mu.nodes.iter().zip(&mu.density) {
            assert!((p - y.cos().exp() / z).abs() < 1e-13);
        }
        assert!(mu.residual < 1e-10);
        assert_eq!(mu.flux, 0.0);
        assert!((mu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn constant_drift_is_uniform_with_flux() {
        let mu = stationary_density(&FastProcessSpec::constant_drift(0.7, std::f64::consts::SQRT_2)).unwrap();
        for p in &mu.density {
            assert!((p - 1.0 / TAU).abs() < 1e-13);
        }
        // J = v p for a uniform state
        assert!((mu.flux - 0.7 / TAU).abs() < 1e-12, "{}", mu.flux);
    }

    #[test]
    fn non_elliptic_is_rejected() {
        let spec = FastProcessSpec::new(
            FourierSeries::constant(0.0),
            FourierSeries { mean: 1.0, cos: vec![1.0], sin: vec![] },
            64,
        );
        assert!(matches!(stationary_density(&spec), Err(Error::NonElliptic { .. })));
        assert!(matches!(
            stationary_density(&FastProcessSpec::constant_drift(0.0, 1.0).with_grid(100)),
            Err(Error::BadGrid(100))
        ));
    }

    #[test]
    fn quantile_inverts_cdf() {
        let mu = stationary_density(&FastProcessSpec::von_mises(1.0, std::f64::consts::SQRT_2)).unwrap();
        // F(y) by fine midpoint quadrature of exp(cos)
        let norm: f64 = (0..200_000).map(|i| ((i as f64 + 0.5) * TAU / 2e5).cos().exp()).sum::<f64>();
        for &u in &[0.01, 0.3, 0.5, 0.77, 0.999] {
            let y = mu.quantile(u);
            let m = (y / TAU * 2e5).round() as usize;
            let f: f64 = (0..m).map(|i| ((i as f64 + 0.5) * TAU / 2e5).cos().exp()).sum::<f64>() / norm;
            assert!((f - u).abs() < 1e-5, "u={u} F={f}");
        }
    }

    #[test]
    fn frozen_and_deterministic_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frozen = FastStepper::new(&FastProcessSpec::new(
            FourierSeries::constant(0.0),
            FourierSeries::constant(0.0),
            64,
        ))
        .unwrap();
        let y = frozen.advance(1.234, 0.1, 1.0, 0.0, 0.0);
        assert_eq!(y, 1.234);
        let drift = FastStepper::new(&FastProcessSpec::constant_drift(1.0, 1.0)).unwrap();
        assert!((drift.advance(6.25, 0.1, 1.0, 0.0, 0.0) - (6.35 - TAU)).abs() < 1e-12);
        assert!(drift.step(0.0, [0.0; 2], 0.2, 1.0, None, &mut rng).is_err());
    }
}
