use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PointwiseAB;
use crate::corrector::CellProblemBasis;
use crate::error::Result;
use crate::hamiltonian::HamiltonianModel;
use crate::rng::{path_rng, tag};
use crate::torus::{FastProcessSpec, FastStepper, FourierSeries, InvariantMeasure};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenKuboSpec {
    pub paths: usize,
    pub dt: f64,
    /// Steps between recorded lags.
    pub lag_every: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for GreenKuboSpec {
    fn default() -> Self {
        GreenKuboSpec { paths: 20_000, dt: 1e-3, lag_every: 10, horizon: 10.0, seed: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenKuboEstimate {
    /// Estimate of `∫_0^∞ E_μ b_h(ξ_s) b_h(ξ_0) ds`, which is `A(x)/2`.
    pub value: f64,
    pub se: f64,
    pub t_cut: f64,
}

/// Stationary fast-process ensemble, reusable for any mixing weights.
///
/// With `b_h = Σ g_j φ_j`, the correlation and its running integral are
/// quadratic forms in `g`, so the ensemble keeps the per-lag sums of
/// `φ_j(ξ_0)φ_l(ξ_t)` and `φ_j(ξ_0)∫_0^t φ_l(ξ_s)ds` and of their products.
#[derive(Clone, Debug)]
pub struct GreenKuboEnsemble {
    dim: usize,
    paths: usize,
    pub lags: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    z1: Vec<f64>,
    z2: Vec<f64>,
}

struct Sums {
    c1: Vec<f64>,
    c2: Vec<f64>,
    z1: Vec<f64>,
    z2: Vec<f64>,
}

impl Sums {
    fn zeros(lags: usize, d2: usize) -> Self {
        Sums { c1: vec![0.0; lags * d2], c2: vec![0.0; lags * d2 * d2], z1: vec![0.0; lags * d2], z2: vec![0.0; lags * d2 * d2] }
    }

    fn add(mut self, o: &Sums) -> Self {
        for (a, b) in [(&mut self.c1, &o.c1), (&mut self.c2, &o.c2), (&mut self.z1, &o.z1), (&mut self.z2, &o.z2)] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }
}

const CHUNK: usize = 256;

impl GreenKuboEnsemble {
    pub fn simulate(
        model: &HamiltonianModel,
        basis: &CellProblemBasis,
        fast: &FastProcessSpec,
        mu: &InvariantMeasure,
        spec: &GreenKuboSpec,
    ) -> Result<Self> {
        let stepper = FastStepper::new(fast)?;
        stepper.check_dt(spec.dt, 1.0)?;
        let shapes: Vec<FourierSeries> = model.terms.iter().map(|t| t.phi.clone()).collect();
        let means = basis.removed_means.clone();
        let d = shapes.len();
        let d2 = d * d;
        let n_lags = (spec.horizon / (spec.dt * spec.lag_every as f64)).round() as usize + 1;
        let eval = |y: f64, out: &mut [f64]| {
            for (o, (s, m)) in out.iter_mut().zip(shapes.iter().zip(&means)) {
                *o = s.eval(y) - m;
            }
        };
        let chunks: Vec<Sums> = (0..spec.paths.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut s = Sums::zeros(n_lags, d2);
                let (mut f0, mut f, mut fnew, mut integ) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
                let (mut x, mut z) = (vec![0.0; d2], vec![0.0; d2]);
                for p in c * CHUNK..((c + 1) * CHUNK).min(spec.paths) {
                    let mut rng = path_rng(spec.seed, tag::GREEN_KUBO, p as u64);
                    let mut y = mu.sample(&mut rng);
                    eval(y, &mut f0);
                    f.copy_from_slice(&f0);
                    integ.iter_mut().for_each(|v| *v = 0.0);
                    for lag in 0..n_lags {
                        if lag > 0 {
                            for _ in 0..spec.lag_every {
                                let n: f64 = rng.sample(StandardNormal);
                                y = stepper.advance(y, spec.dt, 1.0, 0.0, n);
                                eval(y, &mut fnew);
                                for l in 0..d {
                                    integ[l] += 0.5 * (f[l] + fnew[l]) * spec.dt;
                                }
                                f.copy_from_slice(&fnew);
                            }
                        }
                        for j in 0..d {
                            for l in 0..d {
                                x[j * d + l] = f0[j] * f[l];
                                z[j * d + l] = f0[j] * integ[l];
                            }
                        }
                        let (o1, o2) = (lag * d2, lag * d2 * d2);
                        for a in 0..d2 {
                            s.c1[o1 + a] += x[a];
                            s.z1[o1 + a] += z[a];
                            for b in 0..d2 {
                                s.c2[o2 + a * d2 + b] += x[a] * x[b];
                                s.z2[o2 + a * d2 + b] += z[a] * z[b];
                            }
                        }
                    }
                }
                s
            })
            .collect();
        let total = chunks.iter().fold(Sums::zeros(n_lags, d2), |acc, s| acc.add(s));
        let lag_dt = spec.dt * spec.lag_every as f64;
        Ok(GreenKuboEnsemble {
            dim: d,
            paths: spec.paths,
            lags: (0..n_lags).map(|i| i as f64 * lag_dt).collect(),
            c1: total.c1,
            c2: total.c2,
            z1: total.z1,
            z2: total.z2,
        })
    }

    fn form(&self, g: &[f64], s1: &[f64], s2: &[f64], lag: usize) -> (f64, f64) {
        let d = self.dim;
        let d2 = d * d;
        let w: Vec<f64> = (0..d2).map(|a| g[a / d] * g[a % d]).collect();
        let n = self.paths as f64;
        let m1: f64 = (0..d2).map(|a| w[a] * s1[lag * d2 + a]).sum::<f64>() / n;
        let m2: f64 = (0..d2)
            .flat_map(|a| (0..d2).map(move |b| (a, b)))
            .map(|(a, b)| w[a] * w[b] * s2[lag * d2 * d2 + a * d2 + b])
            .sum::<f64>()
            / n;
        let var = ((m2 - m1 * m1) * n / (n - 1.0)).max(0.0);
        (m1, (var / n).sqrt())
    }

    /// Correlation `Ĉ(t)` and its standard error at every recorded lag.
    pub fn correlation(&self, g: &[f64]) -> Vec<(f64, f64)> {
        (0..self.lags.len()).map(|i| self.form(g, &self.c1, &self.c2, i)).collect()
    }

    /// Integrated correlation, truncated at the first lag where `|Ĉ|` drops
    /// below two standard errors.
    pub fn estimate(&self, g: &[f64]) -> GreenKuboEstimate {
        let corr = self.correlation(g);
        let cut = (1..corr.len()).find(|&i| corr[i].0.abs() < 2.0 * corr[i].1).unwrap_or(corr.len() - 1);
        let (value, se) = self.form(g, &self.z1, &self.z2, cut);
        GreenKuboEstimate { value, se, t_cut: self.lags[cut] }
    }
}

/// Green–Kubo estimate of `A(x)/2` at `x`.
pub fn autocorrelation_a(ab: &PointwiseAB, x: [f64; 2], ensemble: &GreenKuboEnsemble) -> GreenKuboEstimate {
    ensemble.estimate(&ab.weights(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::ScalarField;
    use crate::torus::stationary_density;

    #[test]
    fn brownian_circle_decorrelates_exponentially() {
        let model = HamiltonianModel::axis_aligned(ScalarField::Dumbbell, 1.0);
        let spec = GreenKuboSpec { paths: 4000, horizon: 6.0, ..GreenKuboSpec::default() };
        let run = |sigma: f64| {
            let fast = FastProcessSpec::constant_drift(0.0, sigma);
            let mu = stationary_density(&fast).unwrap();
            let basis = CellProblemBasis::from_model(&model, &mu).unwrap();
            GreenKuboEnsemble::simulate(&model, &basis, &fast, &mu, &spec).unwrap()
        };
        let ens = run(2f64.sqrt());
        let est = ens.estimate(&[1.0, 0.0]);
        assert!((2.0 * est.value - 1.0).abs() < 3.0 * 2.0 * est.se, "{est:?}");
        let c = ens.correlation(&[1.0, 0.0]);
        assert!((c[0].0 - 0.5).abs() < 4.0 * c[0].1);
        let fast2 = run(2.0).estimate(&[1.0, 0.0]);
        assert!((fast2.value - 0.25).abs() < 3.0 * fast2.se, "{fast2:?}");
    }
}
