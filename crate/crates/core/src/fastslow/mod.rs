//! The fast-slow system in rescaled time,
//!
//! ```text
//! dX = ε⁻¹ b(X, ξ) dt,    dξ = ε⁻² v(ξ) dt + ε⁻¹ σ(ξ) dW,
//! ```
//!
//! with graph projections of `X`, stopping-time bookkeeping and the
//! hitting experiments built on top of it.

mod experiments;
mod stopping;

use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub use experiments::{
    averaging_defect, excursion_experiment, exit_probability_experiment, exit_time_experiment, AveragingDefect,
    ExcursionRow, ExitProbabilityRow, ExitTimeRow, SeparatrixSampler,
};
pub use stopping::{detect_stopping, ExcursionLog, StoppingDetector};

use crate::error::{Error, Result};
use crate::reeb::GraphPoint;
use crate::rng::{path_rng, stream_id, tag};
use crate::stats::mean_se;
use crate::system::System;
use crate::torus::{FastStepper, FourierSeries, TorusDrift};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub eps: f64,
    /// Horizon in rescaled time.
    pub t_end: f64,
    /// `dt = c_fast·ε²`.
    pub c_fast: f64,
    /// Dense output every `c_out·ε²`.
    pub c_out: f64,
    pub paths: usize,
    pub seed: u64,
    pub output_times: Vec<f64>,
    /// Exponent of the band `|H − H(O)| = ε^α`.
    pub alpha: f64,
    /// Add the auxiliary drift `ε⁻¹c̃` to the fast equation.
    pub auxiliary: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            eps: 0.1,
            t_end: 1.0,
            c_fast: 0.05,
            c_out: 0.1,
            paths: 10_000,
            seed: 1,
            output_times: vec![0.5, 1.0],
            alpha: 0.4,
            auxiliary: false,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        self.c_fast * self.eps * self.eps
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha = {} must lie in (0, 1/2)", self.alpha));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        if !(self.c_fast > 0.0 && self.c_fast <= 0.1) {
            return bad(format!("c_fast = {} outside the stability guard (0, 0.1]", self.c_fast));
        }
        if !(self.c_out >= self.c_fast) {
            return bad(format!("c_out = {} is finer than the step c_fast = {}", self.c_out, self.c_fast));
        }
        if !(self.t_end >= 0.0) || self.paths == 0 {
            return bad("t_end must be non-negative and paths positive".into());
        }
        if self.output_times.windows(2).any(|w| w[1] < w[0])
            || self.output_times.iter().any(|&t| !(0.0..=self.t_end).contains(&t))
        {
            return bad("output times must be sorted and inside [0, t_end]".into());
        }
        Ok(())
    }
}

/// A validated config bound to a built system.
#[derive(Clone, Debug)]
pub struct FastSlow<'a> {
    pub sys: &'a System,
    pub cfg: SimConfig,
    stepper: FastStepper,
    shapes: Vec<FourierSeries>,
    means: Vec<f64>,
    dt: f64,
    out_every: usize,
}

/// One path's record at the configured output times.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub x: Vec<[f64; 2]>,
    pub x_end: [f64; 2],
    pub t_end: f64,
    /// Set when the observer stopped the path early.
    pub stopped: bool,
    pub reached_top: bool,
    /// Left Riemann sum of the integrand, when one was given.
    pub integral: f64,
}

/// Dense-output callback: `(t, x, H(x))`, returning `Break` to stop the path.
pub type Observer<'o> = dyn FnMut(f64, [f64; 2], f64) -> Result<ControlFlow<()>> + 'o;

pub type Integrand<'g> = &'g (dyn Fn([f64; 2], f64) -> f64 + Sync);

impl<'a> FastSlow<'a> {
    pub fn new(sys: &'a System, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let stepper = FastStepper::new(&sys.fast)?;
        let dt = cfg.dt();
        stepper.check_dt(dt, cfg.eps)?;
        let shapes = sys.model.terms.iter().map(|t| t.phi.clone()).collect();
        let out_every = ((cfg.c_out / cfg.c_fast).round() as usize).max(1);
        Ok(FastSlow { sys, stepper, shapes, means: sys.basis.removed_means.clone(), dt, out_every, cfg })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Level of the first interior vertex.
    pub fn h_o(&self) -> Result<f64> {
        self.sys
            .graph
            .interior_vertices()
            .next()
            .map(|v| v.value)
            .ok_or_else(|| Error::Topology("graph has no interior vertex".into()))
    }

    /// Same system, different `ε`.
    pub fn with_eps(&self, eps: f64) -> Result<FastSlow<'a>> {
        FastSlow::new(self.sys, SimConfig { eps, ..self.cfg.clone() })
    }

    #[inline]
    fn shape_values(&self, y: f64, out: &mut SmallVec<[f64; 4]>) {
        out.clear();
        out.extend(self.shapes.iter().zip(&self.means).map(|(s, m)| s.eval(y) - m));
    }

    /// Integrates one path from `(x0, y0)` over `[0, t_max]`.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate_path(
        &self,
        path: usize,
        x0: [f64; 2],
        y0: f64,
        t_max: f64,
        rng: &mut impl Rng,
        observe: &mut Observer,
        integrand: Option<Integrand>,
    ) -> Result<PathRecord> {
        let model = &self.sys.model;
        let field = &model.field;
        let (eps, dt) = (self.cfg.eps, self.dt);
        let n_total = (t_max / dt).round() as usize;
        let outputs: Vec<usize> = self.cfg.output_times.iter().map(|t| (t / dt).round() as usize).collect();
        let aux = (self.cfg.auxiliary && !self.sys.aux.is_zero()).then_some(&self.sys.aux);
        let fail = |step: usize, msg: String| Error::PathFailure { path, step, msg };

        let (mut x, mut y) = (x0, y0);
        let mut rec = PathRecord {
            x: Vec::with_capacity(outputs.len()),
            x_end: x0,
            t_end: 0.0,
            stopped: false,
            reached_top: false,
            integral: 0.0,
        };
        let mut next_out = 0;
        while next_out < outputs.len() && outputs[next_out] == 0 {
            rec.x.push(x);
            next_out += 1;
        }
        if observe(0.0, x, field.value(x))?.is_break() {
            rec.stopped = true;
            return Ok(rec);
        }
        let mut phi: SmallVec<[f64; 4]> = SmallVec::new();
        let h_max = model.h_max;
        for n in 1..=n_total {
            self.shape_values(y, &mut phi);
            if let Some(g) = integrand {
                rec.integral += g(x, y) * dt;
            }
            // slow step with ξ frozen over dt
            let f = |p: [f64; 2]| {
                let b = model.drift(p, &phi);
                [b[0] / eps, b[1] / eps]
            };
            let k1 = f(x);
            let k2 = f([x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]]);
            let k3 = f([x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1]]);
            let k4 = f([x[0] + dt * k3[0], x[1] + dt * k3[1]]);
            let mut xn = [
                x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
            let (mut h, g) = field.value_grad(xn);
            if h > h_max {
                let g2 = g[0] * g[0] + g[1] * g[1];
                let s = 2.0 * (h - h_max) / g2;
                xn = [xn[0] - s * g[0], xn[1] - s * g[1]];
                h = field.value(xn);
                rec.reached_top = true;
            }
            let extra = aux.map_or(0.0, |c| c.drift(x, y) / eps);
            let z: f64 = rng.sample(StandardNormal);
            y = self.stepper.advance(y, dt, eps, extra, z);
            x = xn;
            if !(x[0].is_finite() && x[1].is_finite() && y.is_finite() && h.is_finite()) {
                return Err(fail(n, format!("non-finite state x = {x:?}, xi = {y}")));
            }
            while next_out < outputs.len() && outputs[next_out] == n {
                rec.x.push(x);
                next_out += 1;
            }
            if n % self.out_every == 0 || n == n_total {
                let t = n as f64 * dt;
                if observe(t, x, h).map_err(|e| fail(n, e.to_string()))?.is_break() {
                    rec.stopped = true;
                    rec.x_end = x;
                    rec.t_end = t;
                    return Ok(rec);
                }
            }
        }
        rec.x_end = x;
        rec.t_end = n_total as f64 * dt;
        Ok(rec)
    }
}

/// Marginals and excursion statistics of an ensemble started at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub eps: f64,
    pub alpha: f64,
    pub times: Vec<f64>,
    /// `states[i][p]`: path `p` at `times[i]`.
    pub states: Vec<Vec<GraphPoint>>,
    /// Completed excursions per path over `[0, t_end]`.
    pub excursions: Vec<usize>,
    /// First separatrix hit per path.
    pub first_separatrix: Vec<Option<f64>>,
    pub reached_top: usize,
    pub seed: u64,
    pub stream_tag: u64,
}

impl EnsembleResult {
    pub fn paths(&self) -> usize {
        self.excursions.len()
    }

    /// RNG stream id of every path.
    pub fn stream_ids(&self) -> Vec<u64> {
        (0..self.paths() as u64).map(|p| stream_id(self.stream_tag, p)).collect()
    }

    pub fn excursion_mean(&self) -> (f64, f64) {
        mean_se(&self.excursions.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }

    /// Fraction of paths that reached the separatrix by time `t`.
    pub fn separatrix_fraction(&self, t: f64) -> f64 {
        self.first_separatrix.iter().filter(|s| s.is_some_and(|s| s <= t)).count() as f64 / self.paths() as f64
    }

    /// One row per path per output time: `path_id,t,edge,h`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_id,t,edge,h\n");
        for p in 0..self.paths() {
            for (i, t) in self.times.iter().enumerate() {
                let s = self.states[i][p];
                out.push_str(&format!("{p},{t},{},{:.17e}\n", s.k, s.h));
            }
        }
        out
    }
}

/// Collects per-path results, reporting every failed index.
pub(crate) fn gather<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failed.push(e),
        }
    }
    match failed.len() {
        0 => Ok(ok),
        count => Err(Error::Ensemble { count, first: Box::new(failed.swap_remove(0)) }),
    }
}

/// `N` paths from `start` with the fast state drawn from `μ`.
pub fn ensemble_run(sim: &FastSlow, start: GraphPoint) -> Result<EnsembleResult> {
    let sys = sim.sys;
    let field = &sys.model.field;
    let x0 = sys.graph.anchor(field, start.k, start.h)?;
    // graphs without an interior vertex have no separatrix to log
    let h_o = sim.h_o().ok();
    let cfg = &sim.cfg;
    let runs: Vec<Result<(Vec<GraphPoint>, usize, Option<f64>, bool)>> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, tag::FASTSLOW, p as u64);
            let y0 = sys.mu.sample(&mut rng);
            let mut det = h_o.map(|h| StoppingDetector::new(h, cfg.alpha, cfg.eps));
            let mut obs = |t: f64, _x: [f64; 2], h: f64| {
                det.as_mut().map_or(Ok(()), |d| d.push(t, h)).map(|_| ControlFlow::Continue(()))
            };
            let rec = sim.integrate_path(p, x0, y0, cfg.t_end, &mut rng, &mut obs, None)?;
            let log = det.map(StoppingDetector::finish).unwrap_or_default();
            let states = rec
                .x
                .iter()
                .map(|&x| sys.graph.project(field, x))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::PathFailure { path: p, step: 0, msg: e.to_string() })?;
            Ok((states, log.excursions(), log.sigma.first().copied(), rec.reached_top))
        })
        .collect();
    let runs = gather(runs)?;
    let mut states = vec![Vec::with_capacity(cfg.paths); cfg.output_times.len()];
    for r in &runs {
        for (i, s) in r.0.iter().enumerate() {
            states[i].push(*s);
        }
    }
    Ok(EnsembleResult {
        eps: cfg.eps,
        alpha: cfg.alpha,
        times: cfg.output_times.clone(),
        states,
        excursions: runs.iter().map(|r| r.1).collect(),
        first_separatrix: runs.iter().map(|r| r.2).collect(),
        reached_top: runs.iter().filter(|r| r.3).count(),
        seed: cfg.seed,
        stream_tag: tag::FASTSLOW,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{HamiltonianModel, ScalarField};
    use crate::system::default_model;
    use crate::torus::FastProcessSpec;

    fn dumbbell() -> System {
        let (m, f) = default_model(0.3);
        System::with_defaults(m, f).unwrap()
    }

    #[test]
    fn unperturbed_flow_conserves_h() {
        let mut sys = dumbbell();
        sys.model = HamiltonianModel::unperturbed(ScalarField::Dumbbell);
        sys.basis.removed_means.clear();
        let sim = FastSlow::new(&sys, SimConfig { eps: 0.1, paths: 1, ..SimConfig::default() }).unwrap();
        let x0 = sys.graph.anchor(&sys.model.field, 2, 0.75).unwrap();
        let h0 = sys.model.field.value(x0);
        let mut worst: f64 = 0.0;
        let mut obs = |_t: f64, _x: [f64; 2], h: f64| {
            worst = worst.max((h - h0).abs());
            Ok(ControlFlow::Continue(()))
        };
        let mut rng = path_rng(1, tag::FASTSLOW, 0);
        sim.integrate_path(0, x0, 0.0, 1.0, &mut rng, &mut obs, None).unwrap();
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn rejects_alpha_outside_range() {
        let cfg = SimConfig { alpha: 0.6, ..SimConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn ensemble_is_reproducible() {
        let sys = dumbbell();
        let cfg = SimConfig { eps: 0.2, paths: 8, t_end: 0.2, output_times: vec![0.1, 0.2], ..SimConfig::default() };
        let sim = FastSlow::new(&sys, cfg).unwrap();
        let start = GraphPoint { k: 2, h: 0.75 };
        let a = ensemble_run(&sim, start).unwrap();
        let b = crate::rng::worker_pool(Some(1)).unwrap().install(|| ensemble_run(&sim, start).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.states.iter().flatten().all(|&s| sys.graph.is_valid(s)));
    }

    #[test]
    fn harmonic_height_variance_follows_generator() {
        let model = HamiltonianModel::axis_aligned(ScalarField::Harmonic, 0.3);
        let sys = System::with_defaults(model, FastProcessSpec::von_mises(1.0, 2f64.sqrt())).unwrap();
        // two full rotations, so the level average has formed
        let t = 4.0 * std::f64::consts::PI * 0.1;
        let cfg = SimConfig { eps: 0.1, paths: 10_000, t_end: t, output_times: vec![t], ..SimConfig::default() };
        let sim = FastSlow::new(&sys, cfg).unwrap();
        let ens = ensemble_run(&sim, GraphPoint { k: 0, h: 1.0 }).unwrap();
        let d: Vec<f64> = ens.states[0].iter().map(|s| s.h - 1.0).collect();
        let (m, _) = mean_se(&d);
        let var = d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (d.len() - 1) as f64;
        let a0 = sys.tables.generator(0, 1.0).0;
        assert!((var - t * a0).abs() < 0.1 * t * a0, "var {var} vs {}", t * a0);
    }
}
