use std::ops::ControlFlow;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gather, FastSlow, StoppingDetector};
use crate::error::{Error, Result};
use crate::hamiltonian::{project_to_level, trace_separatrix, TraceOptions};
use crate::reeb::VertexKind;
use crate::rng::{path_rng, tag};
use crate::stats::{mean_se, wilson, Z95};

const LAUNCH: f64 = 1e-4;

/// Draws points on the separatrix through an interior vertex with density
/// proportional to `dl/|∇H|`.
#[derive(Clone, Debug)]
pub struct SeparatrixSampler {
    points: Vec<[f64; 2]>,
    index: WeightedIndex<f64>,
    pub h_o: f64,
}

impl SeparatrixSampler {
    pub fn new(sim: &FastSlow, opts: &TraceOptions) -> Result<Self> {
        let sys = sim.sys;
        let v = sys
            .graph
            .vertices
            .iter()
            .find(|v| v.kind == VertexKind::Interior)
            .ok_or_else(|| Error::Topology("graph has no interior vertex".into()))?;
        let saddle = v.critical.ok_or_else(|| Error::Topology("interior vertex without a saddle".into()))?;
        let (mut points, mut w) = (Vec::new(), Vec::new());
        for side in [1.0, -1.0] {
            let lobe = trace_separatrix(&sys.model.field, &saddle, side, LAUNCH, opts)?;
            let n = lobe.len();
            for (i, dl) in lobe.dl.iter().enumerate() {
                let j = (i + 1) % n;
                points.push(lobe.points[i]);
                w.push(0.5 * dl * (1.0 / lobe.grad_norm[i] + 1.0 / lobe.grad_norm[j]));
            }
        }
        let index = WeightedIndex::new(&w).map_err(|e| Error::Trace { h: v.value, msg: e.to_string() })?;
        Ok(SeparatrixSampler { points, index, h_o: v.value })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 2] {
        self.points[self.index.sample(rng)]
    }
}

/// Tally for one start fraction `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitProbabilityRow {
    pub u: f64,
    /// Paths reaching `|H − H(O)| = ε^α` before the separatrix.
    pub hits: usize,
    pub paths: usize,
    /// Paths that hit neither level by `t_end`.
    pub censored: usize,
    pub p_hat: f64,
    /// 95% Wilson interval.
    pub ci: (f64, f64),
}

/// Starts at `|H − H(O)| = u·ε^α` inside the lowest-numbered edge below the
/// vertex and records which of the two levels is reached first.
pub fn exit_probability_experiment(sim: &FastSlow, us: &[f64]) -> Result<Vec<ExitProbabilityRow>> {
    let sys = sim.sys;
    let field = &sys.model.field;
    let cfg = &sim.cfg;
    let h_o = sim.h_o()?;
    let band = cfg.eps.powf(cfg.alpha);
    let o = sys.graph.interior_vertices().next().map(|v| v.id).expect("checked by h_o");
    let well = sys.graph.adjacency[o]
        .iter()
        .copied()
        .filter(|&k| sys.graph.edge(k).sign_at(o) < 0.0)
        .min()
        .ok_or_else(|| Error::Topology("no edge below the interior vertex".into()))?;
    let depth = h_o - sys.graph.edge(well).h_lo;
    if band >= depth {
        return Err(Error::Config(format!("eps^alpha = {band:.4} does not fit in the well of depth {depth:.4}")));
    }
    let mut rows = Vec::new();
    for (iu, &u) in us.iter().enumerate() {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Config(format!("start fraction u = {u} must lie in (0, 1)")));
        }
        let x0 = sys.graph.anchor(field, well, h_o - u * band)?;
        let hit: Vec<Result<Option<bool>>> = (0..cfg.paths)
            .into_par_iter()
            .map(|p| {
                let id = (iu * cfg.paths + p) as u64;
                let mut rng = path_rng(cfg.seed, tag::EXIT_PROBABILITY, id);
                let y0 = sys.mu.sample(&mut rng);
                let mut outcome = None;
                let mut obs = |_t: f64, _x: [f64; 2], h: f64| {
                    if h >= h_o {
                        outcome = Some(false);
                    } else if h_o - h >= band {
                        outcome = Some(true);
                    }
                    Ok(if outcome.is_some() { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
                };
                sim.integrate_path(id as usize, x0, y0, cfg.t_end, &mut rng, &mut obs, None)?;
                Ok(outcome)
            })
            .collect();
        let hit = gather(hit)?;
        let censored = hit.iter().filter(|h| h.is_none()).count();
        let hits = hit.iter().filter(|h| **h == Some(true)).count();
        let n = cfg.paths - censored;
        rows.push(ExitProbabilityRow {
            u,
            hits,
            paths: n,
            censored,
            p_hat: hits as f64 / n.max(1) as f64,
            ci: wilson(hits, n, Z95),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeRow {
    pub eps: f64,
    pub band: f64,
    pub mean: f64,
    pub se: f64,
    pub paths: usize,
    pub censored: usize,
}

/// Mean exit time from `{|H − H(O)| < ε^α}` for each `ε`.
///
/// With `start_fraction = 0` paths start on the separatrix; otherwise they
/// start at `H = H(O) + start_fraction·ε^α` on the edge above the vertex.
pub fn exit_time_experiment(
    sim: &FastSlow,
    eps_list: &[f64],
    start_fraction: f64,
    opts: &TraceOptions,
) -> Result<Vec<ExitTimeRow>> {
    let sys = sim.sys;
    let field = &sys.model.field;
    let sampler = SeparatrixSampler::new(sim, opts)?;
    let h_o = sampler.h_o;
    let o = sys.graph.interior_vertices().next().map(|v| v.id).expect("sampler found one");
    let upper = sys.graph.adjacency[o].iter().copied().find(|&k| sys.graph.edge(k).sign_at(o) > 0.0);
    let mut rows = Vec::new();
    for (ie, &eps) in eps_list.iter().enumerate() {
        let run = sim.with_eps(eps)?;
        let cfg = &run.cfg;
        let band = eps.powf(cfg.alpha);
        let fixed = if start_fraction > 0.0 {
            let k = upper.ok_or_else(|| Error::Topology("no edge above the interior vertex".into()))?;
            Some(sys.graph.anchor(field, k, h_o + start_fraction * band)?)
        } else {
            None
        };
        let times: Vec<Result<Option<f64>>> = (0..cfg.paths)
            .into_par_iter()
            .map(|p| {
                let id = (ie * cfg.paths + p) as u64;
                let mut rng = path_rng(cfg.seed, tag::EXIT_TIME, id);
                let x0 = match fixed {
                    Some(x) => x,
                    None => project_to_level(field, sampler.sample(&mut rng), h_o, 1e-13)?,
                };
                let y0 = sys.mu.sample(&mut rng);
                let mut last: Option<(f64, f64)> = None;
                let mut exit = None;
                let mut obs = |t: f64, _x: [f64; 2], h: f64| {
                    let d = (h - h_o).abs();
                    if d >= band {
                        let (t0, d0) = last.unwrap_or((t, d));
                        exit = Some(if d > d0 { t0 + (t - t0) * (band - d0) / (d - d0) } else { t });
                        return Ok(ControlFlow::Break(()));
                    }
                    last = Some((t, d));
                    Ok(ControlFlow::Continue(()))
                };
                run.integrate_path(id as usize, x0, y0, cfg.t_end, &mut rng, &mut obs, None)?;
                Ok(exit)
            })
            .collect();
        let times = gather(times)?;
        let done: Vec<f64> = times.iter().flatten().copied().collect();
        let (mean, se) = mean_se(&done);
        rows.push(ExitTimeRow { eps, band, mean, se, paths: done.len(), censored: times.len() - done.len() });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionRow {
    pub eps: f64,
    pub mean: f64,
    pub se: f64,
    pub paths: usize,
}

/// Mean number of completed excursions over `[0, t_end]` for paths started
/// on the separatrix.
pub fn excursion_experiment(sim: &FastSlow, eps_list: &[f64], opts: &TraceOptions) -> Result<Vec<ExcursionRow>> {
    let sys = sim.sys;
    let field = &sys.model.field;
    let sampler = SeparatrixSampler::new(sim, opts)?;
    let h_o = sampler.h_o;
    let mut rows = Vec::new();
    for (ie, &eps) in eps_list.iter().enumerate() {
        let run = sim.with_eps(eps)?;
        let cfg = &run.cfg;
        let counts: Vec<Result<f64>> = (0..cfg.paths)
            .into_par_iter()
            .map(|p| {
                let id = (ie * cfg.paths + p) as u64;
                let mut rng = path_rng(cfg.seed, tag::EXCURSIONS, id);
                let x0 = project_to_level(field, sampler.sample(&mut rng), h_o, 1e-13)?;
                let y0 = sys.mu.sample(&mut rng);
                let mut det = StoppingDetector::new(h_o, cfg.alpha, eps);
                let mut obs = |t: f64, _x: [f64; 2], h: f64| det.push(t, h).map(|_| ControlFlow::Continue(()));
                run.integrate_path(id as usize, x0, y0, cfg.t_end, &mut rng, &mut obs, None)?;
                Ok(det.finish().excursions() as f64)
            })
            .collect();
        let counts = gather(counts)?;
        let (mean, se) = mean_se(&counts);
        rows.push(ExcursionRow { eps, mean, se, paths: counts.len() });
    }
    Ok(rows)
}

/// `E ∫_0^T g(X_s, ξ_s) ds` for `g(x, y) = (1 + x₁) φ̃₁(y)`, which is mean
/// zero in `y` for every `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingDefect {
    pub eps: f64,
    pub mean: f64,
    pub se: f64,
}

pub fn averaging_defect(sim: &FastSlow, x0: [f64; 2], eps_list: &[f64]) -> Result<Vec<AveragingDefect>> {
    let sys = sim.sys;
    let shape = sys.model.terms.first().ok_or_else(|| Error::Config("model has no perturbation terms".into()))?;
    let mean0 = sys.basis.removed_means[0];
    let g = |x: [f64; 2], y: f64| (1.0 + x[0]) * (shape.phi.eval(y) - mean0);
    let mut rows = Vec::new();
    for (ie, &eps) in eps_list.iter().enumerate() {
        let run = sim.with_eps(eps)?;
        let cfg = &run.cfg;
        let vals: Vec<Result<f64>> = (0..cfg.paths)
            .into_par_iter()
            .map(|p| {
                let id = (ie * cfg.paths + p) as u64;
                let mut rng = path_rng(cfg.seed, tag::FASTSLOW, id);
                let y0 = sys.mu.sample(&mut rng);
                let mut obs = |_: f64, _: [f64; 2], _: f64| Ok(ControlFlow::Continue(()));
                Ok(run.integrate_path(id as usize, x0, y0, cfg.t_end, &mut rng, &mut obs, Some(&g))?.integral)
            })
            .collect();
        let (mean, se) = mean_se(&gather(vals)?);
        rows.push(AveragingDefect { eps, mean, se });
    }
    Ok(rows)
}
