//! The limiting diffusion on the Reeb graph: an Euler–Maruyama simulator
//! with a randomized vertex rule, and a backward-equation solver.

mod pde;

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use pde::{solve_backward_pde, PdeGridSpec, PdeSolution};

use crate::coefficients::{EdgeTables, GluingWeights};
use crate::error::{Error, Result};
use crate::reeb::{GraphPoint, ReebGraph, VertexKind};
use crate::rng::{path_rng, tag};
use crate::stats::mean_se;

/// Graph, coefficients and vertex weights: everything the limiting process needs.
#[derive(Clone, Copy, Debug)]
pub struct GraphDynamics<'a> {
    pub graph: &'a ReebGraph,
    pub tables: &'a EdgeTables,
    pub weights: &'a [GluingWeights],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphDiffusionConfig {
    pub dt: f64,
    /// Largest vertex offset at which the overshoot rescaling is evaluated;
    /// `None` picks `10·√(A_near·dt)`.
    pub h_star: Option<f64>,
    /// Reflecting guard distance from extrema.
    pub delta_min: f64,
    pub t_end: f64,
    pub paths: usize,
    pub seed: u64,
}

impl Default for GraphDiffusionConfig {
    fn default() -> Self {
        GraphDiffusionConfig { dt: 1e-4, h_star: None, delta_min: 1e-3, t_end: 1.0, paths: 10_000, seed: 1 }
    }
}

/// A config checked against the tables, with per-vertex samplers.
#[derive(Clone, Debug)]
pub struct PreparedDiffusion {
    pub dt: f64,
    pub h_star: f64,
    pub delta_min: f64,
    /// `(vertex id, incident edges, sampler over p̂)` per interior vertex.
    vertices: Vec<(usize, Vec<usize>, WeightedIndex<f64>)>,
    /// Smallest graded offset of the tables.
    smallest: f64,
    luts: Vec<EdgeLut>,
}

/// Uniform-grid linear interpolant of `(A, B̃)` on the smooth part of an
/// edge; the vertex fits and spline tables handle the rest.
#[derive(Clone, Debug)]
struct EdgeLut {
    lo: f64,
    inv_dx: f64,
    safe: (f64, f64),
    a: Vec<f64>,
    b: Vec<f64>,
}

const LUT_POINTS: usize = 4096;

impl EdgeLut {
    fn new(tables: &EdgeTables, k: usize) -> Self {
        let t = &tables.tables[k];
        let (lo, hi) = t.range();
        let dx = (hi - lo) / (LUT_POINTS - 1) as f64;
        let (mut a, mut b) = (Vec::with_capacity(LUT_POINTS), Vec::with_capacity(LUT_POINTS));
        for i in 0..LUT_POINTS {
            let (ai, bi) = tables.generator(k, lo + i as f64 * dx);
            a.push(ai);
            b.push(bi);
        }
        let (mut s_lo, mut s_hi) = (lo + 8.0 * dx, hi - 8.0 * dx);
        for f in &t.fits {
            let reach = f.switch + 8.0 * dx;
            if f.side > 0.0 {
                s_lo = s_lo.max(f.h_o + reach);
            } else {
                s_hi = s_hi.min(f.h_o - reach);
            }
        }
        EdgeLut { lo, inv_dx: 1.0 / dx, safe: (s_lo, s_hi), a, b }
    }

    #[inline]
    fn get(&self, h: f64) -> Option<(f64, f64)> {
        if !(h >= self.safe.0 && h <= self.safe.1) {
            return None;
        }
        let u = (h - self.lo) * self.inv_dx;
        let i = (u as usize).min(self.a.len() - 2);
        let w = u - i as f64;
        Some((self.a[i] + w * (self.a[i + 1] - self.a[i]), self.b[i] + w * (self.b[i + 1] - self.b[i])))
    }
}

impl PreparedDiffusion {
    /// `(A, B̃)` on edge `k` at `h`.
    #[inline]
    pub fn generator(&self, tables: &EdgeTables, k: usize, h: f64) -> (f64, f64) {
        self.luts.get(k).and_then(|l| l.get(h)).unwrap_or_else(|| tables.generator(k, h))
    }
}

impl GraphDiffusionConfig {
    pub fn prepare(&self, dynamics: &GraphDynamics) -> Result<PreparedDiffusion> {
        if !(self.dt > 0.0 && self.delta_min > 0.0 && self.t_end >= 0.0) {
            return Err(Error::Config("graph diffusion needs dt > 0, delta_min > 0 and t_end >= 0".into()));
        }
        let (graph, tables) = (dynamics.graph, dynamics.tables);
        let offsets = tables.spec.offsets();
        let smallest = *offsets.last().unwrap_or(&1e-4);
        let (a_max, b_max) = tables.max_coefficients();
        let shortest = graph.edges.iter().map(|e| e.h_hi.min(graph.h_max) - e.h_lo).fold(f64::INFINITY, f64::min);
        if (a_max * self.dt).sqrt() > 0.05 * shortest || b_max * self.dt > 0.05 * shortest {
            return Err(Error::Config(format!(
                "dt = {} too coarse for the tables (max A = {a_max:.3e}, max |B| = {b_max:.3e})",
                self.dt
            )));
        }
        let mut vertices = Vec::new();
        let mut a_near: f64 = 0.0;
        for v in graph.interior_vertices() {
            let w = dynamics
                .weights
                .iter()
                .find(|w| w.vertex == v.id)
                .ok_or_else(|| Error::Topology(format!("no gluing weights for vertex {}", v.id)))?;
            let edges: Vec<usize> = w.entries.iter().map(|e| e.edge).collect();
            let sampler = WeightedIndex::new(w.entries.iter().map(|e| e.p_hat))
                .map_err(|e| Error::Config(format!("gluing weights at vertex {}: {e}", v.id)))?;
            for e in &w.entries {
                for &d in &offsets {
                    a_near = a_near.max(tables.generator(e.edge, v.value + e.sign * d).0);
                }
            }
            vertices.push((v.id, edges, sampler));
        }
        let floor = 10.0 * (a_near * self.dt).sqrt();
        let h_star = match self.h_star {
            Some(h) if h < floor => {
                return Err(Error::Config(format!("h_star = {h} below the crossing resolution {floor:.3e}")))
            }
            Some(h) => h,
            None => floor,
        };
        let luts = (0..tables.len()).map(|k| EdgeLut::new(tables, k)).collect();
        Ok(PreparedDiffusion { dt: self.dt, h_star, delta_min: self.delta_min, vertices, smallest, luts })
    }
}

/// Sends an overshoot `excess` past vertex `v`, reached along edge `from`,
/// into an edge drawn by `p̂`.
fn redirect(
    dynamics: &GraphDynamics,
    prep: &PreparedDiffusion,
    v: usize,
    from: usize,
    excess: f64,
    rng: &mut impl Rng,
) -> Result<GraphPoint> {
    let (_, edges, sampler) = prep
        .vertices
        .iter()
        .find(|(id, _, _)| *id == v)
        .ok_or_else(|| Error::Topology(format!("vertex {v} has no sampler")))?;
    let k = edges[sampler.sample(rng)];
    let h_o = dynamics.graph.vertices[v].value;
    let (tables, graph) = (dynamics.tables, dynamics.graph);
    let d = excess.clamp(prep.smallest, prep.h_star);
    let s_to = graph.edges[k].sign_at(v);
    let scaled = if k == from {
        excess
    } else {
        let s_from = graph.edges[from].sign_at(v);
        let a_from = tables.generator(from, h_o + s_from * d).0;
        let a_to = tables.generator(k, h_o + s_to * d).0;
        excess * (a_to / a_from).sqrt()
    };
    Ok(GraphPoint { k, h: h_o + s_to * scaled })
}

/// One Euler–Maruyama step of the graph diffusion.
pub fn step_graph_diffusion(
    state: GraphPoint,
    dynamics: &GraphDynamics,
    prep: &PreparedDiffusion,
    rng: &mut impl Rng,
) -> Result<GraphPoint> {
    step_flagged(state, dynamics, prep, rng).map(|s| s.0)
}

/// What happened during one step besides moving.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct StepEvent {
    reflected_top: bool,
    redirected: bool,
}

/// As [`step_graph_diffusion`], also reporting vertex redirects and
/// reflections at `H_max`.
fn step_flagged(
    state: GraphPoint,
    dynamics: &GraphDynamics,
    prep: &PreparedDiffusion,
    rng: &mut impl Rng,
) -> Result<(GraphPoint, StepEvent)> {
    let graph = dynamics.graph;
    let e = graph.edges.get(state.k).ok_or(Error::OffTable { edge: state.k, h: state.h })?;
    let (a, b) = prep.generator(dynamics.tables, state.k, state.h);
    let z: f64 = rng.sample(StandardNormal);
    let mut h = state.h + b * prep.dt + (a.max(0.0) * prep.dt).sqrt() * z;
    if !h.is_finite() {
        return Err(Error::OffTable { edge: state.k, h });
    }
    let top = e.h_hi.min(graph.h_max);
    let mut ev = StepEvent::default();
    for (v, bound, side) in [(e.lo, e.h_lo, 1.0), (e.hi, top, -1.0)] {
        let past = side * (bound - h);
        match graph.vertices[v].kind {
            VertexKind::Interior if past > 0.0 => {
                let s = redirect(dynamics, prep, v, state.k, past, rng)?;
                return Ok((s, StepEvent { redirected: true, ..ev }));
            }
            VertexKind::Interior => {}
            VertexKind::Exterior => {
                let guard = bound + side * prep.delta_min;
                if side * (guard - h) > 0.0 {
                    h = 2.0 * guard - h;
                }
            }
            VertexKind::Infinity => {
                if past > 0.0 {
                    h = 2.0 * bound - h;
                    ev.reflected_top = true;
                }
            }
        }
    }
    if !(h >= e.h_lo && h <= top) {
        return Err(Error::OffTable { edge: state.k, h });
    }
    Ok((GraphPoint { k: state.k, h }, ev))
}

/// States of every path at the requested times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEnsemble {
    pub times: Vec<f64>,
    /// `states[i][p]`: path `p` at `times[i]`.
    pub states: Vec<Vec<GraphPoint>>,
    /// Paths that were reflected at `H_max` at least once.
    pub reached_top: usize,
    pub seed: u64,
}

/// Runs `cfg.paths` independent paths from `start`, recording `times`.
pub fn simulate_graph(
    dynamics: &GraphDynamics,
    cfg: &GraphDiffusionConfig,
    start: GraphPoint,
    times: &[f64],
) -> Result<GraphEnsemble> {
    let prep = cfg.prepare(dynamics)?;
    if !dynamics.graph.is_valid(start) {
        return Err(Error::OffTable { edge: start.k, h: start.h });
    }
    let steps: Vec<usize> = times.iter().map(|t| (t / cfg.dt).round() as usize).collect();
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("output times must be non-decreasing".into()));
    }
    let runs: Vec<(Vec<GraphPoint>, bool)> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, tag::GRAPH, p as u64);
            let mut s = start;
            let mut out = Vec::with_capacity(times.len());
            let mut n = 0;
            let mut hit = false;
            for &target in &steps {
                while n < target {
                    let (next, ev) = step_flagged(s, dynamics, &prep, &mut rng)
                        .map_err(|e| Error::PathFailure { path: p, step: n, msg: e.to_string() })?;
                    s = next;
                    hit |= ev.reflected_top;
                    n += 1;
                }
                out.push(s);
            }
            Ok((out, hit))
        })
        .collect::<Result<_>>()?;
    let mut states = vec![Vec::with_capacity(cfg.paths); times.len()];
    for (r, _) in &runs {
        for (i, s) in r.iter().enumerate() {
            states[i].push(*s);
        }
    }
    Ok(GraphEnsemble { times: times.to_vec(), states, reached_top: runs.iter().filter(|r| r.1).count(), seed: cfg.seed })
}

/// Edge-exit tallies when started at a vertex: paths run until they are
/// `eta` away from the vertex value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexExitTally {
    pub vertex: usize,
    pub edges: Vec<usize>,
    pub counts: Vec<usize>,
    pub p_hat: Vec<f64>,
}

pub fn vertex_exit_frequencies(
    dynamics: &GraphDynamics,
    cfg: &GraphDiffusionConfig,
    vertex: usize,
    eta: f64,
) -> Result<VertexExitTally> {
    let prep = cfg.prepare(dynamics)?;
    let w = dynamics
        .weights
        .iter()
        .find(|w| w.vertex == vertex)
        .ok_or_else(|| Error::Topology(format!("no gluing weights for vertex {vertex}")))?;
    let edges: Vec<usize> = w.entries.iter().map(|e| e.edge).collect();
    let h_o = dynamics.graph.vertices[vertex].value;
    let exits: Vec<usize> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, tag::VERTEX_ENTRY, p as u64);
            // the first move leaves the vertex through the redirect rule
            let z: f64 = rng.sample(StandardNormal);
            let (a, _) = dynamics.tables.generator(edges[0], h_o + w.entries[0].sign * prep.smallest);
            let first = (a * prep.dt).sqrt() * z.abs();
            let mut s = redirect(dynamics, &prep, vertex, edges[0], first.max(f64::MIN_POSITIVE), &mut rng)?;
            let mut n = 0usize;
            while (s.h - h_o).abs() < eta {
                s = step_graph_diffusion(s, dynamics, &prep, &mut rng)
                    .map_err(|e| Error::PathFailure { path: p, step: n, msg: e.to_string() })?;
                n += 1;
            }
            Ok(s.k)
        })
        .collect::<Result<_>>()?;
    let counts = edges.iter().map(|k| exits.iter().filter(|&&e| e == *k).count()).collect();
    Ok(VertexExitTally { vertex, edges, counts, p_hat: w.entries.iter().map(|e| e.p_hat).collect() })
}

/// First-entry tallies: each path starts at the vertex value on one of the
/// incident edges (cycling through them) and steps until its first pass
/// through the vertex; the edge it is sent into is recorded.
pub fn vertex_first_entries(
    dynamics: &GraphDynamics,
    cfg: &GraphDiffusionConfig,
    vertex: usize,
) -> Result<VertexExitTally> {
    let prep = cfg.prepare(dynamics)?;
    let w = dynamics
        .weights
        .iter()
        .find(|w| w.vertex == vertex)
        .ok_or_else(|| Error::Topology(format!("no gluing weights for vertex {vertex}")))?;
    let edges: Vec<usize> = w.entries.iter().map(|e| e.edge).collect();
    let h_o = dynamics.graph.vertices[vertex].value;
    // excursions away from the vertex are recurrent but heavy-tailed
    let cap = (1e3 / cfg.dt).ceil() as usize;
    let entries: Vec<usize> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, tag::VERTEX_ENTRY, p as u64);
            let mut s = GraphPoint { k: edges[p % edges.len()], h: h_o };
            for n in 0..cap {
                let (next, ev) = step_flagged(s, dynamics, &prep, &mut rng)
                    .map_err(|e| Error::PathFailure { path: p, step: n, msg: e.to_string() })?;
                if ev.redirected {
                    return Ok(next.k);
                }
                s = next;
            }
            Err(Error::PathFailure { path: p, step: cap, msg: "never returned to the vertex".into() })
        })
        .collect::<Result<_>>()?;
    let counts = edges.iter().map(|k| entries.iter().filter(|&&e| e == *k).count()).collect();
    Ok(VertexExitTally { vertex, edges, counts, p_hat: w.entries.iter().map(|e| e.p_hat).collect() })
}

/// Estimation method for [`expectation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Pde,
}

/// `E f(h_T)` with an error estimate (Monte Carlo standard error, or the
/// change under dt/dx halving for the PDE).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub error: f64,
}

pub type TestFn<'f> = &'f (dyn Fn(GraphPoint) -> f64 + Sync);

/// Expectations of several test functions from one start point.
pub fn expectation(
    dynamics: &GraphDynamics,
    fs: &[TestFn],
    start: GraphPoint,
    t_end: f64,
    method: Method,
    cfg: &GraphDiffusionConfig,
    grid: &PdeGridSpec,
) -> Result<Vec<Expectation>> {
    match method {
        Method::Mc => {
            let ens = simulate_graph(dynamics, cfg, start, &[t_end])?;
            Ok(fs
                .iter()
                .map(|f| {
                    let v: Vec<f64> = ens.states[0].iter().map(|&s| f(s)).collect();
                    let (value, error) = mean_se(&v);
                    Expectation { value, error }
                })
                .collect())
        }
        Method::Pde => fs
            .iter()
            .map(|f| {
                let fine = solve_backward_pde(dynamics, *f, t_end, grid)?.eval(start)?;
                let coarse = solve_backward_pde(dynamics, *f, t_end, &grid.coarsened())?.eval(start)?;
                Ok(Expectation { value: fine, error: (fine - coarse).abs() })
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{HamiltonianModel, ScalarField};
    use crate::system::{default_model, System};
    use crate::torus::FastProcessSpec;

    fn harmonic() -> System {
        let model = HamiltonianModel::axis_aligned(ScalarField::Harmonic, 0.3);
        System::with_defaults(model, FastProcessSpec::constant_drift(0.0, 2f64.sqrt())).unwrap()
    }

    #[test]
    fn constants_are_invariant() {
        let (m, f) = default_model(0.3);
        let sys = System::with_defaults(m, f).unwrap();
        let one = |_: GraphPoint| 1.0;
        let sol = solve_backward_pde(&sys.dynamics(), &one, 0.5, &PdeGridSpec::default()).unwrap();
        let worst = sol.edges.iter().flat_map(|e| e.2.iter()).map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn common_weight_scale_is_irrelevant() {
        let (m, f) = default_model(0.3);
        let sys = System::with_defaults(m, f).unwrap();
        let bump = |p: GraphPoint| if p.k == 0 { (-(p.h - 0.1f64).powi(2) / 0.002).exp() } else { 0.0 };
        let spec = PdeGridSpec { dx: 4e-3, dt: 4e-3, ..PdeGridSpec::default() };
        let a = solve_backward_pde(&sys.dynamics(), &bump, 0.3, &spec).unwrap();
        let mut w = sys.weights.clone();
        w.iter_mut().flat_map(|w| w.entries.iter_mut()).for_each(|e| e.p *= 7.5);
        let d = GraphDynamics { weights: &w, ..sys.dynamics() };
        let b = solve_backward_pde(&d, &bump, 0.3, &spec).unwrap();
        for (x, y) in a.edges.iter().zip(&b.edges) {
            for (u, v) in x.2.iter().zip(&y.2) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn harmonic_mean_height_mc_matches_pde() {
        let sys = harmonic();
        let dynamics = sys.dynamics();
        let f = |p: GraphPoint| p.h;
        let cfg = GraphDiffusionConfig { paths: 4000, dt: 1e-3, ..GraphDiffusionConfig::default() };
        let start = GraphPoint { k: 0, h: 1.0 };
        let fs: [TestFn; 1] = [&f];
        let mc = expectation(&dynamics, &fs, start, 0.5, Method::Mc, &cfg, &PdeGridSpec::default()).unwrap();
        let pde = expectation(&dynamics, &fs, start, 0.5, Method::Pde, &cfg, &PdeGridSpec::default()).unwrap();
        assert!((mc[0].value - pde[0].value).abs() < 3.0 * mc[0].error, "{mc:?} {pde:?}");
        assert!(pde[0].error < 1e-4);
    }
}
