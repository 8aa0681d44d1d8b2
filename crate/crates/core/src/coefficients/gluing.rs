use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EdgeTables, PointwiseAB};
use crate::error::{Error, Result};
use crate::hamiltonian::level::line_integral;
use crate::hamiltonian::{trace_level, trace_separatrix, LevelCurve, TraceOptions};
use crate::reeb::{ReebGraph, VertexKind};

/// Relative disagreement between the two routes that is treated as a failure.
const ROUTE_TOL: f64 = 0.02;
const LAUNCH: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingEntry {
    pub edge: usize,
    /// `+1` when the vertex is the lower end of the edge.
    pub sign: f64,
    /// `lim A_k Q_k` from the graded-grid extrapolation.
    pub extrapolated: f64,
    /// `∮ A/|∇H| dl` over the separatrix lobes bounding the edge.
    pub separatrix: f64,
    pub p: f64,
    pub p_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingWeights {
    pub vertex: usize,
    pub entries: Vec<GluingEntry>,
    /// Largest relative difference between the routes.
    pub discrepancy: f64,
    /// `|Σ s_k p_k| / max p_k` with the extrapolated weights.
    pub flux_balance: f64,
}

impl GluingWeights {
    pub fn entry(&self, edge: usize) -> Option<&GluingEntry> {
        self.entries.iter().find(|e| e.edge == edge)
    }
}

fn min_distance(curve: &LevelCurve, x: [f64; 2]) -> f64 {
    let n = curve.len();
    (0..n)
        .map(|i| {
            let (a, b) = (curve.points[i], curve.points[(i + 1) % n]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = (d[0] * d[0] + d[1] * d[1]).max(1e-300);
            let t = (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
            (a[0] + t * d[0] - x[0]).hypot(a[1] + t * d[1] - x[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Gluing weights at an interior vertex by both routes.
///
/// Each incident edge is matched to the lobes its nearby levels hug: a
/// lobe belongs to the edge when the edge's level closest to the vertex
/// passes by the lobe's midpoint.
pub fn gluing_weights(
    graph: &ReebGraph,
    ab: &PointwiseAB,
    tables: &EdgeTables,
    vertex: usize,
    opts: &TraceOptions,
) -> Result<GluingWeights> {
    let v = &graph.vertices[vertex];
    let saddle = match (v.kind, v.critical) {
        (VertexKind::Interior, Some(c)) => c,
        _ => return Err(Error::Topology(format!("vertex {vertex} is not interior"))),
    };
    let field = ab.field();
    let lobes: Vec<LevelCurve> = [1.0, -1.0]
        .par_iter()
        .map(|&side| trace_separatrix(field, &saddle, side, LAUNCH, opts))
        .collect::<Result<_>>()?;
    let lobe_p: Vec<f64> = lobes.iter().map(|l| line_integral(l, |x| ab.a(x))).collect();
    let mids: Vec<[f64; 2]> = lobes.iter().map(|l| l.points[l.len() / 2]).collect();
    let mut entries = Vec::new();
    for &k in &graph.adjacency[vertex] {
        let e = graph.edge(k);
        let sign = e.sign_at(vertex);
        let fit = tables
            .fit(k, vertex)
            .ok_or_else(|| Error::Topology(format!("edge {k} has no graded grid at vertex {vertex}")))?;
        let d = *fit.offsets.last().expect("graded offsets");
        let h = saddle.value + sign * d;
        let level = trace_level(field, graph.anchor(field, k, h)?, h, opts)?;
        // the level sits ~δ/|∇H| away from its lobes; unrelated lobes are O(1) away
        let near: Vec<usize> = (0..lobes.len()).filter(|&i| min_distance(&level, mids[i]) < 1e-2).collect();
        if near.is_empty() {
            return Err(Error::Topology(format!("edge {k} hugs no separatrix lobe at vertex {vertex}")));
        }
        let separatrix: f64 = near.iter().map(|&i| lobe_p[i]).sum();
        entries.push(GluingEntry { edge: k, sign, extrapolated: fit.p0.abs(), separatrix, p: separatrix, p_hat: 0.0 });
    }
    let total: f64 = entries.iter().map(|e| e.p).sum();
    let mut discrepancy: f64 = 0.0;
    for e in &mut entries {
        e.p_hat = e.p / total;
        let rel = (e.extrapolated - e.separatrix).abs() / e.separatrix.abs().max(1e-300);
        discrepancy = discrepancy.max(rel);
    }
    let pmax = entries.iter().map(|e| e.extrapolated).fold(0.0, f64::max);
    let flux_balance = entries.iter().map(|e| e.sign * e.extrapolated).sum::<f64>().abs() / pmax;
    if let Some(bad) = entries
        .iter()
        .find(|e| (e.extrapolated - e.separatrix).abs() > ROUTE_TOL * e.separatrix.abs())
    {
        return Err(Error::GluingMismatch {
            vertex,
            edge: bad.edge,
            extrapolated: bad.extrapolated,
            separatrix: bad.separatrix,
        });
    }
    Ok(GluingWeights { vertex, entries, discrepancy, flux_balance })
}

/// Weights at every interior vertex.
pub fn all_gluing_weights(
    graph: &ReebGraph,
    ab: &PointwiseAB,
    tables: &EdgeTables,
    opts: &TraceOptions,
) -> Result<Vec<GluingWeights>> {
    graph.interior_vertices().map(|v| gluing_weights(graph, ab, tables, v.id, opts)).collect()
}
