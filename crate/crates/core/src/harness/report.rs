//! Marginal comparisons between fast-slow and graph ensembles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reeb::{GraphPoint, ReebGraph};
use crate::stats::ks_two_sample;

/// Total order on graph points used for KS.
///
/// Around the reference vertex `O` the first edge above it maps to
/// `h − h_O ≥ 0` and the first edge below it to `h − h_O ≤ 0`. Every other
/// edge gets its own block past the largest value used so far, measured
/// from the end nearest `O` when it touches `O` and from `h_lo` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedHeight {
    pub h_o: f64,
    /// Per edge: `(offset, orientation, origin)` with `code = offset + orientation·(h − origin)`.
    pub blocks: Vec<(f64, f64, f64)>,
}

const GAP: f64 = 1.0;

impl SignedHeight {
    pub fn new(graph: &ReebGraph) -> Self {
        let n = graph.edges.len();
        let mut blocks = vec![None; n];
        let o = graph.interior_vertices().next().map(|v| (v.id, v.value));
        let h_o = o.map_or(0.0, |(_, h)| h);
        let mut reach: f64 = 0.0;
        if let Some((v, h_o)) = o {
            let inc = &graph.adjacency[v];
            if let Some(&up) = inc.iter().find(|&&k| graph.edge(k).sign_at(v) > 0.0) {
                blocks[up] = Some((0.0, 1.0, h_o));
                reach = graph.edge(up).h_hi.min(graph.h_max) - h_o;
            }
            if let Some(&down) = inc.iter().find(|&&k| graph.edge(k).sign_at(v) < 0.0) {
                blocks[down] = Some((0.0, 1.0, h_o));
            }
        }
        let mut next = reach + GAP;
        for (k, e) in graph.edges.iter().enumerate() {
            if blocks[k].is_some() {
                continue;
            }
            let len = e.h_hi.min(graph.h_max) - e.h_lo;
            blocks[k] = Some(match o {
                Some((v, h_o)) if e.hi == v => (next, -1.0, h_o),
                Some((v, h_o)) if e.lo == v => (next, 1.0, h_o),
                _ => (next, 1.0, e.h_lo),
            });
            next += len + GAP;
        }
        SignedHeight { h_o, blocks: blocks.into_iter().map(|b| b.expect("every edge assigned")).collect() }
    }

    pub fn encode(&self, p: GraphPoint) -> f64 {
        let (offset, s, origin) = self.blocks[p.k];
        offset + s * (p.h - origin)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsRow {
    pub t: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub n_fastslow: usize,
    pub n_graph: usize,
    /// Two-sample KS critical value at the 5% level, `1.358·√((n+m)/(nm))`.
    pub critical_95: f64,
}

/// KS distances at every output time for one `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub eps: f64,
    pub rows: Vec<KsRow>,
}

impl ComparisonReport {
    /// Compares marginals given as `time → graph points`.
    pub fn compare(
        eps: f64,
        encoder: &SignedHeight,
        fastslow: &BTreeMap<TimeKey, Vec<GraphPoint>>,
        graph: &BTreeMap<TimeKey, Vec<GraphPoint>>,
    ) -> Result<Self> {
        let mut rows = Vec::new();
        for (t, a) in fastslow {
            let b = graph.get(t).ok_or_else(|| Error::Stats(format!("graph ensemble has no samples at t = {}", t.0)))?;
            let ea: Vec<f64> = a.iter().map(|&p| encoder.encode(p)).collect();
            let eb: Vec<f64> = b.iter().map(|&p| encoder.encode(p)).collect();
            let ks = ks_two_sample(&ea, &eb)?;
            let (n, m) = (ea.len() as f64, eb.len() as f64);
            rows.push(KsRow {
                t: t.0,
                statistic: ks.statistic,
                p_value: ks.p_value,
                n_fastslow: ea.len(),
                n_graph: eb.len(),
                critical_95: 1.358 * ((n + m) / (n * m)).sqrt(),
            });
        }
        Ok(ComparisonReport { eps, rows })
    }

    /// Same comparison straight from two `path_id,t,edge,h` files.
    pub fn from_csv(eps: f64, encoder: &SignedHeight, fastslow_csv: &str, graph_csv: &str) -> Result<Self> {
        Self::compare(eps, encoder, &parse_states(fastslow_csv)?, &parse_states(graph_csv)?)
    }

    pub fn statistic_at(&self, t: f64) -> Option<f64> {
        self.rows.iter().find(|r| (r.t - t).abs() < 1e-12).map(|r| r.statistic)
    }
}

/// Output time as an ordered map key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeKey(pub f64);

impl Eq for TimeKey {}

impl PartialOrd for TimeKey {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for TimeKey {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Groups a `path_id,t,edge,h` table by time.
pub fn parse_states(csv: &str) -> Result<BTreeMap<TimeKey, Vec<GraphPoint>>> {
    let mut lines = csv.lines();
    match lines.next() {
        Some("path_id,t,edge,h") => {}
        other => return Err(Error::Stats(format!("unexpected state header {other:?}"))),
    }
    let mut out: BTreeMap<TimeKey, Vec<GraphPoint>> = BTreeMap::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = || Error::Stats(format!("malformed state row {}: `{line}`", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let t: f64 = f[1].parse().map_err(|_| bad())?;
        let k: usize = f[2].parse().map_err(|_| bad())?;
        let h: f64 = f[3].parse().map_err(|_| bad())?;
        out.entry(TimeKey(t)).or_default().push(GraphPoint { k, h });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{find_critical_points, ScalarField, SearchBox};
    use crate::reeb::build_reeb;

    fn dumbbell() -> ReebGraph {
        let f = ScalarField::Dumbbell;
        let cps = find_critical_points(&f, SearchBox::default(), 8).unwrap();
        build_reeb(&cps, &f, 4.0, SearchBox::default()).unwrap()
    }

    #[test]
    fn dumbbell_blocks() {
        let g = dumbbell();
        let enc = SignedHeight::new(&g);
        let o = g.interior_vertices().next().unwrap();
        let outer = *g.adjacency[o.id].iter().find(|&&k| g.edge(k).sign_at(o.id) > 0.0).unwrap();
        let wells: Vec<usize> = g.adjacency[o.id].iter().copied().filter(|&k| k != outer).collect();
        assert!((enc.encode(GraphPoint { k: outer, h: 1.25 }) - 1.0).abs() < 1e-12);
        assert!((enc.encode(GraphPoint { k: wells[0], h: 0.05 }) + 0.2).abs() < 1e-12);
        assert!((enc.encode(GraphPoint { k: wells[1], h: 0.05 }) - 4.95).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let csv = "path_id,t,edge,h\n0,0.5,2,1.0\n1,0.5,0,0.1\n0,1,2,0.3\n";
        let m = parse_states(csv).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[&TimeKey(0.5)].len(), 2);
        assert!(parse_states("t,h\n").is_err());
    }
}
