//! Reeb graph of a planar Hamiltonian truncated at `H_max`.
//!
//! The graph is built as a contour tree: a join tree from an ascending sweep
//! and a split tree from a descending sweep, with saddle links resolved by
//! following steepest paths, merged by repeatedly peeling leaves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::level::project_to_level;
use crate::hamiltonian::{CriticalKind, CriticalPoint, ScalarField, SearchBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Interior,
    Exterior,
    Infinity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub kind: VertexKind,
    pub value: f64,
    pub critical: Option<CriticalPoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    /// Endpoint with the smaller critical value.
    pub lo: usize,
    pub hi: usize,
    pub h_lo: f64,
    pub h_hi: f64,
    /// Monotone ascending polyline crossing every level of the edge once.
    #[serde(skip)]
    pub spine: Vec<[f64; 2]>,
    #[serde(skip)]
    spine_h: Vec<f64>,
}

impl Edge {
    /// `+1` when `vertex` is the lower end of the edge, `−1` at the upper end.
    pub fn sign_at(&self, vertex: usize) -> f64 {
        if vertex == self.lo {
            1.0
        } else {
            -1.0
        }
    }

    pub fn other(&self, vertex: usize) -> usize {
        if vertex == self.lo {
            self.hi
        } else {
            self.lo
        }
    }

    pub fn contains(&self, h: f64) -> bool {
        h >= self.h_lo && h <= self.h_hi
    }
}

/// A point `(k, h)` of the graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub k: usize,
    pub h: f64,
}

#[derive(Clone, Debug)]
struct LabelGrid {
    bbox: SearchBox,
    n: usize,
    labels: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct ReebGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub adjacency: Vec<Vec<usize>>,
    pub h_max: f64,
    dist: Vec<Vec<f64>>,
    /// Vertex ids of the minima, indexed like descent labels.
    minima: Vec<usize>,
    low_minima: Vec<Vec<usize>>,
    high_tops: Vec<Vec<usize>>,
    grid: Option<LabelGrid>,
}

#[derive(Serialize)]
struct GraphJson<'a> {
    h_max: f64,
    vertices: &'a [Vertex],
    edges: Vec<EdgeJson>,
}

#[derive(Serialize)]
struct EdgeJson {
    id: usize,
    lo: usize,
    hi: usize,
    h_lo: f64,
    h_hi: f64,
    sign_lo: f64,
    sign_hi: f64,
}

fn steepest(field: &ScalarField, start: [f64; 2], up: bool, stop: impl Fn([f64; 2], f64) -> bool) -> Vec<[f64; 2]> {
    let sgn = if up { 1.0 } else { -1.0 };
    let dir = |x: [f64; 2]| {
        let g = field.grad(x);
        let n = g[0].hypot(g[1]).max(1e-300);
        ([sgn * g[0] / n, sgn * g[1] / n], n)
    };
    let mut x = start;
    let mut path = vec![x];
    for _ in 0..200_000 {
        let h = field.value(x);
        if stop(x, h) {
            break;
        }
        let (k1, gn) = dir(x);
        if gn < 1e-13 {
            break;
        }
        let ds = (0.05 * gn).clamp(1e-6, 0.01);
        let (k2, _) = dir([x[0] + 0.5 * ds * k1[0], x[1] + 0.5 * ds * k1[1]]);
        let (k3, _) = dir([x[0] + 0.5 * ds * k2[0], x[1] + 0.5 * ds * k2[1]]);
        let (k4, _) = dir([x[0] + ds * k3[0], x[1] + ds * k3[1]]);
        let xn = [
            x[0] + ds / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + ds / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        let hn = field.value(xn);
        if (up && hn <= h) || (!up && hn >= h) {
            break;
        }
        x = xn;
        path.push(x);
    }
    path
}

/// Index into `minima` of the minimum where steepest descent from `x` ends.
fn descend_label(field: &ScalarField, x: [f64; 2], minima: &[[f64; 2]]) -> Option<usize> {
    let near = |p: [f64; 2]| minima.iter().position(|m| (m[0] - p[0]).hypot(m[1] - p[1]) < 2e-2);
    if let Some(i) = near(x) {
        return Some(i);
    }
    let path = steepest(field, x, false, |p, _| near(p).is_some() || p[0].abs() > 1e4 || p[1].abs() > 1e4);
    path.last().and_then(|&p| near(p))
}

fn descend_to(field: &ScalarField, x: [f64; 2], crit: &[(usize, [f64; 2], CriticalKind)]) -> Option<usize> {
    let mins: Vec<[f64; 2]> = crit.iter().filter(|c| c.2 == CriticalKind::Minimum).map(|c| c.1).collect();
    let idx: Vec<usize> = crit.iter().filter(|c| c.2 == CriticalKind::Minimum).map(|c| c.0).collect();
    descend_label(field, x, &mins).map(|i| idx[i])
}

/// Node reached by steepest ascent: a maximum, or `inf` once `H ≥ h_max`.
fn ascend_to(field: &ScalarField, x: [f64; 2], crit: &[(usize, [f64; 2], CriticalKind)], inf: usize, h_max: f64) -> Option<usize> {
    let near_max = |p: [f64; 2]| {
        crit.iter()
            .find(|c| c.2 == CriticalKind::Maximum && (c.1[0] - p[0]).hypot(c.1[1] - p[1]) < 2e-2)
            .map(|c| c.0)
    };
    let path = steepest(field, x, true, |p, h| h >= h_max || near_max(p).is_some());
    let end = *path.last()?;
    if field.value(end) >= h_max {
        Some(inf)
    } else {
        near_max(end)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[ra] = rb;
        rb
    }
}

/// Tree stored as one optional parent and a child list per node.
#[derive(Clone)]
struct Tree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl Tree {
    fn new(n: usize) -> Self {
        Tree { parent: vec![None; n], children: vec![Vec::new(); n] }
    }
    fn link(&mut self, child: usize, parent: usize) {
        self.parent[child] = Some(parent);
        self.children[parent].push(child);
    }
    /// Removes a node of degree ≤ 2, splicing its child to its parent.
    fn remove(&mut self, x: usize) {
        let p = self.parent[x].take();
        let cs = std::mem::take(&mut self.children[x]);
        if let Some(p) = p {
            self.children[p].retain(|&c| c != x);
            for &c in &cs {
                self.parent[c] = Some(p);
                self.children[p].push(c);
            }
        } else {
            for &c in &cs {
                self.parent[c] = None;
            }
        }
    }
}

/// Sweeps nodes in `order`; `links(n)` lists already-swept nodes adjacent to
/// `n` through its lower (join) or upper (split) link.
fn sweep(order: &[usize], n: usize, links: &[Vec<usize>]) -> Tree {
    let mut uf = UnionFind::new(n);
    let mut head: Vec<usize> = (0..n).collect();
    let mut tree = Tree::new(n);
    for &x in order {
        let mut roots: Vec<usize> = links[x].iter().map(|&m| uf.find(m)).collect();
        roots.sort_unstable();
        roots.dedup();
        for r in roots {
            tree.link(head[r], x);
            let nr = uf.union(r, x);
            head[nr] = x;
        }
        let rx = uf.find(x);
        head[rx] = x;
    }
    tree
}

pub fn build_reeb(criticals: &[CriticalPoint], field: &ScalarField, h_max: f64, bbox: SearchBox) -> Result<ReebGraph> {
    if criticals.is_empty() {
        return Err(Error::Topology("no critical points".into()));
    }
    if let Some(c) = criticals.iter().find(|c| c.value >= h_max) {
        return Err(Error::Topology(format!("critical value {} at or above H_max = {h_max}", c.value)));
    }
    let nc = criticals.len();
    let inf = nc;
    let n = nc + 1;
    let crit: Vec<(usize, [f64; 2], CriticalKind)> =
        criticals.iter().enumerate().map(|(i, c)| (i, c.location, c.kind)).collect();
    let value = |i: usize| if i == inf { h_max } else { criticals[i].value };

    let mut lower: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut upper: Vec<Vec<usize>> = vec![Vec::new(); n];
    let off = 1e-3;
    for (i, c) in criticals.iter().enumerate() {
        let x = c.location;
        let [em, ep] = c.eigenvectors;
        let fail = |what: &str| Error::Topology(format!("{what} from critical point {i} did not terminate"));
        match c.kind {
            CriticalKind::Saddle => {
                for s in [1.0, -1.0] {
                    let d = descend_to(field, [x[0] + s * off * em[0], x[1] + s * off * em[1]], &crit)
                        .ok_or_else(|| fail("descent"))?;
                    lower[i].push(d);
                    let u = ascend_to(field, [x[0] + s * off * ep[0], x[1] + s * off * ep[1]], &crit, inf, h_max)
                        .ok_or_else(|| fail("ascent"))?;
                    upper[i].push(u);
                }
            }
            CriticalKind::Minimum => {
                let u = ascend_to(field, [x[0] + off * em[0], x[1] + off * em[1]], &crit, inf, h_max)
                    .ok_or_else(|| fail("ascent"))?;
                upper[i].push(u);
            }
            CriticalKind::Maximum => {
                let d = descend_to(field, [x[0] + off * em[0], x[1] + off * em[1]], &crit)
                    .ok_or_else(|| fail("descent"))?;
                lower[i].push(d);
            }
        }
    }
    // everything finite lies below the truncation level
    lower[inf] = (0..nc).filter(|&i| criticals[i].kind == CriticalKind::Minimum).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
    let mut join = sweep(&order, n, &lower);
    order.reverse();
    let split_raw = sweep(&order, n, &upper);
    // in the split sweep, links point downwards: parent is the lower node
    let mut split = split_raw;

    let mut alive = vec![true; n];
    let mut raw_edges: Vec<(usize, usize)> = Vec::new();
    let mut remaining = n;
    while remaining > 1 {
        let leaf = (0..n).find(|&x| alive[x] && split.children[x].len() + join.children[x].len() == 1);
        let Some(x) = leaf else {
            return Err(Error::Topology("contour tree merge found no leaf".into()));
        };
        let y = if split.children[x].is_empty() {
            // upper leaf: attach to its neighbour below in the split tree
            split.parent[x]
        } else {
            join.parent[x]
        };
        let Some(y) = y else {
            return Err(Error::Topology(format!("leaf {x} has no neighbour")));
        };
        raw_edges.push((x, y));
        join.remove(x);
        split.remove(x);
        alive[x] = false;
        remaining -= 1;
    }

    let vertices: Vec<Vertex> = (0..n)
        .map(|i| {
            if i == inf {
                Vertex { id: i, kind: VertexKind::Infinity, value: h_max, critical: None }
            } else {
                let kind = match criticals[i].kind {
                    CriticalKind::Saddle => VertexKind::Interior,
                    _ => VertexKind::Exterior,
                };
                Vertex { id: i, kind, value: criticals[i].value, critical: Some(criticals[i]) }
            }
        })
        .collect();
    let mut edges: Vec<Edge> = raw_edges
        .iter()
        .map(|&(a, b)| {
            let (lo, hi) = if value(a) <= value(b) { (a, b) } else { (b, a) };
            Edge { id: 0, lo, hi, h_lo: value(lo), h_hi: value(hi), spine: vec![], spine_h: vec![] }
        })
        .collect();
    edges.sort_by(|a, b| {
        a.h_lo
            .total_cmp(&b.h_lo)
            .then(a.h_hi.total_cmp(&b.h_hi))
            .then(loc_key(&vertices[a.lo]).total_cmp(&loc_key(&vertices[b.lo])))
    });
    for (i, e) in edges.iter_mut().enumerate() {
        e.id = i;
    }
    let mut graph = ReebGraph::assemble(vertices, edges, h_max)?;
    for v in &graph.vertices {
        let deg = graph.adjacency[v.id].len();
        let ok = match v.kind {
            VertexKind::Interior => deg == 3,
            VertexKind::Exterior | VertexKind::Infinity => deg == 1,
        };
        if !ok {
            return Err(Error::Topology(format!("vertex {} ({:?}) has degree {deg}", v.id, v.kind)));
        }
    }
    for k in 0..graph.edges.len() {
        let spine = graph.compute_spine(field, k, &crit, inf)?;
        let spine_h: Vec<f64> = spine.iter().map(|&p| field.value(p)).collect();
        graph.edges[k].spine = spine;
        graph.edges[k].spine_h = spine_h;
    }
    graph.grid = Some(LabelGrid::build(field, bbox, &graph.minima_locations(), 96));
    Ok(graph)
}

fn loc_key(v: &Vertex) -> f64 {
    v.critical.map_or(f64::INFINITY, |c| c.location[0])
}

impl LabelGrid {
    fn build(field: &ScalarField, bbox: SearchBox, minima: &[[f64; 2]], n: usize) -> Self {
        let labels = (0..(n + 1) * (n + 1))
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx % (n + 1), idx / (n + 1));
                let x = [
                    bbox.lo[0] + (bbox.hi[0] - bbox.lo[0]) * i as f64 / n as f64,
                    bbox.lo[1] + (bbox.hi[1] - bbox.lo[1]) * j as f64 / n as f64,
                ];
                descend_label(field, x, minima)
            })
            .collect();
        LabelGrid { bbox, n, labels }
    }

    fn lookup(&self, x: [f64; 2]) -> Option<usize> {
        let n = self.n as f64;
        let fx = (x[0] - self.bbox.lo[0]) / (self.bbox.hi[0] - self.bbox.lo[0]) * n;
        let fy = (x[1] - self.bbox.lo[1]) / (self.bbox.hi[1] - self.bbox.lo[1]) * n;
        if !(fx >= 0.0 && fy >= 0.0 && fx < n && fy < n) {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        let w = self.n + 1;
        let c = [self.labels[j * w + i], self.labels[j * w + i + 1], self.labels[(j + 1) * w + i], self.labels[(j + 1) * w + i + 1]];
        (c[0].is_some() && c.iter().all(|l| *l == c[0])).then_some(c[0]).flatten()
    }
}

impl ReebGraph {
    /// Builds a graph from explicit vertices and `(lo, hi)` edges.
    pub fn from_parts(vertices: Vec<Vertex>, edges: &[(usize, usize)], h_max: f64) -> Result<Self> {
        let edges = edges
            .iter()
            .enumerate()
            .map(|(id, &(a, b))| {
                let (lo, hi) = if vertices[a].value <= vertices[b].value { (a, b) } else { (b, a) };
                Edge { id, lo, hi, h_lo: vertices[lo].value, h_hi: vertices[hi].value, spine: vec![], spine_h: vec![] }
            })
            .collect();
        Self::assemble(vertices, edges, h_max)
    }

    fn assemble(vertices: Vec<Vertex>, edges: Vec<Edge>, h_max: f64) -> Result<Self> {
        let n = vertices.len();
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.lo >= n || e.hi >= n {
                return Err(Error::Topology(format!("edge {} references a missing vertex", e.id)));
            }
            adjacency[e.lo].push(e.id);
            adjacency[e.hi].push(e.id);
        }
        let mut dist = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for e in &edges {
            let w = (e.h_hi - e.h_lo).abs();
            dist[e.lo][e.hi] = dist[e.lo][e.hi].min(w);
            dist[e.hi][e.lo] = dist[e.hi][e.lo].min(w);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = dist[i][k] + dist[k][j];
                    if via < dist[i][j] {
                        dist[i][j] = via;
                    }
                }
            }
        }
        let minima: Vec<usize> = vertices
            .iter()
            .filter(|v| v.critical.is_some_and(|c| c.kind == CriticalKind::Minimum))
            .map(|v| v.id)
            .collect();
        let mut g = ReebGraph {
            vertices,
            edges,
            adjacency,
            h_max,
            dist,
            minima,
            low_minima: vec![],
            high_tops: vec![],
            grid: None,
        };
        let sides: Vec<(Vec<usize>, Vec<usize>)> = (0..g.edges.len())
            .map(|k| {
                let e = &g.edges[k];
                let low: Vec<usize> = g.far_side(k, e.hi).into_iter().filter(|v| g.minima.contains(v)).collect();
                let high: Vec<usize> = g
                    .far_side(k, e.lo)
                    .into_iter()
                    .filter(|&v| {
                        g.vertices[v].kind == VertexKind::Infinity
                            || g.vertices[v].critical.is_some_and(|c| c.kind == CriticalKind::Maximum)
                    })
                    .collect();
                (low, high)
            })
            .collect();
        (g.low_minima, g.high_tops) = sides.into_iter().unzip();
        Ok(g)
    }

    fn minima_locations(&self) -> Vec<[f64; 2]> {
        self.minima.iter().map(|&v| self.vertices[v].critical.expect("minimum").location).collect()
    }

    /// Vertices reachable from `edge`'s endpoint opposite `from` without
    /// crossing `edge` again.
    pub fn far_side(&self, edge: usize, from: usize) -> Vec<usize> {
        let start = self.edges[edge].other(from);
        let mut seen = vec![false; self.vertices.len()];
        seen[from] = true;
        seen[start] = true;
        let mut stack = vec![start];
        let mut out = vec![start];
        while let Some(v) = stack.pop() {
            for &k in &self.adjacency[v] {
                if k == edge {
                    continue;
                }
                let w = self.edges[k].other(v);
                if !seen[w] {
                    seen[w] = true;
                    out.push(w);
                    stack.push(w);
                }
            }
        }
        out
    }

    pub fn interior_vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.iter().filter(|v| v.kind == VertexKind::Interior)
    }

    /// Upper end of the edge `h`-range used by simulations (`H_max` for the infinity edge).
    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn is_valid(&self, p: GraphPoint) -> bool {
        p.k < self.edges.len() && self.edges[p.k].contains(p.h)
    }

    fn compute_spine(
        &self,
        field: &ScalarField,
        k: usize,
        crit: &[(usize, [f64; 2], CriticalKind)],
        inf: usize,
    ) -> Result<Vec<[f64; 2]>> {
        let e = &self.edges[k];
        let root = self.vertices[e.lo].critical.ok_or_else(|| Error::Topology("edge rooted at infinity".into()))?;
        let x0 = root.location;
        let target = e.h_hi;
        let score = |path: &[[f64; 2]]| -> f64 {
            let band = e.h_lo + 0.05 * (e.h_hi - e.h_lo);
            let end_h = field.value(*path.last().expect("non-empty"));
            if end_h < target.min(self.h_max) - 1e-12 {
                return -1.0;
            }
            path.iter()
                .filter(|&&p| {
                    let h = field.value(p);
                    h > band && h < target
                })
                .map(|&p| {
                    let g = field.grad(p);
                    g[0].hypot(g[1])
                })
                .fold(f64::INFINITY, f64::min)
        };
        let stop = |_: [f64; 2], h: f64| h >= target;
        let mut candidates: Vec<Vec<[f64; 2]>> = Vec::new();
        match root.kind {
            CriticalKind::Minimum => {
                for i in 0..16 {
                    let a = std::f64::consts::TAU * i as f64 / 16.0 + 0.01;
                    let s = [x0[0] + 1e-3 * a.cos(), x0[1] + 1e-3 * a.sin()];
                    let mut p = vec![x0];
                    p.extend(steepest(field, s, true, stop));
                    candidates.push(p);
                }
            }
            CriticalKind::Saddle => {
                let ep = root.eigenvectors[1];
                for s in [1.0, -1.0] {
                    let start = [x0[0] + s * 1e-4 * ep[0], x0[1] + s * 1e-4 * ep[1]];
                    // the branch must lead to the far side of this edge
                    let end = ascend_to(field, start, crit, inf, self.h_max);
                    let far = self.far_side(k, e.lo);
                    if end.is_some_and(|v| far.contains(&v)) {
                        let mut p = vec![x0];
                        p.extend(steepest(field, start, true, stop));
                        candidates.push(p);
                    }
                }
            }
            CriticalKind::Maximum => return Err(Error::Topology("maximum as lower edge end".into())),
        }
        let best = candidates
            .into_iter()
            .map(|p| (score(&p), p))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .filter(|(s, _)| *s > 0.0)
            .ok_or_else(|| Error::Topology(format!("no ascending spine covers edge {k}")))?;
        Ok(best.1)
    }

    /// A point on `γ_k(h)`, found by bisection along the edge spine.
    pub fn anchor(&self, field: &ScalarField, k: usize, h: f64) -> Result<[f64; 2]> {
        let e = &self.edges[k];
        let (sp, sh) = (&e.spine, &e.spine_h);
        if sp.len() < 2 || !(h > sh[0] && h < *sh.last().expect("non-empty")) {
            return Err(Error::Trace { h, msg: format!("level outside the spine of edge {k}") });
        }
        let i = sh.partition_point(|&v| v < h).max(1) - 1;
        let (a, b) = (sp[i], sp[i + 1]);
        let (mut lo, mut hi) = (0.0, 1.0);
        let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        for _ in 0..80 {
            let m = 0.5 * (lo + hi);
            if field.value(at(m)) < h {
                lo = m;
            } else {
                hi = m;
            }
        }
        project_to_level(field, at(0.5 * (lo + hi)), h, 1e-13)
    }

    /// Maps a plane point to its graph point.
    pub fn project(&self, field: &ScalarField, x: [f64; 2]) -> Result<GraphPoint> {
        let h = field.value(x);
        if !h.is_finite() || h > self.h_max * (1.0 + 1e-9) {
            return Err(Error::OutsideGraph(x[0], x[1]));
        }
        let h = h.min(self.h_max);
        let mut cand: Vec<usize> = self.edges.iter().filter(|e| e.contains(h)).map(|e| e.id).collect();
        if cand.len() > 1 {
            let mins = self.minima_locations();
            let label = self
                .grid
                .as_ref()
                .and_then(|g| g.lookup(x))
                .or_else(|| descend_label(field, x, &mins))
                .map(|i| self.minima[i]);
            if let Some(m) = label {
                cand.retain(|&k| self.low_minima[k].contains(&m));
            }
        }
        if cand.len() > 1 {
            let crit: Vec<(usize, [f64; 2], CriticalKind)> = self
                .vertices
                .iter()
                .filter_map(|v| v.critical.map(|c| (v.id, c.location, c.kind)))
                .collect();
            let inf = self.vertices.iter().find(|v| v.kind == VertexKind::Infinity).map_or(usize::MAX, |v| v.id);
            if let Some(t) = ascend_to(field, x, &crit, inf, self.h_max) {
                cand.retain(|&k| self.high_tops[k].contains(&t));
            }
        }
        match cand.first() {
            Some(&k) => Ok(GraphPoint { k, h }),
            None => Err(Error::OutsideGraph(x[0], x[1])),
        }
    }

    /// Shortest-path distance along the graph with edge length `|Δh|`.
    pub fn distance(&self, p: GraphPoint, q: GraphPoint) -> f64 {
        let (ep, eq) = (&self.edges[p.k], &self.edges[q.k]);
        let mut best = if p.k == q.k { (p.h - q.h).abs() } else { f64::INFINITY };
        for a in [ep.lo, ep.hi] {
            for b in [eq.lo, eq.hi] {
                let d = (p.h - self.vertices[a].value).abs() + self.dist[a][b] + (self.vertices[b].value - q.h).abs();
                best = best.min(d);
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeJson { id: e.id, lo: e.lo, hi: e.hi, h_lo: e.h_lo, h_hi: e.h_hi, sign_lo: 1.0, sign_hi: -1.0 })
            .collect();
        Ok(serde_json::to_string_pretty(&GraphJson { h_max: self.h_max, vertices: &self.vertices, edges })?)
    }

    /// Structural fingerprint: sorted `(kind_lo, kind_hi)` pairs per edge.
    pub fn shape(&self) -> Vec<(VertexKind, VertexKind)> {
        let rank = |k: VertexKind| match k {
            VertexKind::Exterior => 0,
            VertexKind::Interior => 1,
            VertexKind::Infinity => 2,
        };
        let mut s: Vec<(VertexKind, VertexKind)> =
            self.edges.iter().map(|e| (self.vertices[e.lo].kind, self.vertices[e.hi].kind)).collect();
        s.sort_by_key(|&(a, b)| (rank(a), rank(b)));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::find_critical_points;

    fn dumbbell() -> (ScalarField, ReebGraph) {
        let f = ScalarField::Dumbbell;
        let cps = find_critical_points(&f, SearchBox::default(), 10).unwrap();
        let g = build_reeb(&cps, &f, 4.0, SearchBox::default()).unwrap();
        (f, g)
    }

    #[test]
    fn dumbbell_graph_shape() {
        let (_, g) = dumbbell();
        assert_eq!(g.edges.len(), 3);
        assert_eq!(g.interior_vertices().count(), 1);
        let saddle = g.interior_vertices().next().unwrap().id;
        let signs: Vec<f64> = g.edges.iter().map(|e| e.sign_at(saddle)).collect();
        assert_eq!(signs, vec![-1.0, -1.0, 1.0]);
        assert_eq!(g.edges[2].h_hi, 4.0);
        // left well first
        assert!(g.vertices[g.edges[0].lo].critical.unwrap().location[0] < 0.0);
    }

    #[test]
    fn projection_examples() {
        let (f, g) = dumbbell();
        assert_eq!(g.project(&f, [-1.0, 0.0]).unwrap(), GraphPoint { k: 0, h: 0.0 });
        let p = g.project(&f, [0.0, 1.0]).unwrap();
        assert_eq!(p.k, 2);
        assert!((p.h - 0.75).abs() < 1e-15);
        assert_eq!(g.project(&f, [1.2, 0.1]).unwrap().k, 1);
        assert!(g.project(&f, [5.0, 5.0]).is_err());
    }

    #[test]
    fn anchors_lie_on_levels() {
        let (f, g) = dumbbell();
        for (k, h) in [(0, 0.1), (1, 0.2499), (2, 0.2501), (2, 3.9)] {
            let a = g.anchor(&f, k, h).unwrap();
            assert!((f.value(a) - h).abs() < 1e-12);
            assert_eq!(g.project(&f, a).unwrap().k, k);
        }
    }

    #[test]
    fn distances_through_vertex() {
        let (_, g) = dumbbell();
        let d = g.distance(GraphPoint { k: 0, h: 0.05 }, GraphPoint { k: 1, h: 0.05 });
        assert!((d - 0.4).abs() < 1e-15);
        assert!((g.distance(GraphPoint { k: 2, h: 0.1 + 0.25 }, GraphPoint { k: 2, h: 0.45 }) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn harmonic_single_edge() {
        let f = ScalarField::Harmonic;
        let cps = find_critical_points(&f, SearchBox::default(), 6).unwrap();
        let g = build_reeb(&cps, &f, 4.0, SearchBox::default()).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.interior_vertices().count(), 0);
        assert_eq!((g.edges[0].h_lo, g.edges[0].h_hi), (0.0, 4.0));
    }
}
