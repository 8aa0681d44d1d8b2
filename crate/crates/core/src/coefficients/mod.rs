//! Coefficients of the limiting generator `L_k = ½A_k f″ + B_k f′` on each
//! graph edge, obtained by averaging pointwise coefficients over level curves.

mod gluing;
mod green_kubo;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gluing::{all_gluing_weights, gluing_weights, GluingEntry, GluingWeights};
pub use green_kubo::{autocorrelation_a, GreenKuboEnsemble, GreenKuboEstimate, GreenKuboSpec};

use crate::corrector::EffectiveMatrices;
use crate::error::{Error, Result};
use crate::hamiltonian::level::line_integrals;
use crate::hamiltonian::{trace_level, HamiltonianModel, ScalarField, TraceOptions, VectorField};
use crate::interp::{CubicSpline, Pchip};
use crate::reeb::{ReebGraph, VertexKind};

/// Pointwise coefficients from the effective matrices:
/// `A(x) = Σ g_j g_l 𝔄_jl`, `B(x) = Σ (∇g_j·e_l) C_jl` and
/// `B̃(x) = B(x) + Σ g_j (div e_l) C_jl`, with `g_j = ∇H·e_j`.
#[derive(Clone, Debug)]
pub struct PointwiseAB {
    field: ScalarField,
    e: Vec<VectorField>,
    m: EffectiveMatrices,
}

impl PointwiseAB {
    pub fn new(model: &HamiltonianModel, m: &EffectiveMatrices) -> Result<Self> {
        if m.dim() != model.terms.len() {
            return Err(Error::Dimension(format!("{} terms but {}x{} matrices", model.terms.len(), m.dim(), m.dim())));
        }
        Ok(PointwiseAB { field: model.field.clone(), e: model.terms.iter().map(|t| t.e.clone()).collect(), m: m.clone() })
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn matrices(&self) -> &EffectiveMatrices {
        &self.m
    }

    /// `g_j(x) = ∇H(x)·e_j(x)`, so that `b_h = Σ g_j φ_j`.
    pub fn weights(&self, x: [f64; 2]) -> Vec<f64> {
        let g = self.field.grad(x);
        self.e.iter().map(|e| {
            let v = e.value(x);
            g[0] * v[0] + g[1] * v[1]
        })
        .collect()
    }

    /// `[A, B, B̃]` at `x`.
    pub fn eval(&self, x: [f64; 2]) -> [f64; 3] {
        let jet = self.field.jet(x);
        let (g, [h11, h12, h22]) = (jet.g, jet.h);
        let n = self.e.len();
        let mut ev = Vec::with_capacity(n);
        let mut gj = Vec::with_capacity(n);
        let mut grad_gj = Vec::with_capacity(n);
        let mut div = Vec::with_capacity(n);
        for e in &self.e {
            let (v, jac) = e.jacobian(x);
            gj.push(g[0] * v[0] + g[1] * v[1]);
            grad_gj.push([
                h11 * v[0] + h12 * v[1] + g[0] * jac[0][0] + g[1] * jac[1][0],
                h12 * v[0] + h22 * v[1] + g[0] * jac[0][1] + g[1] * jac[1][1],
            ]);
            div.push(jac[0][0] + jac[1][1]);
            ev.push(v);
        }
        let (mut a, mut b, mut extra) = (0.0, 0.0, 0.0);
        for j in 0..n {
            for l in 0..n {
                a += gj[j] * gj[l] * self.m.a_mat[j][l];
                let c = self.m.c_mat[j][l];
                b += (grad_gj[j][0] * ev[l][0] + grad_gj[j][1] * ev[l][1]) * c;
                extra += gj[j] * div[l] * c;
            }
        }
        [a, b, b + extra]
    }

    pub fn a(&self, x: [f64; 2]) -> f64 {
        self.eval(x)[0]
    }

    pub fn b(&self, x: [f64; 2]) -> f64 {
        self.eval(x)[1]
    }

    pub fn b_tilde(&self, x: [f64; 2]) -> f64 {
        self.eval(x)[2]
    }
}

/// Layout of the `h`-grid on every edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Largest offset of the graded cluster at an interior vertex.
    pub delta0: f64,
    /// Offsets `delta0·2^-j` for `j < refinements`.
    pub refinements: usize,
    /// Uniformly spaced levels across the edge.
    pub bulk: usize,
    /// Distance at which tables stop short of an extremum.
    pub delta_min: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { delta0: 0.1, refinements: 11, bulk: 32, delta_min: 1e-3 }
    }
}

impl GridSpec {
    pub fn offsets(&self) -> Vec<f64> {
        (0..self.refinements).map(|j| self.delta0 * 0.5f64.powi(j as i32)).collect()
    }

    fn exterior_offsets(&self) -> Vec<f64> {
        let mut v = Vec::new();
        let mut d = self.delta_min;
        while d < self.delta0 {
            v.push(d);
            d *= 2.0;
        }
        v
    }
}

/// Extrapolation models at an interior end of an edge, in the offset
/// `δ = |h − h_O|`: `P = AQ ≈ p0 + p_log·δ ln δ + p_lin·δ` and
/// `Q ≈ q_const + q_log·ln δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexFit {
    pub vertex: usize,
    pub h_o: f64,
    /// `+1` if the edge lies above the vertex value.
    pub side: f64,
    pub p0: f64,
    pub p_log: f64,
    pub p_lin: f64,
    pub q_const: f64,
    pub q_log: f64,
    pub offsets: Vec<f64>,
    pub p_samples: Vec<f64>,
    /// Offsets below this use the fitted models.
    pub switch: f64,
}

impl VertexFit {
    fn p(&self, d: f64) -> f64 {
        self.p0 + self.p_log * d * d.ln() + self.p_lin * d
    }

    fn dp_dh(&self, d: f64) -> f64 {
        self.side * (self.p_log * (d.ln() + 1.0) + self.p_lin)
    }

    fn q(&self, d: f64) -> f64 {
        self.q_const + self.q_log * d.ln()
    }
}

fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let svd = m.svd(true, true);
    let sol = svd.solve(&DVector::from_column_slice(y), 1e-14).map_err(|e| Error::Solver(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

/// Coefficient table of one edge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeTable {
    pub edge: usize,
    pub h: Vec<f64>,
    pub q: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub b_tilde: Vec<f64>,
    /// `P = A·Q = ∮ A/|∇H| dl`.
    pub p: Vec<f64>,
    /// `∮ B̃/|∇H| dl`.
    pub p_bt: Vec<f64>,
    pub fits: Vec<VertexFit>,
    #[serde(skip)]
    interp: Option<Interpolants>,
}

#[derive(Clone, Debug)]
struct Interpolants {
    p: Pchip,
    q: Pchip,
    b: Pchip,
    bt: Pchip,
}

impl EdgeTable {
    fn finish(&mut self) {
        let p = |v: &Vec<f64>| Pchip::new(self.h.clone(), v.clone());
        self.interp = Some(Interpolants { p: p(&self.p), q: p(&self.q), b: p(&self.b), bt: p(&self.b_tilde) });
    }

    pub fn range(&self) -> (f64, f64) {
        (self.h[0], *self.h.last().expect("non-empty table"))
    }

    fn fit_for(&self, h: f64) -> Option<(&VertexFit, f64)> {
        self.fits.iter().find_map(|f| {
            let d = (h - f.h_o) * f.side;
            (d < f.switch).then_some((f, d.max(1e-300)))
        })
    }

    /// `(Q, A, B̃)` at `h`; near an interior vertex `A = P/Q` from the fitted models.
    pub fn eval(&self, h: f64) -> (f64, f64, f64) {
        let it = self.interp.as_ref().expect("table finished");
        match self.fit_for(h) {
            Some((f, d)) => {
                let q = f.q(d);
                (q, f.p(d) / q, 0.5 * f.dp_dh(d) / q)
            }
            None => {
                let q = it.q.eval(h);
                (q, it.p.eval(h) / q, it.bt.eval(h))
            }
        }
    }

    /// Level average of `B` (the form without the divergence correction).
    pub fn b_at(&self, h: f64) -> f64 {
        self.interp.as_ref().expect("table finished").b.eval(h)
    }

    /// Largest relative defect of `½P′ = ∮B̃/|∇H|` over the interior grid
    /// points, with `P′` from a cubic spline. Returns `(defect, h)`.
    pub fn identity_defect(&self) -> (f64, f64) {
        let n = self.h.len();
        if n < 6 {
            return (f64::NAN, f64::NAN);
        }
        let s = CubicSpline::new(self.h.clone(), self.p.clone());
        (2..n - 2)
            .map(|i| {
                let lhs = 0.5 * s.derivative(self.h[i]);
                ((lhs - self.p_bt[i]).abs() / self.p_bt[i].abs(), self.h[i])
            })
            .fold((0.0, f64::NAN), |acc, x| if x.0 > acc.0 { x } else { acc })
    }
}

/// Coefficient tables for every edge of a graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeTables {
    pub tables: Vec<EdgeTable>,
    pub spec: GridSpec,
}

#[derive(Clone, Copy)]
enum Node {
    Plain,
    Graded { fit: usize, j: usize },
}

/// Builds the tables by tracing every grid level (in parallel).
pub fn edge_tables(
    graph: &ReebGraph,
    ab: &PointwiseAB,
    spec: &GridSpec,
    opts: &TraceOptions,
) -> Result<EdgeTables> {
    let field = ab.field();
    let offsets = spec.offsets();
    let smallest = *offsets.last().ok_or_else(|| Error::Config("grid needs at least one refinement".into()))?;
    let mut jobs: Vec<(usize, f64, Node)> = Vec::new();
    let mut fit_heads: Vec<Vec<(usize, f64, f64)>> = Vec::new();
    for e in &graph.edges {
        let kind = |v: usize| graph.vertices[v].kind;
        let top = e.h_hi.min(graph.h_max);
        let mut nodes: Vec<(f64, Node)> = Vec::new();
        let mut heads = Vec::new();
        let mut end = |v: usize, h_o: f64, side: f64, nodes: &mut Vec<(f64, Node)>| match kind(v) {
            VertexKind::Interior => {
                let fit = heads.len();
                heads.push((v, h_o, side));
                for (j, d) in offsets.iter().enumerate() {
                    nodes.push((h_o + side * d, Node::Graded { fit, j }));
                }
            }
            VertexKind::Exterior => {
                for d in spec.exterior_offsets() {
                    nodes.push((h_o + side * d, Node::Plain));
                }
            }
            VertexKind::Infinity => nodes.push((top, Node::Plain)),
        };
        end(e.lo, e.h_lo, 1.0, &mut nodes);
        end(e.hi, e.h_hi, -1.0, &mut nodes);
        let inner = |v: usize, h: f64, side: f64| match kind(v) {
            VertexKind::Interior => h + side * smallest,
            VertexKind::Exterior => h + side * spec.delta_min,
            VertexKind::Infinity => top,
        };
        let (lo, hi) = (inner(e.lo, e.h_lo, 1.0), inner(e.hi, e.h_hi, -1.0));
        for i in 1..spec.bulk.max(2) {
            let t = i as f64 / spec.bulk.max(2) as f64;
            nodes.push((lo + t * (hi - lo), Node::Plain));
        }
        nodes.retain(|(h, _)| *h >= lo - 1e-15 && *h <= hi + 1e-15);
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        // graded nodes win over nearby bulk nodes
        let mut kept: Vec<(f64, Node)> = Vec::new();
        for n in nodes {
            match kept.last_mut() {
                Some(last) if (n.0 - last.0).abs() < 0.2 * smallest => {
                    if matches!(n.1, Node::Graded { .. }) {
                        *last = n;
                    }
                }
                _ => kept.push(n),
            }
        }
        jobs.extend(kept.into_iter().map(|(h, n)| (e.id, h, n)));
        fit_heads.push(heads);
    }
    let values: Vec<[f64; 4]> = jobs
        .par_iter()
        .map(|&(k, h, _)| {
            let x = graph.anchor(field, k, h)?;
            let curve = trace_level(field, x, h, opts)?;
            let [q, pa, pb, pbt] = line_integrals(&curve, |x| {
                let [a, b, bt] = ab.eval(x);
                [1.0, a, b, bt]
            });
            if !(q > 0.0 && pa.is_finite() && pbt.is_finite()) {
                return Err(Error::Trace { h, msg: format!("degenerate level integrals on edge {k}") });
            }
            Ok([q, pa, pb, pbt])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tables = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        let mut t = EdgeTable {
            edge: e.id,
            h: vec![],
            q: vec![],
            a: vec![],
            b: vec![],
            b_tilde: vec![],
            p: vec![],
            p_bt: vec![],
            fits: vec![],
            interp: None,
        };
        let mut graded: Vec<Vec<(usize, f64)>> = vec![vec![]; fit_heads[e.id].len()];
        for (&(k, h, node), v) in jobs.iter().zip(&values) {
            if k != e.id {
                continue;
            }
            let [q, pa, pb, pbt] = *v;
            if let Node::Graded { fit, j } = node {
                graded[fit].push((j, pa));
            }
            t.h.push(h);
            t.q.push(q);
            t.a.push(pa / q);
            t.b.push(pb / q);
            t.b_tilde.push(pbt / q);
            t.p.push(pa);
            t.p_bt.push(pbt);
        }
        for (fit, &(vertex, h_o, side)) in fit_heads[e.id].iter().enumerate() {
            let mut pts = graded[fit].clone();
            pts.sort_by_key(|p| p.0);
            let ds: Vec<f64> = pts.iter().map(|p| offsets[p.0]).collect();
            let ps: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if ds.len() < 4 {
                return Err(Error::Trace { h: h_o, msg: format!("too few graded levels on edge {}", e.id) });
            }
            let rows: Vec<Vec<f64>> = ds.iter().map(|&d| vec![1.0, d * d.ln(), d]).collect();
            let pc = least_squares(&rows, &ps)?;
            // Q from the three levels nearest the vertex
            let tail: Vec<f64> = ds[ds.len() - 3..].to_vec();
            let qs: Vec<f64> = tail
                .iter()
                .map(|&d| {
                    let h = h_o + side * d;
                    let i = t.h.iter().position(|&x| x == h).expect("graded level present");
                    t.q[i]
                })
                .collect();
            let qrows: Vec<Vec<f64>> = tail.iter().map(|&d| vec![1.0, d.ln()]).collect();
            let qc = least_squares(&qrows, &qs)?;
            t.fits.push(VertexFit {
                vertex,
                h_o,
                side,
                p0: pc[0],
                p_log: pc[1],
                p_lin: pc[2],
                q_const: qc[0],
                q_log: qc[1],
                offsets: ds.clone(),
                p_samples: ps,
                switch: *ds.last().expect("non-empty"),
            });
        }
        t.finish();
        tables.push(t);
    }
    Ok(EdgeTables { tables, spec: *spec })
}

impl EdgeTables {
    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Rebuilds interpolants after deserialization.
    pub fn finish(&mut self) {
        self.tables.iter_mut().for_each(EdgeTable::finish);
    }

    /// `(A_k(h), B̃_k(h))`: the generator coefficients on edge `k`.
    #[inline]
    pub fn generator(&self, k: usize, h: f64) -> (f64, f64) {
        let (_, a, b) = self.tables[k].eval(h);
        (a, b)
    }

    pub fn q(&self, k: usize, h: f64) -> f64 {
        self.tables[k].eval(h).0
    }

    pub fn fit(&self, k: usize, vertex: usize) -> Option<&VertexFit> {
        self.tables[k].fits.iter().find(|f| f.vertex == vertex)
    }

    /// Largest `A` and `|B̃|` over all tables.
    pub fn max_coefficients(&self) -> (f64, f64) {
        self.tables.iter().fold((0.0f64, 0.0f64), |(a, b), t| {
            let ta = t.a.iter().copied().fold(0.0, f64::max);
            let tb = t.b_tilde.iter().map(|v| v.abs()).fold(0.0, f64::max);
            (a.max(ta), b.max(tb))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,h,Q,A,B,Btilde\n");
        for t in &self.tables {
            for i in 0..t.h.len() {
                let _ = writeln!(out, "{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}", t.edge, t.h[i], t.q[i], t.a[i], t.b[i], t.b_tilde[i]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::{effective_matrices, CellProblemBasis, CorrectorSet};
    use crate::hamiltonian::{find_critical_points, SearchBox};
    use crate::reeb::build_reeb;
    use crate::torus::{stationary_density, FastProcessSpec};
    use std::f64::consts::TAU;

    fn brownian_ab(field: ScalarField, amp: f64) -> PointwiseAB {
        let model = HamiltonianModel::axis_aligned(field, amp);
        let mu = stationary_density(&FastProcessSpec::constant_drift(0.0, 2f64.sqrt())).unwrap();
        let basis = CellProblemBasis::from_model(&model, &mu).unwrap();
        let set = CorrectorSet::solve(&basis, &mu).unwrap();
        let m = effective_matrices(&set, &basis, &mu).unwrap();
        PointwiseAB::new(&model, &m).unwrap()
    }

    #[test]
    fn brownian_model_pointwise() {
        let ab = brownian_ab(ScalarField::Dumbbell, 1.0);
        let x = [0.3, -0.7];
        let g = ScalarField::Dumbbell.grad(x);
        assert!((ab.a(x) - (g[0] * g[0] + g[1] * g[1])).abs() < 1e-8);
        for m in [[1.0, 0.0], [-1.0, 0.0]] {
            let [_, b, bt] = ab.eval(m);
            assert!((b - 1.5).abs() < 1e-8 && (bt - b).abs() < 1e-14);
        }
        assert!(ab.a([0.0, 0.0]).abs() < 1e-14);
    }

    #[test]
    fn harmonic_table() {
        let amp = 0.5;
        let ab = brownian_ab(ScalarField::Harmonic, amp);
        let cps = find_critical_points(ab.field(), SearchBox::default(), 6).unwrap();
        let g = build_reeb(&cps, ab.field(), 4.0, SearchBox::default()).unwrap();
        let spec = GridSpec { bulk: 8, ..GridSpec::default() };
        let t = edge_tables(&g, &ab, &spec, &TraceOptions::default()).unwrap();
        assert_eq!(t.len(), 1);
        let tab = &t.tables[0];
        for (i, &h) in tab.h.iter().enumerate() {
            assert!((tab.q[i] - TAU).abs() < 1e-6, "Q({h}) = {}", tab.q[i]);
            assert!((tab.a[i] - 2.0 * h * amp * amp).abs() < 1e-6 * (1.0 + h));
        }
        let (a, _) = t.generator(0, 1.3);
        assert!((a - 2.6 * amp * amp).abs() < 1e-5);
    }
}
