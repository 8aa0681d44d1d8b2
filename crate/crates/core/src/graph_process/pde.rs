use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GraphDynamics;
use crate::error::{Error, Result};
use crate::reeb::{GraphPoint, VertexKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeGridSpec {
    /// Target mesh width in `h`.
    pub dx: f64,
    pub dt: f64,
    /// Leading Crank–Nicolson steps replaced by two implicit half steps each.
    pub rannacher: usize,
    /// Distance at which exterior ends stop short of an extremum.
    pub delta_min: f64,
}

impl Default for PdeGridSpec {
    fn default() -> Self {
        PdeGridSpec { dx: 2e-3, dt: 2e-3, rannacher: 2, delta_min: 1e-3 }
    }
}

impl PdeGridSpec {
    /// Doubled `dx` and `dt`, for self-convergence estimates.
    pub fn coarsened(&self) -> Self {
        PdeGridSpec { dx: 2.0 * self.dx, dt: 2.0 * self.dt, ..*self }
    }

    pub fn refined(&self) -> Self {
        PdeGridSpec { dx: 0.5 * self.dx, dt: 0.5 * self.dt, ..*self }
    }
}

/// Mesh of one edge: nodes `h[0..=n]`; an end at an interior vertex is the
/// shared vertex unknown rather than an edge unknown.
#[derive(Clone, Debug)]
struct EdgeMesh {
    k: usize,
    h: Vec<f64>,
    dx: f64,
    /// Vertex-unknown index at each end, if that end is an interior vertex.
    ends: [Option<usize>; 2],
    /// Generator stencil `(lower, centre, upper)` at every node.
    stencil: Vec<[f64; 3]>,
}

impl EdgeMesh {
    fn first(&self) -> usize {
        usize::from(self.ends[0].is_some())
    }

    fn last(&self) -> usize {
        self.h.len() - 1 - usize::from(self.ends[1].is_some())
    }

    fn unknowns(&self) -> usize {
        self.last() + 1 - self.first()
    }
}

#[derive(Clone, Debug)]
struct Layout {
    meshes: Vec<EdgeMesh>,
    /// `(vertex id, value, [(mesh, end)])` per interior vertex.
    vertices: Vec<(usize, f64, Vec<(usize, usize, f64)>)>,
}

fn layout(dynamics: &GraphDynamics, spec: &PdeGridSpec) -> Result<Layout> {
    let graph = dynamics.graph;
    let mut vertices: Vec<(usize, f64, Vec<(usize, usize, f64)>)> =
        graph.interior_vertices().map(|v| (v.id, v.value, Vec::new())).collect();
    let vindex = |id: usize| vertices.iter().position(|v| v.0 == id);
    let mut ends_all = Vec::new();
    for e in &graph.edges {
        ends_all.push([vindex(e.lo), vindex(e.hi)]);
    }
    let mut meshes = Vec::new();
    for (m, e) in graph.edges.iter().enumerate() {
        let kind = |v: usize| graph.vertices[v].kind;
        let a = if kind(e.lo) == VertexKind::Exterior { e.h_lo + spec.delta_min } else { e.h_lo };
        let b = match kind(e.hi) {
            VertexKind::Exterior => e.h_hi - spec.delta_min,
            VertexKind::Infinity => graph.h_max,
            VertexKind::Interior => e.h_hi,
        };
        let n = (((b - a) / spec.dx).round() as usize).max(4);
        let dx = (b - a) / n as f64;
        let h: Vec<f64> = (0..=n).map(|i| a + i as f64 * dx).collect();
        let ends = ends_all[m];
        let stencil = h
            .iter()
            .enumerate()
            .map(|(i, &hi)| {
                let (aa, bb) = dynamics.tables.generator(e.id, hi);
                let diff = 0.5 * aa / (dx * dx);
                if i == 0 && ends[0].is_none() {
                    // reflecting end: mirror ghost, drift upwinded inward
                    [0.0, -2.0 * diff - bb.max(0.0) / dx, 2.0 * diff + bb.max(0.0) / dx]
                } else if i == n && ends[1].is_none() {
                    [2.0 * diff - bb.min(0.0) / dx, -2.0 * diff + bb.min(0.0) / dx, 0.0]
                } else {
                    let c = bb / (2.0 * dx);
                    [diff - c, -2.0 * diff, diff + c]
                }
            })
            .collect();
        for (end, vi) in ends.iter().enumerate() {
            if let Some(vi) = vi {
                let p = dynamics
                    .weights
                    .iter()
                    .find(|w| w.vertex == vertices[*vi].0)
                    .and_then(|w| w.entry(e.id))
                    .ok_or_else(|| Error::Topology(format!("no weight for edge {} at vertex {}", e.id, vertices[*vi].0)))?
                    .p;
                vertices[*vi].2.push((m, end, p));
            }
        }
        meshes.push(EdgeMesh { k: e.id, h, dx, ends, stencil });
    }
    Ok(Layout { meshes, vertices })
}

/// Thomas factorization of a tridiagonal matrix.
#[derive(Clone, Debug)]
struct Tridiag {
    lower: Vec<f64>,
    /// Modified upper diagonal and pivots after elimination.
    cprime: Vec<f64>,
    denom: Vec<f64>,
}

impl Tridiag {
    fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        let mut cprime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        for i in 0..n {
            let d = diag[i] - if i > 0 { lower[i] * cprime[i - 1] } else { 0.0 };
            if !(d.abs() > 1e-300) {
                return Err(Error::Solver(format!("zero pivot in edge block at row {i}")));
            }
            denom[i] = d;
            cprime[i] = upper[i] / d;
        }
        Ok(Tridiag { lower, cprime, denom })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] /= self.denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.cprime[i] * rhs[i + 1];
        }
    }
}

/// `(I − θ dt L)` factorized through its edge blocks and the vertex Schur complement.
struct Stepper {
    theta: f64,
    dt: f64,
    blocks: Vec<Tridiag>,
    /// `z[m][end]`: block response to a unit vertex value at that end.
    z: Vec<[Option<Vec<f64>>; 2]>,
    schur: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Stepper {
    fn new(lay: &Layout, theta: f64, dt: f64) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut z = Vec::new();
        for m in &lay.meshes {
            let (f, l) = (m.first(), m.last());
            let n = m.unknowns();
            let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for i in f..=l {
                let s = m.stencil[i];
                lo[i - f] = -theta * dt * s[0];
                di[i - f] = 1.0 - theta * dt * s[1];
                up[i - f] = -theta * dt * s[2];
            }
            let t = Tridiag::new(lo, di, up)?;
            let resp = |end: usize| {
                m.ends[end].map(|_| {
                    let mut r = vec![0.0; n];
                    if end == 0 {
                        r[0] = -theta * dt * m.stencil[f][0];
                    } else {
                        r[n - 1] = -theta * dt * m.stencil[l][2];
                    }
                    t.solve(&mut r);
                    r
                })
            };
            z.push([resp(0), resp(1)]);
            blocks.push(t);
        }
        let nv = lay.vertices.len();
        let mut s = DMatrix::<f64>::zeros(nv.max(1), nv.max(1));
        if nv == 0 {
            s[(0, 0)] = 1.0;
        }
        for (vi, (_, _, inc)) in lay.vertices.iter().enumerate() {
            for &(m, end, p) in inc {
                let mesh = &lay.meshes[m];
                let c = p / (2.0 * mesh.dx);
                s[(vi, vi)] -= 3.0 * c;
                let (n1, n2) = near_nodes(mesh, end);
                for (e2, zv) in z[m].iter().enumerate() {
                    if let Some(zv) = zv {
                        let w = mesh.ends[e2].expect("end present");
                        s[(vi, w)] += c * (-4.0 * zv[n1] + zv[n2]);
                    }
                }
            }
        }
        let cond = {
            let sv = s.clone().svd(false, false).singular_values;
            let (mx, mn) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &x| (a.max(x), b.min(x)));
            mx / mn
        };
        if !(cond < 1e12) {
            return Err(Error::Solver(format!("vertex coupling system ill-conditioned (condition ≈ {cond:.3e})")));
        }
        Ok(Stepper { theta, dt, blocks, z, schur: s.lu() })
    }

    /// Advances `(edges, vertex values)` by one step.
    fn step(&self, lay: &Layout, u: &mut [Vec<f64>], uv: &mut [f64]) -> Result<()> {
        let explicit = (1.0 - self.theta) * self.dt;
        let mut y: Vec<Vec<f64>> = Vec::with_capacity(lay.meshes.len());
        for (mi, m) in lay.meshes.iter().enumerate() {
            let (f, l) = (m.first(), m.last());
            let full = full_values(m, &u[mi], uv);
            let mut r: Vec<f64> = (f..=l)
                .map(|i| {
                    let s = m.stencil[i];
                    let lu = s[0] * if i > 0 { full[i - 1] } else { 0.0 }
                        + s[1] * full[i]
                        + s[2] * if i + 1 < full.len() { full[i + 1] } else { 0.0 };
                    full[i] + explicit * lu
                })
                .collect();
            self.blocks[mi].solve(&mut r);
            y.push(r);
        }
        let nv = lay.vertices.len();
        if nv > 0 {
            let mut rhs = DVector::<f64>::zeros(nv);
            for (vi, (_, _, inc)) in lay.vertices.iter().enumerate() {
                for &(m, end, p) in inc {
                    let c = p / (2.0 * lay.meshes[m].dx);
                    let (n1, n2) = near_nodes(&lay.meshes[m], end);
                    rhs[vi] -= c * (4.0 * y[m][n1] - y[m][n2]);
                }
            }
            let sol = self.schur.solve(&rhs).ok_or_else(|| Error::Solver("singular vertex coupling system".into()))?;
            uv.copy_from_slice(sol.as_slice());
        }
        for (mi, m) in lay.meshes.iter().enumerate() {
            for (end, zv) in self.z[mi].iter().enumerate() {
                if let Some(zv) = zv {
                    let w = uv[m.ends[end].expect("end present")];
                    y[mi].iter_mut().zip(zv).for_each(|(a, b)| *a -= w * b);
                }
            }
        }
        for (dst, src) in u.iter_mut().zip(y) {
            *dst = src;
        }
        Ok(())
    }
}

/// Indices (in edge-unknown numbering) of the first two nodes away from `end`.
fn near_nodes(m: &EdgeMesh, end: usize) -> (usize, usize) {
    let n = m.unknowns();
    if end == 0 {
        (0, 1)
    } else {
        (n - 1, n - 2)
    }
}

fn full_values(m: &EdgeMesh, u: &[f64], uv: &[f64]) -> Vec<f64> {
    let mut full = Vec::with_capacity(m.h.len());
    if let Some(v) = m.ends[0] {
        full.push(uv[v]);
    }
    full.extend_from_slice(u);
    if let Some(v) = m.ends[1] {
        full.push(uv[v]);
    }
    full
}

/// Solution of the backward equation on every edge mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeSolution {
    pub t: f64,
    /// `(edge, h-nodes, values)`.
    pub edges: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

impl PdeSolution {
    /// Linear interpolation at a graph point.
    pub fn eval(&self, p: GraphPoint) -> Result<f64> {
        let (_, h, f) = self.edges.iter().find(|e| e.0 == p.k).ok_or(Error::OffTable { edge: p.k, h: p.h })?;
        let x = p.h.clamp(h[0], *h.last().expect("non-empty mesh"));
        let i = h.partition_point(|&v| v <= x).clamp(1, h.len() - 1) - 1;
        let t = (x - h[i]) / (h[i + 1] - h[i]);
        Ok(f[i] + t * (f[i + 1] - f[i]))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge,h,f\n");
        for (k, h, f) in &self.edges {
            for (a, b) in h.iter().zip(f) {
                let _ = writeln!(out, "{k},{a:.15e},{b:.15e}");
            }
        }
        out
    }
}

/// `u(T) = e^{T𝓛} f0`, so that `u(T, p) = E_p f0(h_T)`.
///
/// Crank–Nicolson in time after a Rannacher start, centered differences
/// in `h`, a shared unknown at each interior vertex and the flux row
/// `Σ_k p_k ∂f/∂δ_k = 0` in the outward offsets `δ_k`.
pub fn solve_backward_pde(
    dynamics: &GraphDynamics,
    f0: &(dyn Fn(GraphPoint) -> f64 + Sync),
    t_end: f64,
    spec: &PdeGridSpec,
) -> Result<PdeSolution> {
    if !(spec.dx > 0.0 && spec.dt > 0.0 && t_end >= 0.0) {
        return Err(Error::Config("PDE grid needs dx > 0, dt > 0 and T >= 0".into()));
    }
    let lay = layout(dynamics, spec)?;
    let mut u: Vec<Vec<f64>> =
        lay.meshes.iter().map(|m| (m.first()..=m.last()).map(|i| f0(GraphPoint { k: m.k, h: m.h[i] })).collect()).collect();
    let mut uv: Vec<f64> = lay
        .vertices
        .iter()
        .map(|(_, value, inc)| f0(GraphPoint { k: lay.meshes[inc[0].0].k, h: *value }))
        .collect();
    if t_end > 0.0 {
        let nt = (t_end / spec.dt).ceil().max(1.0) as usize;
        let dt = t_end / nt as f64;
        let ran = spec.rannacher.min(nt);
        if ran > 0 {
            let half = Stepper::new(&lay, 1.0, 0.5 * dt)?;
            for _ in 0..2 * ran {
                half.step(&lay, &mut u, &mut uv)?;
            }
        }
        if nt > ran {
            let cn = Stepper::new(&lay, 0.5, dt)?;
            for _ in ran..nt {
                cn.step(&lay, &mut u, &mut uv)?;
            }
        }
    }
    let edges = lay.meshes.iter().zip(&u).map(|(m, ue)| (m.k, m.h.clone(), full_values(m, ue, &uv))).collect();
    Ok(PdeSolution { t: t_end, edges })
}
