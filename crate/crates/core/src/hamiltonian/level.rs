//! Level-curve tracing along `∇⊥H` and quadrature over traced curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::critical::{CriticalKind, CriticalPoint};
use super::field::{perp, ScalarField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptions {
    /// Relative level tolerance: points satisfy `|H − h| < tol·(1 + |h|)`.
    pub tol: f64,
    pub dl_max: f64,
    /// Step is `min(dl_max, c_step·|∇H|)`.
    pub c_step: f64,
    pub max_steps: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { tol: 1e-11, dl_max: 0.01, c_step: 0.01, max_steps: 1_000_000 }
    }
}

impl TraceOptions {
    pub fn halved(self) -> Self {
        TraceOptions { tol: self.tol * 0.5, dl_max: self.dl_max * 0.5, c_step: self.c_step * 0.5, ..self }
    }
}

/// An ordered sequence of points on `{H = h}`.
///
/// `dl[i]` is the arclength element from `points[i]` to the next point; for a
/// closed curve the last element returns to `points[0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelCurve {
    pub points: Vec<[f64; 2]>,
    pub grad_norm: Vec<f64>,
    pub dl: Vec<f64>,
    pub h: f64,
    pub edge: Option<usize>,
    pub closed: bool,
}

impl LevelCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arclength(&self) -> f64 {
        self.dl.iter().sum()
    }

    /// Shoelace area of the closed polygon.
    pub fn enclosed_area(&self) -> f64 {
        let n = self.points.len();
        let mut s = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            s += a[0] * b[1] - a[1] * b[0];
        }
        0.5 * s.abs()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,grad_norm\n");
        for (p, g) in self.points.iter().zip(&self.grad_norm) {
            let _ = writeln!(out, "{:.15e},{:.15e},{:.15e}", p[0], p[1], g);
        }
        out
    }
}

/// Trapezoidal approximation of `∫_γ f(x)/|∇H(x)| dl`.
pub fn line_integral(curve: &LevelCurve, f: impl Fn([f64; 2]) -> f64) -> f64 {
    let vals: Vec<f64> = curve.points.iter().zip(&curve.grad_norm).map(|(&p, &g)| f(p) / g).collect();
    let n = vals.len();
    let mut s = 0.0;
    for (i, dl) in curve.dl.iter().enumerate() {
        s += 0.5 * (vals[i] + vals[(i + 1) % n]) * dl;
    }
    s
}

/// Like [`line_integral`] for several integrands at once, sharing one sweep.
pub fn line_integrals<const N: usize>(curve: &LevelCurve, f: impl Fn([f64; 2]) -> [f64; N]) -> [f64; N] {
    let vals: Vec<[f64; N]> = curve
        .points
        .iter()
        .zip(&curve.grad_norm)
        .map(|(&p, &g)| f(p).map(|v| v / g))
        .collect();
    let n = vals.len();
    let mut s = [0.0; N];
    for (i, dl) in curve.dl.iter().enumerate() {
        let (a, b) = (&vals[i], &vals[(i + 1) % n]);
        for c in 0..N {
            s[c] += 0.5 * (a[c] + b[c]) * dl;
        }
    }
    s
}

/// Newton projection of `x` onto `{H = h}` along the gradient.
pub fn project_to_level(field: &ScalarField, mut x: [f64; 2], h: f64, tol: f64) -> Result<[f64; 2]> {
    let target = tol * (1.0 + h.abs());
    for _ in 0..50 {
        let (v, g) = field.value_grad(x);
        let r = v - h;
        if r.abs() < 0.01 * target {
            return Ok(x);
        }
        let g2 = g[0] * g[0] + g[1] * g[1];
        if g2 < 1e-24 {
            return Err(Error::Trace { h, msg: format!("vanishing gradient at ({:.6}, {:.6})", x[0], x[1]) });
        }
        x = [x[0] - r * g[0] / g2, x[1] - r * g[1] / g2];
    }
    let r = field.value(x) - h;
    if r.abs() < target {
        Ok(x)
    } else {
        Err(Error::Trace { h, msg: format!("Newton projection stalled with residual {r:e}") })
    }
}

#[inline]
fn unit_tangent(field: &ScalarField, x: [f64; 2], dir: f64) -> ([f64; 2], f64) {
    let g = field.grad(x);
    let n = g[0].hypot(g[1]);
    let t = perp(g);
    ([dir * t[0] / n, dir * t[1] / n], n)
}

struct Tracer<'a> {
    field: &'a ScalarField,
    h: f64,
    opts: TraceOptions,
    dir: f64,
}

impl Tracer<'_> {
    fn step_len(&self, gn: f64) -> f64 {
        self.opts.dl_max.min(self.opts.c_step * gn)
    }

    /// One RK4 step of length `ds` in arclength, then projection.
    fn advance(&self, x: [f64; 2], ds: f64) -> Result<([f64; 2], f64)> {
        let f = |p: [f64; 2]| unit_tangent(self.field, p, self.dir).0;
        let k1 = f(x);
        let k2 = f([x[0] + 0.5 * ds * k1[0], x[1] + 0.5 * ds * k1[1]]);
        let k3 = f([x[0] + 0.5 * ds * k2[0], x[1] + 0.5 * ds * k2[1]]);
        let k4 = f([x[0] + ds * k3[0], x[1] + ds * k3[1]]);
        let xn = [
            x[0] + ds / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + ds / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        let xn = project_to_level(self.field, xn, self.h, self.opts.tol)?;
        let (_, gn) = unit_tangent(self.field, xn, self.dir);
        if !(gn > 1e-12) {
            return Err(Error::Trace { h: self.h, msg: "|∇H| below 1e-12 on the path".into() });
        }
        Ok((xn, gn))
    }

    /// Traces until `stop(x, arclength, ds)` is true; returns the curve without
    /// the closing element.
    fn run(&self, start: [f64; 2], stop: impl Fn([f64; 2], f64, f64) -> bool) -> Result<LevelCurve> {
        let x0 = project_to_level(self.field, start, self.h, self.opts.tol)?;
        let (_, g0) = unit_tangent(self.field, x0, self.dir);
        if !(g0 > 1e-12) {
            return Err(Error::Trace { h: self.h, msg: "anchor sits on a critical point".into() });
        }
        let mut points = vec![x0];
        let mut grad_norm = vec![g0];
        let mut dl = Vec::new();
        let (mut x, mut gn, mut len) = (x0, g0, 0.0);
        for _ in 0..self.opts.max_steps {
            let ds = self.step_len(gn);
            if stop(x, len, ds) {
                return Ok(LevelCurve { points, grad_norm, dl, h: self.h, edge: None, closed: false });
            }
            let (xn, gnn) = self.advance(x, ds)?;
            x = xn;
            gn = gnn;
            len += ds;
            points.push(x);
            grad_norm.push(gn);
            dl.push(ds);
        }
        Err(Error::Trace { h: self.h, msg: format!("no closure after {} steps", self.opts.max_steps) })
    }
}

/// Traces the closed component of `{H = h}` through `anchor`.
pub fn trace_level(field: &ScalarField, anchor: [f64; 2], h: f64, opts: &TraceOptions) -> Result<LevelCurve> {
    let tol = opts.tol * (1.0 + h.abs());
    let r = field.value(anchor) - h;
    if r.abs() > 1e3 * tol.max(1e-12) {
        return Err(Error::Trace { h, msg: format!("anchor is off the level by {r:e}") });
    }
    let tracer = Tracer { field, h, opts: *opts, dir: 1.0 };
    let x0 = project_to_level(field, anchor, h, opts.tol)?;
    let closing = |x: [f64; 2], len: f64, ds: f64| {
        let d = [x0[0] - x[0], x0[1] - x[1]];
        let dist = d[0].hypot(d[1]);
        if len < 8.0 * ds || dist > 1.5 * ds {
            return false;
        }
        let (t, _) = unit_tangent(field, x, 1.0);
        t[0] * d[0] + t[1] * d[1] > 0.0
    };
    let mut curve = tracer.run(x0, closing)?;
    let last = *curve.points.last().expect("non-empty");
    curve.dl.push((last[0] - x0[0]).hypot(last[1] - x0[1]));
    curve.closed = true;
    Ok(curve)
}

/// Starting point on the separatrix a distance `delta0` from the saddle, on
/// the `side` (±1) of the unstable eigendirection.
pub fn separatrix_launch(field: &ScalarField, saddle: &CriticalPoint, side: f64, delta0: f64) -> Result<[f64; 2]> {
    let s = saddle.location;
    let em = saddle.eigenvectors[0];
    let ep = saddle.eigenvectors[1];
    let base = [s[0] + side * delta0 * em[0], s[1] + side * delta0 * em[1]];
    let g = |t: f64| field.value([base[0] + t * ep[0], base[1] + t * ep[1]]) - saddle.value;
    let (mut lo, mut hi) = (0.0, delta0);
    let mut tries = 0;
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Trace { h: saddle.value, msg: "separatrix launch root not bracketed".into() });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 * (1.0 + hi) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok([base[0] + t * ep[0], base[1] + t * ep[1]])
}

/// Traces the separatrix lobe leaving the saddle on `side` (±1) of its
/// unstable direction, stopping when the curve comes back to the saddle.
pub fn trace_separatrix(
    field: &ScalarField,
    saddle: &CriticalPoint,
    side: f64,
    delta0: f64,
    opts: &TraceOptions,
) -> Result<LevelCurve> {
    if saddle.kind != CriticalKind::Saddle {
        return Err(Error::Trace { h: saddle.value, msg: "separatrix requested at a non-saddle".into() });
    }
    let s = saddle.location;
    let p0 = separatrix_launch(field, saddle, side, delta0)?;
    let r0 = (p0[0] - s[0]).hypot(p0[1] - s[1]);
    let (t, _) = unit_tangent(field, p0, 1.0);
    let dir = if t[0] * (p0[0] - s[0]) + t[1] * (p0[1] - s[1]) > 0.0 { 1.0 } else { -1.0 };
    let opts = TraceOptions { tol: opts.tol.max(1e-13), ..*opts };
    let tracer = Tracer { field, h: saddle.value, opts, dir };
    let back = |x: [f64; 2], len: f64, _ds: f64| len > 20.0 * r0 && (x[0] - s[0]).hypot(x[1] - s[1]) <= r0;
    tracer.run(p0, back)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::critical::{find_critical_points, SearchBox};

    #[test]
    fn harmonic_circle() {
        let f = ScalarField::Harmonic;
        let c = trace_level(&f, [2.0, 0.0], 2.0, &TraceOptions::default()).unwrap();
        let worst = c.points.iter().map(|p| (p[0].hypot(p[1]) - 2.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
        let q = line_integral(&c, |_| 1.0);
        assert!((q - std::f64::consts::TAU).abs() < 1e-6, "{q}");
        let e = line_integral(&c, |p| p[0] * p[0] + p[1] * p[1]);
        assert!((e - 8.0 * std::f64::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn dumbbell_well_stays_right() {
        let f = ScalarField::Dumbbell;
        let x = (1.0f64 + (2.0 * 0.1f64.sqrt())).sqrt();
        let c = trace_level(&f, [x, 0.0], 0.1, &TraceOptions::default()).unwrap();
        assert!(c.points.iter().all(|p| p[0] > 0.0));
        assert!(c.points.iter().all(|p| (f.value(*p) - 0.1).abs() < 1e-11 * 1.1));
    }

    #[test]
    fn separatrix_lobes() {
        let f = ScalarField::Dumbbell;
        let cps = find_critical_points(&f, SearchBox::default(), 8).unwrap();
        let saddle = cps.iter().find(|c| c.kind == CriticalKind::Saddle).unwrap();
        for side in [1.0, -1.0] {
            let lobe = trace_separatrix(&f, saddle, side, 1e-4, &TraceOptions::default()).unwrap();
            assert!(lobe.points.iter().all(|p| (f.value(*p) - 0.25).abs() < 1e-9));
            let sign = lobe.points[lobe.len() / 2][0].signum();
            assert!(lobe.points.iter().all(|p| p[0] * sign > -1e-3));
        }
    }
}
