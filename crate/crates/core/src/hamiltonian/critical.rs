//! Location and Morse classification of critical points.

use log::warn;
use serde::{Deserialize, Serialize};

use super::field::ScalarField;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Minimum,
    Maximum,
    Saddle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: [f64; 2],
    pub kind: CriticalKind,
    pub value: f64,
    /// Hessian eigenvalues, ascending.
    pub eigenvalues: [f64; 2],
    /// Unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: [[f64; 2]; 2],
}

/// Axis-aligned search rectangle `[x1_lo, x1_hi] × [x2_lo, x2_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox { lo: [-3.0, -3.0], hi: [3.0, 3.0] }
    }
}

/// Eigen-decomposition of a symmetric 2×2 matrix, eigenvalues ascending.
pub fn sym_eigen(h: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (h[0][0], h[0][1], h[1][1]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let l = [mean - rad, mean + rad];
    let vec_for = |lam: f64| {
        // (a − λ) v1 + b v2 = 0, pick the better-conditioned row
        let v = if (a - lam).abs() + b.abs() > (d - lam).abs() + b.abs() {
            [-b, a - lam]
        } else {
            [d - lam, -b]
        };
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [v[0] / n, v[1] / n]
        }
    };
    let v0 = if rad == 0.0 { [1.0, 0.0] } else { vec_for(l[0]) };
    let v1 = [-v0[1], v0[0]];
    (l, [v0, v1])
}

fn classify(field: &ScalarField, x: [f64; 2]) -> Result<CriticalPoint> {
    let j = field.jet(x);
    let hess = j.hessian();
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[0][1];
    let scale = 1.0 + hess[0][0].abs().max(hess[1][1].abs()).max(hess[0][1].abs());
    if det.abs() < 1e-10 * scale * scale {
        return Err(Error::DegenerateCritical { x: x[0], y: x[1], det });
    }
    let (eigenvalues, eigenvectors) = sym_eigen(hess);
    let kind = if det < 0.0 {
        CriticalKind::Saddle
    } else if hess[0][0] > 0.0 {
        CriticalKind::Minimum
    } else {
        CriticalKind::Maximum
    };
    Ok(CriticalPoint { location: x, kind, value: j.v, eigenvalues, eigenvectors })
}

/// Damped Newton iteration on `∇H = 0` from one seed.
fn newton(field: &ScalarField, mut x: [f64; 2]) -> Option<[f64; 2]> {
    for _ in 0..100 {
        let j = field.jet(x);
        let g = j.g;
        let gn = g[0].hypot(g[1]);
        if gn < 1e-13 {
            return Some(x);
        }
        let [h11, h12, h22] = j.h;
        let det = h11 * h22 - h12 * h12;
        if det.abs() < 1e-300 {
            return None;
        }
        let dx = [-(h22 * g[0] - h12 * g[1]) / det, -(-h12 * g[0] + h11 * g[1]) / det];
        let mut t = 1.0;
        loop {
            let xn = [x[0] + t * dx[0], x[1] + t * dx[1]];
            let gnew = field.grad(xn);
            if gnew[0].hypot(gnew[1]) < gn || t < 1e-6 {
                x = xn;
                break;
            }
            t *= 0.5;
        }
        if !(x[0].is_finite() && x[1].is_finite()) || x[0].abs() > 1e6 || x[1].abs() > 1e6 {
            return None;
        }
    }
    let g = field.grad(x);
    (g[0].hypot(g[1]) < 1e-10).then_some(x)
}

/// Newton from a `seeds_per_axis²` grid of seeds, deduplicated and classified.
pub fn find_critical_points(
    field: &ScalarField,
    bbox: SearchBox,
    seeds_per_axis: usize,
) -> Result<Vec<CriticalPoint>> {
    let n = seeds_per_axis.max(2);
    let mut roots: Vec<[f64; 2]> = Vec::new();
    let mut failures = 0usize;
    let inside = |x: [f64; 2]| (0..2).all(|i| x[i] >= bbox.lo[i] - 1e-9 && x[i] <= bbox.hi[i] + 1e-9);
    for i in 0..n {
        for k in 0..n {
            // offset seeds off the symmetry lines so Newton does not start on a ridge
            let s = [
                bbox.lo[0] + (bbox.hi[0] - bbox.lo[0]) * (i as f64 + 0.5) / n as f64 + 1.3e-3,
                bbox.lo[1] + (bbox.hi[1] - bbox.lo[1]) * (k as f64 + 0.5) / n as f64 - 0.7e-3,
            ];
            match newton(field, s) {
                Some(r) if inside(r) => {
                    if !roots.iter().any(|q| (q[0] - r[0]).hypot(q[1] - r[1]) < 1e-6) {
                        roots.push(r);
                    }
                }
                Some(_) => {}
                None => failures += 1,
            }
        }
    }
    if failures > 0 {
        warn!("Newton diverged from {failures} of {} seeds", n * n);
    }
    let mut out = roots.into_iter().map(|r| classify(field, r)).collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.location[0].total_cmp(&b.location[0]))
            .then(a.location[1].total_cmp(&b.location[1]))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dumbbell_has_two_minima_and_a_saddle() {
        let cps = find_critical_points(&ScalarField::Dumbbell, SearchBox::default(), 12).unwrap();
        assert_eq!(cps.len(), 3);
        assert_eq!(cps[0].kind, CriticalKind::Minimum);
        assert!((cps[0].location[0] + 1.0).abs() < 1e-12 && cps[0].value.abs() < 1e-20);
        assert_eq!(cps[1].kind, CriticalKind::Minimum);
        assert!((cps[1].location[0] - 1.0).abs() < 1e-12);
        assert_eq!(cps[2].kind, CriticalKind::Saddle);
        assert!((cps[2].value - 0.25).abs() < 1e-15);
        // unstable direction of the saddle is x1
        assert!(cps[2].eigenvectors[0][0].abs() > 0.999);
    }

    #[test]
    fn harmonic_single_minimum() {
        let cps = find_critical_points(&ScalarField::Harmonic, SearchBox::default(), 6).unwrap();
        assert_eq!(cps.len(), 1);
        assert_eq!(cps[0].kind, CriticalKind::Minimum);
    }

    #[test]
    fn degenerate_point_is_reported() {
        let f = ScalarField::parse("x1^4 + x2^2").unwrap();
        // Newton converges only linearly onto the quartic root; use the classifier directly
        assert!(matches!(classify(&f, [0.0, 0.0]), Err(Error::DegenerateCritical { .. })));
    }

    #[test]
    fn eigen_decomposition() {
        let (l, v) = sym_eigen([[2.0, 1.0], [1.0, 2.0]]);
        assert!((l[0] - 1.0).abs() < 1e-15 && (l[1] - 3.0).abs() < 1e-15);
        assert!((v[0][0] + v[0][1]).abs() < 1e-15);
    }
}
