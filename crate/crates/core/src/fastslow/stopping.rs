//! Separatrix hits and band exits read off a dense `H` record.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Alternating stopping times `σ₀ ≤ τ₁ ≤ σ₁ ≤ τ₂ ≤ …` of one path:
/// `σ` are separatrix hits, `τ` are hits of `|H − H(O)| = ε^α`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExcursionLog {
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ExcursionLog {
    /// Completed excursions, one per recorded `τ`.
    pub fn excursions(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty() && self.tau.is_empty()
    }

    /// Excursions completed per unit time over `[0, t]`.
    pub fn rate(&self, t: f64) -> f64 {
        self.excursions() as f64 / t
    }

    /// All events in time order: `σ₀, τ₁, σ₁, …`.
    pub fn merged(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.sigma.len() + self.tau.len());
        for (i, s) in self.sigma.iter().enumerate() {
            out.push(*s);
            if let Some(t) = self.tau.get(i) {
                out.push(*t);
            }
        }
        out
    }

    /// Strict alternation with non-decreasing times.
    pub fn is_alternating(&self) -> bool {
        let n = self.sigma.len();
        (self.tau.len() == n || self.tau.len() + 1 == n) && self.merged().windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Seek {
    Sigma,
    Tau,
}

/// Streaming crossing detector fed with `(t, H)` samples.
#[derive(Clone, Debug)]
pub struct StoppingDetector {
    h_o: f64,
    band: f64,
    guard: f64,
    seek: Seek,
    last: Option<(f64, f64)>,
    pub log: ExcursionLog,
}

impl StoppingDetector {
    /// Detector for the separatrix at level `h_o` and the band `|H − h_o| = ε^α`.
    pub fn new(h_o: f64, alpha: f64, eps: f64) -> Self {
        let band = eps.powf(alpha);
        StoppingDetector { h_o, band, guard: band / 10.0, seek: Seek::Sigma, last: None, log: ExcursionLog::default() }
    }

    pub fn band(&self) -> f64 {
        self.band
    }

    pub fn push(&mut self, t: f64, h: f64) -> Result<()> {
        let d = h - self.h_o;
        let Some((t0, d0)) = self.last else {
            if d.abs() <= 1e-12 * self.h_o.abs().max(1.0) {
                self.log.sigma.push(t);
                self.seek = Seek::Tau;
            }
            self.last = Some((t, d));
            return Ok(());
        };
        if t < t0 {
            return Err(Error::Alternation { t, msg: format!("sample time went back from {t0}") });
        }
        // resolution only matters where a crossing can be missed
        if (d - d0).abs() >= self.guard && d.abs().min(d0.abs()) < 2.0 * self.band {
            return Err(Error::Alternation {
                t,
                msg: format!("dense output too coarse: |dH| = {:.3e} >= eps^alpha/10 = {:.3e}", (d - d0).abs(), self.guard),
            });
        }
        match self.seek {
            Seek::Sigma if d == 0.0 || d0 * d < 0.0 => {
                let at = if d == 0.0 { t } else { t0 + (t - t0) * d0 / (d0 - d) };
                self.record(at, Seek::Tau)?;
            }
            Seek::Tau if d0.abs() < self.band && d.abs() >= self.band => {
                let at = t0 + (t - t0) * (self.band - d0.abs()) / (d.abs() - d0.abs());
                self.record(at, Seek::Sigma)?;
            }
            _ => {}
        }
        self.last = Some((t, d));
        Ok(())
    }

    fn record(&mut self, at: f64, next: Seek) -> Result<()> {
        let prev = self.log.merged().last().copied().unwrap_or(f64::NEG_INFINITY);
        if at < prev {
            return Err(Error::Alternation { t: at, msg: format!("event before the previous one at {prev}") });
        }
        match self.seek {
            Seek::Sigma => self.log.sigma.push(at),
            Seek::Tau => self.log.tau.push(at),
        }
        self.seek = next;
        Ok(())
    }

    pub fn finish(self) -> ExcursionLog {
        self.log
    }
}

/// Runs the detector over a whole dense record.
pub fn detect_stopping(dense: &[(f64, f64)], h_o: f64, alpha: f64, eps: f64) -> Result<ExcursionLog> {
    let mut det = StoppingDetector::new(h_o, alpha, eps);
    for &(t, h) in dense {
        det.push(t, h)?;
    }
    Ok(det.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_path_has_empty_log() {
        let dense: Vec<(f64, f64)> = (0..100).map(|i| (i as f64 * 0.01, 2.0 + 0.1 * (i as f64).sin())).collect();
        assert!(detect_stopping(&dense, 0.25, 0.4, 0.01).unwrap().is_empty());
    }

    #[test]
    fn recovers_triangle_wave_crossings() {
        // H − h_O = 0.3·tri(t): zeros at t = 0, 2, 4, 6 and |H − h_O| = 0.15 at t = 0.5, 2.5, 4.5
        let band: f64 = 0.15;
        let eps = band.powf(1.0 / 0.4);
        let tri = |t: f64| {
            let u = (t + 1.0).rem_euclid(4.0);
            if u < 2.0 { 0.3 * (u - 1.0) } else { 0.3 * (3.0 - u) }
        };
        let dense: Vec<(f64, f64)> = (0..=6000).map(|i| (i as f64 * 1e-3, 0.25 + tri(i as f64 * 1e-3))).collect();
        let log = detect_stopping(&dense, 0.25, 0.4, eps).unwrap();
        assert_eq!(log.sigma.len(), 4);
        assert_eq!(log.tau.len(), 3);
        let want = [0.0, 0.5, 2.0, 2.5, 4.0, 4.5, 6.0];
        for (a, b) in log.merged().iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(log.is_alternating());
    }

    #[test]
    fn coarse_record_is_rejected() {
        let dense = [(0.0, 0.2), (0.1, 0.3)];
        assert!(matches!(detect_stopping(&dense, 0.25, 0.4, 0.01), Err(Error::Alternation { .. })));
    }
}
