//! Cell problems `L u = −g` on the circle, the effective matrices they feed,
//! and the auxiliary drift that makes area × `μ` invariant.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::model::HamiltonianModel;
use crate::hamiltonian::VectorField;
use crate::torus::{FourierSeries, InvariantMeasure, Spectral, TorusDrift, TorusTable};

pub const TOL_CORRECTOR: f64 = 1e-8;
const KAPPA_ZERO: f64 = 1e-12;

/// Mean-subtracted perturbation shapes `φ_j` sampled on the torus grid.
#[derive(Clone, Debug)]
pub struct CellProblemBasis {
    pub phi: Vec<Vec<f64>>,
    /// The `μ`-means that were subtracted from the raw shapes.
    pub removed_means: Vec<f64>,
    pub gram_condition: f64,
}

impl CellProblemBasis {
    pub fn new(shapes: &[FourierSeries], mu: &InvariantMeasure) -> Result<Self> {
        let mut phi = Vec::with_capacity(shapes.len());
        let mut removed_means = Vec::with_capacity(shapes.len());
        for s in shapes {
            let raw = s.sample(&mu.nodes);
            if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { at: mu.nodes[i] });
            }
            let m = mu.mean_of(&raw);
            phi.push(raw.iter().map(|v| v - m).collect::<Vec<f64>>());
            removed_means.push(m);
        }
        let j = phi.len();
        let gram = DMatrix::from_fn(j, j, |a, b| {
            let prod: Vec<f64> = phi[a].iter().zip(&phi[b]).map(|(x, y)| x * y).collect();
            mu.mean_of(&prod)
        });
        let gram_condition = if j == 0 {
            1.0
        } else {
            let ev = gram.symmetric_eigenvalues();
            let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
            if lo <= hi * 1e-12 {
                f64::INFINITY
            } else {
                hi / lo
            }
        };
        if !gram_condition.is_finite() {
            return Err(Error::DependentBasis { cond: gram_condition });
        }
        Ok(CellProblemBasis { phi, removed_means, gram_condition })
    }

    pub fn from_model(model: &HamiltonianModel, mu: &InvariantMeasure) -> Result<Self> {
        let shapes: Vec<FourierSeries> = model.terms.iter().map(|t| t.phi.clone()).collect();
        Self::new(&shapes, mu)
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// Solution of one cell problem.
#[derive(Clone, Debug)]
pub struct Corrector {
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    /// `‖L u + g‖∞` on the grid.
    pub residual: f64,
}

/// Solves `v u′ + (σ²/2) u″ = −g` with `∫ u dμ = 0`.
///
/// The first-order equation for `w = u′` is integrated in closed form with an
/// integrating factor; periodicity fixes the remaining constant.
pub fn solve_poisson(mu: &InvariantMeasure, g: &[f64]) -> Result<Corrector> {
    let n = mu.grid_n();
    if g.len() != n {
        return Err(Error::Dimension(format!("rhs has {} samples, grid has {n}", g.len())));
    }
    let mean = mu.mean_of(g);
    if mean.abs() >= 1e-10 {
        return Err(Error::NotMeanZero { mean });
    }
    let sp: &Spectral = &mu.spectral;
    let (v, d) = (&mu.drift, &mu.diff);
    let rho: Vec<f64> = v.iter().zip(d).map(|(v, d)| v / d).collect();
    let kappa = Spectral::mean(&rho);
    let centered: Vec<f64> = rho.iter().map(|r| r - kappa).collect();
    let r = sp.resolvent(&centered, 0.0);
    let p: Vec<f64> = (0..n).map(|i| r[i].exp() * g[i] / d[i]).collect();
    let w: Vec<f64> = if kappa.abs() < KAPPA_ZERO {
        let s = sp.resolvent(&p, 0.0);
        let em: Vec<f64> = r.iter().map(|r| (-r).exp()).collect();
        let a = Spectral::mean(&em.iter().zip(&s).map(|(e, s)| e * s).collect::<Vec<_>>()) / Spectral::mean(&em);
        (0..n).map(|i| em[i] * (a - s[i])).collect()
    } else {
        let s = sp.resolvent(&p, kappa);
        (0..n).map(|i| -(-r[i]).exp() * s[i]).collect()
    };
    let mut u = sp.resolvent(&w, 0.0);
    let um = mu.mean_of(&u);
    u.iter_mut().for_each(|x| *x -= um);
    let du = sp.derivative(&u);
    let d2u = sp.second_derivative(&u);
    let residual = (0..n).map(|i| (v[i] * du[i] + d[i] * d2u[i] + g[i]).abs()).fold(0.0, f64::max);
    if !(residual < TOL_CORRECTOR) {
        return Err(Error::Residual { what: "cell problem", residual, tol: TOL_CORRECTOR });
    }
    Ok(Corrector { u, du, residual })
}

#[derive(Clone, Debug)]
pub struct CorrectorSet {
    pub correctors: Vec<Corrector>,
}

impl CorrectorSet {
    pub fn solve(basis: &CellProblemBasis, mu: &InvariantMeasure) -> Result<Self> {
        let correctors = basis.phi.par_iter().map(|g| solve_poisson(mu, g)).collect::<Result<Vec<_>>>()?;
        Ok(CorrectorSet { correctors })
    }

    pub fn max_residual(&self) -> f64 {
        self.correctors.iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

/// `𝔄_jl = ∫ σ² u_j′ u_l′ dμ` and `C_jl = ∫ u_j φ_l dμ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveMatrices {
    pub a_mat: Vec<Vec<f64>>,
    pub c_mat: Vec<Vec<f64>>,
}

impl EffectiveMatrices {
    pub fn dim(&self) -> usize {
        self.a_mat.len()
    }

    /// `max |𝔄 − (C + Cᵀ)|`.
    pub fn symmetry_defect(&self) -> f64 {
        let j = self.dim();
        let mut worst: f64 = 0.0;
        for a in 0..j {
            for b in 0..j {
                worst = worst.max((self.a_mat[a][b] - self.c_mat[a][b] - self.c_mat[b][a]).abs());
            }
        }
        worst
    }

    /// Scales both matrices by `c²`, the effect of multiplying every `e_j` by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = |m: &Vec<Vec<f64>>| m.iter().map(|r| r.iter().map(|x| x * c * c).collect()).collect();
        EffectiveMatrices { a_mat: f(&self.a_mat), c_mat: f(&self.c_mat) }
    }
}

pub fn effective_matrices(
    correctors: &CorrectorSet,
    basis: &CellProblemBasis,
    mu: &InvariantMeasure,
) -> Result<EffectiveMatrices> {
    let j = basis.len();
    if correctors.correctors.len() != j {
        return Err(Error::Dimension(format!("{} correctors for {j} basis functions", correctors.correctors.len())));
    }
    let sigma2: Vec<f64> = mu.diff.iter().map(|d| 2.0 * d).collect();
    let cs = &correctors.correctors;
    let mut a_mat = vec![vec![0.0; j]; j];
    let mut c_mat = vec![vec![0.0; j]; j];
    for a in 0..j {
        for b in 0..j {
            let ga: Vec<f64> = (0..mu.grid_n()).map(|i| sigma2[i] * cs[a].du[i] * cs[b].du[i]).collect();
            a_mat[a][b] = mu.mean_of(&ga);
            let gc: Vec<f64> = cs[a].u.iter().zip(&basis.phi[b]).map(|(u, p)| u * p).collect();
            c_mat[a][b] = mu.mean_of(&gc);
        }
    }
    // exact symmetry of the quadratic form
    for a in 0..j {
        for b in 0..a {
            let m = 0.5 * (a_mat[a][b] + a_mat[b][a]);
            a_mat[a][b] = m;
            a_mat[b][a] = m;
        }
    }
    Ok(EffectiveMatrices { a_mat, c_mat })
}

/// `c̃(x, y) = −Σ_j div e_j(x) Ψ_j(y) / p(y)` with `Ψ_j′ = φ_j p` periodic.
#[derive(Clone, Debug)]
pub struct AuxiliaryDrift {
    e: Vec<VectorField>,
    /// `χ_j = Ψ_j / p` as trigonometric series for off-grid evaluation.
    pub chi: Vec<FourierSeries>,
    table: Option<TorusTable>,
    zero: bool,
}

pub fn auxiliary_drift(model: &HamiltonianModel, basis: &CellProblemBasis, mu: &InvariantMeasure) -> Result<AuxiliaryDrift> {
    if basis.len() != model.terms.len() {
        return Err(Error::Dimension("basis and model disagree on the number of terms".into()));
    }
    let sp = &mu.spectral;
    let mut chi = Vec::new();
    let mut grids = Vec::new();
    for phi in &basis.phi {
        let f: Vec<f64> = phi.iter().zip(&mu.density).map(|(a, p)| a * p).collect();
        // solvability: ∫ φ_j p dy = 0
        let total = Spectral::mean(&f) * std::f64::consts::TAU;
        if total.abs() > 1e-10 {
            return Err(Error::NotMeanZero { mean: total });
        }
        let psi = sp.resolvent(&f, 0.0);
        let c: Vec<f64> = psi.iter().zip(&mu.density).map(|(s, p)| s / p).collect();
        chi.push(FourierSeries::from_samples(sp, &c, 1e-15));
        grids.push(c);
    }
    let zero = model.has_constant_basis();
    let table = (!zero && !grids.is_empty()).then(|| TorusTable::new(sp, &grids));
    Ok(AuxiliaryDrift { e: model.terms.iter().map(|t| t.e.clone()).collect(), chi, table, zero })
}

impl AuxiliaryDrift {
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Largest residual of `div_x(b p) + ∂_y(c̃ p) = 0` over the grid nodes
    /// and the given plane points, with `∂_y` taken spectrally.
    pub fn residual(&self, basis: &CellProblemBasis, mu: &InvariantMeasure, xs: &[[f64; 2]]) -> f64 {
        let sp = &mu.spectral;
        let mut worst: f64 = 0.0;
        for &x in xs {
            let div: Vec<f64> = self.e.iter().map(|e| e.divergence(x)).collect();
            let flux: Vec<f64> = mu.nodes.iter().zip(&mu.density).map(|(&y, p)| self.eval(x, y) * p).collect();
            let dflux = sp.derivative(&flux);
            for i in 0..mu.grid_n() {
                let source: f64 = div.iter().zip(&basis.phi).map(|(d, phi)| d * phi[i]).sum::<f64>() * mu.density[i];
                worst = worst.max((source + dflux[i]).abs());
            }
        }
        worst
    }

    /// Accurate evaluation through the trigonometric series.
    pub fn eval(&self, x: [f64; 2], y: f64) -> f64 {
        if self.zero {
            return 0.0;
        }
        -self.e.iter().zip(&self.chi).map(|(e, c)| e.divergence(x) * c.eval(y)).sum::<f64>()
    }
}

impl TorusDrift for AuxiliaryDrift {
    #[inline]
    fn drift(&self, x: [f64; 2], y: f64) -> f64 {
        let Some(table) = &self.table else { return 0.0 };
        let mut buf = [0.0; 8];
        let out = &mut buf[..table.channels()];
        table.eval_into(y, out);
        -self.e.iter().zip(out.iter()).map(|(e, c)| e.divergence(x) * c).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{stationary_density, FastProcessSpec};
    use std::f64::consts::SQRT_2;

    fn flat() -> InvariantMeasure {
        stationary_density(&FastProcessSpec::constant_drift(0.0, SQRT_2)).unwrap()
    }

    #[test]
    fn eigenfunctions_of_the_flat_circle() {
        let mu = flat();
        let cos: Vec<f64> = mu.nodes.iter().map(|y| y.cos()).collect();
        let c = solve_poisson(&mu, &cos).unwrap();
        for i in 0..mu.grid_n() {
            assert!((c.u[i] - cos[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_mean_zero_rhs_rejected() {
        let mu = flat();
        let g = vec![1.0; mu.grid_n()];
        assert!(matches!(solve_poisson(&mu, &g), Err(Error::NotMeanZero { .. })));
    }

    #[test]
    fn drifting_circle_has_asymmetric_c() {
        let mu = stationary_density(&FastProcessSpec::constant_drift(1.0, SQRT_2)).unwrap();
        let basis = CellProblemBasis::new(&[FourierSeries::cos_k(1, 1.0), FourierSeries::sin_k(1, 1.0)], &mu).unwrap();
        let set = CorrectorSet::solve(&basis, &mu).unwrap();
        let m = effective_matrices(&set, &basis, &mu).unwrap();
        assert!(m.symmetry_defect() < 1e-12);
        assert!((m.c_mat[0][1] + m.c_mat[1][0]).abs() < 1e-12);
        assert!(m.c_mat[0][1].abs() > 0.1);
    }

    #[test]
    fn auxiliary_drift_solves_the_invariance_equation() {
        use crate::hamiltonian::{HamiltonianModel, Perturbation, ScalarField, VectorField};
        let mu = flat();
        let mut model = HamiltonianModel::axis_aligned(ScalarField::Dumbbell, 0.3);
        model.terms[0] = Perturbation { e: VectorField::parse("1 + 0.3*sin(x1)", "0").unwrap(), phi: FourierSeries::cos_k(1, 1.0) };
        let basis = CellProblemBasis::from_model(&model, &mu).unwrap();
        let aux = auxiliary_drift(&model, &basis, &mu).unwrap();
        assert!(!aux.is_zero());
        let xs = [[0.3, -0.2], [1.1, 0.5], [-0.7, 1.4]];
        assert!(aux.residual(&basis, &mu, &xs) < 1e-8);
        assert!(aux.eval([0.0, 0.0], 1.0).abs() > 0.1);

        let plain = HamiltonianModel::axis_aligned(ScalarField::Dumbbell, 0.3);
        let basis = CellProblemBasis::from_model(&plain, &mu).unwrap();
        let zero = auxiliary_drift(&plain, &basis, &mu).unwrap();
        assert!(zero.is_zero() && zero.eval([0.4, 0.1], 2.0) == 0.0);
    }

    #[test]
    fn dependent_basis_rejected() {
        let mu = flat();
        let r = CellProblemBasis::new(&[FourierSeries::cos_k(1, 1.0), FourierSeries::cos_k(1, 2.0)], &mu);
        assert!(matches!(r, Err(Error::DependentBasis { .. })));
    }
}
