use serde::{Deserialize, Serialize};

use super::field::{perp, ScalarField, VectorField};
use crate::torus::FourierSeries;

/// One separable perturbation term `e(x) φ(y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub e: VectorField,
    /// Raw shape; its `μ`-mean is removed when the cell problems are set up.
    pub phi: FourierSeries,
}

/// Slow drift `b(x, y) = ∇⊥H(x) + Σ_j e_j(x) φ_j(y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel {
    pub field: ScalarField,
    pub terms: Vec<Perturbation>,
    /// Reflecting truncation level for `H`.
    pub h_max: f64,
}

/// Serializable summary used in artifacts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSummary {
    pub hamiltonian: String,
    pub terms: usize,
    pub h_max: f64,
}

impl HamiltonianModel {
    /// `H` with `e_1 = a·(1, 0)`, `e_2 = a·(0, 1)` and `φ = (cos, sin)`.
    pub fn axis_aligned(field: ScalarField, amplitude: f64) -> Self {
        HamiltonianModel {
            field,
            terms: vec![
                Perturbation { e: VectorField::Constant([amplitude, 0.0]), phi: FourierSeries::cos_k(1, 1.0) },
                Perturbation { e: VectorField::Constant([0.0, amplitude]), phi: FourierSeries::sin_k(1, 1.0) },
            ],
            h_max: 4.0,
        }
    }

    pub fn unperturbed(field: ScalarField) -> Self {
        HamiltonianModel { field, terms: vec![], h_max: 4.0 }
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary { hamiltonian: self.field.name(), terms: self.terms.len(), h_max: self.h_max }
    }

    pub fn has_constant_basis(&self) -> bool {
        self.terms.iter().all(|t| t.e.is_constant())
    }

    /// `b(x, y)` given the mean-subtracted shape values `phi[j] = φ_j(y)`.
    #[inline]
    pub fn drift(&self, x: [f64; 2], phi: &[f64]) -> [f64; 2] {
        let mut b = perp(self.field.grad(x));
        for (t, &p) in self.terms.iter().zip(phi) {
            let e = t.e.value(x);
            b[0] += e[0] * p;
            b[1] += e[1] * p;
        }
        b
    }
}
