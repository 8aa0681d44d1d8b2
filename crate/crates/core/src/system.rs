//! Everything derived from a model and a fast process, built in order.

use crate::coefficients::{all_gluing_weights, edge_tables, EdgeTables, GluingWeights, GridSpec, PointwiseAB};
use crate::corrector::{auxiliary_drift, effective_matrices, AuxiliaryDrift, CellProblemBasis, CorrectorSet, EffectiveMatrices};
use crate::error::{Error, Result};
use crate::graph_process::GraphDynamics;
use crate::hamiltonian::{find_critical_points, CriticalPoint, HamiltonianModel, SearchBox, TraceOptions};
use crate::reeb::{build_reeb, ReebGraph};
use crate::torus::{stationary_density, FastProcessSpec, InvariantMeasure};

#[derive(Clone, Debug)]
pub struct System {
    pub model: HamiltonianModel,
    pub fast: FastProcessSpec,
    pub mu: InvariantMeasure,
    pub basis: CellProblemBasis,
    pub correctors: CorrectorSet,
    pub matrices: EffectiveMatrices,
    pub aux: AuxiliaryDrift,
    pub ab: PointwiseAB,
    pub criticals: Vec<CriticalPoint>,
    pub graph: ReebGraph,
    pub tables: EdgeTables,
    pub weights: Vec<GluingWeights>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
}

impl System {
    pub fn build(
        model: HamiltonianModel,
        fast: FastProcessSpec,
        bbox: SearchBox,
        grid: &GridSpec,
        opts: &TraceOptions,
    ) -> Result<Self> {
        let criticals = stage("graph", find_critical_points(&model.field, bbox, 8))?;
        let graph = stage("graph", build_reeb(&criticals, &model.field, model.h_max, bbox))?;
        let mu = stage("correctors", stationary_density(&fast))?;
        let basis = stage("correctors", CellProblemBasis::from_model(&model, &mu))?;
        let correctors = stage("correctors", CorrectorSet::solve(&basis, &mu))?;
        let matrices = stage("correctors", effective_matrices(&correctors, &basis, &mu))?;
        let aux = stage("correctors", auxiliary_drift(&model, &basis, &mu))?;
        let ab = stage("coefficients", PointwiseAB::new(&model, &matrices))?;
        let tables = stage("coefficients", edge_tables(&graph, &ab, grid, opts))?;
        let weights = stage("coefficients", all_gluing_weights(&graph, &ab, &tables, opts))?;
        Ok(System { model, fast, mu, basis, correctors, matrices, aux, ab, criticals, graph, tables, weights })
    }

    /// Default grid, tracing options and search box.
    pub fn with_defaults(model: HamiltonianModel, fast: FastProcessSpec) -> Result<Self> {
        Self::build(model, fast, SearchBox::default(), &GridSpec::default(), &TraceOptions::default())
    }

    pub fn dynamics(&self) -> GraphDynamics<'_> {
        GraphDynamics { graph: &self.graph, tables: &self.tables, weights: &self.weights }
    }
}

/// Perturbation amplitude of the default model.
pub const DEFAULT_AMPLITUDE: f64 = 0.3;

/// The dumbbell with axis-aligned perturbations `a·(cos y, sin y)` driven by
/// the von Mises fast process `dξ = −sin ξ dt + √2 dW`.
pub fn default_model(amplitude: f64) -> (HamiltonianModel, FastProcessSpec) {
    (
        HamiltonianModel::axis_aligned(crate::hamiltonian::ScalarField::Dumbbell, amplitude),
        FastProcessSpec::von_mises(1.0, std::f64::consts::SQRT_2),
    )
}
