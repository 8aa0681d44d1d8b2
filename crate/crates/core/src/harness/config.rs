//! TOML experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::{GreenKuboSpec, GridSpec};
use crate::error::{Error, Result};
use crate::fastslow::SimConfig;
use crate::graph_process::{GraphDiffusionConfig, PdeGridSpec};
use crate::hamiltonian::{HamiltonianModel, Perturbation, ScalarField, SearchBox, TraceOptions, VectorField};
use crate::reeb::GraphPoint;
use crate::system::{System, DEFAULT_AMPLITUDE};
use crate::torus::{FastProcessSpec, FourierSeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub fast: FastSection,
    pub coefficients: GridSpec,
    pub green_kubo: GreenKuboSpec,
    pub run: RunSection,
    pub graph: GraphDiffusionConfig,
    pub pde: PdeSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

/// `H` and the perturbation basis. Without explicit `terms` the model is
/// `amplitude·(cos y, sin y)` along the coordinate axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// A builtin name or an expression in `x1`, `x2`.
    pub hamiltonian: String,
    pub params: BTreeMap<String, f64>,
    pub h_max: f64,
    pub amplitude: f64,
    pub terms: Vec<TermSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSection {
    /// Components of `e_j(x)` as expressions in `x1`, `x2`.
    pub e: [String; 2],
    /// `"cos"` or `"sin"`.
    pub phi: String,
    #[serde(default = "one")]
    pub harmonic: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastSection {
    pub process: String,
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub eps: Vec<f64>,
    pub sim: SimConfig,
    pub start_edge: usize,
    pub start_h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    pub grid: PdeGridSpec,
    pub t_end: f64,
    /// Initial data as an expression where `x1` is the height and `x2` the edge index.
    pub f0: String,
}

/// Which checks to run and at what sizes. Tolerances are the pinned
/// acceptance values unless overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub experiments: Vec<String>,
    pub graph_paths: usize,
    pub entry_paths: usize,
    pub reference_paths: usize,
    pub convergence_paths: usize,
    pub convergence_eps: Vec<f64>,
    pub exit_probability_paths: usize,
    pub exit_probability_eps: f64,
    pub exit_fractions: Vec<f64>,
    pub exit_time_paths: usize,
    pub exit_time_eps: Vec<f64>,
    pub exit_time_horizon: f64,
    pub excursion_paths: usize,
    pub excursion_eps: Vec<f64>,
    pub determinism_paths: usize,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub corrector_residual: f64,
    pub corrector_exact: f64,
    pub corrector_seconds: f64,
    pub matrix_identity: f64,
    pub flat_identity: f64,
    pub green_kubo_se: f64,
    pub harmonic_q: f64,
    pub area_derivative: f64,
    pub coefficient_identity: f64,
    pub gluing_routes: f64,
    pub flux_balance: f64,
    pub symmetric_weights: f64,
    pub drift_sign: f64,
    pub graph_se: f64,
    pub graph_abs: f64,
    pub ks_max: f64,
    pub exit_probability_band: f64,
    pub slope_band: f64,
    pub auxiliary_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            corrector_residual: 1e-8,
            corrector_exact: 1e-10,
            corrector_seconds: 1.0,
            matrix_identity: 1e-10,
            flat_identity: 1e-8,
            green_kubo_se: 3.0,
            harmonic_q: 1e-6,
            area_derivative: 0.01,
            coefficient_identity: 0.02,
            gluing_routes: 0.01,
            flux_balance: 0.01,
            symmetric_weights: 0.005,
            drift_sign: 1e-8,
            graph_se: 3.0,
            graph_abs: 0.005,
            ks_max: 0.05,
            exit_probability_band: 0.05,
            slope_band: 0.15,
            auxiliary_residual: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub gnuplot: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hamiltonian: "dumbbell".into(),
            params: BTreeMap::new(),
            h_max: 4.0,
            amplitude: DEFAULT_AMPLITUDE,
            terms: Vec::new(),
        }
    }
}

impl Default for FastSection {
    fn default() -> Self {
        let params = BTreeMap::from([("k".to_string(), 1.0), ("sigma".to_string(), std::f64::consts::SQRT_2)]);
        FastSection { process: "von_mises".into(), params }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { eps: vec![0.2, 0.1, 0.05], sim: SimConfig::default(), start_edge: 2, start_h: 0.75 }
    }
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection { grid: PdeGridSpec::default(), t_end: 1.0, f0: "x1".into() }
    }
}

pub const EXPERIMENTS: [&str; 14] = [
    "correctors",
    "matrices",
    "green_kubo",
    "geometry",
    "identity",
    "gluing",
    "drift_sign",
    "graph_mc_pde",
    "convergence",
    "exit_probability",
    "exit_time",
    "excursions",
    "auxiliary",
    "determinism",
];

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            experiments: EXPERIMENTS.iter().map(|s| s.to_string()).collect(),
            graph_paths: 200_000,
            entry_paths: 100_000,
            reference_paths: 40_000,
            convergence_paths: 10_000,
            convergence_eps: vec![0.2, 0.1, 0.05],
            exit_probability_paths: 2_000,
            exit_probability_eps: 0.01,
            exit_fractions: vec![0.25, 0.5, 0.75],
            exit_time_paths: 400,
            exit_time_eps: vec![0.04, 0.02, 0.01, 0.005],
            exit_time_horizon: 200.0,
            excursion_paths: 1_000,
            excursion_eps: vec![0.1, 0.05, 0.025],
            determinism_paths: 64,
            tolerances: Tolerances::default(),
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), gnuplot: true }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelSection::default(),
            fast: FastSection::default(),
            coefficients: GridSpec::default(),
            green_kubo: GreenKuboSpec::default(),
            run: RunSection::default(),
            graph: GraphDiffusionConfig::default(),
            pde: PdeSection::default(),
            verify: VerifySection::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(src)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&src)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the canonical serialization, ignoring where outputs go.
    pub fn hash(&self) -> Result<String> {
        let keyed = ExperimentConfig { output: OutputSection::default(), ..self.clone() };
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(keyed.to_toml()?.as_bytes());
        Ok(hex::encode(h.finalize()))
    }

    /// Physical and structural constraints that can be checked without
    /// building the system.
    pub fn validate(&self) -> Result<()> {
        self.run.sim.validate()?;
        for &eps in self.run.eps.iter().chain(&self.verify.convergence_eps).chain(&self.verify.exit_time_eps) {
            SimConfig { eps, ..self.run.sim.clone() }.validate()?;
        }
        if self.model.h_max <= 0.0 {
            return Err(Error::Config("model.h_max must be positive".into()));
        }
        if let Some(bad) = self.verify.experiments.iter().find(|e| !EXPERIMENTS.contains(&e.as_str())) {
            return Err(Error::Config(format!("unknown experiment `{bad}`; known: {}", EXPERIMENTS.join(", "))));
        }
        if let Some(u) = self.verify.exit_fractions.iter().find(|u| !(**u > 0.0 && **u < 1.0)) {
            return Err(Error::Config(format!("exit fraction {u} must lie in (0, 1)")));
        }
        if !(self.graph.dt > 0.0) || !(self.pde.grid.dx > 0.0 && self.pde.grid.dt > 0.0) {
            return Err(Error::Config("graph and pde steps must be positive".into()));
        }
        self.model()?;
        self.fast()?;
        Ok(())
    }

    pub fn model(&self) -> Result<HamiltonianModel> {
        let m = &self.model;
        let field = match ScalarField::builtin(&m.hamiltonian, &m.params) {
            Ok(f) => f,
            Err(_) if m.params.is_empty() => ScalarField::parse(&m.hamiltonian)?,
            Err(e) => return Err(e),
        };
        let mut model = if m.terms.is_empty() {
            HamiltonianModel::axis_aligned(field, m.amplitude)
        } else {
            let terms = m
                .terms
                .iter()
                .map(|t| {
                    let phi = match t.phi.as_str() {
                        "cos" => FourierSeries::cos_k(t.harmonic, 1.0),
                        "sin" => FourierSeries::sin_k(t.harmonic, 1.0),
                        other => return Err(Error::Config(format!("unknown shape `{other}`, expected cos or sin"))),
                    };
                    Ok(Perturbation { e: VectorField::parse(&t.e[0], &t.e[1])?, phi })
                })
                .collect::<Result<Vec<_>>>()?;
            HamiltonianModel { field, terms, h_max: m.h_max }
        };
        model.h_max = m.h_max;
        Ok(model)
    }

    pub fn fast(&self) -> Result<FastProcessSpec> {
        let spec = FastProcessSpec::from_registry(&self.fast.process, &self.fast.params)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn build_system(&self) -> Result<System> {
        System::build(self.model()?, self.fast()?, SearchBox::default(), &self.coefficients, &TraceOptions::default())
    }

    pub fn start(&self) -> GraphPoint {
        GraphPoint { k: self.run.start_edge, h: self.run.start_h }
    }

    pub fn sim(&self, eps: f64) -> SimConfig {
        SimConfig { eps, ..self.run.sim.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash().unwrap(), back.hash().unwrap());
    }

    #[test]
    fn rejects_bad_alpha_and_unknown_keys() {
        let e = ExperimentConfig::from_toml("[run.sim]\nalpha = 0.6\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
        assert!(ExperimentConfig::from_toml("[run]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[verify]\nexperiments = [\"nope\"]\n").is_err());
    }

    #[test]
    fn explicit_terms() {
        let src = "[model]\nterms = [{ e = [\"1 + 0.3*sin(x1)\", \"0\"], phi = \"cos\" }]\n";
        let m = ExperimentConfig::from_toml(src).unwrap().model().unwrap();
        assert_eq!(m.terms.len(), 1);
        assert!(!m.has_constant_basis());
    }
}
