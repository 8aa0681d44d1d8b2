use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("diffusion is not elliptic: min sigma^2 = {min_sigma2:e} at y = {at:.6}")]
    NonElliptic { min_sigma2: f64, at: f64 },

    #[error("function is not finite on the torus grid at y = {at:.6}")]
    NonFinite { at: f64 },

    #[error("grid size {0} must be a power of two >= 16")]
    BadGrid(usize),

    #[error("right-hand side is not mean-zero under mu (mean = {mean:e})")]
    NotMeanZero { mean: f64 },

    #[error("{what}: residual {residual:e} above tolerance {tol:e}")]
    Residual { what: &'static str, residual: f64, tol: f64 },

    #[error("basis functions are linearly dependent (Gram condition number {cond:e})")]
    DependentBasis { cond: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time step {dt:e} exceeds the stability guard {dt_max:e} for eps = {eps}")]
    StepTooLarge { dt: f64, dt_max: f64, eps: f64 },

    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("degenerate critical point at ({x:.6}, {y:.6}): det Hessian = {det:e}")]
    DegenerateCritical { x: f64, y: f64, det: f64 },

    #[error("level tracing failed at h = {h}: {msg}")]
    Trace { h: f64, msg: String },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("point ({0:.6}, {1:.6}) lies outside every graph region")]
    OutsideGraph(f64, f64),

    #[error("gluing weight routes disagree at vertex {vertex}, edge {edge}: extrapolated {extrapolated}, separatrix {separatrix}")]
    GluingMismatch { vertex: usize, edge: usize, extrapolated: f64, separatrix: f64 },

    #[error("path {path} failed at step {step}: {msg}")]
    PathFailure { path: usize, step: usize, msg: String },

    #[error("{count} paths failed; first: {first}")]
    Ensemble { count: usize, first: Box<Error> },

    #[error("stopping times out of order at t = {t}: {msg}")]
    Alternation { t: f64, msg: String },

    #[error("graph state left the coefficient tables: edge {edge}, h = {h}")]
    OffTable { edge: usize, h: f64 },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error("statistics: {0}")]
    Stats(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
