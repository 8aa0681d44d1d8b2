//! Hamiltonians, their critical points and level sets.

pub mod autodiff;
pub mod critical;
pub mod expr;
pub mod field;
pub mod level;
pub mod model;

pub use critical::{find_critical_points, CriticalKind, CriticalPoint, SearchBox};
pub use field::{perp, ScalarField, VectorField};
pub use level::{line_integral, project_to_level, trace_level, trace_separatrix, LevelCurve, TraceOptions};
pub use model::{HamiltonianModel, Perturbation};
