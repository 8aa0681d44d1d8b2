// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod corrector;
pub mod error;
pub mod fastslow;
pub mod graph_process;
pub mod hamiltonian;
pub mod harness;
pub mod interp;
pub mod reeb;
pub mod rng;
pub mod stats;
pub mod system;
pub mod torus;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/coefficients.md")]
    mod coefficients {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
