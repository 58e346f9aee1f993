//! The per-multiset constraint system, its numerical solver and the
//! interval pre-filter applied to the multiset stream.

mod prefilter;
mod solver;
mod system;

pub use prefilter::FourierPrefilter;
pub use solver::{interval_feasible, solve, SolverOptions};
pub use system::{
    build_system, exp_truncated, regime_for, Group, PolySystem, Regime, SystemConstants, SystemResidual, Variable,
    ABS_SLACK, SMALL_REGIME_CONSTANT,
};
