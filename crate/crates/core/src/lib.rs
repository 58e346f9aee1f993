//! Proper learning of Poisson binomial distributions.
//!
//! The pipeline estimates the mean and variance from samples, builds an
//! empirical DFT sketch, enumerates candidate multiplicity structures, and
//! solves a small constraint system per candidate until one is feasible.

pub mod error;
pub mod fourier;
pub mod io;
pub mod learner;
pub mod model;
pub mod moments;
mod numeric;
pub mod oracle;
pub mod polysys;
pub mod structure;

pub use error::{Error, Result};
pub use model::{canonicalize, pmf_exact, sample, tv_distance, Component, PbdModel, Pmf, SampleSet};
pub use numeric::{round_half_even, unit_root, unit_root_real};
