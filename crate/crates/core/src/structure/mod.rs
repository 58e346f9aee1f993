//! The interval scheme, the multiplicity-multiset enumerator and the
//! constructive sparsifier.

mod multiset;
mod scheme;
mod sparsify;

pub use multiset::{
    check_admissible, classify_model, enumerate_multisets, ones_spiral, ones_window, stream_size, Inadmissible,
    MultiplicityMultiset, MultisetStream, Prefix, Slot, StreamFilter, Triple,
};
pub use scheme::{
    build_scheme, Band, IntervalScheme, Placement, Side, COUNT_CAP_CONSTANT, DISTINCT_CAP_CONSTANT,
    FREE_TRIPLE_CONSTANT, SPARSIFIER_OUTPUT_CONSTANT,
};
pub use sparsify::{sparsify, sparsify_with, Sparsified, SparsifyOptions, SparsifyReport};
