//! Detection of semantic merge conflicts by generating regression tests that
//! pass on one version of a merge scenario and fail on its counterparts.
//!
//! The pipeline, bottom up:
//!
//! * [`minilang`] parses and executes the small object language versions are
//!   written in, with line tracing and step budgets.
//! * [`diffing`] compares versions at entity and line level and merges texts.
//! * [`depgraph`] and [`uut_select`] pick the units under test impacted by
//!   every branch's changes.
//! * [`oracle`] holds the conflict predicates and test verdicts.
//! * [`testgen`] searches for conflict-revealing tests.
//! * [`scenario`] loads merge scenarios and builds conflict benchmarks by
//!   mutation.

pub mod depgraph;
pub mod diffing;
pub mod minilang;
pub mod oracle;
pub mod scenario;
pub mod testgen;
pub mod uut_select;
