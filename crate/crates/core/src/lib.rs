//! Multistage darknet traffic classification toolkit.
//!
//! Flow-feature tables are cleaned and scaled ([`data`]), features are scored
//! and filtered ([`features`]), one of six classical learners is trained per
//! stage ([`learners`]), and the three stages (benign/malicious, anonymity
//! network, application) are chained by [`pipeline`]. [`eval`] computes the
//! confusion-matrix metrics and the stage-wise comparison tables.

pub mod data;
pub mod eval;
pub mod features;
pub mod learners;
pub mod matrix;
pub mod persist;
pub mod pipeline;
pub mod synth;

pub use data::{ClassTaxonomy, Dataset, Stage};
pub use matrix::Matrix;
