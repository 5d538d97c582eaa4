//! Empirical Bayes ranking and selection under capacity and false discovery
//! rate constraints.
//!
//! The pipeline: fit a nonparametric mixing distribution for latent unit
//! qualities ([`npmle`]), turn observations into posterior selection
//! statistics ([`posterior`]), and threshold them so that at most a
//! proportion `alpha` of units is selected while the marginal FDR of the
//! selected set stays below `gamma` ([`selection`]). A Monte Carlo harness
//! ([`simlab`]) benchmarks the rule against classical competitors.

// Negated float comparisons like `!(x > 0.0)` are deliberate: they also
// reject NaN in validation guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod mixture;
pub mod npmle;
pub mod posterior;
pub mod selection;
pub mod simlab;

pub use error::{RankselError, Result};
