//! Bayesian sparsity selection for precision matrices under the CONCORD
//! generalized likelihood.
//!
//! * [`bssc`]: spike-and-slab entry-wise Gibbs sampler and median-probability selection.
//! * [`bhsc`]: horseshoe-prior variant with credible-interval selection.
//! * [`refit`]: graph-constrained refitting (closed-form mode, Gibbs, PD projection).
//! * [`oracle`]: exact posterior over sparsity patterns for small `p`.
//! * [`simulate`]: synthetic truth, Gaussian data and accuracy metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bhsc;
pub mod bssc;
pub mod dist;
pub mod error;
mod gibbs;
pub mod oracle;
pub mod refit;
pub mod rng;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use types::{num_pairs, pairs, pattern_of, PairIndex, PrecisionState, SampleCovariance, SparsityPattern};
