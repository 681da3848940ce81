//! Few-shot classification by fusing Hebbian learners attached to several
//! layers of a fixed backbone.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense matrices, stable softmax, the cross-entropy gradient,
//!   a Jacobi eigensolver and the symmetric matrix square root;
//! - [`features`]: the on-disk per-layer activation store;
//! - [`episode`]: seeded N-shot K-way episode sampling;
//! - [`hebbian`]: the Hebb rule, per-layer heads and logit fusion;
//! - [`learners`]: k-NN and ridge heads behind a common learner interface;
//! - [`fid`]: Fréchet distance between feature populations;
//! - [`toy`]: a synthetic-data MLP backbone that exports features;
//! - [`eval`]: episode-batch evaluation, ablations and reports.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doc tests of this crate.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod episode;
pub mod error;
pub mod eval;
pub mod features;
pub mod fid;
pub mod hebbian;
pub mod learners;
pub mod linalg;
pub mod rng;
pub mod toy;

pub use error::{Error, ErrorKind, Result};
pub use linalg::Matrix;

// The book's listings run as doc tests; one item per chapter keeps failures
// attributable.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/hebb-rule.md")]
    pub struct HebbRule;
    #[doc = include_str!("../../../book/src/fusion.md")]
    pub struct Fusion;
    #[doc = include_str!("../../../book/src/episodes.md")]
    pub struct Episodes;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub struct Baselines;
    #[doc = include_str!("../../../book/src/frechet.md")]
    pub struct Frechet;
    #[doc = include_str!("../../../book/src/feature-store.md")]
    pub struct FeatureStore;
    #[doc = include_str!("../../../book/src/toy-backbone.md")]
    pub struct ToyBackbone;
}
