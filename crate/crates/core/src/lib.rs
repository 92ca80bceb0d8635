//! Decision-tree induction with loss correction under label noise.
//!
//! The crate fits CART-style binary trees (plus random-forest and
//! extra-trees ensembles) under three criteria: Gini/MSE, entropy/CE, and a
//! symmetric mean-absolute-error loss. Labels corrupted by a known
//! row-stochastic transition matrix can be handled two ways: forward
//! correction rewrites fitted leaf values through the inverse matrix, and
//! backward correction rewrites the training labels themselves. The
//! [`evaluation`] module runs stratified cross-validation over noise grids,
//! and [`verification`] packages the structural and numerical invariants
//! these corrections are supposed to satisfy into runnable suites.
//!
//! Everything randomized draws from seeds derived in [`seeding`], so results
//! never depend on thread count or scheduling order.

pub mod correction;
pub mod criteria;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod label_algebra;
pub mod noise;
pub mod seeding;
pub mod tree;
pub mod verification;

pub use error::CoreError;
