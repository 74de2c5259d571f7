//! A laboratory for convex vector-valued linear prediction.
//!
//! A vector-valued predictor maps an input `x ∈ R^m` to `ℓ(Wx)` where
//! `W ∈ R^{k×m}` ranges over a unit Frobenius ball centered at a reference
//! matrix `W0` and `ℓ : R^k → R` is convex and Lipschitz. This crate builds
//! the finite hard instances on which empirical risk minimization can fail
//! while projected subgradient descent succeeds, together with the machinery
//! needed to verify every claimed identity by brute force at desk scale:
//!
//! - [`matrix`]: column-sparse matrices, Frobenius geometry, projections.
//! - [`instance`]: prediction/optimization problem abstractions and learner
//!   contracts.
//! - [`signsets`]: near-orthogonal sign-vector families and the
//!   quarter-circle embedding.
//! - [`shatter`]: the shattering instance with its clamped-max loss and exact
//!   `±ε` margins.
//! - [`adversary`]: the bad-ERM labeling and population-gap experiments.
//! - [`learners`]: projected subgradient SGD and a brute-force family ERM.
//! - [`reduction`]: the black-box conversion from stochastic convex
//!   optimization to vector-valued prediction.
//! - [`bounds`]: Monte Carlo Rademacher estimates and sup generalization-gap
//!   checks against the closed-form upper bound.
//!
//! All randomness flows through explicit `u64` seeds; identical seeds and
//! parameters reproduce identical results.

pub mod adversary;
pub mod bounds;
pub mod error;
pub mod instance;
pub mod learners;
pub mod matrix;
pub mod reduction;
pub mod seed;
pub mod shatter;
pub mod signsets;

pub use error::{Result, VvpError};
pub use instance::{LearnerContract, ScoInstance, ScoLoss, VectorLoss, VvpInstance};
pub use matrix::{SparseVector, StructuredMatrix};
pub use shatter::{ShatterInstance, ShatterParams};
pub use signsets::{CircleEmbedding, SignVectorSet};
