//! Large-margin structured learning from partially annotated outputs.
//!
//! A problem supplies linear scores and a loss-augmented argmax over three
//! output spaces (everything, outputs agreeing with the annotation, outputs
//! violating it). The [`loss`] module builds the hinge, ramp, max and bridge
//! losses from those maximizers, and [`solver`] minimizes the regularized
//! objective with CCCP over a recycled cutting-plane bundle.
//!
//! Two problems are included: chain sequence labeling ([`chain`]) and
//! two-frame tracking by assignment ([`tracking`]).

pub mod chain;
pub mod error;
pub mod loss;
pub mod problem;
pub mod qp;
pub mod solver;
pub mod tracking;
pub mod vector;

pub use error::{Error, Result};
pub use loss::{LossKind, LossSpec};
pub use problem::{Dataset, DeltaSign, InferenceProblem, Scored, Space};
pub use vector::{FeatureVector, Weights};
