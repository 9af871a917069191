//! Model-agnostic probabilistic causal explanations for tabular classifiers.
//!
//! An explanation of one prediction is the Markov blanket of the predicted
//! class inside a labeled perturbation neighborhood, a Bayesian network
//! learned over that blanket, and the network's posterior over the classes.
//!
//! The pipeline lives in [`explain`]; the pieces it composes are
//! [`dataset`], [`stats`], [`mb`], [`bn`], [`perturb`] and [`models`].
//! [`eval`] holds the local-accuracy and consistency harnesses.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bn;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod mb;
pub mod models;
pub mod perturb;
pub mod seed;
pub mod stats;

pub use bn::BayesianNetwork;
pub use dataset::{Dataset, State, VarId, Variable};
pub use error::{Error, Result};
pub use explain::{explain, ExplainConfig, Explanation};
pub use mb::{ipc_mb, MarkovBlanket};
pub use models::ModelAdapter;
