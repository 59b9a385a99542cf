//! Linear policy evaluation with the TD family of algorithms.
//!
//! Every algorithm here shares one incremental engine ([`gradient`]) that
//! accumulates the gradient `μ = b − Aω` from sampled transitions. What
//! distinguishes TD(λ), residual-gradient TD, LSTD(λ), LSPE(λ), full-gradient
//! TD, iLSTD and equi-gradient-descent TD is only how each one turns `μ` into
//! a weight update ([`algorithms`]).
//!
//! [`mdp`] provides the Boyan chain and its exact values, and [`bench`] the
//! experiment harness, the dense batch oracle and the CLI plumbing.

pub mod algorithms;
pub mod bench;
pub mod cli;
pub mod error;
pub mod gradient;
pub mod linalg;
pub mod mdp;

pub use algorithms::{Algorithm, Evaluator, EvaluatorConfig, ReducerKind, Schedule, StepSize};
pub use error::{Error, Result};
pub use gradient::{EngineOptions, GradientState, TraceMode};
pub use mdp::{BoyanChain, FeatureMap, Trajectory, Transition};
