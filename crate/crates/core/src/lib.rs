//! High-order Markov prediction of primary-user channel occupancy.
//!
//! The crate covers the whole pipeline: binary traffic traces
//! ([`traffic`]), composite-state spaces ([`statespace`]), empirical
//! transition estimation and multi-step inference ([`markov`]), gradient
//! fine-tuning of the transition matrix ([`finetune`]), a feed-forward
//! network baseline ([`mlp`]) and the evaluation harness ([`eval`]).

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod finetune;
pub mod markov;
pub mod mlp;
pub mod optim;
pub mod statespace;
pub mod traffic;

pub use error::{Error, Result};
pub use markov::{MarkovModel, Prediction, TransitionMatrix};
pub use statespace::{Belief, StateSpace, Variant};
pub use traffic::Trace;
