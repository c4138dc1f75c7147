//! Differentiable building blocks: dense layers, LSTMs, optimizers and checkpoints.
//!
//! Every network keeps its weights in a [`ParameterSet`] and exposes a
//! forward pass that records a trace plus a hand-derived backward pass that
//! accumulates into a [`GradientSet`]. A backward call needs the trace of a
//! forward call, so gradients can only be requested for an evaluated input.

pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod lstm;
pub mod optim;
pub mod params;

pub use dense::{sigmoid, Activation, Dense, Mlp, MlpTrace};
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
pub use lstm::{LstmLayer, LstmStack, LstmStackTrace, LstmTrace};
pub use optim::{Optimizer, UpdateRule, LEARNING_RATE_GRID};
pub use params::{GradientSet, Param, ParamId, ParameterSet};
