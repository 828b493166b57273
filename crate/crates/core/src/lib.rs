//! Object-goal navigation with an agent-centric relation graph: a reverse-mode
//! autodiff engine, a gridworld simulator, the graph representation, an LSTM
//! actor-critic policy, imitation and A3C training, and evaluation.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checks;
pub mod eval;
pub mod policy;
pub mod repr;
pub mod run;
pub mod sim;
pub mod training;
