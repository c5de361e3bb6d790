//! Multi-view perceptron.
//!
//! A feed-forward network whose hidden layers mix deterministic units with
//! uniformly sampled "view" units. Deterministic layers below the first random
//! code carry identity; codes drawn per forward pass select the output view.
//! Training uses importance-sampled Monte-Carlo EM, realized as ordinary
//! backpropagation through the best (or weight-averaged) sample.

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod synthdata;
pub mod training;

pub use error::{MvpError, Result};
