//! Continual learning engine: dual-memory experience replay with an EMA
//! semantic memory, stochastic Fisher-based synaptic consolidation, the
//! baselines it is compared against, stream scenarios and evaluation metrics.

pub mod consolidation;
pub mod data;
pub mod error;
pub mod learner;
pub mod memory;
pub mod metrics;
pub mod models;
pub mod ops;
pub mod optim;
pub mod par;
pub mod real;
pub mod rng;
pub mod streams;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use real::{Precision, Real};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
