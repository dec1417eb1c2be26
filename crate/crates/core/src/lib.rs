//! PPO and GePPO, a clipped policy optimizer that reuses batches from prior
//! policies, with exact tabular oracles that certify the policy improvement
//! bounds the method rests on.

pub mod approximator;
pub mod buffer;
pub mod config;
pub mod envs;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod lr;
pub mod objective;
pub mod tabular;
pub mod trainer;
pub mod weights;

pub use error::{Error, Result};
