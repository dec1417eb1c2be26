//! Gaussian policy and value networks with hand-written gradients, Adam, and
//! a versioned checkpoint format.
//!
//! Forward passes evaluate one input at a time in a fixed order, so a
//! log-density computed during collection is bitwise equal to the same
//! quantity recomputed later for training.

mod adam;
mod checkpoint;
mod mlp;
mod policy;
mod value;

pub use adam::{clip_grad_norm, AdamState};
pub use checkpoint::{Checkpoint, NetKind, Tensor, BINARY_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{MlpCache, MlpLayout};
pub use policy::{gaussian_logpdf, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use value::ValueNet;
