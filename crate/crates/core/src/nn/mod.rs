//! Minimal differentiable function approximators: a reverse-mode tape,
//! multilayer perceptrons on top of it, Adam, finite-difference checking and
//! binary checkpoints.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod graph;
mod mlp;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use graph::{sigmoid, softmax_in_place, Graph, Mat, Var};
pub use mlp::{grad, Activation, Mlp, MlpVars};
