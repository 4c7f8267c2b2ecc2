//! Minimal neural-network toolkit: reverse-mode autodiff, transformer
//! layers, and the AdamW optimizer.

pub mod adamw;
pub mod graph;
pub mod layers;

pub use adamw::{AdamW, AdamWConfig};
pub use graph::{smooth_l1, Gradients, Graph, ParamId, ParamStore, Tensor, Var};
