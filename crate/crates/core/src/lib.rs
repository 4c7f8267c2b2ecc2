//! Text-driven temporal action composition for skeletal human motion.
//!
//! Each action of a prompt list is generated in one shot by a transformer
//! VAE, conditioned on the last few generated frames of the previous action,
//! and consecutive actions are stitched with rigid alignment and slerp.

pub mod compose;
pub mod dataset;
pub mod features;
pub mod io;
pub mod metrics;
pub mod model;
pub mod motion;
pub mod nn;
pub mod rng;
pub mod rotation;
pub mod runner;
pub mod session;
pub mod skeleton;
pub mod text;
