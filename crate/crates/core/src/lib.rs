//! Transfer learning for state-based potential games.
//!
//! Actuators of a production line act as players that learn best responses
//! over discretized performance maps. Similar players are pulled towards each
//! other's behaviour through sliding-window, momentum or latent-similarity
//! losses, weighted by how alike their visited states are and gated on their
//! exploration rate.

pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod rbf;
pub mod sbpg;
pub mod transfer;

pub use error::{Error, Result};
