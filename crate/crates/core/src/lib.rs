//! Neural information causality toolkit.
//!
//! Nested random-access-coding protocols over CHSH-type correlation cells,
//! exact and estimated information scores, capacity certificates for
//! bottleneck interfaces, and controlled leakage experiments.

pub mod ablation;
pub mod capacity;
pub mod cells;
pub mod error;
pub mod estimation;
pub mod info;
pub mod protocols;
pub mod rng;
pub mod score;

pub use error::{NicError, Result};
