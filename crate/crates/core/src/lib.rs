//! Multi-task diffusion LMS with adaptive combination weights, Byzantine
//! attacks against it, and a resilient variant.

pub mod attack;
pub mod diffusion;
pub mod error;
pub mod network;
pub mod resilient;
pub mod scenario;

pub use error::{Error, Result};
