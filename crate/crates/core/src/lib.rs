//! Identity-preserving weight initializers, a small deterministic training
//! engine, and the probes used to check their behaviour.

pub mod analysis;
pub mod data;
pub mod error;
pub mod init;
pub mod net;
pub mod report;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
