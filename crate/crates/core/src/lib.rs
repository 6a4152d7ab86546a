pub mod data;
pub mod error;
pub mod exec;
pub mod kse;
pub mod network;
pub mod session;
pub mod train;

pub use error::{KastError, Result};
pub use exec::Execution;
