pub mod error;
pub mod harness;
pub mod linalg;
pub mod matmul;
pub mod prep;
pub mod qpe;
pub mod readout;
pub mod sim;

pub use error::{QmmError, Result};
