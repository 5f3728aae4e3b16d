pub mod bitops;
pub mod cli;
pub mod error;
pub mod graph;
pub mod model;
pub mod qmp;
pub mod quant;
pub mod relaxed;
pub mod sparse;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
