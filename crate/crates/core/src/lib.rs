pub mod attention;
pub mod autograd;
pub mod channel;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod layers;
pub mod model;
pub mod temporal;
pub mod train;

pub use error::{DagError, Result};
