pub mod agents;
pub mod envs;
pub mod error;
pub mod linlab;
pub mod norm;
pub mod numcore;

pub use error::{Error, Result};
