pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod run;
pub mod synthetic;
pub mod train;
pub mod transformer;

pub use error::{Error, Result};
