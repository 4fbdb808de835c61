pub mod data;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
