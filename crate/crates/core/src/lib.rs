pub mod attribution;
pub mod datasets;
pub mod error;
pub mod logic;
pub mod lsx;
pub mod metrics;
pub mod nets;
pub mod seed;

pub use error::{Error, Result};
