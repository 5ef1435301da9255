pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
