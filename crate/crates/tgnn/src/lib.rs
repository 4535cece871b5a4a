//! File formats, checkpoints, the experiment runner and the `tgnn` CLI on
//! top of `tgnn-core`.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod output;
pub mod tu;

pub use error::{Error, Result};
