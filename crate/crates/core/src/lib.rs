//! Twin-encoder semi-supervised graph classification.
//!
//! A message-passing encoder and a trainable random-walk kernel encoder are
//! trained jointly: cross-entropy on labeled graphs plus a symmetric KL
//! consistency term between the two encoders' similarity distributions over a
//! FIFO memory bank of labeled anchors.
//!
//! The crate is `no_std` (with `alloc`). File formats, checkpoints and the
//! experiment runner live in the `tgnn` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adam;
pub mod augment;
pub mod diagnostics;
pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod mpnn;
pub mod params;
pub mod rng;
pub mod rwkernel;
pub mod split;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Dataset, Graph};
pub use tensor::Tensor;
