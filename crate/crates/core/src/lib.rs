//! NS-FPN: a noise-suppression feature pyramid for infrared small-target
//! segmentation, with verified gradients and a desk-scale synthetic
//! training/evaluation harness.

pub mod attention;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod irdata;
pub mod lfp;
pub mod model;
pub mod sfs;
pub mod tensor;
pub mod wavelet;

pub use error::{Error, Result};
pub use tensor::{Tensor, Tensor4};
