//! Hierarchical convolutional kernels: evaluation, spectra, teacher-student
//! regression and learning-curve theory.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod geometry;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod spectrum;
pub mod theory;

pub use error::{Error, Result};
pub use geometry::{Architecture, InputBatch, InputSpace, KernelKind, MetaPatchIndex, Stride};
pub use kernels::{GramMatrix, Kernel, OverlapTable};
