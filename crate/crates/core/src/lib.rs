//! Kolmogorov-Arnold style layers for small regression and denoising models.
//!
//! The crate is `no_std` (it needs `alloc`) and carries everything that is
//! pure computation:
//!
//! - [`autodiff`]: a reverse-mode graph over dense `f64` tensors, plus a
//!   central-difference gradient oracle.
//! - [`spline`]: uniform knot grids and Cox–de Boor basis evaluation.
//! - [`activation`]: fixed activations, PReLU, PAU, APL and the safe rational
//!   function shared by group-rational layers.
//! - [`layers`]: dense, KAN and GR-KAN layers, their initializers and
//!   parameter accounting.
//! - [`signal`]: the synthetic speech-dynamics signal used as a fitting target.
//! - [`train`]: losses, Adam/AdamW and the full-batch training loop.
//! - [`denoise`]: a strided 1-D convolutional U-Net whose activations can be
//!   swapped for grouped rationals.
//! - [`methods`]: the six fitting model families compared by the benchmark.
//!
//! IO, threading, report files and the command line live in the
//! `grkan-bench` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod activation;
pub mod autodiff;
pub mod denoise;
mod error;
pub mod layers;
pub(crate) mod linalg;
pub mod methods;
pub mod module;
pub mod rng;
pub mod selftest;
pub mod signal;
pub mod spline;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use module::{Module, ParamEntry};
pub use tensor::Tensor;
