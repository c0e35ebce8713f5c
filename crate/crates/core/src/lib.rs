//! SSIM-driven manifold learning for image blocks.
//!
//! The crate learns a low-dimensional "structure manifold" in which image
//! blocks cluster by distortion type rather than pixel error. It provides:
//!
//! - block partitioning and the zero-mean SSIM distance ([`blocks`], [`ssim`]);
//! - an iso-error distortion corpus generator ([`distortion`]);
//! - per-block k-NN graphs in input and kernel feature space ([`neighbors`],
//!   [`kernels`]);
//! - ADMM solvers for SSIM-distance neighbor reconstruction and constrained
//!   embedding, with out-of-sample extensions ([`reconstruct`], [`embed`]);
//! - closed-form LLE / kernel LLE baselines ([`lle`]);
//! - a 1NN distortion-recognition harness ([`eval`]);
//! - end-to-end training, persistence, and evaluation ([`pipeline`], [`model`]).

pub mod blocks;
pub mod distortion;
pub mod embed;
pub mod error;
pub mod eval;
pub mod image;
pub mod kernels;
pub mod lle;
pub mod model;
pub mod neighbors;
pub mod pipeline;
pub mod reconstruct;
pub mod ssim;
pub mod verify;

pub use error::{Error, Result};
