//! Simulation and restoration of terahertz time-domain hyperspectral
//! amplitude cubes degraded by frequency-dependent Gaussian-beam blur and
//! instrument noise.
//!
//! The crate covers the whole chain: the beam model and synthetic phantoms
//! ([`beam`], [`forward`]), the signal-subspace machinery ([`subspace`]),
//! single-image deconvolution and patch denoising ([`deblur`], [`denoise`]),
//! the subspace denoiser and the joint deblur-and-denoise restoration
//! ([`pipeline`]), evaluation metrics ([`metrics`]) and the container format
//! and image export ([`io`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod cli;
pub mod cube;
pub mod deblur;
pub mod denoise;
pub mod error;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod spectral;
pub mod subspace;

pub use cube::HyperCube;
pub use error::{Error, Result};
