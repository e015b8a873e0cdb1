//! Digital holographic speckle simulation and species unmixing.
//!
//! The crate is organised bottom-up: [`numerics`] (grids, FFTs, correlation),
//! [`scene`] (optics, species, seeded particle sampling), [`forward`]
//! (coherent image formation and sensor), [`speckle`] (autocorrelation
//! statistics and basis kernels), [`inversion`] (non-negative unmixing and
//! the two-stage estimator), [`metrics`], [`io`] and [`pipeline`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forward;
pub mod inversion;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod speckle;

pub use error::{Error, Result};
