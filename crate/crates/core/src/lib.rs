//! Core algorithms for enhancing low-cost accelerometer signals.
//!
//! This crate holds everything that computes: signal synthesis and
//! degradation models, a small reverse-mode autodiff engine, the 1-D
//! convolutional generator/discriminator pair, entropic optimal transport
//! for feature supervision, the modulated Laplace-energy regularizer, the
//! CycleGAN-style training loop, and the evaluation metrics (CSRE, ZVRE,
//! Allan deviation). It is `no_std`-compatible (`alloc` required); file
//! formats and the command-line front end live in the companion
//! `herosgan-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod metrics;
pub mod mle;
pub mod nets;
pub mod ot;
pub mod rng;
pub mod signal;
pub mod train;

pub use error::Error;

/// Result alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Acceleration of 1 g in m/s², the unit conversion used by ZVRE.
pub const G_TO_MS2: f64 = 9.8;
