//! Finite-alphabet precoding for the massive MU-MIMO downlink.
//!
//! A base station with `N` antennas, each driven by a one-bit DAC, serves `K`
//! single-antenna users. Every transmit sample must come from a small discrete
//! set, so the usual linear precoders no longer apply directly. This crate
//! provides:
//!
//! - [`constellation`]: user-data constellations (QPSK, 16-QAM) with Gray bit
//!   labels, and the DAC output alphabet with its nearest-point projection.
//! - [`channel`]: i.i.d. Rayleigh channel sampling, the ZF precoding factor
//!   beta, noise application, and a CSI-error model.
//! - [`precoders`]: zero-forcing (plain and quantized), a projected-gradient
//!   reference, and the IDE2 iterative discrete-estimation precoder with
//!   multiplication-count instrumentation.
//! - [`unfolded`]: IDE2-Net, a T-layer unfolding of IDE2 with learnable
//!   per-layer step-size and damping scalars, trained by SGD with a
//!   straight-through estimator through the projection.
//! - [`harness`]: a seeded, parallel Monte-Carlo harness for BER/MSE/IUI
//!   sweeps over SNR, layer count, and CSI error, plus an exhaustive-search
//!   oracle for tiny instances.
//!
//! All randomness flows through explicitly passed ChaCha streams; identical
//! seeds give identical results at any thread count.

// `!(x > 0.0)` rejects NaN along with the out-of-range values; index loops
// are the native shape of the dense factorization code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod constellation;
mod error;
pub mod harness;
pub mod linalg;
pub mod precoders;
pub mod unfolded;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
