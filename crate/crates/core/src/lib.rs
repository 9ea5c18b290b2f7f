//! Coherence-aware over-the-air federated learning core.
//!
//! Everything here is `no_std` + `alloc`: block-fading channels, the
//! downlink super-block with product-superposition pilot reuse, previous
//! local model filling, clipped-inversion uplink aggregation, synthetic
//! learning tasks and the convergence-bound evaluator.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channel;
pub mod downlink;
pub mod error;
pub mod grid;
pub mod learner;
pub mod linalg;
pub mod math;
pub mod plmf;
pub mod rng;
pub mod scheduler;
pub mod stats;
pub mod task;
pub mod uplink;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
