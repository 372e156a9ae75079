//! Transient analysis of the non-stationary bulk queue `M(t)|M[k,B]|1`.
//!
//! The queue admits Poisson arrivals with time-varying intensity `λ(t)`; a
//! single server starts a batch as soon as at least `k` customers wait and
//! serves at most `B` at once, with exponential(`μ`) batch service times.
//!
//! * [`rates`]: the intensity `λ(t)` and its integrals and majorants.
//! * [`model`]: queue and grid parameters, the truncated state vector.
//! * [`operators`]: sparse realizations of `A_m`, the boundary trace and `Φ`.
//! * [`transient`]: characteristic-aligned solver and the uniformization oracle.
//! * [`spectral`]: kernel eigenfunctions of `A_m`, the Dirichlet operator and `ΦD_γ`.
//! * [`dessim`]: discrete-event Monte Carlo oracle with exact thinning.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod dessim;
pub mod error;
pub mod model;
pub mod operators;
pub mod rates;
pub mod sparse;
pub mod spectral;
pub mod transient;

pub use error::{Error, Result};
pub use model::{GridConfig, QueueConfig, StateVector};
pub use rates::RateFunction;
