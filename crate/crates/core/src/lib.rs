//! Transport processes driven by a renewal-reward process, coupled with
//! Brownian motion.
//!
//! For i.i.d. nonnegative jump times `U_m` and fair-coin rewards `η_k`, the
//! process
//!
//! ```text
//! x_n(t) = G(n)^{-1} ∫_0^t (-1)^{T(u / β(n))} du,   β(n) = n^{-k},  k > 1
//! ```
//!
//! converges to a standard Brownian motion. This crate simulates `x_n`
//! directly ([`renewal_transport`]), builds `x_n` and a Brownian path on one
//! probability space by embedding the scaled jumps as first exits
//! ([`skorokhod_coupling`]), and measures how fast the two paths approach
//! each other ([`experiments`]).
//!
//! ```
//! use renewal_transport::{JumpLaw, ScalingSchedule};
//!
//! let sched = ScalingSchedule::new(&JumpLaw::Uniform01, 2.0, 10).unwrap();
//! assert!((sched.mean_gap - 0.005).abs() < 1e-15);
//! ```
//!
//! The guide under `book/` walks through each piece; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod jump_distributions;
pub mod renewal_transport;
pub mod rng;
pub mod skorokhod_coupling;
pub mod stats;

pub use error::{Error, Result};
pub use jump_distributions::{JumpLaw, Moments};
pub use renewal_transport::{
    build_transport_path, sample_renewal_path, terminal_samples, RenewalPath, ScalingSchedule,
    TransportPath,
};
pub use skorokhod_coupling::{build_coupled_realization, CoupledRealization, Engine, SupMode};

// Guide chapters, run as doc-tests so the listings cannot drift.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/jump_laws.md")]
    mod jump_laws {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/rates.md")]
    mod rates {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
