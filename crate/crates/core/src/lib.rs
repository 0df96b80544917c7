//! Kernel trend estimation on an equispaced design with martingale-difference
//! noise, and Mallows-type bandwidth selection.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`], [`trend`]: kernels with cached moments, the design, trends
//!   and weight functions.
//! * [`noise`]: stationary ARCH(1) and Gaussian noise sources.
//! * [`smoother`]: the Priestley-Chao estimator (direct and FFT paths).
//! * [`criteria`]: ASE, exact MASE, Mallows CL, C_p, the surrogate `D_n`
//!   and grid-search selection.
//! * [`asymptotics`]: closed-form limit variances of the bandwidth gap.
//! * [`montecarlo`]: the seeded replication harness.
//! * [`cli`]: the `mdsbw` command-line front end.

pub mod asymptotics;
pub mod cli;
pub mod criteria;
pub mod error;
pub mod io;
pub mod kernels;
pub mod montecarlo;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod smoother;
pub mod trend;

pub use error::{Error, Result};
