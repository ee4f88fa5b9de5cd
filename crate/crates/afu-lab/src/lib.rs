//! Numerics for piecewise expanding interval maps with finite image partition:
//! twisted transfer operators, BV cone machinery, cancellation estimates and
//! correlation decay of suspension semiflows.

pub mod bv_space;
pub mod config;
pub mod dolgopyat_harness;
pub mod error;
pub mod interval_map;
pub mod operator_core;
pub mod quad;
pub mod report;
pub mod semiflow;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
