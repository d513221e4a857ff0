//! Shifted convolution sums of class numbers of imaginary quadratic fields
//! and of representation numbers of quadratic forms, together with the
//! local densities, singular integrals and exponential sums that predict them.

pub mod arith;
pub mod constants;
pub mod error;
pub mod expsum;
pub mod harness;
pub mod quadcount;
pub mod repnum;

pub use error::{Error, Result};
