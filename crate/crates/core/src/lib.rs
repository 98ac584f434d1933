//! Day-ahead scheduling of a community energy storage device shared by
//! rooftop-PV households on a radial distribution feeder.

// `!(x <= y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audit;
pub mod error;
pub mod model;
pub mod network;
pub mod optimizer;
pub mod par;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
