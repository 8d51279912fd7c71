//! Distributed H∞ consensus observers with Round-Robin neighbor polling.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod cli;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod lmi;
pub mod observer;
pub mod plant;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
