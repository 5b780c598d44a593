#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augmented;
pub mod error;
pub mod experiment;
pub mod inner;
pub mod io;
pub mod outer;
mod par;
pub mod problem;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
