#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod error;
pub mod grid;
pub mod io;
pub mod pde;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
