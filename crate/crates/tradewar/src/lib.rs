//! File formats, parallel execution and the command-line front end for the
//! `tradewar-core` models.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod provenance;

pub use error::{Error, Result};
