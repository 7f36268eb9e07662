//! Calibrated multi-region, multi-sector trade models and tariff games.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, threading and the
//! command line live in the `tradewar` companion crate.
//!
//! Pipeline: [`model::EconomyData`] → [`calibration::calibrate`] →
//! [`solver::solve_counterfactual`] → [`ga::best_response`] / [`nash::nash`].
//! The Ricardian exact-hat engine in [`cp`] plugs into the same optimizer
//! through [`engine::WelfareEngine`].

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod calibration;
pub mod cp;
pub mod engine;
pub mod error;
pub mod ga;
pub mod imbalance;
pub mod linalg;
pub mod math;
pub mod model;
pub mod nash;
pub mod scenario;
pub mod solver;
pub mod toy;

pub use engine::{ArmingtonEngine, Executor, Sequential, WelfareEngine};
pub use error::{Error, Result};
pub use model::{CalibratedModel, Dims, EconomyData, Equilibrium, Sector, TariffSchedule, WelfareReport};
