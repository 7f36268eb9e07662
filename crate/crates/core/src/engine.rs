//! The welfare-evaluation interface shared by the Armington and CP models,
//! and the executor abstraction used for parallel candidate evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::model::{CalibratedModel, Dims, Sector, TariffSchedule};
use crate::solver::{autarky_welfare, solve_counterfactual, SolverOptions};

/// Maps `f` over `0..n`, returning results in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Anything that turns a tariff schedule into per-country welfare.
///
/// Welfare values are comparable within one engine; ratios between two
/// evaluations are consumption equivalents.
pub trait WelfareEngine: Sync {
    fn countries(&self) -> &[String];
    fn sectors(&self) -> &[Sector];
    fn baseline_tariffs(&self) -> &TariffSchedule;
    fn welfare(&self, tariffs: &TariffSchedule) -> Result<Vec<f64>>;
    /// Welfare with trade between the pair shut down.
    fn autarky_welfare(&self, country: usize, partner: usize, tariffs: &TariffSchedule) -> Result<Vec<f64>>;
    /// Baseline net-of-tariff flow, used for trade-weighted averages.
    fn baseline_flow(&self, importer: usize, exporter: usize, sector: usize) -> f64;

    fn dims(&self) -> Dims {
        Dims::new(self.countries().len(), self.sectors().len())
    }

    fn country_index(&self, id: &str) -> Option<usize> {
        self.countries().iter().position(|c| c == id)
    }

    fn taxable_sectors(&self) -> Vec<usize> {
        crate::model::taxable_sector_indices(self.sectors())
    }
}

/// The calibrated Armington model behind [`WelfareEngine`].
#[derive(Debug, Clone)]
pub struct ArmingtonEngine {
    pub model: CalibratedModel,
    pub opts: SolverOptions,
}

impl ArmingtonEngine {
    pub fn new(model: CalibratedModel) -> Self {
        Self { model, opts: SolverOptions::default() }
    }
}

impl WelfareEngine for ArmingtonEngine {
    fn countries(&self) -> &[String] {
        &self.model.countries
    }

    fn sectors(&self) -> &[Sector] {
        &self.model.sectors
    }

    fn baseline_tariffs(&self) -> &TariffSchedule {
        &self.model.baseline_tariffs
    }

    fn welfare(&self, tariffs: &TariffSchedule) -> Result<Vec<f64>> {
        Ok(solve_counterfactual(&self.model, tariffs, &self.opts)?.welfare(&self.model))
    }

    fn autarky_welfare(&self, country: usize, partner: usize, tariffs: &TariffSchedule) -> Result<Vec<f64>> {
        autarky_welfare(&self.model, country, partner, tariffs, &self.opts)
    }

    fn baseline_flow(&self, importer: usize, exporter: usize, sector: usize) -> f64 {
        self.model.baseline_flows[self.model.dims().pair(importer, exporter, sector)]
    }
}
