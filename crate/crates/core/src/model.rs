//! Shared domain types: index spaces, raw economy data, tariff schedules,
//! calibrated parameters and solved equilibria.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::abs;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Dense index space over countries and sectors.
///
/// Pair tensors are laid out importer-major: `(i * J + j) * S + s`.
/// IO tensors are `(j * S + s) * S + k` for using sector `s`, input `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Dims {
    pub countries: usize,
    pub sectors: usize,
}

impl Dims {
    pub const fn new(countries: usize, sectors: usize) -> Self {
        Self { countries, sectors }
    }

    pub const fn pair_len(&self) -> usize {
        self.countries * self.countries * self.sectors
    }

    pub const fn cs_len(&self) -> usize {
        self.countries * self.sectors
    }

    pub const fn io_len(&self) -> usize {
        self.countries * self.sectors * self.sectors
    }

    #[inline]
    pub const fn pair(&self, i: usize, j: usize, s: usize) -> usize {
        (i * self.countries + j) * self.sectors + s
    }

    #[inline]
    pub const fn unpair(&self, idx: usize) -> (usize, usize, usize) {
        let s = idx % self.sectors;
        let ij = idx / self.sectors;
        (ij / self.countries, ij % self.countries, s)
    }

    #[inline]
    pub const fn cs(&self, i: usize, s: usize) -> usize {
        i * self.sectors + s
    }

    #[inline]
    pub const fn io(&self, j: usize, s: usize, k: usize) -> usize {
        (j * self.sectors + s) * self.sectors + k
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Sector {
    pub id: String,
    pub name: String,
    pub elasticity: f64,
    pub is_service: bool,
}

impl Sector {
    pub fn goods(id: impl Into<String>, elasticity: f64) -> Self {
        let id = id.into();
        Self { name: id.clone(), id, elasticity, is_service: false }
    }

    pub fn service(id: impl Into<String>, elasticity: f64) -> Self {
        Self { is_service: true, ..Self::goods(id, elasticity) }
    }
}

/// Gross tariff factors `tau[i][j][s]` (importer, exporter, sector).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TariffSchedule {
    dims: Dims,
    tau: Vec<f64>,
}

impl TariffSchedule {
    pub fn free_trade(dims: Dims) -> Self {
        Self { dims, tau: vec![1.0; dims.pair_len()] }
    }

    pub fn from_vec(dims: Dims, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != dims.pair_len() {
            return Err(Error::invalid(format!(
                "tariff tensor has {} entries, expected {}",
                tau.len(),
                dims.pair_len()
            )));
        }
        Ok(Self { dims, tau })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, s: usize) -> f64 {
        self.tau[self.dims.pair(i, j, s)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, s: usize, tau: f64) {
        let idx = self.dims.pair(i, j, s);
        self.tau[idx] = tau;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.tau
    }

    /// Tariffs `importer` levies on `exporter` for the listed sectors.
    pub fn bilateral(&self, importer: usize, exporter: usize, sectors: &[usize]) -> Vec<f64> {
        sectors.iter().map(|&s| self.get(importer, exporter, s)).collect()
    }

    pub fn set_bilateral(&mut self, importer: usize, exporter: usize, sectors: &[usize], values: &[f64]) {
        for (&s, &v) in sectors.iter().zip(values) {
            self.set(importer, exporter, s, v);
        }
    }
}

/// Observed world: flows net of tariffs, IO usage, tariffs, sector metadata, GDP.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EconomyData {
    pub countries: Vec<String>,
    pub sectors: Vec<Sector>,
    /// `flows[pair(i, j, s)]`: value imported by `i` from `j`, net of tariffs.
    pub flows: Vec<f64>,
    /// `io_usage[io(j, s, k)]`: value of input `k` used by sector `s` of `j`.
    pub io_usage: Vec<f64>,
    pub tariffs: TariffSchedule,
    pub gdp: Vec<f64>,
}

impl EconomyData {
    /// Zero flows, zero IO, free trade, unit GDP.
    pub fn empty(countries: Vec<String>, sectors: Vec<Sector>) -> Self {
        let dims = Dims::new(countries.len(), sectors.len());
        Self {
            flows: vec![0.0; dims.pair_len()],
            io_usage: vec![0.0; dims.io_len()],
            tariffs: TariffSchedule::free_trade(dims),
            gdp: vec![1.0; dims.countries],
            countries,
            sectors,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.countries.len(), self.sectors.len())
    }

    #[inline]
    pub fn flow(&self, i: usize, j: usize, s: usize) -> f64 {
        self.flows[self.dims().pair(i, j, s)]
    }

    #[inline]
    pub fn set_flow(&mut self, i: usize, j: usize, s: usize, v: f64) {
        let idx = self.dims().pair(i, j, s);
        self.flows[idx] = v;
    }

    #[inline]
    pub fn io(&self, j: usize, s: usize, k: usize) -> f64 {
        self.io_usage[self.dims().io(j, s, k)]
    }

    pub fn country_index(&self, id: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == id)
    }

    pub fn sector_index(&self, id: &str) -> Option<usize> {
        self.sectors.iter().position(|s| s.id == id)
    }

    /// Net-of-tariff sales of sector `s` producers in `j` to all destinations.
    pub fn sales(&self, j: usize, s: usize) -> f64 {
        (0..self.countries.len()).map(|i| self.flow(i, j, s)).sum()
    }

    /// Aggregate deficits (imports minus exports, net of tariffs).
    pub fn deficits(&self) -> Vec<f64> {
        deficits_from_flows(self.dims(), &self.flows)
    }

    /// Net imports of `i` from `j` summed over sectors.
    pub fn bilateral_deficit(&self, i: usize, j: usize) -> f64 {
        (0..self.sectors.len()).map(|s| self.flow(i, j, s) - self.flow(j, i, s)).sum()
    }
}

pub(crate) fn deficits_from_flows(dims: Dims, flows: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; dims.countries];
    for i in 0..dims.countries {
        for j in 0..dims.countries {
            if i == j {
                continue;
            }
            for s in 0..dims.sectors {
                let f = flows[dims.pair(i, j, s)];
                d[i] += f;
                d[j] -= f;
            }
        }
    }
    d
}

/// Non-service sector indices in declaration order (GA strategy layout).
pub fn taxable_sector_indices(sectors: &[Sector]) -> Vec<usize> {
    sectors.iter().enumerate().filter(|(_, s)| !s.is_service).map(|(k, _)| k).collect()
}

pub fn taxable_sectors(data: &EconomyData) -> Vec<String> {
    taxable_sector_indices(&data.sectors).into_iter().map(|k| data.sectors[k].id.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Severity {
    Fatal,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum IssueKind {
    DimensionMismatch,
    NonFinite,
    NegativeFlow,
    NegativeIo,
    NegativeGdp,
    ElasticityTooLow,
    ServiceTariffed,
    TariffBelowOne,
    DomesticTariff,
    IoExceedsSales,
    WorldDeficit,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Issue {
    pub severity: Severity,
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    /// Σ_i D_i; informational.
    pub world_deficit: f64,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        !self.issues.iter().any(|i| i.severity == Severity::Fatal)
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.issues.iter().find(|i| i.severity == Severity::Fatal) {
            Some(issue) => Err(Error::Validation(issue.message.clone())),
            None => Ok(self),
        }
    }
}

pub fn validate(data: &EconomyData) -> ValidationReport {
    let mut issues = Vec::new();
    let mut fatal = |kind, message: String| issues.push(Issue { severity: Severity::Fatal, kind, message });
    let dims = data.dims();

    let shapes = [
        ("flows", data.flows.len(), dims.pair_len()),
        ("io_usage", data.io_usage.len(), dims.io_len()),
        ("tariffs", data.tariffs.as_slice().len(), dims.pair_len()),
        ("gdp", data.gdp.len(), dims.countries),
    ];
    let mut shape_ok = data.tariffs.dims() == dims;
    for (name, got, want) in shapes {
        if got != want {
            fatal(IssueKind::DimensionMismatch, format!("{name} has {got} entries, expected {want}"));
            shape_ok = false;
        }
    }
    if !shape_ok {
        if data.tariffs.dims() != dims {
            fatal(IssueKind::DimensionMismatch, String::from("tariff schedule dimensions differ from data"));
        }
        return ValidationReport { issues, world_deficit: f64::NAN };
    }

    for (idx, &v) in data.flows.iter().enumerate() {
        let (i, j, s) = dims.unpair(idx);
        if !v.is_finite() {
            fatal(IssueKind::NonFinite, format!("non-finite flow at ({i}, {j}, {s})"));
        } else if v < 0.0 {
            fatal(IssueKind::NegativeFlow, format!("negative flow {v} at ({i}, {j}, {s})"));
        }
    }
    for (idx, &v) in data.io_usage.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            let k = idx % dims.sectors;
            let s = (idx / dims.sectors) % dims.sectors;
            let j = idx / (dims.sectors * dims.sectors);
            fatal(IssueKind::NegativeIo, format!("invalid io usage {v} at ({j}, {s}, {k})"));
        }
    }
    for (i, &g) in data.gdp.iter().enumerate() {
        if !g.is_finite() || g < 0.0 {
            fatal(IssueKind::NegativeGdp, format!("invalid gdp {g} for country {i}"));
        }
    }
    for sec in &data.sectors {
        // A missing service elasticity is filled in at calibration.
        if sec.is_service && sec.elasticity.is_nan() {
            continue;
        }
        if !(sec.elasticity > 1.0) {
            fatal(IssueKind::ElasticityTooLow, format!("sector {} has elasticity {} <= 1", sec.id, sec.elasticity));
        }
    }
    for (idx, &tau) in data.tariffs.as_slice().iter().enumerate() {
        let (i, j, s) = dims.unpair(idx);
        if !tau.is_finite() || tau < 1.0 {
            fatal(IssueKind::TariffBelowOne, format!("tariff factor {tau} < 1 at ({i}, {j}, {s})"));
        } else if i == j && tau != 1.0 {
            fatal(IssueKind::DomesticTariff, format!("domestic tariff factor {tau} at ({i}, {i}, {s})"));
        } else if data.sectors[s].is_service && tau != 1.0 {
            fatal(
                IssueKind::ServiceTariffed,
                format!("service sector tariffed: {} at ({i}, {j}, {s})", data.sectors[s].id),
            );
        }
    }
    for j in 0..dims.countries {
        for s in 0..dims.sectors {
            let used: f64 = (0..dims.sectors).map(|k| data.io(j, s, k)).sum();
            let sales = data.sales(j, s);
            if used > sales * (1.0 + 1e-12) {
                fatal(
                    IssueKind::IoExceedsSales,
                    format!("io usage {used} exceeds sales {sales} for sector {s} in country {j}"),
                );
            }
        }
    }

    let deficits = data.deficits();
    let world_deficit: f64 = deficits.iter().sum();
    let gross: f64 = data.flows.iter().sum();
    if abs(world_deficit) > 1e-9 * gross.max(1.0) {
        issues.push(Issue {
            severity: Severity::Warning,
            kind: IssueKind::WorldDeficit,
            message: format!("world deficit sum {world_deficit} is not zero"),
        });
    }
    ValidationReport { issues, world_deficit }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum CalibrationMode {
    /// All asymmetry attributed to taste shares (`t = 1`).
    #[default]
    Preferences,
    /// Iceberg costs recovered from relative flows, clamped.
    Iceberg,
}

/// Structural parameters fitting a baseline dataset exactly.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CalibratedModel {
    pub countries: Vec<String>,
    pub sectors: Vec<Sector>,
    /// Taste shares, pair layout.
    pub gamma: Vec<f64>,
    /// Final consumption shares, country × sector.
    pub a: Vec<f64>,
    /// IO coefficients, `io(j, s, k)`.
    pub alpha: Vec<f64>,
    pub labor: Vec<f64>,
    pub deficits: Vec<f64>,
    /// Iceberg costs, pair layout.
    pub iceberg: Vec<f64>,
    /// Productivities, country × sector.
    pub productivity: Vec<f64>,
    pub w0: Vec<f64>,
    pub baseline_tariffs: TariffSchedule,
    pub baseline_flows: Vec<f64>,
    pub baseline_io: Vec<f64>,
    pub mode: CalibrationMode,
}

impl CalibratedModel {
    pub fn dims(&self) -> Dims {
        Dims::new(self.countries.len(), self.sectors.len())
    }

    #[inline]
    pub fn sigma(&self, s: usize) -> f64 {
        self.sectors[s].elasticity
    }

    pub fn taxable_sectors(&self) -> Vec<usize> {
        taxable_sector_indices(&self.sectors)
    }

    pub fn country_index(&self, id: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == id)
    }

    pub fn has_io(&self) -> bool {
        self.alpha.iter().any(|&a| a != 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Diagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// max_j |labor demand / L_j − 1| over all countries.
    pub labor_residual: f64,
    /// max relative goods-market residual.
    pub goods_residual: f64,
}

/// A solved equilibrium. Pair tensors use [`Dims::pair`], country × sector
/// tensors [`Dims::cs`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Equilibrium {
    pub w: Vec<f64>,
    pub p_sector: Vec<f64>,
    pub p_bilateral: Vec<f64>,
    pub y_bilateral: Vec<f64>,
    pub y_sector: Vec<f64>,
    pub labor: Vec<f64>,
    /// Input quantities summed over destinations: `io(j, s, k)` holds x_j^{sk}.
    pub inputs: Vec<f64>,
    pub consumption: Vec<f64>,
    pub tariff_revenue: Vec<f64>,
    pub income: Vec<f64>,
    pub deficits_realized: Vec<f64>,
    pub unit_cost: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl Equilibrium {
    /// Net-of-tariff flows `p_ij y_ij / τ_ij`.
    pub fn flows(&self, tariffs: &TariffSchedule) -> Vec<f64> {
        self.p_bilateral
            .iter()
            .zip(&self.y_bilateral)
            .zip(tariffs.as_slice())
            .map(|((p, y), t)| p * y / t)
            .collect()
    }

    /// IO usage values `p_j^k x_j^{sk}`.
    pub fn io_usage(&self, dims: Dims) -> Vec<f64> {
        let mut out = vec![0.0; dims.io_len()];
        for j in 0..dims.countries {
            for s in 0..dims.sectors {
                for k in 0..dims.sectors {
                    let idx = dims.io(j, s, k);
                    out[idx] = self.p_sector[dims.cs(j, k)] * self.inputs[idx];
                }
            }
        }
        out
    }

    /// Cobb-Douglas welfare Π_s (c_i^s)^{a_i^s} per country.
    pub fn welfare(&self, model: &CalibratedModel) -> Vec<f64> {
        let dims = model.dims();
        (0..dims.countries)
            .map(|i| cobb_douglas(&model.a[i * dims.sectors..(i + 1) * dims.sectors], &self.consumption[i * dims.sectors..(i + 1) * dims.sectors]))
            .collect()
    }
}

pub(crate) fn cobb_douglas(shares: &[f64], quantities: &[f64]) -> f64 {
    let mut log_w = 0.0;
    for (&a, &c) in shares.iter().zip(quantities) {
        if a > 0.0 {
            if c <= 0.0 {
                return 0.0;
            }
            log_w += a * crate::math::ln(c);
        }
    }
    crate::math::exp(log_w)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WelfareReport {
    #[cfg_attr(feature = "serde", serde(rename = "W"))]
    pub w: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta_pct: Vec<f64>,
}

impl WelfareReport {
    /// Consumption equivalents from welfare levels. With Σ_s a = 1 the
    /// Cobb-Douglas index is homogeneous of degree one, so β = W'/W.
    pub fn from_levels(reference: &[f64], counterfactual: &[f64]) -> Self {
        let beta: Vec<f64> = counterfactual.iter().zip(reference).map(|(c, r)| c / r).collect();
        Self { w: counterfactual.to_vec(), delta_pct: beta.iter().map(|b| 100.0 * (b - 1.0)).collect(), beta }
    }
}
