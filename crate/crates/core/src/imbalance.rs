//! Bilateral and aggregate trade-imbalance indices over a flow panel.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::abs;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlowRecord {
    pub importer: String,
    pub exporter: String,
    pub year: i32,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowPanel {
    flows: BTreeMap<(i32, String, String), f64>,
    gdp: BTreeMap<(String, i32), f64>,
}

impl FlowPanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_flow(&mut self, r: FlowRecord) -> Result<()> {
        if !(r.value >= 0.0) || !r.value.is_finite() {
            return Err(Error::Validation(format!(
                "flow {}<-{} in {} must be non-negative, got {}",
                r.importer, r.exporter, r.year, r.value
            )));
        }
        let key = (r.year, r.importer, r.exporter);
        if self.flows.contains_key(&key) {
            return Err(Error::Validation(format!("duplicate flow record {}<-{} in {}", key.1, key.2, key.0)));
        }
        self.flows.insert(key, r.value);
        Ok(())
    }

    pub fn insert_gdp(&mut self, country: &str, year: i32, gdp: f64) -> Result<()> {
        let key = (String::from(country), year);
        if self.gdp.contains_key(&key) {
            return Err(Error::Validation(format!("duplicate GDP record for {country} in {year}")));
        }
        self.gdp.insert(key, gdp);
        Ok(())
    }

    pub fn flow(&self, importer: &str, exporter: &str, year: i32) -> f64 {
        self.flows.get(&(year, String::from(importer), String::from(exporter))).copied().unwrap_or(0.0)
    }

    pub fn gdp(&self, country: &str, year: i32) -> Option<f64> {
        self.gdp.get(&(String::from(country), year)).copied()
    }

    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.flows.keys().map(|k| k.0).collect();
        set.into_iter().collect()
    }

    fn records(&self, year: i32) -> impl Iterator<Item = (&str, &str, f64)> {
        self.flows
            .range((year, String::new(), String::new())..)
            .take_while(move |(k, _)| k.0 == year)
            .map(|(k, v)| (k.1.as_str(), k.2.as_str(), *v))
    }

    fn gdp_for(&self, country: &str, year: i32) -> Result<f64> {
        self.gdp(country, year)
            .ok_or_else(|| Error::Validation(format!("no GDP for {country} in {year}")))
    }
}

/// |a − b| / (a + b); undefined when both flows are zero.
pub fn bilateral_imbalance(flow_ij: f64, flow_ji: f64) -> Result<f64> {
    if flow_ij < 0.0 || flow_ji < 0.0 {
        return Err(Error::invalid("flows must be non-negative"));
    }
    let gross = flow_ij + flow_ji;
    if !(gross > 0.0) {
        return Err(Error::UndefinedImbalance);
    }
    Ok(abs(flow_ij - flow_ji) / gross)
}

/// |Σ_j net exports| / GDP.
pub fn aggregate_imbalance(net_exports_sum: f64, gdp: f64) -> Result<f64> {
    if !(gdp > 0.0) {
        return Err(Error::invalid(format!("GDP must be positive, got {gdp}")));
    }
    Ok(abs(net_exports_sum) / gdp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ImbalanceMode {
    Bilateral,
    Aggregate,
}

/// Weighted mean of per-value indices; weights need not sum to one.
pub fn weighted_mean(obs: &[(f64, f64)]) -> Result<f64> {
    let total: f64 = obs.iter().map(|(_, w)| w).sum();
    if obs.is_empty() || !(total > 0.0) {
        return Err(Error::Validation(String::from("no valid observations")));
    }
    Ok(obs.iter().map(|(v, w)| v * w).sum::<f64>() / total)
}

/// Destination-GDP-weighted average index across the panel in `year`.
///
/// Bilateral mode uses every ordered (importer, exporter) pair with trade in
/// at least one direction, weighted by the importer's GDP. Aggregate mode uses
/// every country present in the year, weighted by its own GDP.
pub fn weighted_cross_section(panel: &FlowPanel, year: i32, mode: ImbalanceMode) -> Result<f64> {
    let mut obs = Vec::new();
    match mode {
        ImbalanceMode::Bilateral => {
            let mut pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
            for (i, j, _) in panel.records(year) {
                if i != j {
                    pairs.insert((i, j));
                    pairs.insert((j, i));
                }
            }
            for (i, j) in pairs {
                match bilateral_imbalance(panel.flow(i, j, year), panel.flow(j, i, year)) {
                    Ok(v) => obs.push((v, panel.gdp_for(i, year)?)),
                    Err(Error::UndefinedImbalance) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        ImbalanceMode::Aggregate => {
            let mut net: BTreeMap<&str, f64> = BTreeMap::new();
            for (i, j, v) in panel.records(year) {
                if i != j {
                    *net.entry(j).or_insert(0.0) += v;
                    *net.entry(i).or_insert(0.0) -= v;
                }
            }
            for (c, n) in net {
                let g = panel.gdp_for(c, year)?;
                obs.push((aggregate_imbalance(n, g)?, g));
            }
        }
    }
    weighted_mean(&obs).map_err(|_| Error::Validation(format!("no valid observations in {year}")))
}

/// Trailing moving average: the value at year t averages the observations in
/// `[t - window + 1, t]`. Years with nothing in the window are omitted.
pub fn moving_average(series: &BTreeMap<i32, f64>, window: usize) -> Result<BTreeMap<i32, f64>> {
    if window == 0 {
        return Err(Error::invalid("moving-average window must be at least 1"));
    }
    let mut out = BTreeMap::new();
    let (Some(&first), Some(&last)) = (series.keys().next(), series.keys().next_back()) else {
        return Ok(out);
    };
    for t in first..=last {
        let lo = t - (window as i32 - 1);
        let vals: Vec<f64> = series.range(lo..=t).map(|(_, v)| *v).collect();
        if !vals.is_empty() {
            out.insert(t, vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    Ok(out)
}
