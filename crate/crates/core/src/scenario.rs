//! Synthetic symmetric worlds with controlled bilateral and aggregate deficits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{EconomyData, Sector};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSpec {
    pub n_countries: usize,
    pub n_goods_sectors: usize,
    pub include_services: bool,
    pub include_io: bool,
    /// Share of gross output bought as intermediates, spread evenly over inputs.
    pub io_intensity: f64,
    /// Total expenditure per country.
    pub expenditure_base: f64,
    pub elasticity: f64,
    /// Bilateral deficit of `deficit_pair.0` with `deficit_pair.1`.
    pub deficit: f64,
    pub deficit_pair: (usize, usize),
    /// Offset the bilateral deficit through this third country so that no
    /// aggregate imbalance arises.
    pub balance_via: Option<usize>,
    /// Extra one-directional adjustments `(country, counterpart, amount)`.
    pub offsets: Vec<(usize, usize, f64)>,
}

impl ScenarioSpec {
    pub fn new(n_countries: usize, n_goods_sectors: usize) -> Self {
        Self {
            n_countries,
            n_goods_sectors,
            include_services: false,
            include_io: false,
            io_intensity: 0.3,
            expenditure_base: 100.0,
            elasticity: 5.5,
            deficit: 0.0,
            deficit_pair: (0, 1),
            balance_via: None,
            offsets: Vec::new(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_countries < 2 {
            return Err(Error::invalid("a scenario needs at least two countries"));
        }
        if self.n_goods_sectors == 0 {
            return Err(Error::invalid("a scenario needs at least one goods sector"));
        }
        if !(self.elasticity > 1.0) {
            return Err(Error::invalid("elasticity must exceed one"));
        }
        if !(self.expenditure_base > 0.0) {
            return Err(Error::invalid("expenditure base must be positive"));
        }
        if !(0.0..1.0).contains(&self.io_intensity) {
            return Err(Error::invalid("io intensity must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Every country spends `expenditure_base` split equally over all origins
/// (itself included) and sectors, at zero tariffs.
pub fn symmetric_world(spec: &ScenarioSpec) -> Result<EconomyData> {
    spec.check()?;
    let countries = (1..=spec.n_countries).map(|k| format!("C{k}")).collect();
    let mut sectors: Vec<Sector> = (1..=spec.n_goods_sectors).map(|k| Sector::goods(format!("G{k}"), spec.elasticity)).collect();
    if spec.include_services {
        sectors.push(Sector::service("S1", spec.elasticity));
    }
    let mut data = EconomyData::empty(countries, sectors);
    let d = data.dims();
    let cell = spec.expenditure_base / (d.countries * d.sectors) as f64;
    data.flows = vec![cell; d.pair_len()];
    if spec.include_io {
        for j in 0..d.countries {
            for s in 0..d.sectors {
                let per_input = spec.io_intensity * data.sales(j, s) / d.sectors as f64;
                for k in 0..d.sectors {
                    let idx = d.io(j, s, k);
                    data.io_usage[idx] = per_input;
                }
            }
        }
    }
    data.gdp = vec![spec.expenditure_base; d.countries];
    Ok(data)
}

fn goods_sectors(data: &EconomyData) -> Vec<usize> {
    crate::model::taxable_sector_indices(&data.sectors)
}

/// Adds `amount` to flow(importer ← exporter), spread evenly over goods sectors.
fn shift(data: &mut EconomyData, importer: usize, exporter: usize, amount: f64) -> Result<()> {
    let goods = goods_sectors(data);
    if goods.is_empty() {
        return Err(Error::invalid("no goods sectors to carry the deficit"));
    }
    let per = amount / goods.len() as f64;
    for s in goods {
        let v = data.flow(importer, exporter, s) + per;
        if v < 0.0 {
            return Err(Error::invalid("deficit too large for scenario"));
        }
        data.set_flow(importer, exporter, s, v);
    }
    Ok(())
}

fn check_pair(data: &EconomyData, i: usize, j: usize) -> Result<()> {
    let n = data.countries.len();
    if i >= n || j >= n || i == j {
        return Err(Error::invalid(format!("invalid country pair ({i}, {j})")));
    }
    Ok(())
}

/// Gives `i` a bilateral deficit `d` with `j`: exports j→i rise by d/2 and
/// exports i→j fall by d/2. With `balance_via = Some(k)` the imbalance is
/// offset through `k` so that aggregate deficits stay zero.
pub fn inject_bilateral_deficit(
    data: &EconomyData,
    i: usize,
    j: usize,
    d: f64,
    balance_via: Option<usize>,
) -> Result<EconomyData> {
    check_pair(data, i, j)?;
    let mut out = data.clone();
    if d == 0.0 {
        return Ok(out);
    }
    shift(&mut out, i, j, d / 2.0)?;
    shift(&mut out, j, i, -d / 2.0)?;
    if let Some(k) = balance_via {
        check_pair(data, i, k)?;
        check_pair(data, j, k)?;
        shift(&mut out, i, k, -d / 2.0)?;
        shift(&mut out, k, i, d / 2.0)?;
        shift(&mut out, j, k, d / 2.0)?;
        shift(&mut out, k, j, -d / 2.0)?;
    }
    Ok(out)
}

/// Gives `i` an additional bilateral deficit `amount` with `k` (negative for
/// a surplus), half through each direction of trade.
pub fn inject_aggregate_offset(data: &EconomyData, i: usize, k: usize, amount: f64) -> Result<EconomyData> {
    check_pair(data, i, k)?;
    let mut out = data.clone();
    if amount == 0.0 {
        return Ok(out);
    }
    shift(&mut out, i, k, amount / 2.0)?;
    shift(&mut out, k, i, -amount / 2.0)?;
    Ok(out)
}

/// Symmetric world with the requested deficit and offsets applied.
pub fn generate(spec: &ScenarioSpec) -> Result<EconomyData> {
    let base = symmetric_world(spec)?;
    let (i, j) = spec.deficit_pair;
    let mut data = inject_bilateral_deficit(&base, i, j, spec.deficit, spec.balance_via)?;
    for &(c, k, amount) in &spec.offsets {
        data = inject_aggregate_offset(&data, c, k, amount)?;
    }
    Ok(data)
}
