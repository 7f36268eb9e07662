//! Exact-fit calibration and baseline transformations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, powf};
use crate::model::{validate, CalibratedModel, CalibrationMode, Dims, EconomyData, Sector, TariffSchedule};
use crate::solver::{solve_counterfactual, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationOptions {
    pub mode: CalibrationMode,
    pub iceberg_bounds: (f64, f64),
    /// Used for service sectors whose elasticity is missing from the data.
    pub service_elasticity: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { mode: CalibrationMode::Preferences, iceberg_bounds: (1.0, 100.0), service_elasticity: 5.5 }
    }
}

impl CalibrationOptions {
    pub fn iceberg() -> Self {
        Self { mode: CalibrationMode::Iceberg, ..Self::default() }
    }

    fn check(&self) -> Result<()> {
        let (lo, hi) = self.iceberg_bounds;
        if !(lo >= 1.0 && hi >= lo) {
            return Err(Error::invalid(format!("iceberg bounds [{lo}, {hi}] must satisfy 1 <= lo <= hi")));
        }
        Ok(())
    }
}

fn prepared(data: &EconomyData, opts: &CalibrationOptions) -> Result<EconomyData> {
    opts.check()?;
    let mut data = data.clone();
    for sec in &mut data.sectors {
        if sec.is_service && !sec.elasticity.is_finite() {
            sec.elasticity = opts.service_elasticity;
        }
    }
    validate(&data).into_result()?;
    Ok(data)
}

/// Unit cost of sector output in `j` under unit wages: R / (R − Σ_k V).
fn unit_costs(data: &EconomyData) -> Result<Vec<f64>> {
    let d = data.dims();
    let mut out = vec![1.0; d.cs_len()];
    for j in 0..d.countries {
        for s in 0..d.sectors {
            let sales = data.sales(j, s);
            let used: f64 = (0..d.sectors).map(|k| data.io(j, s, k)).sum();
            if sales > 0.0 {
                let va = sales - used;
                if !(va > 0.0) {
                    let i = (0..d.countries).find(|&i| data.flow(i, j, s) > 0.0).unwrap_or(0);
                    return Err(Error::NegativeLabor { i, j, s });
                }
                out[d.cs(j, s)] = sales / va;
            } else if used > 0.0 {
                return Err(Error::NegativeLabor { i: j, j, s });
            }
        }
    }
    Ok(out)
}

/// Calibrates with `t_ij^s = 1` or with iceberg costs, per `opts.mode`.
pub fn calibrate(data: &EconomyData, opts: &CalibrationOptions) -> Result<CalibratedModel> {
    let data = prepared(data, opts)?;
    let iceberg = match opts.mode {
        CalibrationMode::Preferences => vec![1.0; data.dims().pair_len()],
        CalibrationMode::Iceberg => iceberg_costs(&data, opts.iceberg_bounds)?,
    };
    fit(&data, iceberg, opts.mode)
}

/// Iceberg-mode calibration regardless of `opts.mode`.
pub fn calibrate_iceberg(data: &EconomyData, opts: &CalibrationOptions) -> Result<CalibratedModel> {
    calibrate(data, &CalibrationOptions { mode: CalibrationMode::Iceberg, ..opts.clone() })
}

/// Iceberg costs attributing all bilateral asymmetry relative to the
/// importer's domestic flow to trade costs, clamped to `bounds`.
pub fn iceberg_costs(data: &EconomyData, bounds: (f64, f64)) -> Result<Vec<f64>> {
    let d = data.dims();
    let u = unit_costs(data)?;
    let mut t = vec![1.0; d.pair_len()];
    for i in 0..d.countries {
        for j in 0..d.countries {
            if i == j {
                continue;
            }
            for s in 0..d.sectors {
                let f = data.flow(i, j, s);
                if f <= 0.0 {
                    continue;
                }
                let domestic = data.flow(i, i, s);
                if !(domestic > 0.0) {
                    return Err(Error::invalid(format!(
                        "missing domestic flow for country {} sector {} (needed to anchor iceberg costs)",
                        data.countries[i], data.sectors[s].id
                    )));
                }
                let tau = data.tariffs.get(i, j, s);
                let ratio = tau * f / domestic;
                let sigma = data.sectors[s].elasticity;
                let raw = u[d.cs(i, s)] / u[d.cs(j, s)] / tau * powf(ratio, 1.0 / (1.0 - sigma));
                t[d.pair(i, j, s)] = raw.clamp(bounds.0, bounds.1);
            }
        }
    }
    Ok(t)
}

/// Fits all remaining parameters given iceberg costs.
fn fit(data: &EconomyData, iceberg: Vec<f64>, mode: CalibrationMode) -> Result<CalibratedModel> {
    let d = data.dims();
    let (nc, ns) = (d.countries, d.sectors);
    let u = unit_costs(data)?;

    // Labor (= value added at unit wages) per cell, output and prices.
    let mut labor = vec![0.0; d.pair_len()];
    let mut price = vec![0.0; d.pair_len()];
    let mut gamma = vec![0.0; d.pair_len()];
    for i in 0..nc {
        for s in 0..ns {
            let sigma = data.sectors[s].elasticity;
            let mut total = 0.0;
            for j in 0..nc {
                let idx = d.pair(i, j, s);
                let f = data.flows[idx];
                if f <= 0.0 {
                    continue;
                }
                let l = f / u[d.cs(j, s)];
                if !(l > 0.0) {
                    return Err(Error::NegativeLabor { i, j, s });
                }
                labor[idx] = l;
                let y = l / iceberg[idx];
                let p = data.tariffs.as_slice()[idx] * f / y;
                price[idx] = p;
                let g = p * powf(y, 1.0 / sigma);
                gamma[idx] = g;
                total += g;
            }
            if total > 0.0 {
                for j in 0..nc {
                    gamma[d.pair(i, j, s)] /= total;
                }
            }
        }
    }

    // Composite price indices.
    let mut p_sector = vec![1.0; d.cs_len()];
    for i in 0..nc {
        for s in 0..ns {
            let sigma = data.sectors[s].elasticity;
            let mut sum = 0.0;
            for j in 0..nc {
                let idx = d.pair(i, j, s);
                if gamma[idx] > 0.0 {
                    sum += powf(gamma[idx], sigma) * powf(price[idx], 1.0 - sigma);
                }
            }
            if sum > 0.0 {
                p_sector[d.cs(i, s)] = powf(sum, 1.0 / (1.0 - sigma));
            }
        }
    }

    let mut alpha = vec![0.0; d.io_len()];
    for j in 0..nc {
        for s in 0..ns {
            let lsum: f64 = (0..nc).map(|i| labor[d.pair(i, j, s)]).sum();
            for k in 0..ns {
                let v = data.io(j, s, k);
                if v > 0.0 {
                    if !(lsum > 0.0) {
                        return Err(Error::NegativeLabor { i: j, j, s });
                    }
                    alpha[d.io(j, s, k)] = v / (p_sector[d.cs(j, k)] * lsum);
                }
            }
        }
    }

    let deficits = data.deficits();
    let mut a = vec![0.0; d.cs_len()];
    let mut labor_supply = vec![0.0; nc];
    for i in 0..nc {
        let mut revenue = 0.0;
        let mut spend = vec![0.0; ns];
        for s in 0..ns {
            for j in 0..nc {
                let idx = d.pair(i, j, s);
                let f = data.flows[idx];
                let tau = data.tariffs.as_slice()[idx];
                spend[s] += tau * f;
                revenue += (tau - 1.0) * f;
            }
        }
        let intermediate: Vec<f64> = (0..ns).map(|k| (0..ns).map(|s| data.io(i, s, k)).sum()).collect();
        let income: f64 = spend.iter().sum::<f64>() - intermediate.iter().sum::<f64>();
        let l = income - revenue - deficits[i];
        if !(l > 0.0) || !(income > 0.0) {
            return Err(Error::InconsistentAggregates {
                country: i,
                detail: format!("income {income}, tariff revenue {revenue}, deficit {}, implied labor {l}", deficits[i]),
            });
        }
        labor_supply[i] = l;
        for s in 0..ns {
            let c = spend[s] - intermediate[s];
            if c < -1e-12 * spend[s].max(1.0) {
                return Err(Error::InconsistentAggregates {
                    country: i,
                    detail: format!("intermediate use of sector {s} exceeds its absorption"),
                });
            }
            a[d.cs(i, s)] = c.max(0.0) / income;
        }
        // Renormalize away rounding so the shares sum to one exactly.
        let total: f64 = a[i * ns..(i + 1) * ns].iter().sum();
        for s in 0..ns {
            a[d.cs(i, s)] /= total;
        }
    }

    Ok(CalibratedModel {
        countries: data.countries.clone(),
        sectors: data.sectors.clone(),
        gamma,
        a,
        alpha,
        labor: labor_supply,
        deficits,
        iceberg,
        productivity: vec![1.0; d.cs_len()],
        w0: vec![1.0; nc],
        baseline_tariffs: data.tariffs.clone(),
        baseline_flows: data.flows.clone(),
        baseline_io: data.io_usage.clone(),
        mode,
    })
}

/// Rebalances every country except `row` to zero aggregate deficit by scaling
/// its exports to `row` proportionally across sectors.
pub fn rebalance_row_exports(data: &EconomyData, row: usize) -> Result<EconomyData> {
    let d = data.dims();
    if row >= d.countries {
        return Err(Error::invalid("rest-of-world index out of range"));
    }
    let deficits = data.deficits();
    let mut out = data.clone();
    for j in 0..d.countries {
        if j == row || deficits[j] == 0.0 {
            continue;
        }
        let exports: f64 = (0..d.sectors).map(|s| data.flow(row, j, s)).sum();
        if !(exports > 0.0) {
            return Err(Error::invalid(format!(
                "country {} has no exports to the rest of the world but a deficit of {}",
                data.countries[j], deficits[j]
            )));
        }
        for s in 0..d.sectors {
            let x = data.flow(row, j, s);
            let v = x + deficits[j] * x / exports;
            if v < 0.0 {
                return Err(Error::invalid(format!(
                    "surplus of {} exceeds its exports to the rest of the world",
                    data.countries[j]
                )));
            }
            out.set_flow(row, j, s, v);
        }
    }
    Ok(out)
}

/// Data implied by an equilibrium of `model` under `tariffs`.
fn equilibrium_data(model: &CalibratedModel, tariffs: &TariffSchedule, opts: &SolverOptions) -> Result<EconomyData> {
    let eq = solve_counterfactual(model, tariffs, opts)?;
    let dims = model.dims();
    Ok(EconomyData {
        countries: model.countries.clone(),
        sectors: model.sectors.clone(),
        flows: eq.flows(tariffs),
        io_usage: eq.io_usage(dims),
        tariffs: tariffs.clone(),
        gdp: eq.income.clone(),
    })
}

/// Solves a counterfactual (new tariffs and/or deficits) and calibrates a
/// fresh model that fits it exactly. Iceberg costs are carried over.
pub fn rebaseline(
    model: &CalibratedModel,
    tariffs: Option<&TariffSchedule>,
    deficits: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<CalibratedModel> {
    let mut m = model.clone();
    if let Some(dv) = deficits {
        if dv.len() != m.deficits.len() {
            return Err(Error::invalid("deficit vector length differs from country count"));
        }
        m.deficits = dv.to_vec();
    }
    let tariffs = tariffs.unwrap_or(&model.baseline_tariffs);
    let data = equilibrium_data(&m, tariffs, opts)?;
    validate(&data).into_result()?;
    fit(&data, model.iceberg.clone(), model.mode)
}

/// Outcome of [`eliminate_bilateral_deficit`].
#[derive(Debug, Clone)]
pub struct DeficitElimination {
    pub model: CalibratedModel,
    /// The adjusted parameters before refitting: transfers moved and
    /// importer `j`'s taste shares rescaled.
    pub scaled: CalibratedModel,
    pub zeta: f64,
    /// Bilateral deficit of `i` with `j` removed from the aggregate deficits.
    pub removed: f64,
}

/// Scales importer `j`'s taste shares for goods from `i` by ζ (and its other
/// origins by a per-sector η keeping each share sum at one) until `i` and `j`
/// have balanced bilateral trade, after moving their initial bilateral
/// deficit out of the aggregate deficits. Returns the model rebaselined on
/// the resulting equilibrium.
pub fn eliminate_bilateral_deficit(
    model: &CalibratedModel,
    i: usize,
    j: usize,
    opts: &SolverOptions,
) -> Result<DeficitElimination> {
    let d = model.dims();
    if i == j || i >= d.countries || j >= d.countries {
        return Err(Error::invalid("eliminating a bilateral deficit needs two distinct countries"));
    }
    let traded: Vec<usize> = (0..d.sectors).filter(|&s| model.gamma[d.pair(j, i, s)] > 0.0).collect();
    if traded.is_empty() {
        return Err(Error::invalid("the pair does not trade in any sector"));
    }
    let removed: f64 = (0..d.sectors)
        .map(|s| model.baseline_flows[d.pair(i, j, s)] - model.baseline_flows[d.pair(j, i, s)])
        .sum();
    let mut base = model.clone();
    base.deficits[i] -= removed;
    base.deficits[j] += removed;

    let gross: f64 = (0..d.sectors)
        .map(|s| model.baseline_flows[d.pair(i, j, s)] + model.baseline_flows[d.pair(j, i, s)])
        .sum();
    let tol = 1e-8 * gross;

    let scaled = |zeta: f64| -> CalibratedModel {
        let mut m = base.clone();
        for &s in &traded {
            let g = base.gamma[d.pair(j, i, s)];
            let eta = if g < 1.0 { (1.0 - zeta * g) / (1.0 - g) } else { 0.0 };
            for o in 0..d.countries {
                let idx = d.pair(j, o, s);
                m.gamma[idx] = if o == i { zeta * g } else { eta * base.gamma[idx] };
            }
        }
        m
    };
    let bilateral = |zeta: f64| -> Result<f64> {
        let m = scaled(zeta);
        let eq = solve_counterfactual(&m, &m.baseline_tariffs, opts)?;
        let f = eq.flows(&m.baseline_tariffs);
        Ok((0..d.sectors).map(|s| f[d.pair(i, j, s)] - f[d.pair(j, i, s)]).sum())
    };

    let max_share = traded.iter().map(|&s| base.gamma[d.pair(j, i, s)]).fold(0.0, f64::max);
    let lo0 = 0.01;
    let hi0 = if max_share < 1.0 { 100.0f64.min(1.0 / max_share) } else { 1.0 };
    let (mut lo, mut hi) = (lo0, hi0);
    let f1 = bilateral(1.0)?;
    let mut zeta = 1.0;
    if abs(f1) > tol {
        let f_lo = bilateral(lo)?;
        let f_hi = bilateral(hi)?;
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::Bracket { lo, hi });
        }
        let mut found = false;
        for _ in 0..200 {
            zeta = 0.5 * (lo + hi);
            let f = bilateral(zeta)?;
            if abs(f) <= tol {
                found = true;
                break;
            }
            if f.signum() == f_lo.signum() {
                lo = zeta;
            } else {
                hi = zeta;
            }
        }
        if !found {
            return Err(Error::Bracket { lo: lo0, hi: hi0 });
        }
    }
    let m = scaled(zeta);
    let data = equilibrium_data(&m, &m.baseline_tariffs, opts)?;
    let model = fit(&data, m.iceberg.clone(), m.mode)?;
    Ok(DeficitElimination { model, scaled: m, zeta, removed })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregationOptions {
    /// Average member tariff factors with equal weights instead of trade weights.
    pub simple_average_tariffs: bool,
    /// Composite elasticities by target id, replacing the trade-weighted mean.
    pub elasticity_override: BTreeMap<String, f64>,
}

fn targets(sources: &[String], map: &BTreeMap<String, String>) -> Result<(Vec<String>, Vec<usize>)> {
    let mut order: Vec<String> = Vec::new();
    let mut assign = Vec::with_capacity(sources.len());
    for id in sources {
        let t = map.get(id).ok_or_else(|| Error::invalid(format!("id {id} is not mapped")))?;
        let pos = match order.iter().position(|o| o == t) {
            Some(p) => p,
            None => {
                order.push(t.clone());
                order.len() - 1
            }
        };
        assign.push(pos);
    }
    Ok((order, assign))
}

/// Sums flows and IO into composite sectors and regions. Target ids are
/// ordered by first appearance in the source order.
pub fn aggregate(
    data: &EconomyData,
    sector_map: &BTreeMap<String, String>,
    region_map: &BTreeMap<String, String>,
    opts: &AggregationOptions,
) -> Result<EconomyData> {
    let sector_ids: Vec<String> = data.sectors.iter().map(|s| s.id.clone()).collect();
    let (sec_names, sec_of) = targets(&sector_ids, sector_map)?;
    let (reg_names, reg_of) = targets(&data.countries, region_map)?;
    let src = data.dims();
    let dst = Dims::new(reg_names.len(), sec_names.len());

    let mut sectors: Vec<Sector> = sec_names
        .iter()
        .enumerate()
        .map(|(t, id)| Sector {
            id: id.clone(),
            name: id.clone(),
            elasticity: 0.0,
            is_service: (0..src.sectors).filter(|&s| sec_of[s] == t).all(|s| data.sectors[s].is_service),
        })
        .collect();
    // Trade-weighted elasticities; equal weights if a composite never trades.
    let mut wsum = vec![0.0; dst.sectors];
    let mut count = vec![0usize; dst.sectors];
    let mut plain = vec![0.0; dst.sectors];
    for s in 0..src.sectors {
        let t = sec_of[s];
        let trade: f64 = (0..src.countries).map(|j| data.sales(j, s)).sum();
        sectors[t].elasticity += trade * data.sectors[s].elasticity;
        wsum[t] += trade;
        plain[t] += data.sectors[s].elasticity;
        count[t] += 1;
    }
    for t in 0..dst.sectors {
        sectors[t].elasticity = if wsum[t] > 0.0 { sectors[t].elasticity / wsum[t] } else { plain[t] / count[t] as f64 };
        if let Some(&e) = opts.elasticity_override.get(&sec_names[t]) {
            sectors[t].elasticity = e;
        }
    }

    let mut out = EconomyData::empty(reg_names, sectors);
    let mut tau_num = vec![0.0; dst.pair_len()];
    let mut tau_den = vec![0.0; dst.pair_len()];
    for idx in 0..src.pair_len() {
        let (i, j, s) = src.unpair(idx);
        let t = dst.pair(reg_of[i], reg_of[j], sec_of[s]);
        let f = data.flows[idx];
        out.flows[t] += f;
        let w = if opts.simple_average_tariffs { 1.0 } else { f };
        tau_num[t] += w * data.tariffs.as_slice()[idx];
        tau_den[t] += w;
    }
    // Composites without trade fall back to equal weights.
    let mut simple_num = vec![0.0; dst.pair_len()];
    let mut simple_den = vec![0.0; dst.pair_len()];
    for idx in 0..src.pair_len() {
        let (i, j, s) = src.unpair(idx);
        let t = dst.pair(reg_of[i], reg_of[j], sec_of[s]);
        simple_num[t] += data.tariffs.as_slice()[idx];
        simple_den[t] += 1.0;
    }
    for t in 0..dst.pair_len() {
        let (i, j, s) = dst.unpair(t);
        let tau = if i == j || out.sectors[s].is_service {
            1.0
        } else if tau_den[t] > 0.0 {
            tau_num[t] / tau_den[t]
        } else {
            simple_num[t] / simple_den[t]
        };
        out.tariffs.set(i, j, s, tau);
    }
    for j in 0..src.countries {
        for s in 0..src.sectors {
            for k in 0..src.sectors {
                let t = dst.io(reg_of[j], sec_of[s], sec_of[k]);
                out.io_usage[t] += data.io(j, s, k);
            }
        }
    }
    out.gdp = vec![0.0; dst.countries];
    for i in 0..src.countries {
        out.gdp[reg_of[i]] += data.gdp[i];
    }
    Ok(out)
}
