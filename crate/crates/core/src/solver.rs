//! Counterfactual equilibria of the calibrated Armington model.
//!
//! For given wages the sector price indices solve a monotone fixed point in
//! unit costs; expenditures then follow from a linear system that is iterated
//! on intermediate demand. Wages are found by a damped Newton method on the
//! labor-market residuals of J − 1 countries, one degree of freedom being
//! pinned by the numeraire.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::math::{abs, exp, ln, powf};
use crate::model::{deficits_from_flows, CalibratedModel, Diagnostics, Dims, Equilibrium, TariffSchedule, WelfareReport};

/// What fixes the nominal scale of an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Numeraire {
    /// Σ_i w_i L_i held at its baseline value.
    WorldLaborIncome,
    /// The wage of one country held at its baseline value.
    Wage(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SolverOptions {
    pub tol_outer: f64,
    pub max_outer: usize,
    pub tol_inner: f64,
    pub max_inner: usize,
    /// Initial Newton step length.
    pub damping: f64,
    pub numeraire: Numeraire,
    /// Multiplies the numeraire target and the nominal transfers together.
    pub numeraire_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_outer: 1e-10,
            max_outer: 100,
            tol_inner: 1e-12,
            max_inner: 10_000,
            damping: 0.5,
            numeraire: Numeraire::WorldLaborIncome,
            numeraire_scale: 1.0,
        }
    }
}

/// Intermediate state of the model at a given wage vector.
struct State {
    w: Vec<f64>,
    p: Vec<f64>,
    unit_cost: Vec<f64>,
    /// Expenditure shares π_ij^s, pair layout.
    pi: Vec<f64>,
    x: Vec<f64>,
    income: Vec<f64>,
    revenue: Vec<f64>,
    residual: Vec<f64>,
    inner_iterations: usize,
}

struct Context<'a> {
    model: &'a CalibratedModel,
    tariffs: &'a TariffSchedule,
    opts: &'a SolverOptions,
    dims: Dims,
    /// γ^σ cached per pair.
    gamma_sigma: Vec<f64>,
    /// τ·t per pair.
    trade_cost: Vec<f64>,
    deficits: Vec<f64>,
    has_io: bool,
}

impl<'a> Context<'a> {
    fn new(model: &'a CalibratedModel, tariffs: &'a TariffSchedule, opts: &'a SolverOptions) -> Result<Self> {
        let dims = model.dims();
        if tariffs.dims() != dims {
            return Err(Error::invalid("tariff schedule dimensions differ from model"));
        }
        if let Some(bad) = tariffs.as_slice().iter().find(|t| !(t.is_finite() && **t >= 1.0)) {
            return Err(Error::invalid(alloc::format!("tariff factor {bad} below one")));
        }
        let gamma_sigma = (0..dims.pair_len())
            .map(|idx| {
                let g = model.gamma[idx];
                if g > 0.0 {
                    powf(g, model.sigma(idx % dims.sectors))
                } else {
                    0.0
                }
            })
            .collect();
        let trade_cost = tariffs.as_slice().iter().zip(&model.iceberg).map(|(tau, t)| tau * t).collect();
        let deficits = model.deficits.iter().map(|d| d * opts.numeraire_scale).collect();
        Ok(Self { model, tariffs, opts, dims, gamma_sigma, trade_cost, deficits, has_io: model.has_io() })
    }

    fn wages_from_logs(&self, x: &[f64]) -> Vec<f64> {
        let m = self.model;
        let mut rel = Vec::with_capacity(self.dims.countries);
        rel.push(1.0);
        rel.extend(x.iter().map(|v| exp(*v)));
        let kappa = match self.opts.numeraire {
            Numeraire::WorldLaborIncome => {
                let target: f64 = m.w0.iter().zip(&m.labor).map(|(w, l)| w * l).sum::<f64>() * self.opts.numeraire_scale;
                target / rel.iter().zip(&m.labor).map(|(r, l)| r * l).sum::<f64>()
            }
            Numeraire::Wage(c) => m.w0[c] * self.opts.numeraire_scale / rel[c],
        };
        rel.iter().map(|r| r * kappa).collect()
    }

    /// Sector price fixed point for fixed wages. `p` holds the starting
    /// guess and receives the solution.
    fn prices(&self, w: &[f64], p: &mut [f64], unit_cost: &mut [f64], pi_sum: &mut [f64]) -> Result<usize> {
        let d = self.dims;
        let m = self.model;
        let mut next = vec![0.0; d.cs_len()];
        for it in 1..=self.opts.max_inner {
            for j in 0..d.countries {
                for s in 0..d.sectors {
                    let mut u = w[j] / m.productivity[d.cs(j, s)];
                    if self.has_io {
                        for k in 0..d.sectors {
                            let a = m.alpha[d.io(j, s, k)];
                            if a != 0.0 {
                                u += p[d.cs(j, k)] * a;
                            }
                        }
                    }
                    unit_cost[d.cs(j, s)] = u;
                }
            }
            let mut change: f64 = 0.0;
            for i in 0..d.countries {
                for s in 0..d.sectors {
                    let one_minus = 1.0 - m.sigma(s);
                    let mut sum = 0.0;
                    for j in 0..d.countries {
                        let idx = d.pair(i, j, s);
                        let gs = self.gamma_sigma[idx];
                        if gs > 0.0 {
                            sum += gs * powf(self.trade_cost[idx] * unit_cost[d.cs(j, s)], one_minus);
                        }
                    }
                    let cs = d.cs(i, s);
                    pi_sum[cs] = sum;
                    // Sectors with no active supplier keep a placeholder price; nothing is spent on them.
                    let v = if sum > 0.0 { powf(sum, 1.0 / one_minus) } else { 1.0 };
                    next[cs] = v;
                    change = change.max(abs(v - p[cs]) / v);
                }
            }
            p.copy_from_slice(&next);
            if !self.has_io || change < self.opts.tol_inner {
                if self.has_io {
                    // Unit costs consistent with the final prices.
                    for j in 0..d.countries {
                        for s in 0..d.sectors {
                            let mut u = w[j] / m.productivity[d.cs(j, s)];
                            for k in 0..d.sectors {
                                let a = m.alpha[d.io(j, s, k)];
                                if a != 0.0 {
                                    u += p[d.cs(j, k)] * a;
                                }
                            }
                            unit_cost[d.cs(j, s)] = u;
                        }
                    }
                }
                return Ok(it);
            }
            if !change.is_finite() {
                return Err(Error::InnerNonConvergence { iterations: it, change });
            }
        }
        Err(Error::InnerNonConvergence { iterations: self.opts.max_inner, change: f64::NAN })
    }

    fn evaluate(&self, x: &[f64], p_guess: &[f64]) -> Result<State> {
        let d = self.dims;
        let m = self.model;
        let w = self.wages_from_logs(x);
        let mut p = p_guess.to_vec();
        let mut unit_cost = vec![0.0; d.cs_len()];
        let mut pi_sum = vec![0.0; d.cs_len()];
        let inner_iterations = self.prices(&w, &mut p, &mut unit_cost, &mut pi_sum)?;

        let mut pi = vec![0.0; d.pair_len()];
        for i in 0..d.countries {
            for s in 0..d.sectors {
                let sum = pi_sum[d.cs(i, s)];
                if sum <= 0.0 {
                    continue;
                }
                let one_minus = 1.0 - m.sigma(s);
                for j in 0..d.countries {
                    let idx = d.pair(i, j, s);
                    let gs = self.gamma_sigma[idx];
                    if gs > 0.0 {
                        pi[idx] = gs * powf(self.trade_cost[idx] * unit_cost[d.cs(j, s)], one_minus) / sum;
                    }
                }
            }
        }

        // Tariff share of expenditure per (importer, sector).
        let mut tariff_share = vec![0.0; d.cs_len()];
        for i in 0..d.countries {
            for s in 0..d.sectors {
                let mut b = 0.0;
                for j in 0..d.countries {
                    let idx = d.pair(i, j, s);
                    let tau = self.tariffs.as_slice()[idx];
                    if tau != 1.0 {
                        b += pi[idx] * (tau - 1.0) / tau;
                    }
                }
                tariff_share[d.cs(i, s)] = b;
            }
        }

        let mut inter = vec![0.0; d.cs_len()];
        let mut x_exp = vec![0.0; d.cs_len()];
        let mut income = vec![0.0; d.countries];
        let max_iter = if self.has_io { self.opts.max_inner } else { 1 };
        let mut converged = !self.has_io;
        for _ in 0..max_iter {
            for i in 0..d.countries {
                let mut num = w[i] * m.labor[i] + self.deficits[i];
                let mut den = 1.0;
                for s in 0..d.sectors {
                    let cs = d.cs(i, s);
                    num += tariff_share[cs] * inter[cs];
                    den -= tariff_share[cs] * m.a[cs];
                }
                let inc = num / den;
                if !(inc > 0.0) {
                    return Err(Error::NegativeIncome { country: i });
                }
                income[i] = inc;
                for s in 0..d.sectors {
                    let cs = d.cs(i, s);
                    x_exp[cs] = m.a[cs] * inc + inter[cs];
                }
            }
            if !self.has_io {
                break;
            }
            let mut next = vec![0.0; d.cs_len()];
            for j in 0..d.countries {
                for s in 0..d.sectors {
                    let mut sales = 0.0;
                    for i in 0..d.countries {
                        let idx = d.pair(i, j, s);
                        sales += pi[idx] * x_exp[d.cs(i, s)] / self.tariffs.as_slice()[idx];
                    }
                    if sales == 0.0 {
                        continue;
                    }
                    let u = unit_cost[d.cs(j, s)];
                    for k in 0..d.sectors {
                        let a = m.alpha[d.io(j, s, k)];
                        if a != 0.0 {
                            next[d.cs(j, k)] += p[d.cs(j, k)] * a / u * sales;
                        }
                    }
                }
            }
            let scale = x_exp.iter().fold(0.0f64, |acc, v| acc.max(*v));
            let change = next.iter().zip(&inter).fold(0.0f64, |acc, (a, b)| acc.max(abs(a - b)));
            inter = next;
            if change <= 1e-15 * scale {
                converged = true;
                // Refresh expenditures with the converged intermediate demand.
                for i in 0..d.countries {
                    let mut num = w[i] * m.labor[i] + self.deficits[i];
                    let mut den = 1.0;
                    for s in 0..d.sectors {
                        let cs = d.cs(i, s);
                        num += tariff_share[cs] * inter[cs];
                        den -= tariff_share[cs] * m.a[cs];
                    }
                    income[i] = num / den;
                    for s in 0..d.sectors {
                        let cs = d.cs(i, s);
                        x_exp[cs] = m.a[cs] * income[i] + inter[cs];
                    }
                }
                break;
            }
        }
        if !converged {
            return Err(Error::InnerNonConvergence { iterations: max_iter, change: f64::NAN });
        }

        let revenue: Vec<f64> = (0..d.countries)
            .map(|i| (0..d.sectors).map(|s| tariff_share[d.cs(i, s)] * x_exp[d.cs(i, s)]).sum())
            .collect();

        let mut demand = vec![0.0; d.countries];
        for i in 0..d.countries {
            for j in 0..d.countries {
                for s in 0..d.sectors {
                    let idx = d.pair(i, j, s);
                    if pi[idx] > 0.0 {
                        let sales = pi[idx] * x_exp[d.cs(i, s)] / self.tariffs.as_slice()[idx];
                        demand[j] += sales / (unit_cost[d.cs(j, s)] * m.productivity[d.cs(j, s)]);
                    }
                }
            }
        }
        let residual = demand.iter().zip(&m.labor).map(|(ld, l)| ld / l - 1.0).collect();
        Ok(State { w, p, unit_cost, pi, x: x_exp, income, revenue, residual, inner_iterations })
    }

    fn residual_norm(state: &State) -> f64 {
        state.residual[1..].iter().fold(0.0, |acc, r| acc.max(abs(*r)))
    }

    fn solve(&self) -> Result<Equilibrium> {
        let d = self.dims;
        let n = d.countries - 1;
        let m = self.model;
        let mut x: Vec<f64> = (1..d.countries).map(|j| ln(m.w0[j] / m.w0[0])).collect();
        let p0: Vec<f64> = (0..d.cs_len()).map(|_| self.opts.numeraire_scale).collect();
        let mut state = self.evaluate(&x, &p0)?;
        let mut norm = Self::residual_norm(&state);
        let mut inner_total = state.inner_iterations;
        let mut step = self.opts.damping;
        let mut iterations = 0;
        while norm >= self.opts.tol_outer {
            if iterations >= self.opts.max_outer {
                return Err(Error::OuterNonConvergence { iterations, residual: norm });
            }
            iterations += 1;

            let h = 1e-6;
            let mut jac = vec![0.0; n * n];
            for c in 0..n {
                let mut xp = x.clone();
                xp[c] += h;
                let sp = self.evaluate(&xp, &state.p)?;
                inner_total += sp.inner_iterations;
                for r in 0..n {
                    jac[r * n + c] = (sp.residual[r + 1] - state.residual[r + 1]) / h;
                }
            }
            let rhs: Vec<f64> = state.residual[1..].iter().map(|r| -r).collect();
            let dx = solve_dense(jac, rhs)?;

            let mut lambda = step;
            loop {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + lambda * b).collect();
                let accepted = match self.evaluate(&trial, &state.p) {
                    Ok(s) => {
                        inner_total += s.inner_iterations;
                        let trial_norm = Self::residual_norm(&s);
                        if trial_norm < (1.0 - 1e-4 * lambda) * norm || trial_norm < self.opts.tol_outer {
                            x = trial;
                            state = s;
                            norm = trial_norm;
                            true
                        } else {
                            false
                        }
                    }
                    Err(Error::NegativeIncome { .. }) => false,
                    Err(e) => return Err(e),
                };
                if accepted {
                    step = (2.0 * lambda).min(1.0);
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-12 {
                    return Err(Error::OuterNonConvergence { iterations, residual: norm });
                }
            }
        }
        Ok(self.assemble(state, iterations, inner_total))
    }

    fn assemble(&self, st: State, outer: usize, inner: usize) -> Equilibrium {
        let d = self.dims;
        let m = self.model;
        let tau = self.tariffs.as_slice();
        let mut p_bilateral = vec![0.0; d.pair_len()];
        let mut y_bilateral = vec![0.0; d.pair_len()];
        let mut labor = vec![0.0; d.pair_len()];
        let mut flows = vec![0.0; d.pair_len()];
        for idx in 0..d.pair_len() {
            let (i, j, s) = d.unpair(idx);
            let pij = self.trade_cost[idx] * st.unit_cost[d.cs(j, s)];
            p_bilateral[idx] = pij;
            if st.pi[idx] > 0.0 {
                let spend = st.pi[idx] * st.x[d.cs(i, s)];
                y_bilateral[idx] = spend / pij;
                flows[idx] = spend / tau[idx];
                labor[idx] = flows[idx] / (st.unit_cost[d.cs(j, s)] * m.productivity[d.cs(j, s)]);
            }
        }
        let mut inputs = vec![0.0; d.io_len()];
        for j in 0..d.countries {
            for s in 0..d.sectors {
                let lsum: f64 = (0..d.countries).map(|i| labor[d.pair(i, j, s)]).sum();
                for k in 0..d.sectors {
                    inputs[d.io(j, s, k)] = m.alpha[d.io(j, s, k)] * m.productivity[d.cs(j, s)] * lsum;
                }
            }
        }
        let mut y_sector = vec![0.0; d.cs_len()];
        let mut consumption = vec![0.0; d.cs_len()];
        let mut goods_residual: f64 = 0.0;
        for i in 0..d.countries {
            for k in 0..d.sectors {
                let cs = d.cs(i, k);
                if st.x[cs] > 0.0 {
                    y_sector[cs] = st.x[cs] / st.p[cs];
                    consumption[cs] = m.a[cs] * st.income[i] / st.p[cs];
                }
                let used: f64 = (0..d.sectors).map(|s| inputs[d.io(i, s, k)]).sum();
                if y_sector[cs] > 0.0 {
                    goods_residual = goods_residual.max(abs(consumption[cs] + used - y_sector[cs]) / y_sector[cs]);
                }
            }
        }
        let labor_residual = st.residual.iter().fold(0.0f64, |acc, r| acc.max(abs(*r)));
        Equilibrium {
            deficits_realized: deficits_from_flows(d, &flows),
            w: st.w,
            p_sector: st.p,
            p_bilateral,
            y_bilateral,
            y_sector,
            labor,
            inputs,
            consumption,
            tariff_revenue: st.revenue,
            income: st.income,
            unit_cost: st.unit_cost,
            diagnostics: Diagnostics { outer_iterations: outer, inner_iterations: inner, labor_residual, goods_residual },
        }
    }
}

/// Solves the equilibrium of `model` under `tariffs`.
pub fn solve_counterfactual(model: &CalibratedModel, tariffs: &TariffSchedule, opts: &SolverOptions) -> Result<Equilibrium> {
    if let Numeraire::Wage(c) = opts.numeraire {
        if c >= model.countries.len() {
            return Err(Error::invalid("numeraire country out of range"));
        }
    }
    Context::new(model, tariffs, opts)?.solve()
}

/// Equilibrium at the calibrated tariffs.
pub fn baseline_equilibrium(model: &CalibratedModel, opts: &SolverOptions) -> Result<Equilibrium> {
    solve_counterfactual(model, &model.baseline_tariffs, opts)
}

/// Consumption-equivalent welfare of `counterfactual` relative to `reference`.
pub fn welfare(model: &CalibratedModel, reference: &Equilibrium, counterfactual: &Equilibrium) -> Result<WelfareReport> {
    let d = model.dims();
    let mut beta = Vec::with_capacity(d.countries);
    for i in 0..d.countries {
        let mut log_b = 0.0;
        for s in 0..d.sectors {
            let cs = d.cs(i, s);
            let a = model.a[cs];
            if a > 0.0 {
                let (c0, c1) = (reference.consumption[cs], counterfactual.consumption[cs]);
                if !(c0 > 0.0 && c1 > 0.0) {
                    return Err(Error::invalid(alloc::format!("zero consumption in country {i}, sector {s}")));
                }
                log_b += a * ln(c1 / c0);
            }
        }
        beta.push(exp(log_b));
    }
    Ok(WelfareReport {
        w: counterfactual.welfare(model),
        delta_pct: beta.iter().map(|b| 100.0 * (b - 1.0)).collect(),
        beta,
    })
}

/// The model with all trade between `country` and `partner` shut down and
/// their bilateral transfer removed from both deficits.
pub fn autarky_model(model: &CalibratedModel, country: usize, partner: usize) -> CalibratedModel {
    let d = model.dims();
    let mut m = model.clone();
    let mut net = 0.0;
    for s in 0..d.sectors {
        net += model.baseline_flows[d.pair(country, partner, s)] - model.baseline_flows[d.pair(partner, country, s)];
        m.gamma[d.pair(country, partner, s)] = 0.0;
        m.gamma[d.pair(partner, country, s)] = 0.0;
    }
    m.deficits[country] -= net;
    m.deficits[partner] += net;
    m
}

/// Welfare levels in the pair-autarky equilibrium under `tariffs`.
pub fn autarky_welfare(
    model: &CalibratedModel,
    country: usize,
    partner: usize,
    tariffs: &TariffSchedule,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    if country == partner {
        return Err(Error::invalid("autarky requires two distinct countries"));
    }
    let m = autarky_model(model, country, partner);
    Ok(solve_counterfactual(&m, tariffs, opts)?.welfare(&m))
}

/// General-equilibrium trade elasticity from a 1e-4 iceberg perturbation.
/// Returned with its natural (negative) sign.
pub fn numerical_elasticity(model: &CalibratedModel, i: usize, j: usize, s: usize, opts: &SolverOptions) -> Result<f64> {
    let d = model.dims();
    if i >= d.countries || j >= d.countries || s >= d.sectors {
        return Err(Error::invalid("cell out of range"));
    }
    let idx = d.pair(i, j, s);
    if !(model.gamma[idx] > 0.0) {
        return Err(Error::invalid("elasticity requested for a cell with no trade"));
    }
    let base = baseline_equilibrium(model, opts)?;
    let mut perturbed = model.clone();
    perturbed.iceberg[idx] += 1e-4;
    let cf = baseline_equilibrium(&perturbed, opts)?;
    let dp = ln(cf.p_bilateral[idx]) - ln(base.p_bilateral[idx]);
    if abs(dp) < 1e-14 {
        return Err(Error::invalid("perturbation left the price unchanged"));
    }
    Ok((ln(cf.y_bilateral[idx]) - ln(base.y_bilateral[idx])) / dp)
}
