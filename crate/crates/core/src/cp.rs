//! Ricardian multi-sector model with Cobb-Douglas input-output linkages,
//! solved in exact hat algebra (x̂ = x'/x).
//!
//! Productivity constants cancel in changes, so neither the Fréchet scale nor
//! the Cobb-Douglas normalizing constants of unit costs appear anywhere.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::WelfareEngine;
use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::math::{abs, exp, ln, powf};
use crate::model::{validate, Dims, EconomyData, Sector, TariffSchedule};
use crate::solver::{Numeraire, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CpModel {
    pub countries: Vec<String>,
    pub sectors: Vec<Sector>,
    pub theta: Vec<f64>,
    /// Expenditure shares π_in^s, pair layout.
    pub pi: Vec<f64>,
    /// Value-added shares γ_i^s.
    pub gamma_l: Vec<f64>,
    /// `io(i, s, k)`: share of input `k` in the costs of sector `s` in `i`.
    pub gamma_io: Vec<f64>,
    /// Final consumption shares.
    pub alpha: Vec<f64>,
    /// Baseline sector expenditures X_i^s (tariff-inclusive).
    pub x: Vec<f64>,
    pub deficits: Vec<f64>,
    pub income: Vec<f64>,
    pub revenue: Vec<f64>,
    pub labor_income: Vec<f64>,
    pub baseline_tariffs: TariffSchedule,
    pub baseline_flows: Vec<f64>,
}

impl CpModel {
    pub fn dims(&self) -> Dims {
        Dims::new(self.countries.len(), self.sectors.len())
    }
}

/// Calibrates a CP model. `theta` gives one trade elasticity per sector and
/// has no default.
pub fn calibrate_cp(data: &EconomyData, theta: &[f64]) -> Result<CpModel> {
    validate(data).into_result()?;
    let d = data.dims();
    if theta.len() != d.sectors {
        return Err(Error::invalid(format!("need {} trade elasticities, got {}", d.sectors, theta.len())));
    }
    if let Some(t) = theta.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::invalid(format!("trade elasticity {t} must be positive")));
    }
    let tau = data.tariffs.as_slice();
    let mut pi = vec![0.0; d.pair_len()];
    let mut x = vec![0.0; d.cs_len()];
    let mut revenue = vec![0.0; d.countries];
    for i in 0..d.countries {
        for s in 0..d.sectors {
            let total: f64 = (0..d.countries).map(|n| tau[d.pair(i, n, s)] * data.flow(i, n, s)).sum();
            if !(total > 0.0) {
                return Err(Error::invalid(format!(
                    "zero total expenditure for country {} in sector {}",
                    data.countries[i], data.sectors[s].id
                )));
            }
            x[d.cs(i, s)] = total;
            for n in 0..d.countries {
                let idx = d.pair(i, n, s);
                pi[idx] = tau[idx] * data.flows[idx] / total;
                revenue[i] += (tau[idx] - 1.0) * data.flows[idx];
            }
        }
    }
    let mut gamma_l = vec![1.0; d.cs_len()];
    let mut gamma_io = vec![0.0; d.io_len()];
    for i in 0..d.countries {
        for s in 0..d.sectors {
            let sales = data.sales(i, s);
            if sales > 0.0 {
                let mut used = 0.0;
                for k in 0..d.sectors {
                    let share = data.io(i, s, k) / sales;
                    gamma_io[d.io(i, s, k)] = share;
                    used += share;
                }
                gamma_l[d.cs(i, s)] = 1.0 - used;
                if !(gamma_l[d.cs(i, s)] > 0.0) {
                    return Err(Error::NegativeLabor { i, j: i, s });
                }
            }
        }
    }
    let deficits = data.deficits();
    let mut income = vec![0.0; d.countries];
    let mut alpha = vec![0.0; d.cs_len()];
    let mut labor_income = vec![0.0; d.countries];
    for i in 0..d.countries {
        let inter: Vec<f64> = (0..d.sectors).map(|k| (0..d.sectors).map(|s| data.io(i, s, k)).sum()).collect();
        let inc = (0..d.sectors).map(|s| x[d.cs(i, s)]).sum::<f64>() - inter.iter().sum::<f64>();
        let wl = inc - revenue[i] - deficits[i];
        if !(wl > 0.0) {
            return Err(Error::InconsistentAggregates { country: i, detail: format!("implied labor income {wl}") });
        }
        income[i] = inc;
        labor_income[i] = wl;
        for s in 0..d.sectors {
            alpha[d.cs(i, s)] = ((x[d.cs(i, s)] - inter[s]) / inc).max(0.0);
        }
        let total: f64 = alpha[i * d.sectors..(i + 1) * d.sectors].iter().sum();
        for s in 0..d.sectors {
            alpha[d.cs(i, s)] /= total;
        }
    }
    Ok(CpModel {
        countries: data.countries.clone(),
        sectors: data.sectors.clone(),
        theta: theta.to_vec(),
        pi,
        gamma_l,
        gamma_io,
        alpha,
        x,
        deficits,
        income,
        revenue,
        labor_income,
        baseline_tariffs: data.tariffs.clone(),
        baseline_flows: data.flows.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HatEquilibrium {
    pub hat_w: Vec<f64>,
    pub hat_c: Vec<f64>,
    pub hat_p: Vec<f64>,
    pub hat_pi: Vec<f64>,
    /// Counterfactual expenditures X'.
    pub x_new: Vec<f64>,
    pub income_new: Vec<f64>,
    pub revenue_new: Vec<f64>,
    pub hat_income: Vec<f64>,
    pub hat_welfare: Vec<f64>,
    pub outer_iterations: usize,
    pub residual: f64,
}

struct HatState {
    hat_w: Vec<f64>,
    hat_c: Vec<f64>,
    hat_p: Vec<f64>,
    pi_new: Vec<f64>,
    x_new: Vec<f64>,
    income: Vec<f64>,
    revenue: Vec<f64>,
    residual: Vec<f64>,
}

struct HatContext<'a> {
    cp: &'a CpModel,
    tau: &'a [f64],
    kappa_hat: Vec<f64>,
    opts: &'a SolverOptions,
    dims: Dims,
}

impl<'a> HatContext<'a> {
    fn wages(&self, x: &[f64]) -> Vec<f64> {
        let mut rel = vec![1.0];
        rel.extend(x.iter().map(|v| exp(*v)));
        let kappa = match self.opts.numeraire {
            Numeraire::WorldLaborIncome => {
                let wl: f64 = self.cp.labor_income.iter().sum();
                wl / rel.iter().zip(&self.cp.labor_income).map(|(r, l)| r * l).sum::<f64>()
            }
            Numeraire::Wage(c) => 1.0 / rel[c],
        };
        rel.iter().map(|r| r * kappa).collect()
    }

    fn evaluate(&self, x: &[f64], p_guess: &[f64]) -> Result<HatState> {
        let d = self.dims;
        let cp = self.cp;
        let scale = self.opts.numeraire_scale;
        let hat_w = self.wages(x);
        let mut hat_p = p_guess.to_vec();
        let mut hat_c = vec![1.0; d.cs_len()];
        let mut sums = vec![0.0; d.cs_len()];
        let mut done = false;
        for _ in 0..self.opts.max_inner {
            for i in 0..d.countries {
                for s in 0..d.sectors {
                    let cs = d.cs(i, s);
                    let mut lc = cp.gamma_l[cs] * ln(hat_w[i]);
                    for k in 0..d.sectors {
                        let g = cp.gamma_io[d.io(i, s, k)];
                        if g != 0.0 {
                            lc += g * ln(hat_p[d.cs(i, k)]);
                        }
                    }
                    hat_c[cs] = exp(lc);
                }
            }
            let mut change: f64 = 0.0;
            let mut next = vec![0.0; d.cs_len()];
            for i in 0..d.countries {
                for s in 0..d.sectors {
                    let th = cp.theta[s];
                    let mut sum = 0.0;
                    for n in 0..d.countries {
                        let idx = d.pair(i, n, s);
                        if cp.pi[idx] > 0.0 {
                            sum += cp.pi[idx] * powf(hat_c[d.cs(n, s)] * self.kappa_hat[idx], -th);
                        }
                    }
                    if !(sum > 0.0) {
                        return Err(Error::invalid("sector has no remaining suppliers"));
                    }
                    let cs = d.cs(i, s);
                    sums[cs] = sum;
                    next[cs] = powf(sum, -1.0 / th);
                    change = change.max(abs(next[cs] - hat_p[cs]) / next[cs]);
                }
            }
            hat_p = next;
            if change < self.opts.tol_inner {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::InnerNonConvergence { iterations: self.opts.max_inner, change: f64::NAN });
        }
        // Unit costs consistent with the converged prices.
        for i in 0..d.countries {
            for s in 0..d.sectors {
                let cs = d.cs(i, s);
                let mut lc = cp.gamma_l[cs] * ln(hat_w[i]);
                for k in 0..d.sectors {
                    let g = cp.gamma_io[d.io(i, s, k)];
                    if g != 0.0 {
                        lc += g * ln(hat_p[d.cs(i, k)]);
                    }
                }
                hat_c[cs] = exp(lc);
            }
        }
        let mut pi_new = vec![0.0; d.pair_len()];
        for i in 0..d.countries {
            for s in 0..d.sectors {
                let th = cp.theta[s];
                let mut total = 0.0;
                for n in 0..d.countries {
                    let idx = d.pair(i, n, s);
                    if cp.pi[idx] > 0.0 {
                        let v = cp.pi[idx] * powf(hat_c[d.cs(n, s)] * self.kappa_hat[idx], -th);
                        pi_new[idx] = v;
                        total += v;
                    }
                }
                for n in 0..d.countries {
                    pi_new[d.pair(i, n, s)] /= total;
                }
            }
        }
        let mut tariff_share = vec![0.0; d.cs_len()];
        for i in 0..d.countries {
            for s in 0..d.sectors {
                let mut b = 0.0;
                for n in 0..d.countries {
                    let idx = d.pair(i, n, s);
                    b += pi_new[idx] * (self.tau[idx] - 1.0) / self.tau[idx];
                }
                tariff_share[d.cs(i, s)] = b;
            }
        }
        let mut inter = vec![0.0; d.cs_len()];
        let mut x_new = vec![0.0; d.cs_len()];
        let mut income = vec![0.0; d.countries];
        let mut sales = vec![0.0; d.cs_len()];
        let mut converged = false;
        for _ in 0..self.opts.max_inner {
            for i in 0..d.countries {
                let mut num = hat_w[i] * cp.labor_income[i] * scale + cp.deficits[i] * scale;
                let mut den = 1.0;
                for s in 0..d.sectors {
                    let cs = d.cs(i, s);
                    num += tariff_share[cs] * inter[cs];
                    den -= tariff_share[cs] * cp.alpha[cs];
                }
                let inc = num / den;
                if !(inc > 0.0) {
                    return Err(Error::NegativeIncome { country: i });
                }
                income[i] = inc;
                for s in 0..d.sectors {
                    let cs = d.cs(i, s);
                    x_new[cs] = cp.alpha[cs] * inc + inter[cs];
                }
            }
            for n in 0..d.countries {
                for k in 0..d.sectors {
                    let mut r = 0.0;
                    for i in 0..d.countries {
                        let idx = d.pair(i, n, k);
                        r += pi_new[idx] * x_new[d.cs(i, k)] / self.tau[idx];
                    }
                    sales[d.cs(n, k)] = r;
                }
            }
            let mut next = vec![0.0; d.cs_len()];
            for i in 0..d.countries {
                for k in 0..d.sectors {
                    let r = sales[d.cs(i, k)];
                    for s in 0..d.sectors {
                        let g = cp.gamma_io[d.io(i, k, s)];
                        if g != 0.0 {
                            next[d.cs(i, s)] += g * r;
                        }
                    }
                }
            }
            let scale_x = x_new.iter().fold(0.0f64, |a, v| a.max(*v));
            let change = next.iter().zip(&inter).fold(0.0f64, |a, (p, q)| a.max(abs(p - q)));
            inter = next;
            if change <= 1e-15 * scale_x {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::InnerNonConvergence { iterations: self.opts.max_inner, change: f64::NAN });
        }
        let revenue: Vec<f64> = (0..d.countries)
            .map(|i| (0..d.sectors).map(|s| tariff_share[d.cs(i, s)] * x_new[d.cs(i, s)]).sum())
            .collect();
        let residual = (0..d.countries)
            .map(|i| {
                let va: f64 = (0..d.sectors).map(|s| cp.gamma_l[d.cs(i, s)] * sales[d.cs(i, s)]).sum();
                va / (hat_w[i] * cp.labor_income[i] * scale) - 1.0
            })
            .collect();
        Ok(HatState { hat_w, hat_c, hat_p, pi_new, x_new, income, revenue, residual })
    }

    fn norm(st: &HatState) -> f64 {
        st.residual[1..].iter().fold(0.0, |a, r| a.max(abs(*r)))
    }

    fn solve(&self) -> Result<HatEquilibrium> {
        let d = self.dims;
        let n = d.countries - 1;
        let mut x = vec![0.0; n];
        let ones = vec![1.0; d.cs_len()];
        let mut st = self.evaluate(&x, &ones)?;
        let mut norm = Self::norm(&st);
        let mut step = self.opts.damping;
        let mut it = 0;
        while norm >= self.opts.tol_outer {
            if it >= self.opts.max_outer {
                return Err(Error::OuterNonConvergence { iterations: it, residual: norm });
            }
            it += 1;
            let h = 1e-6;
            let mut jac = vec![0.0; n * n];
            for c in 0..n {
                let mut xp = x.clone();
                xp[c] += h;
                let sp = self.evaluate(&xp, &st.hat_p)?;
                for r in 0..n {
                    jac[r * n + c] = (sp.residual[r + 1] - st.residual[r + 1]) / h;
                }
            }
            let dx = solve_dense(jac, st.residual[1..].iter().map(|r| -r).collect())?;
            let mut lambda = step;
            loop {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + lambda * b).collect();
                let ok = match self.evaluate(&trial, &st.hat_p) {
                    Ok(s) => {
                        let tn = Self::norm(&s);
                        if tn < (1.0 - 1e-4 * lambda) * norm || tn < self.opts.tol_outer {
                            x = trial;
                            st = s;
                            norm = tn;
                            true
                        } else {
                            false
                        }
                    }
                    Err(Error::NegativeIncome { .. }) => false,
                    Err(e) => return Err(e),
                };
                if ok {
                    step = (2.0 * lambda).min(1.0);
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-12 {
                    return Err(Error::OuterNonConvergence { iterations: it, residual: norm });
                }
            }
        }
        let cp = self.cp;
        let scale = self.opts.numeraire_scale;
        let hat_income: Vec<f64> = st.income.iter().zip(&cp.income).map(|(a, b)| a / (b * scale)).collect();
        let hat_welfare = (0..d.countries)
            .map(|i| {
                let lp: f64 = (0..d.sectors).map(|s| cp.alpha[d.cs(i, s)] * ln(st.hat_p[d.cs(i, s)] / scale)).sum();
                hat_income[i] / exp(lp)
            })
            .collect();
        let hat_pi = st
            .pi_new
            .iter()
            .zip(&cp.pi)
            .map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 })
            .collect();
        Ok(HatEquilibrium {
            hat_w: st.hat_w.iter().map(|w| w * scale).collect(),
            hat_c: st.hat_c.iter().map(|c| c * scale).collect(),
            hat_p: st.hat_p.iter().map(|p| p * scale).collect(),
            hat_pi,
            x_new: st.x_new,
            income_new: st.income,
            revenue_new: st.revenue,
            hat_income,
            hat_welfare,
            outer_iterations: it,
            residual: norm,
        })
    }
}

/// Equilibrium in changes from the calibrated baseline to `tariffs`.
pub fn solve_hat(cp: &CpModel, tariffs: &TariffSchedule, opts: &SolverOptions) -> Result<HatEquilibrium> {
    let d = cp.dims();
    if tariffs.dims() != d {
        return Err(Error::invalid("tariff schedule dimensions differ from model"));
    }
    if let Numeraire::Wage(c) = opts.numeraire {
        if c >= d.countries {
            return Err(Error::invalid("numeraire country out of range"));
        }
    }
    let tau = tariffs.as_slice();
    if tau.iter().any(|t| !(t.is_finite() && *t >= 1.0)) {
        return Err(Error::invalid("tariff factors must be at least one"));
    }
    let kappa_hat = tau.iter().zip(cp.baseline_tariffs.as_slice()).map(|(a, b)| a / b).collect();
    HatContext { cp, tau, kappa_hat, opts, dims: d }.solve()
}

/// Ŵ_i = Î_i / Π_s (p̂_i^s)^{α_i^s}.
pub fn welfare_hat(eq: &HatEquilibrium) -> Vec<f64> {
    eq.hat_welfare.clone()
}

/// The CP model behind [`WelfareEngine`]; welfare is Ŵ relative to the
/// calibrated baseline.
#[derive(Debug, Clone)]
pub struct CpEngine {
    pub cp: CpModel,
    pub opts: SolverOptions,
}

impl CpEngine {
    pub fn new(cp: CpModel) -> Self {
        Self { cp, opts: SolverOptions::default() }
    }
}

impl WelfareEngine for CpEngine {
    fn countries(&self) -> &[String] {
        &self.cp.countries
    }

    fn sectors(&self) -> &[Sector] {
        &self.cp.sectors
    }

    fn baseline_tariffs(&self) -> &TariffSchedule {
        &self.cp.baseline_tariffs
    }

    fn welfare(&self, tariffs: &TariffSchedule) -> Result<Vec<f64>> {
        Ok(solve_hat(&self.cp, tariffs, &self.opts)?.hat_welfare)
    }

    fn autarky_welfare(&self, country: usize, partner: usize, tariffs: &TariffSchedule) -> Result<Vec<f64>> {
        let d = self.cp.dims();
        let mut cp = self.cp.clone();
        let mut net = 0.0;
        for s in 0..d.sectors {
            net += cp.baseline_flows[d.pair(country, partner, s)] - cp.baseline_flows[d.pair(partner, country, s)];
            cp.pi[d.pair(country, partner, s)] = 0.0;
            cp.pi[d.pair(partner, country, s)] = 0.0;
        }
        cp.deficits[country] -= net;
        cp.deficits[partner] += net;
        // Ŵ stays relative to the original baseline: income changes are
        // measured against the original income level.
        Ok(solve_hat(&cp, tariffs, &self.opts)?.hat_welfare)
    }

    fn baseline_flow(&self, importer: usize, exporter: usize, sector: usize) -> f64 {
        self.cp.baseline_flows[self.cp.dims().pair(importer, exporter, sector)]
    }
}
