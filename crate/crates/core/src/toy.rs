//! Two-country, two-good CES endowment economy with tariffs and a transfer.
//!
//! Country 1 owns good 1 (the numeraire), Country 2 owns good 2 priced at `p`.
//! Country 1 runs a trade deficit `d` in units of good 1. Tariffs are net
//! ad-valorem rates and their revenue is rebated to households.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::bisect;
use crate::math::{exp, ln, powf};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ToyParams {
    pub e1: f64,
    pub e2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub d: f64,
}

impl ToyParams {
    pub fn symmetric(sigma: f64) -> Self {
        Self { e1: 1.0, e2: 1.0, sigma1: sigma, sigma2: sigma, tau1: 0.0, tau2: 0.0, d: 0.0 }
    }

    fn check(&self) -> Result<()> {
        if !(self.e1 > 0.0 && self.e2 > 0.0) {
            return Err(Error::invalid("endowments must be positive"));
        }
        if !(self.sigma1 > 1.0 && self.sigma2 > 1.0) {
            return Err(Error::invalid("elasticities must exceed one"));
        }
        if !(self.tau1 >= 0.0 && self.tau2 >= 0.0) {
            return Err(Error::invalid("tariff rates must be non-negative"));
        }
        if !(self.e1 + self.d > 0.0) {
            return Err(Error::invalid("deficit makes Country 1 income negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ToyEquilibrium {
    pub p: f64,
    pub c11: f64,
    pub c21: f64,
    pub c12: f64,
    pub c22: f64,
    pub t1: f64,
    pub t2: f64,
    pub lambda2: f64,
    pub u1: f64,
    pub u2: f64,
}

/// Demands at relative price `p`. Revenue feeds back into income linearly,
/// so the revenue fixed point has an exact closed form.
fn demands(params: &ToyParams, p: f64) -> (f64, f64, f64, f64) {
    let q1 = p * (1.0 + params.tau1);
    let q2 = 1.0 + params.tau2;
    let c21 = (params.e1 + params.d) / (p + powf(q1, params.sigma1));
    let c11 = powf(q1, params.sigma1) * c21;
    let c12 = (p * params.e2 - params.d) / (1.0 + powf(p, 1.0 - params.sigma2) * powf(q2, params.sigma2));
    let c22 = c12 * powf(q2 / p, params.sigma2);
    (c11, c21, c12, c22)
}

/// Value at world prices of each country's excess demand at relative price
/// `p`. These sum to zero at any `p`.
pub fn excess_demand_values(params: &ToyParams, p: f64) -> Result<(f64, f64)> {
    params.check()?;
    if !(p > 0.0) {
        return Err(Error::invalid("relative price must be positive"));
    }
    let (c11, c21, c12, c22) = demands(params, p);
    Ok((c11 - params.e1 + p * c21, c12 + p * (c22 - params.e2)))
}

fn utility(sigma: f64, a: f64, b: f64) -> f64 {
    let rho = (sigma - 1.0) / sigma;
    powf(a, rho) + powf(b, rho)
}

/// Market-clearing equilibrium found by bisection on good-2 excess demand
/// over log p in [1e-6, 1e6].
pub fn solve_toy(params: &ToyParams) -> Result<ToyEquilibrium> {
    params.check()?;
    let mut lo = 1e-6f64;
    let hi = 1e6f64;
    if params.d > 0.0 {
        // Country 2 income p·E2 − d must stay positive.
        lo = lo.max(params.d / params.e2 * (1.0 + 1e-9));
        if lo >= hi {
            return Err(Error::Bracket { lo, hi });
        }
    }
    let excess = |x: f64| -> Result<f64> {
        let (_, c21, _, c22) = demands(params, exp(x));
        Ok((c21 + c22) / params.e2 - 1.0)
    };
    let x = bisect(excess, ln(lo), ln(hi), 1e-15, 400).map_err(|_| Error::Bracket { lo, hi })?;
    let p = exp(x);
    Ok(equilibrium_at(params, p))
}

fn equilibrium_at(params: &ToyParams, p: f64) -> ToyEquilibrium {
    let (c11, c21, c12, c22) = demands(params, p);
    let q2 = 1.0 + params.tau2;
    ToyEquilibrium {
        p,
        c11,
        c21,
        c12,
        c22,
        t1: p * params.tau1 * c21,
        t2: params.tau2 * c12,
        lambda2: 1.0 / (1.0 + powf(p / q2, params.sigma2 - 1.0)),
        u1: utility(params.sigma1, c11, c21),
        u2: utility(params.sigma2, c12, c22),
    }
}

/// τ1 minus the implicit optimal-tariff expression; zero at Country 1's optimum.
pub fn foc_residual(params: &ToyParams, eq: &ToyEquilibrium) -> Result<f64> {
    let bracket = params.sigma2 * (1.0 + params.tau2) - 1.0;
    let den = eq.lambda2 * (bracket * eq.c12 / (eq.c12 + params.d) - params.d / (eq.p * eq.c21));
    if !(den.abs() > 1e-14) || !den.is_finite() {
        return Err(Error::InelasticRegime);
    }
    Ok(params.tau1 - 1.0 / den)
}

/// Closed interval grid `[lo, hi]` with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.hi >= self.lo) {
            return Err(Error::invalid("grid needs step > 0 and hi >= lo"));
        }
        let n = ((self.hi - self.lo) / self.step + 1e-9) as usize;
        Ok((0..=n).map(|k| self.lo + k as f64 * self.step).collect())
    }
}

fn argmax_grid<F>(grid: &Grid, mut eval: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut best: Option<(f64, f64)> = None;
    for t in grid.points()? {
        if let Ok(u) = eval(t) {
            // Strict improvement keeps the lower tariff on ties.
            if best.is_none_or(|(_, b)| u > b) {
                best = Some((t, u));
            }
        }
    }
    best.ok_or(Error::AllCandidatesFailed)
}

/// Country 1's utility-maximizing τ1 over `grid`, holding the other parameters.
pub fn optimal_tariff_grid(params: &ToyParams, grid: &Grid) -> Result<(f64, f64)> {
    argmax_grid(grid, |t| solve_toy(&ToyParams { tau1: t, ..*params }).map(|e| e.u1))
}

/// Country 2's utility-maximizing τ2 over `grid`.
pub fn optimal_tariff_country2(params: &ToyParams, grid: &Grid) -> Result<(f64, f64)> {
    argmax_grid(grid, |t| solve_toy(&ToyParams { tau2: t, ..*params }).map(|e| e.u2))
}

/// Root of [`foc_residual`] in τ1 on `[lo, hi]`.
pub fn foc_root(params: &ToyParams, lo: f64, hi: f64) -> Result<f64> {
    bisect(
        |t| {
            let p = ToyParams { tau1: t, ..*params };
            foc_residual(&p, &solve_toy(&p)?)
        },
        lo,
        hi,
        1e-12,
        200,
    )
}
