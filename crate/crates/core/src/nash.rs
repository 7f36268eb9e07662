//! Nash tariffs by alternating best responses, and exhaustive single-sector
//! deviation checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{Executor, WelfareEngine};
use crate::error::{Error, Result};
use crate::ga::{best_response, GaConfig, Problem};
use crate::math::abs;
use crate::model::TariffSchedule;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct NashConfig {
    pub tol: f64,
    pub max_rounds: usize,
    pub uniform: bool,
    /// Run two restarts from jittered tariffs and flag disagreement.
    pub check_multiplicity: bool,
    pub jitter: f64,
}

impl Default for NashConfig {
    fn default() -> Self {
        Self { tol: 1e-4, max_rounds: 50, uniform: false, check_multiplicity: false, jitter: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NashRound {
    pub round: usize,
    pub tau_i: Vec<f64>,
    pub tau_j: Vec<f64>,
    /// Best-response welfare levels reached this round.
    pub best_i: f64,
    pub best_j: f64,
    /// Consumption-equivalent changes at the round's tariffs vs the reference.
    pub delta_i_pct: f64,
    pub delta_j_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NashResult {
    pub chooser: usize,
    pub partner: usize,
    pub sectors: Vec<usize>,
    pub tau_i: Vec<f64>,
    pub tau_j: Vec<f64>,
    /// Welfare levels at the reference (starting) schedule.
    pub reference_welfare: Vec<f64>,
    /// Welfare levels at the final schedule.
    pub welfare: Vec<f64>,
    pub welfare_trace: Vec<NashRound>,
    pub iterations: usize,
    pub converged: bool,
    pub multiple_equilibria_suspected: Option<bool>,
}

impl NashResult {
    /// The full schedule with both countries at their Nash tariffs.
    pub fn schedule(&self, base: &TariffSchedule) -> TariffSchedule {
        let mut s = base.clone();
        s.set_bilateral(self.chooser, self.partner, &self.sectors, &self.tau_i);
        s.set_bilateral(self.partner, self.chooser, &self.sectors, &self.tau_j);
        s
    }

    pub fn delta_pct(&self) -> (f64, f64) {
        let d = |k: usize| 100.0 * (self.welfare[k] / self.reference_welfare[k] - 1.0);
        (d(self.chooser), d(self.partner))
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| abs(x - y)).fold(0.0, f64::max)
}

/// Seed for the GA of `mover` (0 or 1) in `round`.
fn round_seed(base: u64, round: usize, mover: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((round as u64) << 1 | mover)
}

fn run<E: WelfareEngine, X: Executor>(
    engine: &E,
    i: usize,
    j: usize,
    start: &TariffSchedule,
    ga: &GaConfig,
    cfg: &NashConfig,
    exec: &X,
) -> Result<NashResult> {
    let sectors = engine.taxable_sectors();
    let reference = engine.welfare(engine.baseline_tariffs())?;
    let mut sched = start.clone();
    let mut tau_i = sched.bilateral(i, j, &sectors);
    let mut tau_j = sched.bilateral(j, i, &sectors);
    let w0 = engine.welfare(&sched)?;
    let (mut prev_i, mut prev_j) = (w0[i], w0[j]);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    while rounds < cfg.max_rounds {
        rounds += 1;
        let step = |who: usize, other: usize, mover: u64, sched: &TariffSchedule| -> Result<(Vec<f64>, f64)> {
            let problem = Problem::new(engine, who, other, sched.clone())?.uniform(cfg.uniform);
            let seeds = vec![problem.current(ga)];
            let ga_r = GaConfig { seed: round_seed(ga.seed, rounds, mover), ..ga.clone() };
            let br = best_response(&problem, &ga_r, &seeds, exec)?;
            Ok((br.tau, br.welfare))
        };
        let (new_i, best_i) = step(i, j, 0, &sched)?;
        sched.set_bilateral(i, j, &sectors, &new_i);
        let (new_j, best_j) = step(j, i, 1, &sched)?;
        sched.set_bilateral(j, i, &sectors, &new_j);

        let change = sup_diff(&new_i, &tau_i)
            .max(sup_diff(&new_j, &tau_j))
            .max(abs(best_i - prev_i))
            .max(abs(best_j - prev_j));
        tau_i = new_i;
        tau_j = new_j;
        prev_i = best_i;
        prev_j = best_j;
        let w = engine.welfare(&sched)?;
        trace.push(NashRound {
            round: rounds,
            tau_i: tau_i.clone(),
            tau_j: tau_j.clone(),
            best_i,
            best_j,
            delta_i_pct: 100.0 * (w[i] / reference[i] - 1.0),
            delta_j_pct: 100.0 * (w[j] / reference[j] - 1.0),
        });
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let welfare = engine.welfare(&sched)?;
    Ok(NashResult {
        chooser: i,
        partner: j,
        sectors,
        tau_i,
        tau_j,
        reference_welfare: reference,
        welfare,
        welfare_trace: trace,
        iterations: rounds,
        converged,
        multiple_equilibria_suspected: None,
    })
}

/// Iterates best responses, `i` moving first, from the engine's baseline tariffs.
pub fn nash<E: WelfareEngine, X: Executor>(
    engine: &E,
    i: usize,
    j: usize,
    ga: &GaConfig,
    cfg: &NashConfig,
    exec: &X,
) -> Result<NashResult> {
    let n = engine.dims().countries;
    if i >= n || j >= n || i == j {
        return Err(Error::invalid("Nash game needs two distinct countries"));
    }
    let mut result = run(engine, i, j, engine.baseline_tariffs(), ga, cfg, exec)?;
    if cfg.check_multiplicity && result.converged {
        let mut agree = true;
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut start = engine.baseline_tariffs().clone();
            let jig = |t: &f64| (t + sign * cfg.jitter).clamp(ga.lower, ga.upper);
            start.set_bilateral(i, j, &result.sectors, &result.tau_i.iter().map(jig).collect::<Vec<_>>());
            start.set_bilateral(j, i, &result.sectors, &result.tau_j.iter().map(jig).collect::<Vec<_>>());
            let ga_k = GaConfig { seed: ga.seed.wrapping_add(1 + k as u64), ..ga.clone() };
            let other = run(engine, i, j, &start, &ga_k, cfg, exec)?;
            let gap = sup_diff(&other.tau_i, &result.tau_i).max(sup_diff(&other.tau_j, &result.tau_j));
            if !other.converged || gap > cfg.tol {
                agree = false;
            }
        }
        result.multiple_equilibria_suspected = Some(!agree);
    }
    Ok(result)
}

/// Deviation grid: fine steps on `[fine_lo, fine_hi]`, then coarse steps to `cap`
/// (all in net rates, e.g. 0.25 = 25%).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerifyGrid {
    pub fine_lo: f64,
    pub fine_hi: f64,
    pub fine_step: f64,
    pub coarse_step: f64,
    pub cap: f64,
}

impl Default for VerifyGrid {
    fn default() -> Self {
        Self { fine_lo: 0.0, fine_hi: 0.25, fine_step: 0.0025, coarse_step: 0.05, cap: 4.0 }
    }
}

impl VerifyGrid {
    /// Gross tariff factors to try.
    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let n = ((self.fine_hi - self.fine_lo) / self.fine_step + 1e-9) as usize;
        for k in 0..=n {
            out.push(1.0 + self.fine_lo + k as f64 * self.fine_step);
        }
        if self.coarse_step > 0.0 {
            let m = ((self.cap - self.fine_hi) / self.coarse_step + 1e-9) as usize;
            for k in 1..=m {
                out.push(1.0 + self.fine_hi + k as f64 * self.coarse_step);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviationRow {
    pub country: usize,
    pub sector: usize,
    pub nash_tau: f64,
    pub best_tau: f64,
    /// Largest relative welfare gain W_dev / W_nash − 1 over the grid.
    pub max_improvement: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerifyReport {
    pub rows: Vec<DeviationRow>,
    pub threshold: f64,
    pub complete: bool,
    pub pass: bool,
}

/// Tries every grid tariff in every taxable sector for both players, holding
/// everything else at the Nash schedule.
pub fn verify_no_deviation<E: WelfareEngine, X: Executor>(
    engine: &E,
    nash: &NashResult,
    grid: &VerifyGrid,
    exec: &X,
) -> Result<VerifyReport> {
    let sched = nash.schedule(engine.baseline_tariffs());
    let at_nash = engine.welfare(&sched)?;
    let points = grid.points();
    let players = [(nash.chooser, nash.partner, &nash.tau_i), (nash.partner, nash.chooser, &nash.tau_j)];
    let mut cells = Vec::new();
    for (who, other, taus) in players {
        for (k, &s) in nash.sectors.iter().enumerate() {
            for &p in &points {
                cells.push((who, other, s, taus[k], p));
            }
        }
    }
    let results = exec.map(cells.len(), |c| {
        let (who, other, s, _, p) = cells[c];
        let mut trial = sched.clone();
        trial.set(who, other, s, p);
        engine.welfare(&trial).map(|w| w[who] / at_nash[who] - 1.0)
    });

    let threshold = 1e-9;
    let mut rows: Vec<DeviationRow> = Vec::new();
    for (c, r) in results.into_iter().enumerate() {
        let (who, _, s, nash_tau, p) = cells[c];
        if rows.last().is_none_or(|row| row.country != who || row.sector != s) {
            rows.push(DeviationRow {
                country: who,
                sector: s,
                nash_tau,
                best_tau: nash_tau,
                max_improvement: f64::NEG_INFINITY,
                failures: 0,
            });
        }
        let row = rows.last_mut().unwrap();
        match r {
            Ok(gain) if gain > row.max_improvement => {
                row.max_improvement = gain;
                row.best_tau = p;
            }
            Ok(_) => {}
            Err(_) => row.failures += 1,
        }
    }
    let complete = rows.iter().all(|r| r.failures == 0);
    let pass = complete && rows.iter().all(|r| r.max_improvement <= threshold);
    Ok(VerifyReport { rows, threshold, complete, pass })
}
