//! Best-response tariffs by a hybrid real-coded genetic algorithm.
//!
//! Candidates are integer tick vectors (one tick = 10^-decimals in gross
//! tariff units), so discretization is exact. Each generation keeps the
//! elites, breeds children by Laplace crossover and adaptive power mutation,
//! and stops once the step-weighted geometric mean of best-welfare gains
//! stalls. The hybrid driver alternates short GA runs with a discrete pattern
//! search started from every elite.
//!
//! All randomness comes from one ChaCha stream consumed sequentially by the
//! evolution step; only fitness evaluations run through the [`Executor`], so
//! results do not depend on the worker count.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::engine::{Executor, WelfareEngine};
use crate::error::{Error, Result};
use crate::math::{abs, exp, ln, powf, round, sqrt};
use crate::model::TariffSchedule;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GaConfig {
    pub population: usize,
    pub elites: usize,
    pub crossover: usize,
    pub mutation: usize,
    pub laplace_a: f64,
    pub laplace_b: f64,
    pub power_above_median: f64,
    pub power_below_median: f64,
    pub direction_clamp: (f64, f64),
    pub lower: f64,
    pub upper: f64,
    pub decimals: u32,
    pub stall_tol: f64,
    pub stall_limit: usize,
    pub generation_limit: usize,
    pub hybrid: bool,
    pub hybrid_stall_limit: usize,
    pub hybrid_generation_limit: usize,
    pub hybrid_max_rounds: usize,
    pub hybrid_tol: f64,
    /// Largest pattern-search step, in ticks.
    pub local_initial_step: i64,
    pub local_max_evals: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 160,
            elites: 16,
            crossover: 116,
            mutation: 28,
            laplace_a: 0.0,
            laplace_b: 0.35,
            power_above_median: 10.0,
            power_below_median: 4.0,
            direction_clamp: (0.25, 0.75),
            lower: 1.0,
            upper: 5.0,
            decimals: 4,
            stall_tol: 1e-4,
            stall_limit: 50,
            generation_limit: 1000,
            hybrid: true,
            hybrid_stall_limit: 10,
            hybrid_generation_limit: 200,
            hybrid_max_rounds: 20,
            hybrid_tol: 1e-4,
            local_initial_step: 1024,
            local_max_evals: 5000,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn check(&self) -> Result<()> {
        if self.elites == 0 || self.crossover == 0 || self.mutation == 0 {
            return Err(Error::invalid("population components must be positive"));
        }
        if self.elites + self.crossover + self.mutation != self.population {
            return Err(Error::invalid("elites + crossover + mutation must equal the population size"));
        }
        if !(self.lower >= 1.0 && self.upper > self.lower) {
            return Err(Error::invalid("tariff bounds must satisfy 1 <= lower < upper"));
        }
        if self.decimals > 8 {
            return Err(Error::invalid("at most 8 decimal places"));
        }
        let (a, b) = self.direction_clamp;
        if !(0.0..=1.0).contains(&a) || !(a..=1.0).contains(&b) {
            return Err(Error::invalid("direction clamp must be an ordered sub-interval of [0, 1]"));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        powf(10.0, self.decimals as f64)
    }

    pub fn lower_ticks(&self) -> i64 {
        round(self.lower * self.scale()) as i64
    }

    pub fn upper_ticks(&self) -> i64 {
        round(self.upper * self.scale()) as i64
    }

    pub fn to_ticks(&self, tau: f64) -> i64 {
        (round(tau * self.scale()) as i64).clamp(self.lower_ticks(), self.upper_ticks())
    }

    pub fn to_tau(&self, ticks: i64) -> f64 {
        ticks as f64 / self.scale()
    }
}

/// Uniform draws from a ChaCha stream.
pub struct Draws {
    rng: ChaCha20Rng,
}

impl Draws {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [lo, hi].
    pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo + 1) as f64;
        lo + ((self.uniform() * span) as i64).min(hi - lo)
    }

    /// Uniform on the open interval (−1/2, 1/2).
    pub fn centered(&mut self) -> f64 {
        loop {
            let u = self.uniform() - 0.5;
            if u > -0.5 {
                return u;
            }
        }
    }
}

/// Laplace(a, b) variate by inverse CDF from `u` in (−1/2, 1/2).
pub fn laplace_draw(a: f64, b: f64, u: f64) -> f64 {
    let sign = if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    };
    a - sign * b * ln(1.0 - 2.0 * abs(u))
}

/// Laplace crossover of two tick vectors. `draws(k)` supplies the Laplace
/// variate for component `k`; out-of-bounds components are re-drawn up to 100
/// times and then clamped.
pub fn laplace_crossover<F>(p1: &[i64], p2: &[i64], lo: i64, hi: i64, mut draws: F) -> Vec<i64>
where
    F: FnMut(usize) -> f64,
{
    p1.iter()
        .zip(p2)
        .enumerate()
        .map(|(k, (&a, &b))| {
            let gap = (a - b).abs() as f64;
            if gap == 0.0 {
                return a;
            }
            let mut child = a as f64;
            for _ in 0..=100 {
                child = a as f64 + draws(k) * gap;
                if child >= lo as f64 && child <= hi as f64 {
                    break;
                }
            }
            // Past the re-draw budget the last draw is clamped to the nearest bound.
            (round(child) as i64).clamp(lo, hi)
        })
        .collect()
}

/// Adaptive power mutation of one tick vector. `draws(k)` returns
/// `(u_step, u_dir)` for component `k`; `power` is the mutation exponent.
pub fn power_mutation<F>(parent: &[i64], lo: i64, hi: i64, power: f64, clamp: (f64, f64), mut draws: F) -> Vec<i64>
where
    F: FnMut(usize) -> (f64, f64),
{
    parent
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let (u_step, u_dir) = draws(k);
            let delta = powf(u_step, power);
            let xf = x as f64;
            let r = (xf - lo as f64) / (hi - lo) as f64;
            let moved = if u_dir < r.clamp(clamp.0, clamp.1) {
                xf - delta * (xf - lo as f64)
            } else {
                xf + delta * (hi as f64 - xf)
            };
            (round(moved) as i64).clamp(lo, hi)
        })
        .collect()
}

/// Step-weighted geometric mean of absolute best-welfare gains, latest first,
/// with weights (1/2)^t. Each gain is floored at machine epsilon.
pub fn stall_metric(gains_latest_first: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut w = 1.0;
    for g in gains_latest_first {
        num += w * ln(abs(*g).max(f64::EPSILON));
        den += w;
        w *= 0.5;
        if w < 1e-300 {
            break;
        }
    }
    if den == 0.0 {
        return f64::EPSILON;
    }
    exp(num / den)
}

/// Optional partner-autarky participation constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Participation {
    pub partner_autarky: f64,
    pub chooser_autarky: f64,
}

/// The strategy space of one best-response problem.
pub struct Problem<'a, E: WelfareEngine> {
    pub engine: &'a E,
    pub chooser: usize,
    pub partner: usize,
    /// Full schedule; the chooser's tariffs on the partner are overwritten.
    pub base: TariffSchedule,
    pub sectors: Vec<usize>,
    pub uniform: bool,
    pub participation: Option<Participation>,
}

impl<'a, E: WelfareEngine> Problem<'a, E> {
    pub fn new(engine: &'a E, chooser: usize, partner: usize, base: TariffSchedule) -> Result<Self> {
        let n = engine.dims().countries;
        if chooser >= n || partner >= n || chooser == partner {
            return Err(Error::invalid("chooser and partner must be distinct countries"));
        }
        let sectors = engine.taxable_sectors();
        if sectors.is_empty() {
            return Err(Error::invalid("no taxable sectors"));
        }
        Ok(Self { engine, chooser, partner, base, sectors, uniform: false, participation: None })
    }

    pub fn uniform(mut self, on: bool) -> Self {
        self.uniform = on;
        self
    }

    /// Switches on the participation constraint, solving both autarky welfare levels.
    pub fn with_participation(mut self) -> Result<Self> {
        let aut = self.engine.autarky_welfare(self.chooser, self.partner, &self.base)?;
        self.participation = Some(Participation { partner_autarky: aut[self.partner], chooser_autarky: aut[self.chooser] });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        if self.uniform {
            1
        } else {
            self.sectors.len()
        }
    }

    /// Per-taxable-sector tariff factors for a candidate.
    pub fn expand(&self, cfg: &GaConfig, ticks: &[i64]) -> Vec<f64> {
        if self.uniform {
            vec![cfg.to_tau(ticks[0]); self.sectors.len()]
        } else {
            ticks.iter().map(|&t| cfg.to_tau(t)).collect()
        }
    }

    pub fn schedule(&self, cfg: &GaConfig, ticks: &[i64]) -> TariffSchedule {
        let mut sched = self.base.clone();
        sched.set_bilateral(self.chooser, self.partner, &self.sectors, &self.expand(cfg, ticks));
        sched
    }

    /// Chooser welfare, or −∞ when the equilibrium fails to solve.
    pub fn fitness(&self, cfg: &GaConfig, ticks: &[i64]) -> f64 {
        match self.engine.welfare(&self.schedule(cfg, ticks)) {
            Ok(w) => {
                let own = w[self.chooser];
                let value = match self.participation {
                    Some(p) if w[self.partner] < p.partner_autarky => p.chooser_autarky,
                    _ => own,
                };
                if value.is_finite() {
                    value
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Starting candidate from the current base schedule.
    pub fn current(&self, cfg: &GaConfig) -> Vec<i64> {
        let taus = self.base.bilateral(self.chooser, self.partner, &self.sectors);
        if self.uniform {
            let mean = taus.iter().sum::<f64>() / taus.len() as f64;
            vec![cfg.to_ticks(mean)]
        } else {
            taus.iter().map(|&t| cfg.to_ticks(t)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenerationRecord {
    pub round: usize,
    pub generation: usize,
    pub best_welfare: f64,
    pub nabla: f64,
    pub stall: usize,
}

/// Result of a best-response search.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BestResponse {
    pub chooser: usize,
    pub partner: usize,
    /// Taxable sector indices, matching `tau`.
    pub sectors: Vec<usize>,
    pub tau: Vec<f64>,
    pub welfare: f64,
    pub rounds: usize,
    pub evaluations: usize,
    pub failures: usize,
    pub trace: Vec<GenerationRecord>,
}

struct Evaluator<'p, 'a, E: WelfareEngine, X: Executor> {
    problem: &'p Problem<'a, E>,
    cfg: &'p GaConfig,
    exec: &'p X,
    cache: BTreeMap<Vec<i64>, f64>,
    evaluations: usize,
    failures: usize,
}

impl<'p, 'a, E: WelfareEngine, X: Executor> Evaluator<'p, 'a, E, X> {
    fn evaluate(&mut self, cands: &[Vec<i64>]) -> Vec<f64> {
        let mut fresh: Vec<Vec<i64>> = Vec::new();
        for c in cands {
            if !self.cache.contains_key(c) && !fresh.contains(c) {
                fresh.push(c.clone());
            }
        }
        let (problem, cfg) = (self.problem, self.cfg);
        let values = self.exec.map(fresh.len(), |k| problem.fitness(cfg, &fresh[k]));
        self.evaluations += fresh.len();
        for (c, v) in fresh.into_iter().zip(values) {
            if v == f64::NEG_INFINITY {
                self.failures += 1;
            }
            self.cache.insert(c, v);
        }
        cands.iter().map(|c| self.cache[c]).collect()
    }
}

/// Indices sorted by fitness, best first; ties by index.
fn ranking(fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    idx
}

/// Roulette draw over `weights`, skipping `exclude`.
fn roulette(draws: &mut Draws, weights: &[f64], exclude: Option<usize>) -> usize {
    let total: f64 = weights.iter().enumerate().filter(|(k, _)| Some(*k) != exclude).map(|(_, w)| w).sum();
    let r = draws.uniform() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.iter().enumerate() {
        if Some(k) == exclude {
            continue;
        }
        acc += w;
        last = k;
        if r < acc {
            return k;
        }
    }
    last
}

struct GaRun {
    /// Ranked final population with fitness.
    ranked: Vec<(Vec<i64>, f64)>,
}

fn run_ga<E: WelfareEngine, X: Executor>(
    ev: &mut Evaluator<'_, '_, E, X>,
    draws: &mut Draws,
    seeds: &[Vec<i64>],
    stall_limit: usize,
    generation_limit: usize,
    round_no: usize,
    trace: &mut Vec<GenerationRecord>,
) -> Result<GaRun> {
    let cfg = ev.cfg;
    let dim = ev.problem.dim();
    let (lo, hi) = (cfg.lower_ticks(), cfg.upper_ticks());
    let p = cfg.population;
    let half = p / 2;

    let mut pop: Vec<Vec<i64>> = seeds.iter().take(half).map(|s| s.iter().map(|&t| t.clamp(lo, hi)).collect()).collect();
    while pop.len() < half {
        pop.push((0..dim).map(|_| draws.int(lo, hi)).collect());
    }
    let opposites: Vec<Vec<i64>> = pop.iter().map(|c| c.iter().map(|&t| lo + hi - t).collect()).collect();
    pop.extend(opposites);
    while pop.len() < p {
        pop.push((0..dim).map(|_| draws.int(lo, hi)).collect());
    }
    let mut fit = ev.evaluate(&pop);
    if fit.iter().all(|f| *f == f64::NEG_INFINITY) {
        return Err(Error::AllCandidatesFailed);
    }

    let rank_weights: Vec<f64> = (1..=p).map(|r| 1.0 / sqrt(r as f64)).collect();
    let mut best_history: Vec<f64> = Vec::new();
    best_history.push(fit[ranking(&fit)[0]]);
    let mut gains: Vec<f64> = Vec::new();
    let mut stall = 0;
    let mut generation = 0;
    while stall <= stall_limit && generation <= generation_limit {
        let order = ranking(&fit);
        // Scaled fitness by rank position of each member.
        let mut member_weight = vec![0.0; p];
        let mut member_rank = vec![0usize; p];
        for (r, &m) in order.iter().enumerate() {
            member_weight[m] = rank_weights[r];
            member_rank[m] = r + 1;
        }
        let mut next: Vec<Vec<i64>> = order.iter().take(cfg.elites).map(|&m| pop[m].clone()).collect();
        for _ in 0..cfg.crossover {
            let a = roulette(draws, &member_weight, None);
            let b = roulette(draws, &member_weight, Some(a));
            let child = laplace_crossover(&pop[a], &pop[b], lo, hi, |_| {
                let u = draws.centered();
                laplace_draw(cfg.laplace_a, cfg.laplace_b, u)
            });
            next.push(child);
        }
        for _ in 0..cfg.mutation {
            let m = roulette(draws, &member_weight, None);
            let power = if member_rank[m] <= half { cfg.power_above_median } else { cfg.power_below_median };
            let child = power_mutation(&pop[m], lo, hi, power, cfg.direction_clamp, |_| {
                let s = draws.uniform();
                (s, draws.uniform())
            });
            next.push(child);
        }
        pop = next;
        fit = ev.evaluate(&pop);
        generation += 1;

        let best = fit[ranking(&fit)[0]];
        let prev = *best_history.last().unwrap_or(&best);
        best_history.push(best);
        gains.insert(0, best - prev);
        let nabla = stall_metric(&gains);
        if nabla < cfg.stall_tol {
            stall += 1;
        } else {
            stall = 0;
        }
        trace.push(GenerationRecord { round: round_no, generation, best_welfare: best, nabla, stall });
    }
    let order = ranking(&fit);
    Ok(GaRun { ranked: order.into_iter().map(|m| (pop[m].clone(), fit[m])).collect() })
}

/// Discrete coordinate pattern search. Never returns a worse point.
fn local_search<E: WelfareEngine>(problem: &Problem<'_, E>, cfg: &GaConfig, start: &[i64], f_start: f64) -> (Vec<i64>, f64, usize) {
    let (lo, hi) = (cfg.lower_ticks(), cfg.upper_ticks());
    let mut x = start.to_vec();
    let mut fx = f_start;
    let mut evals = 0;
    let mut step = cfg.local_initial_step.max(1);
    loop {
        let mut improved = true;
        while improved && evals < cfg.local_max_evals {
            improved = false;
            for c in 0..x.len() {
                for dir in [1i64, -1] {
                    let v = (x[c] + dir * step).clamp(lo, hi);
                    if v == x[c] {
                        continue;
                    }
                    let mut y = x.clone();
                    y[c] = v;
                    let fy = problem.fitness(cfg, &y);
                    evals += 1;
                    if fy > fx {
                        x = y;
                        fx = fy;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if step == 1 || evals >= cfg.local_max_evals {
            break;
        }
        step = (step / 2).max(1);
    }
    (x, fx, evals)
}

/// Maximizes the chooser's welfare over its tariffs on the partner.
///
/// `seeds` are tick vectors of the problem's dimension; they enter the
/// initial population first.
pub fn best_response<E: WelfareEngine, X: Executor>(
    problem: &Problem<'_, E>,
    cfg: &GaConfig,
    seeds: &[Vec<i64>],
    exec: &X,
) -> Result<BestResponse> {
    cfg.check()?;
    let dim = problem.dim();
    if seeds.iter().any(|s| s.len() != dim) {
        return Err(Error::invalid("seed length differs from the strategy dimension"));
    }
    let mut draws = Draws::new(cfg.seed);
    let mut ev = Evaluator { problem, cfg, exec, cache: BTreeMap::new(), evaluations: 0, failures: 0 };
    let mut trace = Vec::new();

    let (best, welfare, rounds) = if !cfg.hybrid {
        let run = run_ga(&mut ev, &mut draws, seeds, cfg.stall_limit, cfg.generation_limit, 0, &mut trace)?;
        let (x, f) = run.ranked[0].clone();
        (x, f, 1)
    } else {
        let mut seeds_r: Vec<Vec<i64>> = seeds.to_vec();
        let mut prev: Option<(Vec<i64>, f64)> = None;
        let mut rounds = 0;
        loop {
            rounds += 1;
            let run = run_ga(&mut ev, &mut draws, &seeds_r, cfg.hybrid_stall_limit, cfg.hybrid_generation_limit, rounds, &mut trace)?;
            let elites: Vec<(Vec<i64>, f64)> = run.ranked.iter().take(cfg.elites).cloned().collect();
            let refined = exec.map(elites.len(), |k| local_search(problem, cfg, &elites[k].0, elites[k].1));
            let mut round_best = run.ranked[0].clone();
            let mut next_seeds = Vec::with_capacity(elites.len());
            for (x, f, evals) in refined {
                ev.evaluations += evals;
                if f > round_best.1 {
                    round_best = (x.clone(), f);
                }
                if !next_seeds.contains(&x) {
                    next_seeds.push(x);
                }
            }
            if let Some((px, pf)) = &prev {
                if round_best.1 < *pf {
                    round_best = (px.clone(), *pf);
                }
                let dtau = px.iter().zip(&round_best.0).map(|(a, b)| (a - b).abs()).max().unwrap_or(0);
                let dw = abs(round_best.1 - pf);
                if cfg.to_tau(dtau).max(dw) < cfg.hybrid_tol {
                    prev = Some(round_best);
                    break;
                }
            }
            prev = Some(round_best.clone());
            if rounds >= cfg.hybrid_max_rounds {
                break;
            }
            // Keep the incumbent first so it survives into the next population.
            next_seeds.retain(|s| *s != round_best.0);
            next_seeds.insert(0, round_best.0);
            seeds_r = next_seeds;
        }
        let (x, f) = prev.unwrap_or_default();
        (x, f, rounds)
    };
    if welfare == f64::NEG_INFINITY {
        return Err(Error::AllCandidatesFailed);
    }
    Ok(BestResponse {
        chooser: problem.chooser,
        partner: problem.partner,
        sectors: problem.sectors.clone(),
        tau: problem.expand(cfg, &best),
        welfare,
        rounds,
        evaluations: ev.evaluations,
        failures: ev.failures,
        trace,
    })
}

/// Best response with all taxable sectors forced to one common tariff.
pub fn uniform_best_response<E: WelfareEngine, X: Executor>(
    engine: &E,
    chooser: usize,
    partner: usize,
    base: TariffSchedule,
    cfg: &GaConfig,
    exec: &X,
) -> Result<BestResponse> {
    let problem = Problem::new(engine, chooser, partner, base)?.uniform(true);
    let seeds = vec![problem.current(cfg)];
    best_response(&problem, cfg, &seeds, exec)
}
