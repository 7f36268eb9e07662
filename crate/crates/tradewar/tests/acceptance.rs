#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tradewar::exec::Threads;
use tradewar_core::calibration::{calibrate, eliminate_bilateral_deficit, CalibrationOptions};
use tradewar_core::cp::{calibrate_cp, solve_hat, CpEngine};
use tradewar_core::ga::{best_response, uniform_best_response, GaConfig, Problem};
use tradewar_core::imbalance::{
    bilateral_imbalance, weighted_cross_section, weighted_mean, FlowPanel, FlowRecord, ImbalanceMode,
};
use tradewar_core::nash::{nash, verify_no_deviation, NashConfig, NashResult, VerifyGrid};
use tradewar_core::scenario::{generate, ScenarioSpec};
use tradewar_core::solver::{
    baseline_equilibrium, numerical_elasticity, solve_counterfactual, welfare, Numeraire, SolverOptions,
};
use tradewar_core::toy::{optimal_tariff_grid, solve_toy, Grid, ToyEquilibrium, ToyParams};
use tradewar_core::{ArmingtonEngine, CalibratedModel, EconomyData, Executor, Sector, WelfareEngine};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'a str, Option<Duration>, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

fn random_economy(rng: &mut Rng, countries: usize, sectors: usize, services: bool, io: bool) -> EconomyData {
    let ids = (0..countries).map(|i| format!("C{}", i + 1)).collect();
    let secs = (0..sectors)
        .map(|s| {
            let sigma = rng.range(2.0, 8.0);
            if services && s + 1 == sectors {
                Sector::service(format!("S{}", s + 1), sigma)
            } else {
                Sector::goods(format!("G{}", s + 1), sigma)
            }
        })
        .collect();
    let mut data = EconomyData::empty(ids, secs);
    let d = data.dims();
    for i in 0..countries {
        for j in 0..countries {
            for s in 0..sectors {
                data.set_flow(i, j, s, rng.range(5.0, 10.0));
                if i != j && !data.sectors[s].is_service {
                    data.tariffs.set(i, j, s, 1.0 + rng.range(0.0, 0.2));
                }
            }
        }
    }
    if io {
        for j in 0..countries {
            for s in 0..sectors {
                let sales = data.sales(j, s);
                for k in 0..sectors {
                    data.io_usage[d.io(j, s, k)] = rng.range(0.0, 0.4) * sales / sectors as f64;
                }
            }
        }
    }
    data.gdp = vec![100.0; countries];
    data
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if y.abs() > 1e-12 { (x - y).abs() / y.abs() } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

fn scenario(countries: usize, goods: usize, deficit: f64, balance_via: Option<usize>) -> CalibratedModel {
    let mut spec = ScenarioSpec::new(countries, goods);
    spec.deficit = deficit;
    spec.balance_via = balance_via;
    calibrate(&generate(&spec).unwrap(), &CalibrationOptions::default()).unwrap()
}

fn seed(s: u64) -> GaConfig {
    GaConfig { seed: s, ..GaConfig::default() }
}

fn nondecreasing(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0] - tol)
}

fn d_grid() -> Vec<f64> {
    (0..7).map(|k| 0.5 * k as f64).collect()
}

// 1
fn calibration_round_trip() -> Outcome {
    let mut rng = Rng::new(2024);
    let mut worst: f64 = 0.0;
    let mut seen = [false; 4];
    for case in 0..10 {
        let countries = rng.int(2, 4);
        let sectors = 1 + case % 5;
        let services = sectors > 1 && case % 2 == 0;
        let io = case % 4 < 2;
        let iceberg = case % 3 == 1;
        seen[usize::from(services) + 2 * usize::from(io)] = true;
        let data = random_economy(&mut rng, countries, sectors, services, io);
        let opts = if iceberg { CalibrationOptions::iceberg() } else { CalibrationOptions::default() };
        let model = calibrate(&data, &opts).map_err(|e| format!("case {case}: {e}"))?;
        let eq = baseline_equilibrium(&model, &SolverOptions::default()).map_err(|e| format!("case {case}: {e}"))?;
        let e = max_rel(&eq.flows(&data.tariffs), &data.flows).max(max_rel(&eq.io_usage(data.dims()), &data.io_usage));
        worst = worst.max(e);
        ensure!(e < 1e-8, "case {case} ({countries}x{sectors}): max relative error {e:e}");
    }
    ensure!(seen.iter().filter(|&&s| s).count() >= 3, "too few service/IO combinations covered");
    Ok(format!("10 economies, max rel err {worst:.1e}"))
}

fn toy_flows(eq: &ToyEquilibrium, sigma: f64) -> EconomyData {
    let mut data = EconomyData::empty(vec!["C1".into(), "C2".into()], vec![Sector::goods("G1", sigma)]);
    data.set_flow(0, 0, 0, eq.c11);
    data.set_flow(0, 1, 0, eq.p * eq.c21);
    data.set_flow(1, 0, 0, eq.c12);
    data.set_flow(1, 1, 0, eq.p * eq.c22);
    data.gdp = vec![1.0, 1.0];
    data
}

// 2
fn toy_oracle() -> Outcome {
    let sigma = 3.0;
    let opts = SolverOptions { numeraire: Numeraire::Wage(0), ..SolverOptions::default() };
    let mut worst: f64 = 0.0;
    for d in [-0.2, -0.1, 0.0, 0.1, 0.2] {
        let base_p = ToyParams { d, ..ToyParams::symmetric(sigma) };
        let base = solve_toy(&base_p).map_err(|e| e.to_string())?;
        let model = calibrate(&toy_flows(&base, sigma), &CalibrationOptions::default()).map_err(|e| e.to_string())?;
        let eq0 = baseline_equilibrium(&model, &opts).map_err(|e| e.to_string())?;
        let w0 = eq0.welfare(&model);
        let dm = model.dims();
        for tau1 in [0.0, 0.05, 0.1, 0.2, 0.3] {
            let toy = solve_toy(&ToyParams { tau1, ..base_p }).map_err(|e| e.to_string())?;
            let mut tariffs = model.baseline_tariffs.clone();
            tariffs.set(0, 1, 0, 1.0 + tau1);
            let eq = solve_counterfactual(&model, &tariffs, &opts).map_err(|e| e.to_string())?;
            let y = |e: &tradewar_core::Equilibrium, i, j| e.y_bilateral[dm.pair(i, j, 0)];
            let w = eq.welfare(&model);
            let k = sigma / (sigma - 1.0);
            let pairs = [
                (y(&eq, 0, 0) / y(&eq0, 0, 0), toy.c11 / base.c11),
                (y(&eq, 0, 1) / y(&eq0, 0, 1), toy.c21 / base.c21),
                (y(&eq, 1, 0) / y(&eq0, 1, 0), toy.c12 / base.c12),
                (y(&eq, 1, 1) / y(&eq0, 1, 1), toy.c22 / base.c22),
                (eq.w[1] / eq.w[0], toy.p / base.p),
                (w[0] / w0[0], (toy.u1 / base.u1).powf(k)),
                (w[1] / w0[1], (toy.u2 / base.u2).powf(k)),
            ];
            for (got, want) in pairs {
                let e = (got / want - 1.0).abs();
                worst = worst.max(e);
                ensure!(e < 1e-8, "d={d} tau1={tau1}: {got} vs {want}");
            }
        }
    }
    Ok(format!("25 grid points, max rel err {worst:.1e}"))
}

// 3
fn inverse_elasticity_rule() -> Outcome {
    let mut detail = Vec::new();
    for sigma2 in [1.5, 2.0, 4.0] {
        let params = ToyParams::symmetric(sigma2);
        let (tau, _) = optimal_tariff_grid(&params, &Grid { lo: 0.0, hi: 6.0, step: 1e-4 }).map_err(|e| e.to_string())?;
        let eq = solve_toy(&ToyParams { tau1: tau, ..params }).map_err(|e| e.to_string())?;
        let implied = 1.0 / (eq.lambda2 * (sigma2 - 1.0));
        ensure!((tau - implied).abs() < 1e-3, "sigma2={sigma2}: grid {tau} vs formula {implied}");
        detail.push(format!("s2={sigma2}: {tau:.4}"));
    }
    Ok(detail.join(", "))
}

fn exhaustive<E: WelfareEngine>(problem: &Problem<'_, E>, cfg: &GaConfig, exec: &Threads) -> (i64, f64) {
    let lo = cfg.lower_ticks();
    let n = (cfg.upper_ticks() - lo + 1) as usize;
    let w = exec.map(n, |k| problem.fitness(cfg, &[lo + k as i64]));
    let mut best = (lo, f64::NEG_INFINITY);
    for (k, v) in w.into_iter().enumerate() {
        if v > best.1 {
            best = (lo + k as i64, v);
        }
    }
    best
}

// 4
fn ga_vs_exhaustive(exec: &Threads) -> Outcome {
    let cfg = GaConfig::default();
    let single = ArmingtonEngine::new(scenario(2, 1, 0.0, None));
    let p1 = Problem::new(&single, 0, 1, single.baseline_tariffs().clone()).map_err(|e| e.to_string())?;
    let (t1, w1) = exhaustive(&p1, &cfg, exec);
    let multi = ArmingtonEngine::new(scenario(2, 3, 5.0, None));
    let p2 = Problem::new(&multi, 0, 1, multi.baseline_tariffs().clone()).map_err(|e| e.to_string())?.uniform(true);
    let (t2, w2) = exhaustive(&p2, &cfg, exec);
    for s in [1, 2, 3] {
        let br = best_response(&p1, &seed(s), &[], exec).map_err(|e| e.to_string())?;
        ensure!((br.tau[0] - cfg.to_tau(t1)).abs() <= 1e-4 + 1e-12, "single, seed {s}: {} vs grid {}", br.tau[0], cfg.to_tau(t1));
        ensure!((br.welfare - w1).abs() <= 1e-9 * w1.abs(), "single, seed {s}: welfare {} vs {}", br.welfare, w1);
        let br = uniform_best_response(&multi, 0, 1, multi.baseline_tariffs().clone(), &seed(s), exec).map_err(|e| e.to_string())?;
        ensure!(br.tau.iter().all(|t| (t - cfg.to_tau(t2)).abs() <= 1e-4 + 1e-12), "uniform, seed {s}: {:?} vs grid {}", br.tau, cfg.to_tau(t2));
        ensure!((br.welfare - w2).abs() <= 1e-9 * w2.abs(), "uniform, seed {s}: welfare {} vs {}", br.welfare, w2);
    }
    Ok(format!("single tau*={:.4}, uniform tau*={:.4}, seeds 1-3", cfg.to_tau(t1), cfg.to_tau(t2)))
}

// 5
fn nash_no_deviation(exec: &Threads) -> Outcome {
    let e = ArmingtonEngine::new(scenario(3, 3, 5.0, None));
    let r = nash(&e, 0, 1, &seed(1), &NashConfig::default(), exec).map_err(|e| e.to_string())?;
    ensure!(r.converged, "Nash iteration did not converge in {} rounds", r.iterations);
    let grid = VerifyGrid { fine_lo: 0.0, fine_hi: 0.25, fine_step: 0.0025, coarse_step: 0.0, cap: 0.25 };
    let rep = verify_no_deviation(&e, &r, &grid, exec).map_err(|e| e.to_string())?;
    let worst = rep.rows.iter().map(|x| x.max_improvement).fold(f64::NEG_INFINITY, f64::max);
    ensure!(rep.complete, "some deviation equilibria failed to solve");
    ensure!(rep.pass, "profitable deviation of {worst:e}");
    let mut bad: NashResult = r.clone();
    bad.tau_i[0] += 0.05;
    let rep_bad = verify_no_deviation(&e, &bad, &grid, exec).map_err(|e| e.to_string())?;
    ensure!(!rep_bad.pass, "perturbed candidate was not rejected");
    Ok(format!("tau_i={:?} tau_j={:?}, max gain {worst:.1e}; perturbed candidate rejected", r.tau_i, r.tau_j))
}

fn flat_tariff_delta(model: &CalibratedModel, both: bool) -> Result<f64, String> {
    let opts = SolverOptions::default();
    let base = baseline_equilibrium(model, &opts).map_err(|e| e.to_string())?;
    let mut t = model.baseline_tariffs.clone();
    for s in model.taxable_sectors() {
        t.set(0, 1, s, 1.1);
        if both {
            t.set(1, 0, s, 1.1);
        }
    }
    let eq = solve_counterfactual(model, &t, &opts).map_err(|e| e.to_string())?;
    Ok(welfare(model, &base, &eq).map_err(|e| e.to_string())?.delta_pct[0])
}

// 6
fn deficit_comparative_statics(exec: &Threads) -> Outcome {
    let ds = d_grid();
    let (mut uni, mut nash_i, mut three_i, mut three_j, mut flat_u, mut flat_r) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &d in &ds {
        let m2 = scenario(2, 1, d, None);
        let e2 = ArmingtonEngine::new(m2.clone());
        let p = Problem::new(&e2, 0, 1, e2.baseline_tariffs().clone()).map_err(|e| e.to_string())?;
        uni.push(best_response(&p, &seed(1), &[p.current(&seed(1))], exec).map_err(|e| e.to_string())?.tau[0]);
        let r = nash(&e2, 0, 1, &seed(1), &NashConfig::default(), exec).map_err(|e| e.to_string())?;
        ensure!(r.converged, "2-country Nash at d={d} did not converge");
        nash_i.push(r.tau_i[0]);
        let e3 = ArmingtonEngine::new(scenario(3, 1, d, Some(2)));
        let r = nash(&e3, 0, 1, &seed(1), &NashConfig::default(), exec).map_err(|e| e.to_string())?;
        ensure!(r.converged, "3-country Nash at d={d} did not converge");
        three_i.push(r.tau_i[0]);
        three_j.push(r.tau_j[0]);
        flat_u.push(flat_tariff_delta(&m2, false)?);
        flat_r.push(flat_tariff_delta(&m2, true)?);
    }
    let tol = 1e-6;
    ensure!(nondecreasing(&uni, tol), "unilateral tau* not increasing in d: {uni:?}");
    ensure!(nondecreasing(&nash_i, tol), "2-country Nash tau* not increasing in d: {nash_i:?}");
    ensure!(nondecreasing(&three_i, tol), "3-country chooser tau* not increasing: {three_i:?}");
    let neg: Vec<f64> = three_j.iter().map(|x| -x).collect();
    ensure!(nondecreasing(&neg, tol), "3-country partner tau* not decreasing: {three_j:?}");
    ensure!(nondecreasing(&flat_u, tol), "flat 10% unilateral welfare not increasing: {flat_u:?}");
    ensure!(nondecreasing(&flat_r, tol), "flat 10% retaliatory welfare not increasing: {flat_r:?}");
    ensure!(uni.last() > uni.first() && three_i.last() > three_i.first() && three_j.last() < three_j.first(), "no movement in d");

    // Past the autarky peak the unconstrained optimum is prohibitive while the
    // partner's participation pulls the constrained optimum back down.
    let mut peak = Vec::new();
    for d in [3.0, 10.0] {
        let e = ArmingtonEngine::new(scenario(2, 1, d, None));
        let free = Problem::new(&e, 0, 1, e.baseline_tariffs().clone()).map_err(|e| e.to_string())?;
        let cons = Problem::new(&e, 0, 1, e.baseline_tariffs().clone()).map_err(|e| e.to_string())?.with_participation().map_err(|e| e.to_string())?;
        let a = best_response(&free, &seed(1), &[free.current(&seed(1))], exec).map_err(|e| e.to_string())?.tau[0];
        let b = best_response(&cons, &seed(1), &[cons.current(&seed(1))], exec).map_err(|e| e.to_string())?.tau[0];
        peak.push((a, b));
    }
    ensure!(peak[1].0 >= peak[0].0 && peak[1].0 >= GaConfig::default().upper - 1e-9, "unconstrained tau* at d=10 is {}", peak[1].0);
    ensure!(peak[1].1 < peak[0].1, "no participation-constraint drop: {peak:?}");
    Ok(format!(
        "d 0..3: unilateral {:.4}->{:.4}, Nash {:.4}->{:.4}, 3-country {:.4}->{:.4} / {:.4}->{:.4}; d=10 constrained {:.4}",
        uni[0], uni[6], nash_i[0], nash_i[6], three_i[0], three_i[6], three_j[0], three_j[6], peak[1].1
    ))
}

// 7
fn deficit_elimination(exec: &Threads) -> Outcome {
    let model = scenario(3, 2, 4.0, Some(2));
    let opts = SolverOptions::default();
    let before = nash(&ArmingtonEngine::new(model.clone()), 0, 1, &seed(1), &NashConfig::default(), exec).map_err(|e| e.to_string())?;
    let gone = eliminate_bilateral_deficit(&model, 0, 1, &opts).map_err(|e| e.to_string())?;
    let after = nash(&ArmingtonEngine::new(gone.model), 0, 1, &seed(1), &NashConfig::default(), exec).map_err(|e| e.to_string())?;
    ensure!(before.converged && after.converged, "Nash did not converge");
    let (b, a) = (before.delta_pct().0, after.delta_pct().0);
    ensure!(a < b, "chooser dW {b:.4}% -> {a:.4}% did not decrease");
    Ok(format!("chooser dW {b:.4}% -> {a:.4}% (zeta={:.4})", gone.zeta))
}

/// Two-country, one-sector Eaton-Kortum economy in levels.
struct Levels {
    lambda: [[f64; 2]; 2],
    labor: [f64; 2],
    deficits: [f64; 2],
    theta: f64,
}

impl Levels {
    fn outcome(&self, w: [f64; 2], tau: [[f64; 2]; 2]) -> ([f64; 2], [f64; 2], f64) {
        let mut x = [0.0; 2];
        let mut price = [0.0; 2];
        let mut pi = [[0.0; 2]; 2];
        for i in 0..2 {
            let terms: Vec<f64> = (0..2).map(|n| self.lambda[i][n] * (w[n] * tau[i][n]).powf(-self.theta)).collect();
            let total: f64 = terms.iter().sum();
            price[i] = total.powf(-1.0 / self.theta);
            let mut beta = 0.0;
            for n in 0..2 {
                pi[i][n] = terms[n] / total;
                beta += pi[i][n] * (tau[i][n] - 1.0) / tau[i][n];
            }
            x[i] = (w[i] * self.labor[i] + self.deficits[i]) / (1.0 - beta);
        }
        let sales1 = (0..2).map(|i| pi[i][1] * x[i] / tau[i][1]).sum::<f64>();
        (x, price, sales1 / (w[1] * self.labor[1]) - 1.0)
    }

    fn solve(&self, tau: [[f64; 2]; 2]) -> ([f64; 2], [f64; 2]) {
        let total = self.labor[0] + self.labor[1];
        let wages = |w1: f64| [(total - w1 * self.labor[1]) / self.labor[0], w1];
        let (mut lo, mut hi) = (1e-9, total / self.labor[1] * (1.0 - 1e-9));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.outcome(wages(mid), tau).2 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (x, p, _) = self.outcome(wages(0.5 * (lo + hi)), tau);
        (x, p)
    }
}

// 8
fn cp_model(exec: &Threads) -> Outcome {
    let mut rng = Rng::new(8);
    for (j, s, io) in [(2, 1, false), (3, 3, true), (4, 2, true)] {
        let data = random_economy(&mut rng, j, s, s > 1, io);
        let theta: Vec<f64> = (0..s).map(|k| 4.0 + k as f64).collect();
        let cp = calibrate_cp(&data, &theta).map_err(|e| e.to_string())?;
        let eq = solve_hat(&cp, &data.tariffs, &SolverOptions::default()).map_err(|e| e.to_string())?;
        let all = eq.hat_w.iter().chain(&eq.hat_p).chain(&eq.hat_c).chain(&eq.hat_income).chain(&eq.hat_welfare);
        for v in all {
            ensure!((v - 1.0).abs() < 1e-10, "{j}x{s}: hat {v} at unchanged tariffs");
        }
    }

    let theta = 4.0;
    let mut data = EconomyData::empty(vec!["A".into(), "B".into()], vec![Sector::goods("G", 5.0)]);
    let flows = [[60.0, 25.0], [15.0, 40.0]];
    let tau0 = [[1.0, 1.05], [1.1, 1.0]];
    for i in 0..2 {
        for n in 0..2 {
            data.set_flow(i, n, 0, flows[i][n]);
            data.tariffs.set(i, n, 0, tau0[i][n]);
        }
    }
    let cp = calibrate_cp(&data, &[theta]).map_err(|e| e.to_string())?;
    let mut levels = Levels { lambda: [[0.0; 2]; 2], labor: [0.0; 2], deficits: [0.0; 2], theta };
    for i in 0..2 {
        let x: f64 = (0..2).map(|n| tau0[i][n] * flows[i][n]).sum();
        for n in 0..2 {
            levels.lambda[i][n] = tau0[i][n] * flows[i][n] / x * tau0[i][n].powf(theta);
        }
        levels.deficits[i] = flows[i][1 - i] - flows[1 - i][i];
        let revenue: f64 = (0..2).map(|n| (tau0[i][n] - 1.0) * flows[i][n]).sum();
        levels.labor[i] = x - revenue - levels.deficits[i];
    }
    let (x0, p0) = levels.solve(tau0);
    let mut worst: f64 = 0.0;
    for (t01, t10) in [(1.3, 1.1), (1.0, 1.0), (1.05, 1.6)] {
        let (x1, p1) = levels.solve([[1.0, t01], [t10, 1.0]]);
        let mut sched = data.tariffs.clone();
        sched.set(0, 1, 0, t01);
        sched.set(1, 0, 0, t10);
        let eq = solve_hat(&cp, &sched, &SolverOptions::default()).map_err(|e| e.to_string())?;
        for i in 0..2 {
            let want = (x1[i] / x0[i]) / (p1[i] / p0[i]);
            let e = (eq.hat_welfare[i] / want - 1.0).abs().max((eq.hat_p[i] / (p1[i] / p0[i]) - 1.0).abs());
            worst = worst.max(e);
            ensure!(e < 1e-8, "levels oracle: country {i} at ({t01},{t10}): rel err {e:e}");
        }
    }

    let model = scenario(2, 1, 3.0, None);
    let spec = {
        let mut s = ScenarioSpec::new(2, 1);
        s.deficit = 3.0;
        generate(&s).unwrap()
    };
    let cpe = CpEngine::new(calibrate_cp(&spec, &[theta]).map_err(|e| e.to_string())?);
    let rc = nash(&cpe, 0, 1, &seed(1), &NashConfig::default(), exec).map_err(|e| e.to_string())?;
    let ra = nash(&ArmingtonEngine::new(model), 0, 1, &seed(1), &NashConfig::default(), exec).map_err(|e| e.to_string())?;
    ensure!(rc.converged && ra.converged, "Nash did not converge");
    let (ci, cj) = rc.delta_pct();
    let (ai, aj) = ra.delta_pct();
    ensure!(ai > aj, "Armington: deficit country {ai:.4}% vs partner {aj:.4}%");
    ensure!(ci > cj, "CP: deficit country {ci:.4}% vs partner {cj:.4}%");
    Ok(format!("identity ok, levels max err {worst:.1e}, Nash dW CP {ci:.3}/{cj:.3} Armington {ai:.3}/{aj:.3}"))
}

// 9
fn imbalance() -> Outcome {
    for (a, b, want) in [(2.0, 2.0, 0.0), (2.0, 0.0, 1.0), (3.0, 1.0, 0.5)] {
        let v = bilateral_imbalance(a, b).map_err(|e| e.to_string())?;
        ensure!(v == want, "index({a},{b}) = {v}, want {want}");
    }
    ensure!(bilateral_imbalance(0.0, 0.0).is_err(), "zero trade must be undefined");
    let v = weighted_mean(&[(0.5, 60.0), (0.0, 40.0)]).map_err(|e| e.to_string())?;
    ensure!((v - 0.3).abs() < 1e-15, "weighted mean {v}");

    // A-B balanced, A-C at 3:1, B-C no trade; importer GDP 1, 1, 2.
    let mut panel = FlowPanel::new();
    for (i, j, v) in [("A", "B", 2.0), ("B", "A", 2.0), ("A", "C", 3.0), ("C", "A", 1.0)] {
        panel.insert_flow(FlowRecord { importer: i.into(), exporter: j.into(), year: 2000, value: v }).unwrap();
    }
    for (c, g) in [("A", 1.0), ("B", 1.0), ("C", 2.0)] {
        panel.insert_gdp(c, 2000, g).unwrap();
    }
    let v = weighted_cross_section(&panel, 2000, ImbalanceMode::Bilateral).map_err(|e| e.to_string())?;
    ensure!((v - 0.3).abs() < 1e-15, "panel cross-section {v}");

    let mut rng = Rng::new(9);
    for _ in 0..1000 {
        let (a, b) = (rng.range(0.0, 1e6), rng.range(0.0, 1e6));
        let k = 10f64.powf(rng.range(-6.0, 6.0));
        let v = bilateral_imbalance(a, b).map_err(|e| e.to_string())?;
        let w = bilateral_imbalance(k * a, k * b).map_err(|e| e.to_string())?;
        ensure!((0.0..=1.0).contains(&v), "index {v} out of range");
        ensure!((v - w).abs() <= 1e-12, "scale changed index: {v} vs {w} (k={k})");
        ensure!(v == bilateral_imbalance(b, a).unwrap(), "index not symmetric");
    }
    Ok("exact cases, weighted 0.3, 1000 random pairs".into())
}

fn cli(args: &[&str], stdin: &str) -> Result<Vec<u8>, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_tradewar"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).map_err(|e| e.to_string())?;
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

// 10
fn determinism() -> Outcome {
    let bundle = cli(&["scenario", "--countries", "3", "--sectors", "2", "--deficit", "3", "--balance-via", "C3"], "")?;
    let model = cli(&["calibrate"], &String::from_utf8(bundle).unwrap())?;
    let model = String::from_utf8(model).unwrap();
    let runs = ["1", "4", "8"]
        .iter()
        .map(|t| cli(&["nash", "--chooser", "C1", "--partner", "C2", "--rng-seed", "11", "--threads", t], &model))
        .collect::<Result<Vec<_>, _>>()?;
    ensure!(runs[0] == runs[1] && runs[1] == runs[2], "nash output differs across thread counts");
    Ok(format!("{} bytes identical for --threads 1/4/8", runs[0].len()))
}

// 11
fn elasticity() -> Outcome {
    // Twenty symmetric countries: each bilateral import share is about 3%, so
    // the exporter's wage and the importer's price index barely move.
    let sigma = 5.5;
    let n = 20;
    let mut data = EconomyData::empty((0..n).map(|k| format!("C{k}")).collect(), vec![Sector::goods("G", sigma)]);
    for i in 0..n {
        for j in 0..n {
            data.set_flow(i, j, 0, if i == j { 20.0 } else { 2.0 });
        }
    }
    data.gdp = vec![1.0; n];
    let model = calibrate(&data, &CalibrationOptions::default()).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let v = numerical_elasticity(&model, 0, 1, 0, &opts).map_err(|e| e.to_string())?;
    ensure!(v < 0.0 && (v.abs() / sigma - 1.0).abs() < 0.10, "small-share elasticity {v}");

    let mut rng = Rng::new(11);
    let mut count = 0;
    for (n, s) in [(2, 1), (3, 2), (4, 3)] {
        let data = random_economy(&mut rng, n, s, false, s > 1);
        let model = calibrate(&data, &CalibrationOptions::default()).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in 0..n {
                for k in 0..s {
                    let e = numerical_elasticity(&model, i, j, k, &opts).map_err(|e| e.to_string())?;
                    ensure!(e < 0.0, "elasticity {e} at ({i},{j},{k}) is not negative");
                    count += 1;
                }
            }
        }
    }
    Ok(format!("small-share elasticity {v:.4} vs sigma {sigma}; {count} random cells negative"))
}

fn main() {
    let exec = Threads::new(0).expect("thread pool");
    let criteria: Vec<Criterion> = vec![
        ("calibration round-trip", Some(Duration::from_secs(30)), Box::new(calibration_round_trip)),
        ("toy-model oracle", Some(Duration::from_secs(10)), Box::new(toy_oracle)),
        ("optimal tariff formula", None, Box::new(inverse_elasticity_rule)),
        ("GA vs exhaustive search", Some(Duration::from_secs(300)), Box::new(|| ga_vs_exhaustive(&exec))),
        ("Nash no-deviation", Some(Duration::from_secs(600)), Box::new(|| nash_no_deviation(&exec))),
        ("deficit comparative statics", None, Box::new(|| deficit_comparative_statics(&exec))),
        ("deficit elimination", None, Box::new(|| deficit_elimination(&exec))),
        ("CP identity and oracle", None, Box::new(|| cp_model(&exec))),
        ("imbalance indices", None, Box::new(imbalance)),
        ("thread-count determinism", None, Box::new(determinism)),
        ("numerical elasticity", None, Box::new(elasticity)),
    ];
    let mut failed = 0;
    for (k, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = run();
        let took = start.elapsed();
        if let (Ok(_), Some(limit)) = (&outcome, limit) {
            if took > *limit {
                outcome = Err(format!("took {took:.1?}, limit {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.1?}]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{took:.1?}]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
