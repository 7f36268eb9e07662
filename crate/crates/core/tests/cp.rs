mod common;

use common::{random_economy, Rng};
use tradewar_core::cp::{calibrate_cp, solve_hat};
use tradewar_core::solver::SolverOptions;
use tradewar_core::{EconomyData, Sector};

#[test]
fn unchanged_tariffs_give_unit_hats() {
    let mut rng = Rng::new(11);
    for (j, s, io) in [(2, 1, false), (3, 3, true), (4, 2, true)] {
        let data = random_economy(&mut rng, j, s, s > 1, io);
        let theta: Vec<f64> = (0..s).map(|k| 4.0 + k as f64).collect();
        let cp = calibrate_cp(&data, &theta).unwrap();
        let eq = solve_hat(&cp, &data.tariffs, &SolverOptions::default()).unwrap();
        let all = eq.hat_w.iter().chain(&eq.hat_p).chain(&eq.hat_c).chain(&eq.hat_income).chain(&eq.hat_welfare);
        for v in all {
            assert!((v - 1.0).abs() < 1e-10, "{v}");
        }
        for (h, pi) in eq.hat_pi.iter().zip(&cp.pi) {
            if *pi > 0.0 {
                assert!((h - 1.0).abs() < 1e-10);
            }
        }
    }
}

/// Two-country, one-sector Eaton-Kortum economy in levels, with importer-specific
/// cost shifters λ_in = π_in κ_in^θ absorbing technology and trade costs.
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

#[test]
fn hats_match_levels_model() {
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
    let cp = calibrate_cp(&data, &[theta]).unwrap();
    let mut levels = Levels { lambda: [[0.0; 2]; 2], labor: [0.0; 2], deficits: [0.0; 2], theta };
    for i in 0..2 {
        let x: f64 = (0..2).map(|n| tau0[i][n] * flows[i][n]).sum();
        for n in 0..2 {
            levels.lambda[i][n] = tau0[i][n] * flows[i][n] / x * tau0[i][n].powf(theta);
        }
        let imports: f64 = flows[i][1 - i];
        let exports: f64 = flows[1 - i][i];
        levels.deficits[i] = imports - exports;
        let revenue: f64 = (0..2).map(|n| (tau0[i][n] - 1.0) * flows[i][n]).sum();
        levels.labor[i] = x - revenue - levels.deficits[i];
    }
    let (x0, p0) = levels.solve(tau0);
    for (t01, t10) in [(1.3, 1.1), (1.0, 1.0), (1.05, 1.6)] {
        let tau1 = [[1.0, t01], [t10, 1.0]];
        let (x1, p1) = levels.solve(tau1);
        let mut sched = data.tariffs.clone();
        sched.set(0, 1, 0, t01);
        sched.set(1, 0, 0, t10);
        let eq = solve_hat(&cp, &sched, &SolverOptions::default()).unwrap();
        for i in 0..2 {
            let want = (x1[i] / x0[i]) / (p1[i] / p0[i]);
            let got = eq.hat_welfare[i];
            assert!((got / want - 1.0).abs() < 1e-8, "country {i}: {got} vs {want}");
            let want_p = p1[i] / p0[i];
            assert!((eq.hat_p[i] / want_p - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn cp_rejects_missing_theta() {
    let mut rng = Rng::new(2);
    let data = random_economy(&mut rng, 2, 2, false, false);
    assert!(calibrate_cp(&data, &[4.0]).is_err());
    assert!(calibrate_cp(&data, &[4.0, 0.0]).is_err());
}
