use tradewar_core::calibration::{calibrate, CalibrationOptions};
use tradewar_core::solver::{baseline_equilibrium, solve_counterfactual, Numeraire, SolverOptions};
use tradewar_core::toy::{foc_root, optimal_tariff_grid, solve_toy, Grid, ToyEquilibrium, ToyParams};
use tradewar_core::{EconomyData, Sector};

fn toy_flows(eq: &ToyEquilibrium, sigma: f64) -> EconomyData {
    let mut data = EconomyData::empty(vec!["C1".into(), "C2".into()], vec![Sector::goods("G1", sigma)]);
    data.set_flow(0, 0, 0, eq.c11);
    data.set_flow(0, 1, 0, eq.p * eq.c21);
    data.set_flow(1, 0, 0, eq.c12);
    data.set_flow(1, 1, 0, eq.p * eq.c22);
    data.gdp = vec![1.0, 1.0];
    data
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn armington_matches_toy_on_grid() {
    let sigma = 3.0;
    let opts = SolverOptions { numeraire: Numeraire::Wage(0), ..SolverOptions::default() };
    let mut worst: f64 = 0.0;
    for d in [-0.2, -0.1, 0.0, 0.1, 0.2] {
        let base_p = ToyParams { d, ..ToyParams::symmetric(sigma) };
        let base = solve_toy(&base_p).unwrap();
        let data = toy_flows(&base, sigma);
        let model = calibrate(&data, &CalibrationOptions::default()).unwrap();
        let eq0 = baseline_equilibrium(&model, &opts).unwrap();
        let w0 = eq0.welfare(&model);
        for tau1 in [0.0, 0.05, 0.1, 0.2, 0.3] {
            let toy = solve_toy(&ToyParams { tau1, ..base_p }).unwrap();
            let mut tariffs = data.tariffs.clone();
            tariffs.set(0, 1, 0, 1.0 + tau1);
            let eq = solve_counterfactual(&model, &tariffs, &opts).unwrap();
            let dm = model.dims();
            let y = |e: &tradewar_core::Equilibrium, i, j| e.y_bilateral[dm.pair(i, j, 0)];
            let checks = [
                (y(&eq, 0, 0) / y(&eq0, 0, 0), toy.c11 / base.c11),
                (y(&eq, 0, 1) / y(&eq0, 0, 1), toy.c21 / base.c21),
                (y(&eq, 1, 0) / y(&eq0, 1, 0), toy.c12 / base.c12),
                (y(&eq, 1, 1) / y(&eq0, 1, 1), toy.c22 / base.c22),
                (eq.w[1] / eq.w[0], toy.p / base.p),
            ];
            let w = eq.welfare(&model);
            let k = sigma / (sigma - 1.0);
            let welfare = [
                (w[0] / w0[0], (toy.u1 / base.u1).powf(k)),
                (w[1] / w0[1], (toy.u2 / base.u2).powf(k)),
            ];
            for (got, want) in checks.iter().chain(welfare.iter()) {
                let e = rel(*got, *want);
                worst = worst.max(e);
                assert!(e < 1e-8, "d={d} tau1={tau1}: {got} vs {want}");
            }
        }
    }
    assert!(worst < 1e-8);
}

#[test]
fn inverse_elasticity_rule_at_grid_optimum() {
    for sigma2 in [1.5, 2.0, 4.0] {
        let params = ToyParams { sigma2, ..ToyParams::symmetric(sigma2) };
        let (tau, _) = optimal_tariff_grid(&params, &Grid { lo: 0.0, hi: 6.0, step: 1e-4 }).unwrap();
        let eq = solve_toy(&ToyParams { tau1: tau, ..params }).unwrap();
        let implied = 1.0 / (eq.lambda2 * (sigma2 - 1.0));
        assert!((tau - implied).abs() < 1e-3, "sigma2={sigma2}: {tau} vs {implied}");
    }
}

#[test]
fn foc_root_agrees_with_grid() {
    // Small d keeps a local interior optimum below the collapse of Country 2's income.
    let params = ToyParams { d: 0.02, ..ToyParams::symmetric(4.0) };
    let (tau, _) = optimal_tariff_grid(&params, &Grid { lo: 0.0, hi: 1.2, step: 1e-4 }).unwrap();
    let root = foc_root(&params, 0.3, 1.2).unwrap();
    assert!((tau - root).abs() < 2e-4, "{tau} vs {root}");
}
