use std::io::Write;
use std::process::{Command, Stdio};

use tradewar::cli::{BestResponseFile, ModelFile};
use tradewar::io::{self, Document};
use tradewar_core::ga::{GaConfig, Problem};
use tradewar_core::{ArmingtonEngine, WelfareEngine};

fn tradewar(args: &[&str], stdin: &str) -> (i32, String, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_tradewar"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn ok(args: &[&str], stdin: &str) -> String {
    let (code, out, err) = tradewar(args, stdin);
    assert_eq!(code, 0, "{args:?}: {err}");
    out
}

#[test]
fn pipeline_matches_grid_oracle() {
    let bundle = ok(&["scenario", "--countries", "2", "--deficit", "10"], "");
    let model_json = ok(&["calibrate"], &bundle);
    let out = ok(&["best-response", "--chooser", "C1", "--partner", "C2", "--rng-seed", "4"], &model_json);
    let doc: Document<BestResponseFile> = io::from_json(&out).unwrap();
    let br = doc.body.best_response;
    assert_eq!(doc.provenance.seed, Some(4));

    let model: Document<ModelFile> = io::from_json(&model_json).unwrap();
    let e = ArmingtonEngine::new(model.body.model);
    let problem = Problem::new(&e, 0, 1, e.baseline_tariffs().clone()).unwrap();
    let cfg = GaConfig::default();
    let (mut best_t, mut best_w) = (0, f64::NEG_INFINITY);
    for t in cfg.lower_ticks()..=cfg.upper_ticks() {
        let w = problem.fitness(&cfg, &[t]);
        if w > best_w {
            best_t = t;
            best_w = w;
        }
    }
    assert!((br.result.tau[0] - cfg.to_tau(best_t)).abs() <= 1e-4 + 1e-12, "{} vs {}", br.result.tau[0], cfg.to_tau(best_t));
    assert!((br.result.welfare - best_w).abs() <= 1e-9 * best_w);
    let w0 = e.welfare(e.baseline_tariffs()).unwrap()[0];
    assert!((br.delta_w_pct - 100.0 * (best_w / w0 - 1.0)).abs() < 1e-7);
    assert!(br.delta_w_pct > 0.0);
}

#[test]
fn usage_and_domain_errors() {
    assert_eq!(tradewar(&["nash", "--no-such-flag"], "").0, 2);
    assert_eq!(tradewar(&["frobnicate"], "").0, 2);
    assert_eq!(tradewar(&["toy", "--sigma", "abc"], "").0, 2);
    let (code, _, err) = tradewar(&["solve", "--model", "/nonexistent/model.json"], "");
    assert_eq!(code, 1);
    assert!(err.contains("/nonexistent/model.json"));
    assert_eq!(tradewar(&["calibrate"], "not a bundle").0, 1);
    assert_eq!(tradewar(&["toy", "--sigma", "0.5"], "").0, 1);
    ok(&["toy", "--d", "-0.1"], "");
    ok(&["toy", "--sweep", "d", "--from", "-0.1", "--to", "0.1", "--points", "3"], "");
}

#[test]
fn toy_sweep_is_monotone() {
    let out = ok(&["toy", "--sweep", "d", "--points", "9"], "");
    let mut lines = out.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("d,tau1_star,tau2_star"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    // Past some positive d Country 1's welfare rises all the way to the
    // feasibility edge, so tau1* sits at the top of the grid from then on.
    let corner = |r: &Vec<f64>| r[1] > 3.9;
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
        assert!(w[1][2] >= w[0][2], "{w:?}");
        if corner(&w[0]) {
            assert!(corner(&w[1]), "{w:?}");
        } else {
            assert!(w[1][1] >= w[0][1], "{w:?}");
        }
    }
    assert!(corner(rows.last().unwrap()));
    // With d = 0 both countries pick the same tariff.
    let mid = &rows[4];
    assert_eq!(mid[0], 0.0);
    assert!((mid[1] - mid[2]).abs() < 1e-9);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 3\npopulation = 40\nelites = 4\ncrossover = 28\nmutation = 8\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let model = ok(&["calibrate"], &ok(&["scenario", "--countries", "2", "--deficit", "2"], ""));
    let from_file: Document<BestResponseFile> =
        io::from_json(&ok(&["best-response", "--config", cfg, "--chooser", "C1", "--partner", "C2"], &model)).unwrap();
    assert_eq!(from_file.provenance.seed, Some(3));
    let flag: Document<BestResponseFile> = io::from_json(&ok(
        &["best-response", "--config", cfg, "--chooser", "C1", "--partner", "C2", "--rng-seed", "5"],
        &model,
    ))
    .unwrap();
    assert_eq!(flag.provenance.seed, Some(5));
    assert_eq!(flag.provenance.config_hash, from_file.provenance.config_hash);

    let (_, _, err) = tradewar(&["best-response", "--chooser", "C1", "--partner", "C2"], &model);
    assert!(err.contains("rng seed 0"), "{err}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "populaton = 40\n").unwrap();
    let (code, _, err) = tradewar(&["best-response", "--config", bad.to_str().unwrap(), "--chooser", "C1", "--partner", "C2"], &model);
    assert_eq!(code, 1);
    assert!(err.contains("populaton"));
}

#[test]
fn solve_with_tariff_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(&model, ok(&["calibrate"], &ok(&["scenario", "--countries", "3", "--sectors", "2"], ""))).unwrap();
    let tariffs = dir.path().join("t.csv");
    std::fs::write(&tariffs, "importer,exporter,sector,rate_percent\nC1,C2,G1,10\nC1,C2,G2,10\n").unwrap();
    let m = model.to_str().unwrap();
    let out = ok(&["solve", "--model", m, "--tariffs", tariffs.to_str().unwrap(), "--format", "csv"], "");
    let rows: Vec<Vec<String>> = out
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    let delta = |k: usize| rows[k][3].parse::<f64>().unwrap();
    assert!(delta(0) > 0.0, "{out}");
    assert!(delta(1) < 0.0, "{out}");
    let base = ok(&["solve", "--model", m, "--format", "csv"], "");
    assert!(base.lines().skip(2).all(|l| l.ends_with(",0.0000")), "{base}");
}

#[test]
fn scenario_out_dir_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("bundle");
    ok(&["scenario", "--countries", "3", "--deficit", "5", "--balance-via", "C3", "--out-dir", d.to_str().unwrap()], "");
    let data = io::load_economy(&d).unwrap().data;
    assert!((data.bilateral_deficit(0, 1) - 5.0).abs() < 1e-12);
    assert!(data.deficits().iter().all(|x| x.abs() < 1e-12));
    let model = ok(&["calibrate", "--data-dir", d.to_str().unwrap(), "--mode", "iceberg"], "");
    assert!(model.contains("\"command\": \"calibrate\""));
}

#[test]
fn imbalance_command() {
    let dir = tempfile::tempdir().unwrap();
    let flows = dir.path().join("f.csv");
    let gdp = dir.path().join("g.csv");
    std::fs::write(&flows, "importer,exporter,year,value\nA,B,2000,3\nB,A,2000,1\nA,B,2001,2\nB,A,2001,2\n").unwrap();
    std::fs::write(&gdp, "country,year,gdp\nA,2000,10\nB,2000,10\nA,2001,10\nB,2001,10\n").unwrap();
    let out = ok(
        &["imbalance", "--flows", flows.to_str().unwrap(), "--gdp", gdp.to_str().unwrap(), "--window", "2", "--format", "csv"],
        "",
    );
    let body: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "year,bilateral_index,aggregate_index,ma2_bilateral,ma2_aggregate");
    assert_eq!(body[1], "2000,0.5,0.2,0.5,0.2");
    assert_eq!(body[2], "2001,0,0,0.25,0.1");
}
