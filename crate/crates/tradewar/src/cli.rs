use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tradewar_core::calibration::{
    aggregate, calibrate, eliminate_bilateral_deficit, rebalance_row_exports, AggregationOptions, CalibrationOptions,
};
use tradewar_core::cp::{calibrate_cp, solve_hat, CpEngine, HatEquilibrium};
use tradewar_core::ga::{best_response, BestResponse, GaConfig, GenerationRecord, Problem};
use tradewar_core::imbalance::{moving_average, weighted_cross_section, FlowPanel, FlowRecord, ImbalanceMode};
use tradewar_core::model::CalibrationMode;
use tradewar_core::nash::{nash, verify_no_deviation, NashResult, VerifyGrid, VerifyReport};
use tradewar_core::scenario::{generate, ScenarioSpec};
use tradewar_core::solver::{baseline_equilibrium, numerical_elasticity, solve_counterfactual, welfare};
use tradewar_core::toy::{foc_residual, optimal_tariff_country2, optimal_tariff_grid, solve_toy, Grid, ToyEquilibrium, ToyParams};
use tradewar_core::{
    ArmingtonEngine, CalibratedModel, EconomyData, Equilibrium, Sector, TariffSchedule, WelfareEngine, WelfareReport,
};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exec::Threads;
use crate::io::{self, BundleText, Document};
use crate::provenance::Provenance;

#[derive(Debug, Parser)]
#[command(name = "tradewar", version, about = "Optimal tariffs and tariff wars with trade imbalances")]
pub struct Cli {
    /// Flat key = value settings file (GA, solver and Nash fields).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output format; JSON unless a command says otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineKind {
    Armington,
    Cp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    D,
    Tau2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Preferences,
    Iceberg,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model JSON from `calibrate`; read from stdin when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long, value_enum, default_value_t = EngineKind::Armington)]
    pub engine: EngineKind,
    /// Trade elasticities for the CP engine: one value, or one per sector.
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct GameArgs {
    #[arg(long)]
    pub chooser: String,
    #[arg(long)]
    pub partner: String,
    /// One tariff for all taxable sectors.
    #[arg(long)]
    pub uniform: bool,
    /// Worst case for the chooser if the partner would prefer autarky.
    #[arg(long)]
    pub participation_constraint: bool,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Upper bound on gross tariff factors.
    #[arg(long)]
    pub cap: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bilateral and aggregate imbalance indices of a flow panel.
    Imbalance {
        /// CSV with importer,exporter,year,value.
        #[arg(long)]
        flows: PathBuf,
        /// CSV with country,year,gdp.
        #[arg(long)]
        gdp: PathBuf,
        #[arg(long, default_value_t = 5)]
        window: usize,
    },
    /// Synthetic symmetric economies with injected deficits.
    Scenario {
        #[arg(long, default_value_t = 2)]
        countries: usize,
        #[arg(long, default_value_t = 1)]
        sectors: usize,
        #[arg(long)]
        services: bool,
        #[arg(long)]
        io: bool,
        #[arg(long, default_value_t = 0.3)]
        io_intensity: f64,
        #[arg(long, default_value_t = 5.5)]
        elasticity: f64,
        #[arg(long, default_value_t = 100.0)]
        expenditure: f64,
        /// Bilateral deficit of the first pair member with the second.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        deficit: f64,
        #[arg(long, default_value = "C1,C2")]
        pair: String,
        /// Offset the bilateral deficit through this country.
        #[arg(long)]
        balance_via: Option<String>,
        /// `country:counterpart:amount` one-directional adjustments.
        #[arg(long)]
        offset: Vec<String>,
        /// Write the five CSV files here instead of a stream to stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fit model parameters to a data bundle.
    Calibrate {
        /// Directory with the CSV bundle; a bundle stream on stdin otherwise.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Preferences)]
        mode: Mode,
        #[arg(long, default_value_t = 100.0)]
        iceberg_max: f64,
        #[arg(long, default_value_t = 5.5)]
        service_elasticity: f64,
        /// CSV source,target mapping sectors into composites.
        #[arg(long)]
        sector_map: Option<PathBuf>,
        /// CSV source,target mapping countries into regions.
        #[arg(long)]
        region_map: Option<PathBuf>,
        #[arg(long)]
        simple_average_tariffs: bool,
        /// Scale this country's exports so that every other country is balanced.
        #[arg(long)]
        rebalance_row: Option<String>,
        /// `I,J`: remove the bilateral deficit of I with J.
        #[arg(long)]
        eliminate_deficit: Option<String>,
    },
    /// Counterfactual equilibrium and welfare under new tariffs.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        /// Tariff CSV in the bundle layout; listed cells replace the baseline.
        #[arg(long)]
        tariffs: Option<PathBuf>,
        /// Also write the full equilibrium JSON here.
        #[arg(long)]
        equilibrium_out: Option<PathBuf>,
    },
    /// Welfare-maximizing tariffs for one country against a fixed partner.
    BestResponse {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        game: GameArgs,
        /// CSV of starting candidates: header of taxable sector ids (or `tau`
        /// with --uniform), one candidate per row in percent.
        #[arg(long)]
        seed_file: Option<PathBuf>,
        /// Per-generation trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Nash tariffs by iterated best responses.
    Nash {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        game: GameArgs,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long)]
        check_multiplicity: bool,
    },
    /// Single-sector deviation check of a Nash result.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// JSON written by `nash`.
        #[arg(long)]
        nash: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        fine_hi: f64,
        #[arg(long, default_value_t = 0.0025)]
        fine_step: f64,
        /// Zero disables the coarse part of the grid.
        #[arg(long, default_value_t = 0.05)]
        coarse_step: f64,
        /// Highest net tariff rate tried.
        #[arg(long, default_value_t = 4.0)]
        max_rate: f64,
    },
    /// Numerical trade elasticities from a small iceberg-cost change.
    Elasticity {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        importer: Option<String>,
        #[arg(long)]
        exporter: Option<String>,
        #[arg(long)]
        sector: Option<String>,
    },
    /// The two-country endowment economy.
    Toy {
        #[arg(long, default_value_t = 1.0)]
        e1: f64,
        #[arg(long, default_value_t = 1.0)]
        e2: f64,
        #[arg(long, default_value_t = 4.0)]
        sigma: f64,
        #[arg(long)]
        sigma1: Option<f64>,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        tau1: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        tau2: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        d: f64,
        #[arg(long, value_enum)]
        sweep: Option<Sweep>,
        #[arg(long, default_value_t = -0.2, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, default_value_t = 9)]
        points: usize,
        #[arg(long, default_value_t = 1e-3)]
        grid_step: f64,
        /// Highest gross tariff factor on the search grid.
        #[arg(long, default_value_t = 5.0)]
        grid_max: f64,
    },
    /// Exact-hat counterfactual of the Ricardian input-output model.
    CpSolve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        #[arg(long)]
        tariffs: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Imbalance { .. } => "imbalance",
            Command::Scenario { .. } => "scenario",
            Command::Calibrate { .. } => "calibrate",
            Command::Solve { .. } => "solve",
            Command::BestResponse { .. } => "best-response",
            Command::Nash { .. } => "nash",
            Command::Verify { .. } => "verify",
            Command::Elasticity { .. } => "elasticity",
            Command::Toy { .. } => "toy",
            Command::CpSolve { .. } => "cp-solve",
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    format: Format,
    explicit_format: Option<Format>,
    out: Option<PathBuf>,
    threads: usize,
}

impl Ctx {
    fn provenance(&self, command: &str, seed: Option<u64>) -> Provenance {
        Provenance::new(command, &self.cfg.canonical(), seed)
    }

    fn emit(&self, body: &str) -> Result<()> {
        match &self.out {
            Some(p) => io::write_text(p, body),
            None => {
                use std::io::Write;
                let mut o = std::io::stdout().lock();
                o.write_all(body.as_bytes())?;
                o.flush()?;
                Ok(())
            }
        }
    }

    fn executor(&self) -> Result<Threads> {
        Threads::new(self.threads)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::parse(&io::read_text(p)?)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx { cfg, format: cli.format.unwrap_or(Format::Json), explicit_format: cli.format, out: cli.out.clone(), threads: cli.threads };
    let name = cli.command.name();
    match cli.command {
        Command::Imbalance { flows, gdp, window } => cmd_imbalance(&ctx, &flows, &gdp, window),
        Command::Scenario {
            countries,
            sectors,
            services,
            io,
            io_intensity,
            elasticity,
            expenditure,
            deficit,
            pair,
            balance_via,
            offset,
            out_dir,
        } => {
            let ids: Vec<String> = (1..=countries).map(|k| format!("C{k}")).collect();
            let find = |id: &str| {
                ids.iter().position(|c| c == id).ok_or_else(|| Error::Invalid(format!("unknown country `{id}`")))
            };
            let (a, b) = split_pair(&pair)?;
            let mut spec = ScenarioSpec::new(countries, sectors);
            spec.include_services = services;
            spec.include_io = io;
            spec.io_intensity = io_intensity;
            spec.elasticity = elasticity;
            spec.expenditure_base = expenditure;
            spec.deficit = deficit;
            spec.deficit_pair = (find(&a)?, find(&b)?);
            spec.balance_via = balance_via.as_deref().map(find).transpose()?;
            for o in &offset {
                let parts: Vec<&str> = o.split(':').collect();
                if parts.len() != 3 {
                    return Err(Error::Invalid(format!("offset `{o}` is not country:counterpart:amount")));
                }
                let amount: f64 = parts[2].parse().map_err(|_| Error::Invalid(format!("bad amount in `{o}`")))?;
                spec.offsets.push((find(parts[0])?, find(parts[1])?, amount));
            }
            let data = generate(&spec)?;
            let prov = ctx.provenance(name, None);
            let text = io::bundle_text(&data, Some(&prov));
            match out_dir {
                Some(dir) => text.write_dir(&dir),
                None => ctx.emit(&text.to_stream()),
            }
        }
        Command::Calibrate {
            data_dir,
            mode,
            iceberg_max,
            service_elasticity,
            sector_map,
            region_map,
            simple_average_tariffs,
            rebalance_row,
            eliminate_deficit,
        } => {
            let text = match data_dir {
                Some(d) => BundleText::read_dir(&d)?,
                None => BundleText::from_stream(&io::read_stdin()?)?,
            };
            let loaded = io::parse_bundle(&text)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            let mut data = loaded.data;
            if sector_map.is_some() || region_map.is_some() {
                let identity = |ids: Vec<String>| ids.into_iter().map(|i| (i.clone(), i)).collect::<BTreeMap<_, _>>();
                let smap = match &sector_map {
                    Some(p) => read_map(p)?,
                    None => identity(data.sectors.iter().map(|s| s.id.clone()).collect()),
                };
                let rmap = match &region_map {
                    Some(p) => read_map(p)?,
                    None => identity(data.countries.clone()),
                };
                let opts = AggregationOptions { simple_average_tariffs, ..AggregationOptions::default() };
                data = aggregate(&data, &smap, &rmap, &opts)?;
            }
            if let Some(row) = rebalance_row {
                let k = data.country_index(&row).ok_or_else(|| Error::Invalid(format!("unknown country `{row}`")))?;
                data = rebalance_row_exports(&data, k)?;
            }
            let opts = CalibrationOptions {
                mode: match mode {
                    Mode::Preferences => CalibrationMode::Preferences,
                    Mode::Iceberg => CalibrationMode::Iceberg,
                },
                iceberg_bounds: (1.0, iceberg_max),
                service_elasticity,
            };
            let mut model = calibrate(&data, &opts)?;
            let mut elimination = None;
            if let Some(p) = eliminate_deficit {
                let (a, b) = split_pair(&p)?;
                let i = country(&model.countries, &a)?;
                let j = country(&model.countries, &b)?;
                let r = eliminate_bilateral_deficit(&model, i, j, &ctx.cfg.solver)?;
                elimination = Some(EliminationInfo { country: a, partner: b, zeta: r.zeta, removed: r.removed });
                model = r.model;
            }
            let doc = Document {
                provenance: ctx.provenance(name, None),
                body: ModelFile { model, calibration: opts, deficit_elimination: elimination },
            };
            ctx.emit(&io::to_json(&doc)?)
        }
        Command::Solve { model, tariffs, equilibrium_out } => {
            let model = read_model(&model)?;
            let sched = match &tariffs {
                Some(p) => io::parse_tariffs(&io::read_text(p)?, &model.countries, &model.sectors, &model.baseline_tariffs)?,
                None => model.baseline_tariffs.clone(),
            };
            let opts = &ctx.cfg.solver;
            let base = baseline_equilibrium(&model, opts)?;
            let eq = solve_counterfactual(&model, &sched, opts)?;
            let report = welfare(&model, &base, &eq)?;
            let prov = ctx.provenance(name, None);
            if let Some(p) = &equilibrium_out {
                let doc = Document { provenance: prov.clone(), body: EquilibriumFile { equilibrium: eq.clone() } };
                io::write_text(p, &io::to_json(&doc)?)?;
            }
            match ctx.format {
                Format::Json => {
                    let doc = Document { provenance: prov, body: SolveOutput { countries: model.countries.clone(), welfare: report, equilibrium: eq } };
                    ctx.emit(&io::to_json(&doc)?)
                }
                Format::Csv => ctx.emit(&welfare_csv(&model.countries, &report, &prov)),
            }
        }
        Command::BestResponse { model, engine, game, seed_file, trace } => {
            let model = read_model(&model)?;
            let eng = Engine::build(model, &engine, &ctx.cfg)?;
            let ga = ga_config(&ctx.cfg, &game);
            let (i, j) = (country(eng.countries(), &game.chooser)?, country(eng.countries(), &game.partner)?);
            let mut problem = Problem::new(&eng, i, j, eng.baseline_tariffs().clone())?.uniform(game.uniform);
            if game.participation_constraint {
                problem = problem.with_participation()?;
            }
            let mut seeds = vec![problem.current(&ga)];
            if let Some(p) = &seed_file {
                seeds.extend(read_seeds(p, &problem, &eng, &ga)?);
            }
            let exec = ctx.executor()?;
            let br = best_response(&problem, &ga, &seeds, &exec)?;
            let prov = ctx.provenance(name, Some(ga.seed));
            if let Some(p) = &trace {
                io::write_text(p, &trace_csv(&br.trace, &prov))?;
            }
            let reference = eng.welfare(eng.baseline_tariffs())?;
            let weights: Vec<f64> = br.sectors.iter().map(|&s| eng.baseline_flow(i, j, s)).collect();
            let sector_ids: Vec<String> = br.sectors.iter().map(|&s| eng.sectors()[s].id.clone()).collect();
            let delta = 100.0 * (br.welfare / reference[i] - 1.0);
            match ctx.format {
                Format::Json => {
                    let summary = BestResponseOutput {
                        chooser: game.chooser.clone(),
                        partner: game.partner.clone(),
                        sectors: sector_ids,
                        tariff_pct: br.tau.iter().map(|t| 100.0 * (t - 1.0)).collect(),
                        weighted_average_pct: io::weighted_average_pct(&br.tau, &weights)?,
                        reference_welfare: reference[i],
                        delta_w_pct: delta,
                        result: br,
                    };
                    ctx.emit(&io::to_json(&Document { provenance: prov, body: BestResponseFile { best_response: summary } })?)
                }
                Format::Csv => {
                    let names = sector_names(&eng, &br.sectors);
                    let table = io::tariff_table(&names, std::slice::from_ref(&game.chooser), std::slice::from_ref(&br.tau), &[weights], &[delta])?;
                    ctx.emit(&io::emit_table(&table, Some(&prov)))
                }
            }
        }
        Command::Nash { model, engine, game, tol, max_rounds, check_multiplicity } => {
            let model = read_model(&model)?;
            let eng = Engine::build(model, &engine, &ctx.cfg)?;
            let ga = ga_config(&ctx.cfg, &game);
            if game.participation_constraint {
                return Err(Error::Invalid("--participation-constraint applies to best-response only".into()));
            }
            let mut ncfg = ctx.cfg.nash.clone();
            ncfg.uniform = ncfg.uniform || game.uniform;
            ncfg.check_multiplicity = ncfg.check_multiplicity || check_multiplicity;
            if let Some(t) = tol {
                ncfg.tol = t;
            }
            if let Some(m) = max_rounds {
                ncfg.max_rounds = m;
            }
            let (i, j) = (country(eng.countries(), &game.chooser)?, country(eng.countries(), &game.partner)?);
            let exec = ctx.executor()?;
            let r = nash(&eng, i, j, &ga, &ncfg, &exec)?;
            if !r.converged {
                eprintln!("warning: best responses did not converge within {} rounds", ncfg.max_rounds);
            }
            let prov = ctx.provenance(name, Some(ga.seed));
            let wi: Vec<f64> = r.sectors.iter().map(|&s| eng.baseline_flow(i, j, s)).collect();
            let wj: Vec<f64> = r.sectors.iter().map(|&s| eng.baseline_flow(j, i, s)).collect();
            let (di, dj) = r.delta_pct();
            match ctx.format {
                Format::Json => {
                    let summary = NashOutput {
                        chooser: game.chooser.clone(),
                        partner: game.partner.clone(),
                        sectors: r.sectors.iter().map(|&s| eng.sectors()[s].id.clone()).collect(),
                        tariff_pct_chooser: r.tau_i.iter().map(|t| 100.0 * (t - 1.0)).collect(),
                        tariff_pct_partner: r.tau_j.iter().map(|t| 100.0 * (t - 1.0)).collect(),
                        weighted_average_pct: [io::weighted_average_pct(&r.tau_i, &wi)?, io::weighted_average_pct(&r.tau_j, &wj)?],
                        delta_w_pct: [di, dj],
                        result: r,
                    };
                    ctx.emit(&io::to_json(&Document { provenance: prov, body: NashFile { nash: summary } })?)
                }
                Format::Csv => {
                    let names = sector_names(&eng, &r.sectors);
                    let table = io::tariff_table(
                        &names,
                        &[game.chooser.clone(), game.partner.clone()],
                        &[r.tau_i.clone(), r.tau_j.clone()],
                        &[wi, wj],
                        &[di, dj],
                    )?;
                    ctx.emit(&io::emit_table(&table, Some(&prov)))
                }
            }
        }
        Command::Verify { model, engine, nash: nash_path, fine_hi, fine_step, coarse_step, max_rate } => {
            let model = read_model(&model)?;
            let eng = Engine::build(model, &engine, &ctx.cfg)?;
            let doc: Document<NashFile> = io::from_json(&io::read_text(&nash_path)?)?;
            let r = doc.body.nash.result;
            let grid = VerifyGrid { fine_lo: 0.0, fine_hi, fine_step, coarse_step, cap: max_rate };
            let exec = ctx.executor()?;
            let report = verify_no_deviation(&eng, &r, &grid, &exec)?;
            let prov = ctx.provenance(name, doc.provenance.seed);
            match ctx.format {
                Format::Json => ctx.emit(&io::to_json(&Document { provenance: prov, body: VerifyFile { verify: report.clone() } })?)?,
                Format::Csv => ctx.emit(&verify_csv(&eng, &report, &prov))?,
            }
            if report.pass {
                Ok(())
            } else if !report.complete {
                Err(Error::Invalid("deviation check incomplete: some equilibria failed to solve".into()))
            } else {
                Err(Error::Invalid("a profitable single-sector deviation exists".into()))
            }
        }
        Command::Elasticity { model, importer, exporter, sector } => {
            let model = read_model(&model)?;
            let d = model.dims();
            let pick = |ids: &[String], want: &Option<String>| -> Result<Vec<usize>> {
                match want {
                    Some(id) => Ok(vec![country(ids, id)?]),
                    None => Ok((0..ids.len()).collect()),
                }
            };
            let is = pick(&model.countries, &importer)?;
            let js = pick(&model.countries, &exporter)?;
            let sector_ids: Vec<String> = model.sectors.iter().map(|s| s.id.clone()).collect();
            let ss = match &sector {
                Some(id) => vec![sector_ids.iter().position(|s| s == id).ok_or_else(|| Error::Invalid(format!("unknown sector `{id}`")))?],
                None => (0..d.sectors).collect(),
            };
            let mut rows = Vec::new();
            for &i in &is {
                for &j in &js {
                    for &s in &ss {
                        if i == j || model.baseline_flows[d.pair(i, j, s)] <= 0.0 {
                            continue;
                        }
                        let v = numerical_elasticity(&model, i, j, s, &ctx.cfg.solver)?;
                        rows.push(ElasticityRow {
                            importer: model.countries[i].clone(),
                            exporter: model.countries[j].clone(),
                            sector: sector_ids[s].clone(),
                            sigma: model.sectors[s].elasticity,
                            elasticity: v,
                        });
                    }
                }
            }
            if rows.is_empty() {
                return Err(Error::Invalid("no traded cells selected".into()));
            }
            let mean = rows.iter().map(|r| r.elasticity).sum::<f64>() / rows.len() as f64;
            let prov = ctx.provenance(name, None);
            match ctx.format {
                Format::Json => ctx.emit(&io::to_json(&Document { provenance: prov, body: ElasticityOutput { rows, mean } })?),
                Format::Csv => {
                    let mut out = format!("{}\nimporter,exporter,sector,sigma,elasticity\n", prov.comment_line());
                    for r in &rows {
                        let _ = writeln!(out, "{},{},{},{},{:.4}", r.importer, r.exporter, r.sector, r.sigma, r.elasticity);
                    }
                    let _ = writeln!(out, "mean,,,,{mean:.4}");
                    ctx.emit(&out)
                }
            }
        }
        Command::Toy { e1, e2, sigma, sigma1, sigma2, tau1, tau2, d, sweep, from, to, points, grid_step, grid_max } => {
            let params = ToyParams { e1, e2, sigma1: sigma1.unwrap_or(sigma), sigma2: sigma2.unwrap_or(sigma), tau1, tau2, d };
            let prov = ctx.provenance(name, None);
            match sweep {
                None => {
                    let eq = solve_toy(&params)?;
                    let foc = foc_residual(&params, &eq).ok();
                    match ctx.format {
                        Format::Json => ctx.emit(&io::to_json(&Document { provenance: prov, body: ToyOutput { params, equilibrium: eq, foc_residual: foc } })?),
                        Format::Csv => ctx.emit(&toy_csv(&eq, &prov)),
                    }
                }
                Some(kind) => {
                    if points < 2 {
                        return Err(Error::Invalid("a sweep needs at least two points".into()));
                    }
                    let grid = Grid { lo: 0.0, hi: grid_max - 1.0, step: grid_step };
                    let mut rows = Vec::with_capacity(points);
                    for k in 0..points {
                        let x = from + (to - from) * k as f64 / (points - 1) as f64;
                        let row = match kind {
                            Sweep::D => {
                                let p = ToyParams { d: x, tau1: 0.0, tau2: 0.0, ..params };
                                let (t1, _) = optimal_tariff_grid(&p, &grid)?;
                                let (t2, _) = optimal_tariff_country2(&p, &grid)?;
                                SweepRow { x, tau1_star: t1, tau2_star: Some(t2) }
                            }
                            Sweep::Tau2 => {
                                let p = ToyParams { tau2: x, tau1: 0.0, ..params };
                                SweepRow { x, tau1_star: optimal_tariff_grid(&p, &grid)?.0, tau2_star: None }
                            }
                        };
                        rows.push(row);
                    }
                    let variable = match kind {
                        Sweep::D => "d",
                        Sweep::Tau2 => "tau2",
                    };
                    // Sweeps are plot data, so CSV unless asked otherwise.
                    match ctx.explicit_format.unwrap_or(Format::Csv) {
                        Format::Json => ctx.emit(&io::to_json(&Document {
                            provenance: prov,
                            body: SweepOutput { variable: variable.into(), params, rows },
                        })?),
                        Format::Csv => {
                            let mut out = format!("{}\n{variable},tau1_star", prov.comment_line());
                            if kind == Sweep::D {
                                out.push_str(",tau2_star");
                            }
                            out.push('\n');
                            for r in &rows {
                                let _ = write!(out, "{:.6},{:.6}", r.x, r.tau1_star);
                                if let Some(t2) = r.tau2_star {
                                    let _ = write!(out, ",{t2:.6}");
                                }
                                out.push('\n');
                            }
                            ctx.emit(&out)
                        }
                    }
                }
            }
        }
        Command::CpSolve { model, theta, tariffs } => {
            let model = read_model(&model)?;
            let cp = calibrate_cp(&economy_of(&model), &expand_theta(&theta, model.sectors.len())?)?;
            let sched = match &tariffs {
                Some(p) => io::parse_tariffs(&io::read_text(p)?, &model.countries, &model.sectors, &model.baseline_tariffs)?,
                None => model.baseline_tariffs.clone(),
            };
            let eq = solve_hat(&cp, &sched, &ctx.cfg.solver)?;
            let prov = ctx.provenance(name, None);
            match ctx.format {
                Format::Json => ctx.emit(&io::to_json(&Document { provenance: prov, body: CpOutput { countries: model.countries.clone(), theta: cp.theta.clone(), hat: eq } })?),
                Format::Csv => {
                    let mut out = format!("{}\ncountry,hat_w,hat_income,hat_welfare,delta_w_pct\n", prov.comment_line());
                    for (c, id) in model.countries.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{id},{:.8},{:.8},{:.8},{:.4}",
                            eq.hat_w[c],
                            eq.hat_income[c],
                            eq.hat_welfare[c],
                            100.0 * (eq.hat_welfare[c] - 1.0)
                        );
                    }
                    ctx.emit(&out)
                }
            }
        }
    }
}

fn split_pair(s: &str) -> Result<(String, String)> {
    match s.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => Ok((a.trim().into(), b.trim().into())),
        _ => Err(Error::Invalid(format!("`{s}` is not a pair `A,B`"))),
    }
}

fn country(ids: &[String], id: &str) -> Result<usize> {
    ids.iter().position(|c| c == id).ok_or_else(|| Error::Invalid(format!("unknown country `{id}`")))
}

fn read_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = io::read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let h: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if h != ["source", "target"] {
        return Err(Error::Header { file: path.display().to_string(), expected: "source,target".into(), found: h.join(",") });
    }
    let mut map = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if map.insert(rec[0].to_string(), rec[1].to_string()).is_some() {
            return Err(Error::Row { file: path.display().to_string(), line, msg: format!("`{}` mapped twice", &rec[0]) });
        }
    }
    Ok(map)
}

fn read_model(args: &ModelArgs) -> Result<CalibratedModel> {
    let text = match &args.model {
        Some(p) => io::read_text(p)?,
        None => io::read_stdin()?,
    };
    let doc: Document<ModelFile> = io::from_json(&text)?;
    Ok(doc.body.model)
}

fn ga_config(cfg: &RunConfig, game: &GameArgs) -> GaConfig {
    let mut ga = cfg.ga.clone();
    match game.rng_seed {
        Some(s) => ga.seed = s,
        None => eprintln!("note: using rng seed {}", ga.seed),
    }
    if let Some(c) = game.cap {
        ga.upper = c;
    }
    ga
}

fn expand_theta(theta: &[f64], sectors: usize) -> Result<Vec<f64>> {
    match theta.len() {
        0 => Err(Error::Invalid("the CP engine needs --theta".into())),
        1 => Ok(vec![theta[0]; sectors]),
        n if n == sectors => Ok(theta.to_vec()),
        n => Err(Error::Invalid(format!("--theta has {n} values for {sectors} sectors"))),
    }
}

/// The baseline data a model was calibrated on.
fn economy_of(model: &CalibratedModel) -> EconomyData {
    let mut data = EconomyData::empty(model.countries.clone(), model.sectors.clone());
    data.flows = model.baseline_flows.clone();
    data.io_usage = model.baseline_io.clone();
    data.tariffs = model.baseline_tariffs.clone();
    data.gdp = vec![0.0; model.countries.len()];
    data
}

fn sector_names<E: WelfareEngine>(eng: &E, sectors: &[usize]) -> Vec<String> {
    sectors.iter().map(|&s| eng.sectors()[s].name.clone()).collect()
}

fn read_seeds(path: &Path, problem: &Problem<'_, Engine>, eng: &Engine, ga: &GaConfig) -> Result<Vec<Vec<i64>>> {
    let text = io::read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<String> = if problem.uniform {
        vec!["tau".into()]
    } else {
        problem.sectors.iter().map(|&s| eng.sectors()[s].id.clone()).collect()
    };
    if header != expected {
        return Err(Error::Header { file: path.display().to_string(), expected: expected.join(","), found: header.join(",") });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let cand = rec
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map(|pct| ga.to_ticks(1.0 + pct / 100.0))
                    .map_err(|_| Error::Row { file: path.display().to_string(), line, msg: format!("`{v}` is not a number") })
            })
            .collect::<Result<Vec<i64>>>()?;
        out.push(cand);
    }
    Ok(out)
}

fn trace_csv(trace: &[GenerationRecord], prov: &Provenance) -> String {
    let mut out = format!("{}\nround,generation,best_welfare,nabla,stall\n", prov.comment_line());
    for r in trace {
        let _ = writeln!(out, "{},{},{},{},{}", r.round, r.generation, r.best_welfare, r.nabla, r.stall);
    }
    out
}

fn welfare_csv(countries: &[String], report: &WelfareReport, prov: &Provenance) -> String {
    let mut out = format!("{}\ncountry,W,beta,delta_w_pct\n", prov.comment_line());
    for (c, id) in countries.iter().enumerate() {
        let _ = writeln!(out, "{id},{:.8},{:.8},{:.4}", report.w[c], report.beta[c], report.delta_pct[c]);
    }
    out
}

fn verify_csv(eng: &Engine, report: &VerifyReport, prov: &Provenance) -> String {
    let mut out = format!("{}\ncountry,sector,nash_tariff_pct,best_tariff_pct,max_improvement,failures\n", prov.comment_line());
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.2},{:e},{}",
            eng.countries()[r.country],
            eng.sectors()[r.sector].id,
            100.0 * (r.nash_tau - 1.0),
            100.0 * (r.best_tau - 1.0),
            r.max_improvement,
            r.failures
        );
    }
    let _ = writeln!(out, "# pass={} complete={} threshold={:e}", report.pass, report.complete, report.threshold);
    out
}

fn toy_csv(eq: &ToyEquilibrium, prov: &Provenance) -> String {
    format!(
        "{}\np,c11,c21,c12,c22,t1,t2,lambda2,u1,u2\n{},{},{},{},{},{},{},{},{},{}\n",
        prov.comment_line(),
        eq.p,
        eq.c11,
        eq.c21,
        eq.c12,
        eq.c22,
        eq.t1,
        eq.t2,
        eq.lambda2,
        eq.u1,
        eq.u2
    )
}

fn cmd_imbalance(ctx: &Ctx, flows: &Path, gdp: &Path, window: usize) -> Result<()> {
    let mut panel = FlowPanel::new();
    let text = io::read_text(flows)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let file = flows.display().to_string();
    let h: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if h != ["importer", "exporter", "year", "value"] {
        return Err(Error::Header { file, expected: "importer,exporter,year,value".into(), found: h.join(",") });
    }
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::Row { file: file.clone(), line, msg };
        let year: i32 = rec[2].parse().map_err(|_| bad(format!("bad year `{}`", &rec[2])))?;
        let value: f64 = rec[3].parse().map_err(|_| bad(format!("bad value `{}`", &rec[3])))?;
        panel
            .insert_flow(FlowRecord { importer: rec[0].into(), exporter: rec[1].into(), year, value })
            .map_err(|e| bad(e.to_string()))?;
    }
    let text = io::read_text(gdp)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let file = gdp.display().to_string();
    let h: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if h != ["country", "year", "gdp"] {
        return Err(Error::Header { file, expected: "country,year,gdp".into(), found: h.join(",") });
    }
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::Row { file: file.clone(), line, msg };
        let year: i32 = rec[1].parse().map_err(|_| bad(format!("bad year `{}`", &rec[1])))?;
        let g: f64 = rec[2].parse().map_err(|_| bad(format!("bad gdp `{}`", &rec[2])))?;
        panel.insert_gdp(&rec[0], year, g).map_err(|e| bad(e.to_string()))?;
    }
    let mut bil = BTreeMap::new();
    let mut agg = BTreeMap::new();
    for year in panel.years() {
        match weighted_cross_section(&panel, year, ImbalanceMode::Bilateral) {
            Ok(v) => {
                bil.insert(year, v);
            }
            Err(e) => eprintln!("warning: {year}: {e}"),
        }
        match weighted_cross_section(&panel, year, ImbalanceMode::Aggregate) {
            Ok(v) => {
                agg.insert(year, v);
            }
            Err(e) => eprintln!("warning: {year}: {e}"),
        }
    }
    let ma_b = moving_average(&bil, window)?;
    let ma_a = moving_average(&agg, window)?;
    let years: std::collections::BTreeSet<i32> = bil.keys().chain(agg.keys()).copied().collect();
    let rows: Vec<ImbalanceRow> = years
        .into_iter()
        .map(|y| ImbalanceRow {
            year: y,
            bilateral_index: bil.get(&y).copied(),
            aggregate_index: agg.get(&y).copied(),
            ma_bilateral: ma_b.get(&y).copied(),
            ma_aggregate: ma_a.get(&y).copied(),
        })
        .collect();
    let prov = ctx.provenance("imbalance", None);
    match ctx.format {
        Format::Json => ctx.emit(&io::to_json(&Document {
            provenance: prov,
            body: ImbalanceOutput { moving_average: "trailing".into(), window, rows },
        })?),
        Format::Csv => {
            let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
            let mut out = format!(
                "{}\n# moving average: trailing, window {window}\nyear,bilateral_index,aggregate_index,ma{window}_bilateral,ma{window}_aggregate\n",
                prov.comment_line()
            );
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.year,
                    cell(r.bilateral_index),
                    cell(r.aggregate_index),
                    cell(r.ma_bilateral),
                    cell(r.ma_aggregate)
                );
            }
            ctx.emit(&out)
        }
    }
}

/// Either model behind one [`WelfareEngine`].
pub enum Engine {
    Armington(ArmingtonEngine),
    Cp(CpEngine),
}

impl Engine {
    pub fn build(model: CalibratedModel, args: &EngineArgs, cfg: &RunConfig) -> Result<Self> {
        match args.engine {
            EngineKind::Armington => {
                if !args.theta.is_empty() {
                    return Err(Error::Invalid("--theta applies to the CP engine only".into()));
                }
                Ok(Engine::Armington(ArmingtonEngine { model, opts: cfg.solver.clone() }))
            }
            EngineKind::Cp => {
                let cp = calibrate_cp(&economy_of(&model), &expand_theta(&args.theta, model.sectors.len())?)?;
                Ok(Engine::Cp(CpEngine { cp, opts: cfg.solver.clone() }))
            }
        }
    }
}

impl WelfareEngine for Engine {
    fn countries(&self) -> &[String] {
        match self {
            Engine::Armington(e) => e.countries(),
            Engine::Cp(e) => e.countries(),
        }
    }

    fn sectors(&self) -> &[Sector] {
        match self {
            Engine::Armington(e) => e.sectors(),
            Engine::Cp(e) => e.sectors(),
        }
    }

    fn baseline_tariffs(&self) -> &TariffSchedule {
        match self {
            Engine::Armington(e) => e.baseline_tariffs(),
            Engine::Cp(e) => e.baseline_tariffs(),
        }
    }

    fn welfare(&self, tariffs: &TariffSchedule) -> tradewar_core::Result<Vec<f64>> {
        match self {
            Engine::Armington(e) => e.welfare(tariffs),
            Engine::Cp(e) => e.welfare(tariffs),
        }
    }

    fn autarky_welfare(&self, country: usize, partner: usize, tariffs: &TariffSchedule) -> tradewar_core::Result<Vec<f64>> {
        match self {
            Engine::Armington(e) => e.autarky_welfare(country, partner, tariffs),
            Engine::Cp(e) => e.autarky_welfare(country, partner, tariffs),
        }
    }

    fn baseline_flow(&self, importer: usize, exporter: usize, sector: usize) -> f64 {
        match self {
            Engine::Armington(e) => e.baseline_flow(importer, exporter, sector),
            Engine::Cp(e) => e.baseline_flow(importer, exporter, sector),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EliminationInfo {
    pub country: String,
    pub partner: String,
    pub zeta: f64,
    pub removed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: CalibratedModel,
    pub calibration: CalibrationOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deficit_elimination: Option<EliminationInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumFile {
    pub equilibrium: Equilibrium,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub countries: Vec<String>,
    pub welfare: WelfareReport,
    pub equilibrium: Equilibrium,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestResponseOutput {
    pub chooser: String,
    pub partner: String,
    pub sectors: Vec<String>,
    pub tariff_pct: Vec<f64>,
    pub weighted_average_pct: f64,
    pub reference_welfare: f64,
    pub delta_w_pct: f64,
    pub result: BestResponse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestResponseFile {
    pub best_response: BestResponseOutput,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NashOutput {
    pub chooser: String,
    pub partner: String,
    pub sectors: Vec<String>,
    pub tariff_pct_chooser: Vec<f64>,
    pub tariff_pct_partner: Vec<f64>,
    pub weighted_average_pct: [f64; 2],
    pub delta_w_pct: [f64; 2],
    pub result: NashResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NashFile {
    pub nash: NashOutput,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyFile {
    pub verify: VerifyReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElasticityRow {
    pub importer: String,
    pub exporter: String,
    pub sector: String,
    pub sigma: f64,
    pub elasticity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElasticityOutput {
    pub rows: Vec<ElasticityRow>,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyOutput {
    pub params: ToyParams,
    pub equilibrium: ToyEquilibrium,
    pub foc_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub tau1_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2_star: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutput {
    pub variable: String,
    pub params: ToyParams,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpOutput {
    pub countries: Vec<String>,
    pub theta: Vec<f64>,
    pub hat: HatEquilibrium,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImbalanceRow {
    pub year: i32,
    pub bilateral_index: Option<f64>,
    pub aggregate_index: Option<f64>,
    pub ma_bilateral: Option<f64>,
    pub ma_aggregate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImbalanceOutput {
    pub moving_average: String,
    pub window: usize,
    pub rows: Vec<ImbalanceRow>,
}
