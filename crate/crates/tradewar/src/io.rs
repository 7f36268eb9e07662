//! CSV bundles, JSON documents and report tables.
//!
//! A bundle is five CSV files: `flows.csv (importer,exporter,sector,value)`,
//! `io.csv (country,using_sector,input_sector,value)`,
//! `tariffs.csv (importer,exporter,sector,rate_percent)`,
//! `sectors.csv (id,name,elasticity,is_service)` and `gdp.csv (country,value)`.
//! Country order follows `gdp.csv`, sector order follows `sectors.csv`.
//! Lines starting with `#` are comments.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tradewar_core::model::validate;
use tradewar_core::{EconomyData, Sector, TariffSchedule};

use crate::error::{Error, Result};
use crate::provenance::Provenance;

pub const FLOWS_HEADER: [&str; 4] = ["importer", "exporter", "sector", "value"];
pub const IO_HEADER: [&str; 4] = ["country", "using_sector", "input_sector", "value"];
pub const TARIFFS_HEADER: [&str; 4] = ["importer", "exporter", "sector", "rate_percent"];
pub const SECTORS_HEADER: [&str; 4] = ["id", "name", "elasticity", "is_service"];
pub const GDP_HEADER: [&str; 2] = ["country", "value"];

pub const BUNDLE_FILES: [&str; 5] = ["flows.csv", "io.csv", "tariffs.csv", "sectors.csv", "gdp.csv"];

/// Raw contents of the five bundle files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BundleText {
    pub flows: String,
    pub io: String,
    pub tariffs: String,
    pub sectors: String,
    pub gdp: String,
}

impl BundleText {
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::file(p, e))
        };
        Ok(Self {
            flows: read("flows.csv")?,
            io: read("io.csv")?,
            tariffs: read("tariffs.csv")?,
            sectors: read("sectors.csv")?,
            gdp: read("gdp.csv")?,
        })
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        for (name, body) in BUNDLE_FILES.iter().zip([&self.flows, &self.io, &self.tariffs, &self.sectors, &self.gdp]) {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::file(p, e))?;
        }
        Ok(())
    }
}

impl BundleText {
    /// All five files in one stream, each introduced by a `## <file>` line.
    pub fn to_stream(&self) -> String {
        let mut out = String::new();
        for (name, body) in BUNDLE_FILES.iter().zip([&self.flows, &self.io, &self.tariffs, &self.sectors, &self.gdp]) {
            let _ = writeln!(out, "## {name}");
            out.push_str(body);
        }
        out
    }

    pub fn from_stream(text: &str) -> Result<Self> {
        let mut parts: [Option<String>; 5] = Default::default();
        let mut current: Option<usize> = None;
        for line in text.split_inclusive('\n') {
            if let Some(name) = line.strip_prefix("## ") {
                let name = name.trim();
                let k = BUNDLE_FILES
                    .iter()
                    .position(|f| *f == name)
                    .ok_or_else(|| Error::Invalid(format!("unknown bundle section `{name}`")))?;
                if parts[k].is_some() {
                    return Err(Error::Invalid(format!("bundle section `{name}` repeated")));
                }
                parts[k] = Some(String::new());
                current = Some(k);
            } else if let Some(k) = current {
                parts[k].as_mut().unwrap().push_str(line);
            } else if !line.trim().is_empty() {
                return Err(Error::Invalid("bundle stream must start with a `## <file>` line".into()));
            }
        }
        let [flows, io, tariffs, sectors, gdp] = parts;
        let need = |p: Option<String>, n: &str| p.ok_or_else(|| Error::Invalid(format!("bundle stream lacks `{n}`")));
        Ok(Self {
            flows: need(flows, "flows.csv")?,
            io: need(io, "io.csv")?,
            tariffs: need(tariffs, "tariffs.csv")?,
            sectors: need(sectors, "sectors.csv")?,
            gdp: need(gdp, "gdp.csv")?,
        })
    }
}

struct Table {
    file: &'static str,
    rows: Vec<(u64, Vec<String>)>,
}

fn parse_table(file: &'static str, text: &str, header: &[&str]) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Header { file: file.into(), expected: header.join(","), found: found.join(",") });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { file, rows })
}

fn row_err(file: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Row { file: file.into(), line, msg: msg.into() }
}

fn number(file: &str, line: u64, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| row_err(file, line, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(row_err(file, line, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn lookup(ids: &[String], file: &str, line: u64, kind: &str, id: &str) -> Result<usize> {
    ids.iter().position(|c| c == id).ok_or_else(|| row_err(file, line, format!("unknown {kind} `{id}`")))
}

fn boolean(file: &str, line: u64, s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(row_err(file, line, format!("`{s}` is not a boolean"))),
    }
}

/// Data plus notes about defaults applied while loading.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub data: EconomyData,
    pub warnings: Vec<String>,
}

/// Parses a bundle, applies defaults (missing flows are zero, missing foreign
/// tariffs are 0%), and runs validation.
pub fn parse_bundle(text: &BundleText) -> Result<Loaded> {
    let mut warnings = Vec::new();

    let sectors_t = parse_table("sectors.csv", &text.sectors, &SECTORS_HEADER)?;
    let mut sectors: Vec<Sector> = Vec::new();
    for (line, r) in &sectors_t.rows {
        if sectors.iter().any(|s| s.id == r[0]) {
            return Err(row_err(sectors_t.file, *line, format!("duplicate sector `{}`", r[0])));
        }
        let elasticity = if r[2].is_empty() { f64::NAN } else { number(sectors_t.file, *line, &r[2])? };
        sectors.push(Sector {
            id: r[0].clone(),
            name: r[1].clone(),
            elasticity,
            is_service: boolean(sectors_t.file, *line, &r[3])?,
        });
    }
    if sectors.is_empty() {
        return Err(Error::Invalid("sectors.csv lists no sectors".into()));
    }
    let sector_ids: Vec<String> = sectors.iter().map(|s| s.id.clone()).collect();

    let gdp_t = parse_table("gdp.csv", &text.gdp, &GDP_HEADER)?;
    let mut countries: Vec<String> = Vec::new();
    let mut gdp = Vec::new();
    for (line, r) in &gdp_t.rows {
        if countries.contains(&r[0]) {
            return Err(row_err(gdp_t.file, *line, format!("duplicate country `{}`", r[0])));
        }
        countries.push(r[0].clone());
        gdp.push(number(gdp_t.file, *line, &r[1])?);
    }
    if countries.is_empty() {
        return Err(Error::Invalid("gdp.csv lists no countries".into()));
    }

    let mut data = EconomyData::empty(countries.clone(), sectors);
    data.gdp = gdp;
    let d = data.dims();

    let flows_t = parse_table("flows.csv", &text.flows, &FLOWS_HEADER)?;
    let mut seen = BTreeSet::new();
    for (line, r) in &flows_t.rows {
        let i = lookup(&countries, flows_t.file, *line, "country", &r[0])?;
        let j = lookup(&countries, flows_t.file, *line, "country", &r[1])?;
        let s = lookup(&sector_ids, flows_t.file, *line, "sector", &r[2])?;
        if !seen.insert(d.pair(i, j, s)) {
            return Err(row_err(flows_t.file, *line, "duplicate cell"));
        }
        data.set_flow(i, j, s, number(flows_t.file, *line, &r[3])?);
    }
    for i in 0..d.countries {
        for s in 0..d.sectors {
            if !seen.contains(&d.pair(i, i, s)) {
                warnings.push(format!(
                    "missing domestic flow for {} in {}; treated as 0",
                    countries[i], sector_ids[s]
                ));
            }
        }
    }

    let io_t = parse_table("io.csv", &text.io, &IO_HEADER)?;
    let mut seen = BTreeSet::new();
    for (line, r) in &io_t.rows {
        let j = lookup(&countries, io_t.file, *line, "country", &r[0])?;
        let s = lookup(&sector_ids, io_t.file, *line, "sector", &r[1])?;
        let k = lookup(&sector_ids, io_t.file, *line, "sector", &r[2])?;
        if !seen.insert(d.io(j, s, k)) {
            return Err(row_err(io_t.file, *line, "duplicate cell"));
        }
        data.io_usage[d.io(j, s, k)] = number(io_t.file, *line, &r[3])?;
    }

    let tariffs_t = parse_table("tariffs.csv", &text.tariffs, &TARIFFS_HEADER)?;
    let mut seen = BTreeSet::new();
    for (line, r) in &tariffs_t.rows {
        let i = lookup(&countries, tariffs_t.file, *line, "country", &r[0])?;
        let j = lookup(&countries, tariffs_t.file, *line, "country", &r[1])?;
        let s = lookup(&sector_ids, tariffs_t.file, *line, "sector", &r[2])?;
        if !seen.insert(d.pair(i, j, s)) {
            return Err(row_err(tariffs_t.file, *line, "duplicate cell"));
        }
        let rate = number(tariffs_t.file, *line, &r[3])?;
        data.tariffs.set(i, j, s, 1.0 + rate / 100.0);
    }
    let missing = (0..d.countries)
        .flat_map(|i| (0..d.countries).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .flat_map(|(i, j)| (0..d.sectors).map(move |s| (i, j, s)))
        .filter(|&(i, j, s)| !data.sectors[s].is_service && !seen.contains(&d.pair(i, j, s)))
        .count();
    if missing > 0 {
        warnings.push(format!("{missing} goods tariff cells missing; set to 0%"));
    }

    let report = validate(&data);
    for issue in &report.issues {
        warnings.push(format!("{:?}: {}", issue.kind, issue.message));
    }
    report.into_result()?;
    Ok(Loaded { data, warnings })
}

pub fn load_economy(dir: &Path) -> Result<Loaded> {
    parse_bundle(&BundleText::read_dir(dir)?)
}

/// Shortest decimal percentage that maps back to exactly `tau`.
pub fn rate_percent(tau: f64) -> String {
    let rate = (tau - 1.0) * 100.0;
    for digits in 0..=17 {
        let s = format!("{rate:.digits$}");
        if 1.0 + s.parse::<f64>().unwrap_or(f64::NAN) / 100.0 == tau {
            return trim_zeros(s);
        }
    }
    format!("{rate}")
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.into() }
    } else {
        s
    }
}

fn comment(out: &mut String, prov: Option<&Provenance>) {
    if let Some(p) = prov {
        out.push_str(&p.comment_line());
        out.push('\n');
    }
}

/// Canonical CSV text: every cell in country then sector order.
pub fn bundle_text(data: &EconomyData, prov: Option<&Provenance>) -> BundleText {
    let d = data.dims();
    let c = &data.countries;
    let sid: Vec<&str> = data.sectors.iter().map(|s| s.id.as_str()).collect();
    let mut flows = String::new();
    let mut io = String::new();
    let mut tariffs = String::new();
    let mut sectors = String::new();
    let mut gdp = String::new();
    for (buf, h) in [
        (&mut flows, &FLOWS_HEADER[..]),
        (&mut io, &IO_HEADER[..]),
        (&mut tariffs, &TARIFFS_HEADER[..]),
        (&mut sectors, &SECTORS_HEADER[..]),
        (&mut gdp, &GDP_HEADER[..]),
    ] {
        comment(buf, prov);
        buf.push_str(&h.join(","));
        buf.push('\n');
    }
    for i in 0..d.countries {
        for j in 0..d.countries {
            for s in 0..d.sectors {
                let _ = writeln!(flows, "{},{},{},{}", c[i], c[j], sid[s], data.flow(i, j, s));
                if i != j {
                    let _ = writeln!(tariffs, "{},{},{},{}", c[i], c[j], sid[s], rate_percent(data.tariffs.get(i, j, s)));
                }
            }
        }
    }
    for j in 0..d.countries {
        for s in 0..d.sectors {
            for k in 0..d.sectors {
                let _ = writeln!(io, "{},{},{},{}", c[j], sid[s], sid[k], data.io(j, s, k));
            }
        }
    }
    for s in &data.sectors {
        let e = if s.elasticity.is_finite() { format!("{}", s.elasticity) } else { String::new() };
        let _ = writeln!(sectors, "{},{},{},{}", csv_field(&s.id), csv_field(&s.name), e, s.is_service);
    }
    for (i, g) in data.gdp.iter().enumerate() {
        let _ = writeln!(gdp, "{},{}", c[i], g);
    }
    BundleText { flows, io, tariffs, sectors, gdp }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn save_economy(data: &EconomyData, dir: &Path, prov: Option<&Provenance>) -> Result<()> {
    bundle_text(data, prov).write_dir(dir)
}

/// A JSON document with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document<T> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: T,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::file(path, e))
}

pub fn read_stdin() -> Result<String> {
    let mut s = String::new();
    std::io::stdin().read_to_string(&mut s)?;
    Ok(s)
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::file(path, e))
}

/// Reads a tariff file in the bundle layout onto a copy of `base`. Cells not
/// listed keep their `base` value.
pub fn parse_tariffs(text: &str, countries: &[String], sectors: &[Sector], base: &TariffSchedule) -> Result<TariffSchedule> {
    let t = parse_table("tariffs.csv", text, &TARIFFS_HEADER)?;
    let ids: Vec<String> = sectors.iter().map(|s| s.id.clone()).collect();
    let mut out = base.clone();
    let mut seen = BTreeSet::new();
    for (line, r) in &t.rows {
        let i = lookup(countries, t.file, *line, "country", &r[0])?;
        let j = lookup(countries, t.file, *line, "country", &r[1])?;
        let s = lookup(&ids, t.file, *line, "sector", &r[2])?;
        if !seen.insert((i, j, s)) {
            return Err(row_err(t.file, *line, "duplicate cell"));
        }
        out.set(i, j, s, 1.0 + number(t.file, *line, &r[3])? / 100.0);
    }
    Ok(out)
}

/// One row of a tariff report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub sector: String,
    pub tariff_pct: Vec<f64>,
}

/// Per-sector tariffs for one or more columns plus a trade-weighted average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    pub weighted_average_pct: Vec<f64>,
    pub delta_w_pct: Vec<f64>,
}

/// Trade-weighted mean of net tariff rates, in percent.
pub fn weighted_average_pct(taus: &[f64], weights: &[f64]) -> Result<f64> {
    if taus.is_empty() {
        return Err(Error::Invalid("no sectors to average".into()));
    }
    if taus.len() != weights.len() {
        return Err(Error::Invalid("tariff and weight lists differ in length".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Invalid("trade weights sum to zero".into()));
    }
    Ok(taus.iter().zip(weights).map(|(t, w)| 100.0 * (t - 1.0) * w).sum::<f64>() / total)
}

/// Builds a report table. `columns[c]` carries tariffs `taus[c]` by sector
/// weighted by `weights[c]`, and a welfare change `delta_w_pct[c]`.
pub fn tariff_table(
    sector_names: &[String],
    columns: &[String],
    taus: &[Vec<f64>],
    weights: &[Vec<f64>],
    delta_w_pct: &[f64],
) -> Result<TariffTable> {
    if sector_names.is_empty() {
        return Err(Error::Invalid("no sectors to report".into()));
    }
    let rows = sector_names
        .iter()
        .enumerate()
        .map(|(s, name)| TableRow { sector: name.clone(), tariff_pct: taus.iter().map(|t| 100.0 * (t[s] - 1.0)).collect() })
        .collect();
    let weighted_average_pct = taus.iter().zip(weights).map(|(t, w)| weighted_average_pct(t, w)).collect::<Result<_>>()?;
    Ok(TariffTable { columns: columns.to_vec(), rows, weighted_average_pct, delta_w_pct: delta_w_pct.to_vec() })
}

/// CSV rendering of a [`TariffTable`]: tariffs with 2 decimals, welfare with 4.
pub fn emit_table(table: &TariffTable, prov: Option<&Provenance>) -> String {
    let mut out = String::new();
    comment(&mut out, prov);
    out.push_str("sector");
    for c in &table.columns {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for r in &table.rows {
        out.push_str(&csv_field(&r.sector));
        for v in &r.tariff_pct {
            let _ = write!(out, ",{v:.2}");
        }
        out.push('\n');
    }
    out.push_str("Weighted Average Tariff");
    for v in &table.weighted_average_pct {
        let _ = write!(out, ",{v:.2}");
    }
    out.push('\n');
    out.push_str("Welfare Change (%)");
    for v in &table.delta_w_pct {
        let _ = write!(out, ",{v:.4}");
    }
    out.push('\n');
    out
}
