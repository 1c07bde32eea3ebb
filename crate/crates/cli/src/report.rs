//! Tables on disk: CSV with a commented metadata header, a JSON mirror and
//! an optional gnuplot script.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};
use crate::sweep::{Output, Record, SweepResult};

pub const GENERATOR: &str = concat!("coldscat ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    pub config_sha256: String,
    pub sweep: String,
    pub method: String,
    pub incident: String,
    /// Total projections summed, space separated.
    pub blocks: String,
    pub l_max: u32,
    pub n_max: u32,
    pub reduced_mass_amu: f64,
}

impl Metadata {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("generator", self.generator.clone()),
            ("config_sha256", self.config_sha256.clone()),
            ("sweep", self.sweep.clone()),
            ("method", self.method.clone()),
            ("incident", self.incident.clone()),
            ("blocks", self.blocks.clone()),
            ("l_max", self.l_max.to_string()),
            ("n_max", self.n_max.to_string()),
            ("reduced_mass_amu", self.reduced_mass_amu.to_string()),
        ]
    }

    fn from_pairs(pairs: &[(String, String)]) -> Option<Self> {
        let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
        Some(Self {
            generator: get("generator")?,
            config_sha256: get("config_sha256")?,
            sweep: get("sweep")?,
            method: get("method")?,
            incident: get("incident")?,
            blocks: get("blocks")?,
            l_max: get("l_max")?.parse().ok()?,
            n_max: get("n_max")?.parse().ok()?,
            reduced_mass_amu: get("reduced_mass_amu")?.parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    #[serde(rename = "E_K")]
    pub energy: f64,
    #[serde(rename = "B_gauss")]
    pub field: f64,
    pub initial: String,
    #[serde(rename = "final")]
    pub final_state: String,
    pub sigma_cm2: f64,
    #[serde(rename = "K_cm3s")]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalRow {
    #[serde(rename = "T_K")]
    pub temperature: f64,
    #[serde(rename = "B_gauss")]
    pub field: f64,
    pub initial: String,
    #[serde(rename = "final")]
    pub final_state: String,
    #[serde(rename = "K_cm3s")]
    pub rate: f64,
    /// Share of the Maxwellian above the highest computed energy.
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    #[serde(rename = "E_K")]
    pub energy: f64,
    pub initial: String,
    #[serde(rename = "final")]
    pub final_state: String,
    pub delta_mj: i32,
    #[serde(rename = "E0_K")]
    pub e0: f64,
    pub l_f: u32,
    #[serde(rename = "K0_cm3s")]
    pub k0: f64,
    pub log_residual: f64,
    pub used: usize,
    pub free_exponent: Option<f64>,
    pub linear_critical_field_gauss: f64,
    pub critical_field_gauss: Option<f64>,
    pub above_curve: usize,
    pub in_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    #[serde(rename = "B_gauss")]
    pub field: f64,
    pub state: String,
    #[serde(rename = "energy_K")]
    pub energy: f64,
    pub weak_field_seeker: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "lowercase")]
pub enum Table {
    Rates(Vec<RateRow>),
    Thermal(Vec<ThermalRow>),
    Fit(Vec<FitRow>),
    Levels(Vec<LevelRow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: Metadata,
    pub table: Table,
    pub records: Vec<Record>,
}

impl Report {
    pub fn new(config: &RunConfig, result: &SweepResult, dwba: bool) -> Self {
        let incident = config.incident().to_string();
        let table = match &result.output {
            Output::Rates(t) => Table::Rates(
                t.entries
                    .iter()
                    .map(|e| RateRow {
                        energy: e.energy,
                        field: e.field,
                        initial: e.initial.to_string(),
                        final_state: e.final_state.to_string(),
                        sigma_cm2: e.sigma,
                        rate: e.rate,
                    })
                    .collect(),
            ),
            Output::Thermal(rows) => Table::Thermal(
                rows.iter()
                    .map(|e| ThermalRow {
                        temperature: e.temperature,
                        field: e.field,
                        initial: e.initial.to_string(),
                        final_state: e.final_state.to_string(),
                        rate: e.rate,
                        tail_fraction: e.tail_fraction,
                    })
                    .collect(),
            ),
            Output::Fit(rows) => Table::Fit(
                rows.iter()
                    .map(|e| FitRow {
                        energy: e.energy,
                        initial: incident.clone(),
                        final_state: e.final_state.to_string(),
                        delta_mj: e.delta_mj,
                        e0: e.e0,
                        l_f: e.l_f,
                        k0: e.k0,
                        log_residual: e.log_residual,
                        used: e.used,
                        free_exponent: e.exponent,
                        linear_critical_field_gauss: e.linear_critical_field,
                        critical_field_gauss: e.critical_field,
                        above_curve: e.above_curve,
                        in_window: e.in_window,
                    })
                    .collect(),
            ),
            Output::Levels(rows) => Table::Levels(
                rows.iter()
                    .map(|e| LevelRow {
                        field: e.field,
                        state: e.label.to_string(),
                        energy: e.energy,
                        weak_field_seeker: e.weak_field_seeker,
                    })
                    .collect(),
            ),
        };
        let blocks: Vec<String> = result.blocks.iter().map(|m| m.to_string()).collect();
        Self {
            metadata: Metadata {
                generator: GENERATOR.to_string(),
                config_sha256: config.hash(),
                sweep: result.kind.name().to_string(),
                method: if dwba { "dwba" } else { "close-coupling" }.to_string(),
                incident,
                blocks: blocks.join(" "),
                l_max: config.numerics.l_max,
                n_max: config.numerics.n_max,
                reduced_mass_amu: config.reduced_mass(),
            },
            table,
            records: result.records.clone(),
        }
    }
}

fn write_rows<T: Serialize, W: Write>(out: W, rows: &[T], header: &[&str]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

const RATE_HEADER: &[&str] = &["E_K", "B_gauss", "initial", "final", "sigma_cm2", "K_cm3s"];
const THERMAL_HEADER: &[&str] = &["T_K", "B_gauss", "initial", "final", "K_cm3s", "tail_fraction"];
const FIT_HEADER: &[&str] = &[
    "E_K",
    "initial",
    "final",
    "delta_mj",
    "E0_K",
    "l_f",
    "K0_cm3s",
    "log_residual",
    "used",
    "free_exponent",
    "linear_critical_field_gauss",
    "critical_field_gauss",
    "above_curve",
    "in_window",
];
const LEVEL_HEADER: &[&str] = &["B_gauss", "state", "energy_K", "weak_field_seeker"];
const RECORD_HEADER: &[&str] = &["severity", "energy_k", "temperature_k", "field_gauss", "m_total", "message"];

/// CSV table with `# key = value` metadata lines above the header row.
pub fn write_csv<W: Write>(mut out: W, report: &Report) -> anyhow::Result<()> {
    for (k, v) in report.metadata.pairs() {
        writeln!(out, "# {k} = {v}")?;
    }
    match &report.table {
        Table::Rates(rows) => write_rows(&mut out, rows, RATE_HEADER)?,
        Table::Thermal(rows) => write_rows(&mut out, rows, THERMAL_HEADER)?,
        Table::Fit(rows) => write_rows(&mut out, rows, FIT_HEADER)?,
        Table::Levels(rows) => write_rows(&mut out, rows, LEVEL_HEADER)?,
    }
    Ok(())
}

pub fn write_records_csv<W: Write>(out: W, records: &[Record]) -> anyhow::Result<()> {
    write_rows(out, records, RECORD_HEADER)?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(text: &str) -> csv::Result<Vec<T>> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes()).deserialize().collect()
}

/// Parses a table written by [`write_csv`] back; the table kind comes from
/// the `sweep` metadata line.
pub fn read_csv(text: &str) -> anyhow::Result<(Metadata, Table)> {
    let mut pairs = Vec::new();
    for line in text.as_bytes().lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix("# ") else { break };
        if let Some((k, v)) = rest.split_once(" = ") {
            pairs.push((k.to_string(), v.to_string()));
        }
    }
    let meta = Metadata::from_pairs(&pairs).ok_or_else(|| anyhow::anyhow!("missing metadata header"))?;
    let table = match meta.sweep.as_str() {
        "field" | "energy" => Table::Rates(read_rows(text)?),
        "thermal" => Table::Thermal(read_rows(text)?),
        "fit" => Table::Fit(read_rows(text)?),
        "zeeman" => Table::Levels(read_rows(text)?),
        other => anyhow::bail!("unknown sweep kind {other}"),
    };
    Ok((meta, table))
}

pub fn read_records_csv(text: &str) -> anyhow::Result<Vec<Record>> {
    Ok(read_rows(text)?)
}

pub fn to_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> anyhow::Result<Report> {
    Ok(serde_json::from_str(text)?)
}

/// gnuplot script plotting the CSV next to it.
pub fn gnuplot_script(report: &Report, csv_name: &str) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset logscale y\nset format y '%.0e'\nset key outside\n");
    // y column `y` on rows whose final state is `value`
    let select = |value: &str, y: usize| format!("(strcol(4) eq '{value}' ? ${y} : 1/0)");
    match &report.table {
        Table::Rates(_) => {
            let (x, xlabel) = if report.metadata.sweep == "energy" { (1, "E (K)") } else { (2, "B (G)") };
            if x == 1 {
                s.push_str("set logscale x\n");
            }
            s.push_str(&format!("set xlabel '{xlabel}'\nset ylabel 'K (cm^3/s)'\n"));
            s.push_str(&format!(
                "plot '{csv_name}' every ::1 using {x}:{} with linespoints title 'loss', \\\n     '{csv_name}' every ::1 using {x}:{} with linespoints title 'elastic'\n",
                select("loss", 6),
                select(&report.metadata.incident, 6),
            ));
        }
        Table::Thermal(_) => {
            s.push_str("set logscale x\nset xlabel 'T (K)'\nset ylabel 'K (cm^3/s)'\n");
            s.push_str(&format!(
                "plot '{csv_name}' every ::1 using 1:{} with linespoints title 'loss'\n",
                select("loss", 5)
            ));
        }
        Table::Fit(_) => {
            s.push_str("set xlabel 'E (K)'\nset ylabel 'K0 (cm^3/s)'\nset logscale x\n");
            s.push_str(&format!("plot '{csv_name}' every ::1 using 1:7 with points title 'K0'\n"));
        }
        Table::Levels(_) => {
            s.push_str("unset logscale y\nset format y '%g'\nset xlabel 'B (G)'\nset ylabel 'E (K)'\n");
            s.push_str(&format!("plot '{csv_name}' every ::1 using 1:3 with dots notitle\n"));
        }
    }
    s
}

/// Writes every requested format into `dir`, returning the paths written.
pub fn emit(report: &Report, dir: &Path, formats: &[Format], plot: bool) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = report.metadata.sweep.clone();
    let mut written = Vec::new();
    let mut save = |name: String, bytes: Vec<u8>| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    if formats.contains(&Format::Csv) {
        let mut buf = Vec::new();
        write_csv(&mut buf, report)?;
        save(format!("{stem}.csv"), buf)?;
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &report.records)?;
        save(format!("{stem}.records.csv"), buf)?;
        if plot {
            save(format!("{stem}.gp"), gnuplot_script(report, &format!("{stem}.csv")).into_bytes())?;
        }
    }
    if formats.contains(&Format::Json) {
        save(format!("{stem}.json"), to_json(report).into_bytes())?;
    }
    Ok(written)
}
