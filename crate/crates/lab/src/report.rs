//! Result rows, run summaries and their CSV/JSON serialization.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// One evaluated point of an experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub economy_id: String,
    /// Position in the canonical point order of the run.
    pub index: usize,
    /// Endowment, chart parameters or spec, depending on the scenario.
    pub point: Vec<f64>,
    pub equilibrium_count: Option<usize>,
    pub sup_mean_curvature: Option<f64>,
    pub volume: Option<f64>,
    pub entropy: Option<f64>,
    pub gauss_dispersion: Option<f64>,
    /// Scenario-specific scalar (residual, volume change, ...).
    pub value: Option<f64>,
    /// Scenario-specific vector (equilibrium prices, wedge triple, ...).
    pub detail: Vec<f64>,
    pub flags: Vec<String>,
}

impl ResultRow {
    pub fn new(scenario: &str, economy_id: &str, index: usize, point: Vec<f64>) -> Self {
        Self {
            scenario: scenario.to_string(),
            economy_id: economy_id.to_string(),
            index,
            point,
            ..Self::default()
        }
    }

    pub fn flag(&mut self, flag: impl Into<String>) {
        self.flags.push(flag.into());
    }

    pub fn failed(&self) -> bool {
        self.flags.iter().any(|f| f.starts_with("error"))
    }
}

/// A pass/fail assertion made by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Where an economy falls in the uniqueness × minimality table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    /// Every sampled endowment has exactly one equilibrium.
    pub unique: bool,
    /// Sup of `|H|` over the chart grid is at most the minimality tolerance.
    pub minimal: bool,
    pub min_multiplicity: usize,
    pub max_multiplicity: usize,
    pub sup_mean_curvature: f64,
    /// `unique != minimal`.
    pub anomaly: bool,
    /// Counts indexed `[unique, multiple] × [minimal, non-minimal]`.
    pub table: [[usize; 2]; 2],
}

impl Contingency {
    pub fn new(counts: &[usize], sup_mean_curvature: f64, tol_minimal: f64) -> Self {
        let unique = !counts.is_empty() && counts.iter().all(|c| *c == 1);
        let minimal = sup_mean_curvature <= tol_minimal;
        let mut table = [[0; 2]; 2];
        table[usize::from(!unique)][usize::from(!minimal)] = 1;
        Self {
            unique,
            minimal,
            min_multiplicity: counts.iter().copied().min().unwrap_or(0),
            max_multiplicity: counts.iter().copied().max().unwrap_or(0),
            sup_mean_curvature,
            anomaly: unique != minimal,
            table,
        }
    }

    pub fn cell(&self) -> &'static str {
        match (self.unique, self.minimal) {
            (true, true) => "unique/minimal",
            (true, false) => "unique/non-minimal",
            (false, true) => "multiple/minimal",
            (false, false) => "multiple/non-minimal",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    pub checks: Vec<Check>,
    pub contingency: Option<Contingency>,
    pub metrics: BTreeMap<String, f64>,
}

impl Summary {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Rows in canonical order plus their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("nothing to write")]
    Empty,
    #[error("row {index}: entropy {entropy} is not ln(volume {volume})")]
    EntropyMismatch { index: usize, volume: f64, entropy: f64 },
    #[error("row {index}: non-finite {field}")]
    NonFinite { index: usize, field: &'static str },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// 17 significant digits.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

pub const CSV_HEADER: [&str; 12] = [
    "scenario",
    "economy_id",
    "index",
    "point",
    "equilibrium_count",
    "sup_mean_curvature",
    "volume",
    "entropy",
    "gauss_dispersion",
    "value",
    "detail",
    "flags",
];

/// Rejects rows that would not survive serialization, and rows whose
/// entropy is not the log of their volume.
pub fn check_rows(rows: &[ResultRow]) -> Result<(), EmitError> {
    for r in rows {
        let scalars = [
            ("sup_mean_curvature", r.sup_mean_curvature),
            ("volume", r.volume),
            ("entropy", r.entropy),
            ("gauss_dispersion", r.gauss_dispersion),
            ("value", r.value),
        ];
        for (field, v) in scalars {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(EmitError::NonFinite { index: r.index, field });
            }
        }
        if r.point.iter().chain(&r.detail).any(|x| !x.is_finite()) {
            return Err(EmitError::NonFinite { index: r.index, field: "point/detail" });
        }
        if let (Some(volume), Some(entropy)) = (r.volume, r.entropy) {
            if (entropy - volume.ln()).abs() > 1e-12 * entropy.abs().max(1.0) {
                return Err(EmitError::EntropyMismatch {
                    index: r.index,
                    volume,
                    entropy,
                });
            }
        }
    }
    Ok(())
}

pub fn to_csv(rows: &[ResultRow]) -> Result<Vec<u8>, EmitError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.economy_id.clone(),
            r.index.to_string(),
            fmt_vec(&r.point),
            r.equilibrium_count.map(|c| c.to_string()).unwrap_or_default(),
            fmt_opt(r.sup_mean_curvature),
            fmt_opt(r.volume),
            fmt_opt(r.entropy),
            fmt_opt(r.gauss_dispersion),
            fmt_opt(r.value),
            fmt_vec(&r.detail),
            r.flags.join("|"),
        ])?;
    }
    w.into_inner().map_err(|e| EmitError::Io {
        path: PathBuf::from("<csv buffer>"),
        source: e.into_error(),
    })
}

/// `(x, y) = (sup_mean_curvature, equilibrium_count)` for rows that have both.
pub fn plot_csv(rows: &[ResultRow]) -> Result<Option<Vec<u8>>, EmitError> {
    let points: Vec<_> = rows
        .iter()
        .filter_map(|r| Some((r.index, r.sup_mean_curvature?, r.equilibrium_count?)))
        .collect();
    if points.is_empty() {
        return Ok(None);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "x", "y"])?;
    for (i, x, y) in points {
        w.write_record([i.to_string(), fmt_f64(x), y.to_string()])?;
    }
    w.into_inner().map(Some).map_err(|e| EmitError::Io {
        path: PathBuf::from("<csv buffer>"),
        source: e.into_error(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JsonReport {
    pub version: String,
    pub scenario: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub rows: Vec<ResultRow>,
}

pub fn version_stamp() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

pub fn to_json(scenario: &str, config: &ExperimentConfig, out: &RunOutput) -> Result<Vec<u8>, EmitError> {
    let report = JsonReport {
        version: version_stamp(),
        scenario: scenario.to_string(),
        seed: config.seed,
        config: config.clone(),
        summary: out.summary.clone(),
        rows: out.rows.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), EmitError> {
    fs::write(path, bytes).map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<scenario>.csv`, `<scenario>.json` and, when there is data for
/// it, `<scenario>-plot.csv` into `dir`. Returns the written paths.
pub fn emit(
    dir: &Path,
    scenario: &str,
    config: &ExperimentConfig,
    out: &RunOutput,
    format: Format,
) -> Result<Vec<PathBuf>, EmitError> {
    if out.rows.is_empty() {
        return Err(EmitError::Empty);
    }
    check_rows(&out.rows)?;
    fs::create_dir_all(dir).map_err(|source| EmitError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    if matches!(format, Format::Csv | Format::Both) {
        let path = dir.join(format!("{scenario}.csv"));
        write(&path, &to_csv(&out.rows)?)?;
        written.push(path);
        if let Some(plot) = plot_csv(&out.rows)? {
            let path = dir.join(format!("{scenario}-plot.csv"));
            write(&path, &plot)?;
            written.push(path);
        }
    }
    if matches!(format, Format::Json | Format::Both) {
        let path = dir.join(format!("{scenario}.json"));
        write(&path, &to_json(scenario, config, out)?)?;
        written.push(path);
    }
    Ok(written)
}
