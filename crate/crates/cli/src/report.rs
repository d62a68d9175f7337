//! Ledger rows, verdict lines and the files they are written to.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use liouville_core::stats::wls_fit;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Result};

/// One measured value: `series` at abscissa `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub series: String,
    pub x: f64,
    pub mean: f64,
    pub std_error: f64,
}

impl Record {
    pub fn new(series: &str, x: f64, mean: f64, std_error: f64) -> Self {
        Self { series: series.to_string(), x, mean, std_error }
    }
}

/// Outcome of one assertion. Ungated verdicts are informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: String,
    pub pass: bool,
    pub gated: bool,
    pub non_standard: bool,
}

impl Verdict {
    pub fn check(name: impl Into<String>, measured: f64, target: f64, tolerance: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), measured, target, tolerance: tolerance.into(), pass, gated: true, non_standard: false }
    }

    /// `|measured − target| ≤ tol`.
    pub fn within(name: impl Into<String>, measured: f64, target: f64, tol: f64) -> Self {
        let pass = (measured - target).abs() <= tol;
        Self::check(name, measured, target, format!("±{tol:.3e}"), pass)
    }

    /// `lo ≤ measured ≤ hi`.
    pub fn band(name: impl Into<String>, measured: f64, target: f64, lo: f64, hi: f64) -> Self {
        let pass = (lo..=hi).contains(&measured);
        Self::check(name, measured, target, format!("[{lo:.6e}, {hi:.6e}]"), pass)
    }

    pub fn info(name: impl Into<String>, measured: f64, target: f64, note: impl Into<String>) -> Self {
        Self { gated: false, pass: true, ..Self::check(name, measured, target, note, true) }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match (self.gated, self.pass) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        write!(
            f,
            "{tag} {}: measured {:.8e}, target {:.8e}, tolerance {}",
            self.name, self.measured, self.target, self.tolerance
        )?;
        if self.non_standard {
            write!(f, " [NON-STANDARD]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: Experiment,
    pub config_digest: String,
    pub seed_base: u64,
    pub records: Vec<Record>,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment,
            config_digest: config.digest(),
            seed_base: config.seed_base,
            records: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn record(&mut self, series: &str, x: f64, mean: f64, std_error: f64) {
        self.records.push(Record::new(series, x, mean, std_error));
    }

    pub fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass || !v.gated)
    }

    pub fn mark_non_standard(&mut self, flag: bool) {
        for v in &mut self.verdicts {
            v.non_standard = flag;
        }
    }
}

/// Floats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const LEDGER_HEADER: [&str; 7] = ["experiment", "config_digest", "seed_base", "series", "x", "mean", "std_error"];

pub fn ledger_csv(report: &Report) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(LEDGER_HEADER)?;
    for r in &report.records {
        w.write_record([
            report.experiment.name(),
            &report.config_digest,
            &report.seed_base.to_string(),
            &r.series,
            &fmt_f64(r.x),
            &fmt_f64(r.mean),
            &fmt_f64(r.std_error),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Ledger rows back from CSV, with the experiment of the first row.
pub fn read_ledger(bytes: &[u8]) -> Result<(Option<Experiment>, Vec<Record>)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let mut exp = None;
    let mut rows = Vec::new();
    for row in rd.records() {
        let row = row?;
        let get = |i: usize| row.get(i).ok_or_else(|| CliError::Io(format!("ledger row has {} fields", row.len())));
        let num = |i: usize| -> Result<f64> { get(i)?.parse().map_err(|e| CliError::Io(format!("ledger: {e}"))) };
        if exp.is_none() {
            exp = Some(get(0)?.parse()?);
        }
        rows.push(Record { series: get(3)?.to_string(), x: num(4)?, mean: num(5)?, std_error: num(6)? });
    }
    Ok((exp, rows))
}

pub fn jsonl(report: &Report) -> Vec<u8> {
    let mut out = Vec::new();
    let head = serde_json::json!({
        "experiment": report.experiment,
        "config_digest": report.config_digest,
        "seed_base": report.seed_base,
    });
    for r in &report.records {
        let mut v = head.clone();
        v["record"] = serde_json::to_value(r).expect("record serializes");
        writeln!(out, "{v}").expect("write to vec");
    }
    for d in &report.verdicts {
        let mut v = head.clone();
        v["verdict"] = serde_json::to_value(d).expect("verdict serializes");
        writeln!(out, "{v}").expect("write to vec");
    }
    out
}

/// Tidy plot series and, for `green-decay`, the sidecar fit.
pub struct PlotData {
    pub csv: Vec<u8>,
    pub sidecar: Option<serde_json::Value>,
}

pub fn emit_plotdata(experiment: Option<Experiment>, records: &[Record]) -> Result<PlotData> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut sidecar = None;
    match experiment {
        Some(Experiment::SlopeTheorem) => {
            w.write_record(["t", "log_t", "log_corr", "stderr_log"])?;
            for r in records.iter().filter(|r| r.series == "log_corr") {
                w.write_record([fmt_f64(r.x), fmt_f64(r.x.ln()), fmt_f64(r.mean), fmt_f64(r.std_error)])?;
            }
        }
        Some(Experiment::GreenDecay) => {
            w.write_record(["t", "sup_diff", "log_sup_diff"])?;
            let rows: Vec<&Record> = records.iter().filter(|r| r.series == "sup_diff").collect();
            for r in &rows {
                w.write_record([fmt_f64(r.x), fmt_f64(r.mean), fmt_f64(r.mean.ln())])?;
            }
            if rows.len() >= 2 {
                let x: Vec<f64> = rows.iter().map(|r| r.x).collect();
                let y: Vec<f64> = rows.iter().map(|r| r.mean.ln()).collect();
                let fit = wls_fit(&x, &y, None);
                sidecar = Some(serde_json::json!({
                    "model": "log_sup_diff = intercept + slope * t",
                    "slope": fit.slope,
                    "slope_se": fit.slope_se,
                    "intercept": fit.intercept,
                    "intercept_se": fit.intercept_se,
                    "points": rows.len(),
                }));
            }
        }
        _ => {
            w.write_record(["series", "x", "mean", "std_error"])?;
            for r in records {
                w.write_record([r.series.clone(), fmt_f64(r.x), fmt_f64(r.mean), fmt_f64(r.std_error)])?;
            }
        }
    }
    let csv = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(PlotData { csv, sidecar })
}

/// Paths of the artifacts written for one run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub ledger: PathBuf,
    pub jsonl: PathBuf,
    pub plot: PathBuf,
    pub config: PathBuf,
    pub config_json: PathBuf,
    pub sidecar: Option<PathBuf>,
}

pub fn write_artifacts(report: &Report, config: &ExperimentConfig, dir: &Path) -> Result<Artifacts> {
    std::fs::create_dir_all(dir)?;
    let stem = report.experiment.name();
    let path = |ext: &str| dir.join(format!("{stem}.{ext}"));
    let a = Artifacts {
        ledger: path("csv"),
        jsonl: path("jsonl"),
        plot: path("plot.csv"),
        config: path("config"),
        config_json: path("config.json"),
        sidecar: None,
    };
    std::fs::write(&a.ledger, ledger_csv(report)?)?;
    std::fs::write(&a.jsonl, jsonl(report))?;
    std::fs::write(&a.config, config.to_kv())?;
    std::fs::write(&a.config_json, config.to_json())?;
    let plot = emit_plotdata(Some(report.experiment), &report.records)?;
    std::fs::write(&a.plot, plot.csv)?;
    let sidecar = match plot.sidecar {
        Some(v) => {
            let p = path("fit.json");
            std::fs::write(&p, serde_json::to_string_pretty(&v).expect("fit serializes"))?;
            Some(p)
        }
        None => None,
    };
    Ok(Artifacts { sidecar, ..a })
}
