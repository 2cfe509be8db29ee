//! Output files. Every write goes to a temporary sibling first and is then
//! renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use monorecon::engine::RunTrace;
use monorecon::metrics::RateFit;

use crate::config::{RunConfig, Study};
use crate::runner::{RunSummary, SeriesFit};
use crate::CliError;

pub const TRACE_CSV: &str = "trace.csv";
pub const TRACE_JSON: &str = "trace.json";
pub const DATASET_CSV: &str = "dataset.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const RATES_TXT: &str = "rates.txt";
pub const SERIES_CSV: &str = "series.csv";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Output(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let fail = |e: std::io::Error| CliError::Output(format!("{}: {e}", path.display()));
    fs::write(&tmp, bytes).map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

/// Creates `dir` and proves it is writable before any oracle call.
pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    fs::remove_file(&probe).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

#[derive(Serialize)]
struct TraceFile<'a> {
    config: &'a RunConfig,
    config_hash: String,
    init_calls: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_constraint: Option<f64>,
    trace: &'a RunTrace,
}

pub fn trace_json(s: &RunSummary) -> String {
    let file = TraceFile {
        config: &s.config,
        config_hash: s.config.hash(),
        init_calls: s.init_calls,
        mean_constraint: s.mean_constraint,
        trace: &s.trace,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("plain data");
    text.push('\n');
    text
}

pub fn errors_csv(s: &RunSummary) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &s.errors {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// `n,min_quality,total_area` per iteration.
pub fn series_csv(trace: &RunTrace) -> String {
    let mut out = String::from("n,min_quality,total_area\n");
    for r in &trace.records {
        writeln!(out, "{},{},{}", r.n, r.q_min, r.total_area).expect("string write");
    }
    out
}

fn fit_lines(out: &mut String, name: &str, s: &SeriesFit) {
    match s.fit {
        Some(RateFit {
            slope,
            intercept,
            r_squared,
            used,
            excluded,
        }) => {
            writeln!(out, "{name}_slope {slope}").unwrap();
            writeln!(out, "{name}_intercept {intercept}").unwrap();
            writeln!(out, "{name}_r_squared {r_squared}").unwrap();
            writeln!(out, "{name}_points {used}").unwrap();
            writeln!(out, "{name}_excluded {excluded}").unwrap();
        }
        None => writeln!(out, "{name}_slope NA").unwrap(),
    }
    match s.spearman {
        Some(rho) => writeln!(out, "{name}_spearman {rho}").unwrap(),
        None => writeln!(out, "{name}_spearman NA").unwrap(),
    }
}

/// Plain `key value` lines.
pub fn rates_txt(s: &RunSummary) -> String {
    let t = &s.trace;
    let splits = t.split_count();
    let mut out = String::new();
    writeln!(out, "iterations {}", t.records.len()).unwrap();
    writeln!(out, "splits {splits}").unwrap();
    writeln!(out, "redos {}", t.records.len() - splits).unwrap();
    writeln!(out, "points {}", t.final_points.len()).unwrap();
    writeln!(out, "total_calls {}", t.total_calls).unwrap();
    writeln!(out, "init_calls {}", s.init_calls).unwrap();
    if !s.errors.is_empty() {
        writeln!(out, "fit_from {}", s.config.metrics.fit_from).unwrap();
        fit_lines(&mut out, "sup", &s.sup);
        fit_lines(&mut out, "l1", &s.l1);
        if let Some(last) = s.errors.last() {
            writeln!(out, "final_sup_err {}", last.sup_err).unwrap();
            writeln!(out, "final_l1_err {}", last.l1_err).unwrap();
        }
    }
    out
}

pub fn write_outputs(dir: &Path, s: &RunSummary) -> Result<(), CliError> {
    write_atomic(&dir.join(TRACE_CSV), s.trace.to_csv().as_bytes())?;
    write_atomic(&dir.join(TRACE_JSON), trace_json(s).as_bytes())?;
    let ds = s
        .trace
        .final_dataset()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&dir.join(DATASET_CSV), ds.to_csv_string().as_bytes())?;
    if !s.errors.is_empty() {
        write_atomic(&dir.join(ERRORS_CSV), errors_csv(s).as_bytes())?;
    }
    write_atomic(&dir.join(RATES_TXT), rates_txt(s).as_bytes())?;
    if s.config.study == Study::Ouq {
        write_atomic(&dir.join(SERIES_CSV), series_csv(&s.trace).as_bytes())?;
    }
    Ok(())
}
