//! CSV emission. Floats use the shortest representation that round-trips
//! (exponent form below `1e-4`), so identical results give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{BenchReport, ProbReport, SimulateReport, StrongReport, TraceReport};
use crate::error::Result;

pub const TRACE_HEADER: [&str; 6] = ["scheme", "t", "mean_mass", "std_error", "predicted", "n_diverged"];
pub const STRONG_HEADER: [&str; 6] = ["scheme", "tau", "mean_error", "std_error", "n_samples", "n_diverged"];
pub const PROB_HEADER: [&str; 5] = ["tau", "delta", "C", "proportion", "n_samples"];
pub const BENCH_HEADER: [&str; 5] = ["scheme", "tau", "wall_seconds", "mean_final_error", "n_diverged"];
pub const TRAJ_HEADER: [&str; 4] = ["t", "mass", "h1_norm", "omega"];
pub const STATE_HEADER: [&str; 3] = ["k", "re", "im"];

/// Shortest round-trip form, e.g. `0.1`, `10.0`, `1e-30`, `inf`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub fn write_trace<W: Write>(out: W, report: &TraceReport) -> Result<()> {
    let mut w = writer(out, &TRACE_HEADER)?;
    for s in &report.series {
        for r in &s.records {
            w.write_record([
                s.scheme.name().to_string(),
                num(r.t),
                num(r.sample_mean_mass),
                num(r.std_error),
                num(r.predicted),
                r.n_diverged.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_strong<W: Write>(out: W, report: &StrongReport) -> Result<()> {
    let mut w = writer(out, &STRONG_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.scheme.name().to_string(),
            num(r.tau),
            num(r.mean_error),
            num(r.std_error),
            r.n_samples.to_string(),
            r.n_diverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_prob<W: Write>(out: W, report: &ProbReport) -> Result<()> {
    let mut w = writer(out, &PROB_HEADER)?;
    for r in &report.rows {
        w.write_record([
            num(r.tau),
            num(r.delta),
            num(r.c),
            num(r.proportion),
            r.n_samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench<W: Write>(out: W, report: &BenchReport) -> Result<()> {
    let mut w = writer(out, &BENCH_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.scheme.name().to_string(),
            num(r.tau),
            num(r.wall_seconds),
            num(r.mean_final_error),
            r.n_diverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traj<W: Write>(out: W, report: &SimulateReport) -> Result<()> {
    let mut w = writer(out, &TRAJ_HEADER)?;
    for r in &report.rows {
        w.write_record([num(r.t), num(r.mass), num(r.h1_norm), num(r.omega)])?;
    }
    w.flush()?;
    Ok(())
}

/// Final Fourier coefficients, one row per wavenumber in storage order.
pub fn write_state<W: Write>(out: W, report: &SimulateReport) -> Result<()> {
    let mut w = writer(out, &STATE_HEADER)?;
    let grid = report.final_state.grid();
    for (i, c) in report.final_state.coeffs().iter().enumerate() {
        w.write_record([grid.wavenumber(i).to_string(), num(c.re), num(c.im)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `name` inside `dir` (created if missing) and returns its path.
pub fn write_file(dir: &Path, name: &str, body: impl FnOnce(fs::File) -> Result<()>) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    body(fs::File::create(&path)?)?;
    Ok(path)
}
