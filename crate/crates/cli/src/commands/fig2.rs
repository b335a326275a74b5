//! Noise-free convergence run and its Lyapunov components.

use std::fmt;
use std::path::PathBuf;

use vslam_core::sim::{polynomial_fit, run_trial, EstimatorSelection, TrialRecord};

use crate::config::{write_file, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{number, write_csv};
use crate::svg::{color, LineChart, Series};

pub const CSV_NAME: &str = "lyapunov.csv";
pub const LINEAR_SVG: &str = "lyapunov_linear.svg";
pub const LOG_SVG: &str = "lyapunov_log.svg";

/// Length of the trailing window used for tail slopes (s).
pub const TAIL_WINDOW: f64 = 50.0;

/// Largest single-step increase of a series, ignoring undefined samples.
pub fn max_increase(series: &[Option<f64>]) -> f64 {
    series
        .windows(2)
        .filter_map(|w| Some(w[1]? - w[0]?))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Least-squares slope of `ln v(t)` over `t ≥ from`; `None` with fewer than two positive samples.
pub fn log_slope(times: &[f64], series: &[Option<f64>], from: f64) -> Option<f64> {
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(series)
        .filter(|(t, _)| **t >= from - 1e-9)
        .filter_map(|(t, v)| v.filter(|v| *v > 0.0).map(|v| (*t, v.ln())))
        .collect();
    let distinct = points.windows(2).any(|w| w[0].0 != w[1].0);
    if !distinct {
        return None;
    }
    polynomial_fit(&points, 1).ok().map(|f| f.coefficients[1])
}

#[derive(Clone, Debug)]
pub struct LandmarkTail {
    pub bearing_slope: Option<f64>,
    pub depth_slope: Option<f64>,
    /// `l_y` at the start of the tail window.
    pub bearing_at_start: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Fig2Output {
    pub record: TrialRecord,
    pub files: Vec<PathBuf>,
    /// Largest per-step increase over all landmarks and both components.
    pub max_increase: f64,
    /// `L(T) / L(0)`.
    pub final_ratio: Option<f64>,
    pub tail_start: f64,
    pub tails: Vec<LandmarkTail>,
}

pub fn analyze(record: TrialRecord, files: Vec<PathBuf>) -> Fig2Output {
    let n = record.bearing_storage.first().map_or(0, Vec::len);
    let end = record.times.last().copied().unwrap_or(0.0);
    let tail_start = (end - TAIL_WINDOW).max(0.0);
    let start_frame = record.times.iter().position(|t| *t >= tail_start - 1e-9).unwrap_or(0);
    let mut worst = f64::NEG_INFINITY;
    let tails = (0..n)
        .map(|i| {
            let (ly, lz) = record.landmark_series(i);
            worst = worst.max(max_increase(&ly)).max(max_increase(&lz));
            LandmarkTail {
                bearing_slope: log_slope(&record.times, &ly, tail_start),
                depth_slope: log_slope(&record.times, &lz, tail_start),
                bearing_at_start: ly.get(start_frame).copied().flatten(),
            }
        })
        .collect();
    let last = record.frames().saturating_sub(1);
    let final_ratio = match (record.total_storage(0), record.total_storage(last)) {
        (Some(first), Some(final_value)) if first > 0.0 => Some(final_value / first),
        _ => None,
    };
    Fig2Output {
        record,
        files,
        max_increase: worst,
        final_ratio,
        tail_start,
        tails,
    }
}

fn chart(record: &TrialRecord, log_y: bool) -> String {
    let n = record.bearing_storage.first().map_or(0, Vec::len);
    let mut series = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (ly, lz) = record.landmark_series(i);
        for (name, values, dashed) in [
            (format!("l_y_{}", i + 1), ly, false),
            (format!("l_z_{}", i + 1), lz, true),
        ] {
            series.push(Series {
                name,
                points: record
                    .times
                    .iter()
                    .zip(values)
                    .filter_map(|(t, v)| v.map(|v| (*t, v)))
                    .collect(),
                color: color(i),
                dashed,
            });
        }
    }
    let scale = if log_y { "log scale" } else { "linear scale" };
    LineChart {
        title: format!("Lyapunov components per landmark ({scale})"),
        x_label: "time (s)".into(),
        y_label: "storage".into(),
        log_y,
        series,
        notes: vec!["solid: bearing l_y, dashed: inverse depth l_z".into()],
        legend: false,
    }
    .render()
}

pub fn run(config: &RunConfig) -> Result<Fig2Output> {
    if config.scenario.estimators != EstimatorSelection::Observer {
        return Err(CliError::Config("fig2 runs the observer only".into()));
    }
    config.prepare_output()?;
    let record = run_trial(&config.scenario)?.remove(0);
    let n = config.scenario.landmark_count();

    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("l_y_{i}")));
    header.extend((1..=n).map(|i| format!("l_z_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..record.frames()).map(|k| {
        let mut row = vec![record.times[k].to_string()];
        row.extend(record.bearing_storage[k].iter().map(|v| number(*v)));
        row.extend(record.depth_storage[k].iter().map(|v| number(*v)));
        row
    });
    let csv = config.out.join(CSV_NAME);
    write_csv(&csv, &header, rows)?;
    let linear = config.out.join(LINEAR_SVG);
    write_file(&linear, chart(&record, false).as_bytes())?;
    let log = config.out.join(LOG_SVG);
    write_file(&log, chart(&record, true).as_bytes())?;

    Ok(analyze(record, vec![csv, linear, log]))
}

impl fmt::Display for Fig2Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let range = |values: Vec<f64>| {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            format!("[{lo:.4}, {hi:.4}]")
        };
        writeln!(
            f,
            "fig2: {} landmarks, {} frames",
            self.tails.len(),
            self.record.frames()
        )?;
        writeln!(f, "  largest per-step increase: {:.3e}", self.max_increase)?;
        if let Some(r) = self.final_ratio {
            writeln!(f, "  L(T)/L(0): {r:.3e}")?;
        }
        writeln!(
            f,
            "  tail slopes of ln l_z from t = {} s: {}",
            self.tail_start,
            range(self.tails.iter().filter_map(|t| t.depth_slope).collect())
        )?;
        writeln!(
            f,
            "  tail slopes of ln l_y from t = {} s: {}",
            self.tail_start,
            range(self.tails.iter().filter_map(|t| t.bearing_slope).collect())
        )?;
        for file in &self.files {
            writeln!(f, "  wrote {}", file.display())?;
        }
        Ok(())
    }
}
