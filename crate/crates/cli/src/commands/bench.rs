//! Per-step cost against landmark count, with linear and quadratic fits.

use std::fmt;
use std::path::PathBuf;

use vslam_core::estimate::EstimatorKind;
use vslam_core::sim::{complexity_fit, run_sweep, ComplexityFit, SweepResult};

use super::sweep_options;
use crate::config::{write_file, RunConfig};
use crate::error::Result;
use crate::output::write_csv;
use crate::svg::{color, LineChart, Series};

pub const CSV_NAME: &str = "timings.csv";
pub const SVG_NAME: &str = "timings.svg";
pub const HEADER: [&str; 3] = ["n", "estimator", "median_step_time"];

#[derive(Clone, Debug)]
pub struct EstimatorTiming {
    pub estimator: EstimatorKind,
    /// `(n, seconds)`: median over trials of each trial's median step time.
    pub curve: Vec<(f64, f64)>,
    /// Present with at least four distinct landmark counts.
    pub fit: Option<ComplexityFit>,
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub result: SweepResult,
    pub timings: Vec<EstimatorTiming>,
    pub files: Vec<PathBuf>,
}

impl BenchOutput {
    pub fn timing(&self, kind: EstimatorKind) -> Option<&EstimatorTiming> {
        self.timings.iter().find(|t| t.estimator == kind)
    }
}

fn describe(fit: &ComplexityFit) -> String {
    let q = &fit.quadratic.coefficients;
    format!(
        "{} preferred (linear R2 {:.4}, AIC {:.1}; quadratic AIC {:.1}, c2 {:.3e})",
        fit.preferred.name(),
        fit.linear.r_squared,
        fit.linear.aic,
        fit.quadratic.aic,
        q[2]
    )
}

pub fn run(config: &RunConfig) -> Result<BenchOutput> {
    config.prepare_output()?;
    let result = run_sweep(&config.scenario, &config.counts, config.trials, sweep_options(config))?;
    let timings: Vec<EstimatorTiming> = result
        .estimators()
        .into_iter()
        .map(|kind| {
            let curve = result.timing_curve(kind);
            EstimatorTiming {
                estimator: kind,
                fit: complexity_fit(&curve).ok(),
                curve,
            }
        })
        .collect();

    let csv = config.out.join(CSV_NAME);
    let mut rows = Vec::new();
    for &n in &config.counts {
        for t in &timings {
            if let Some((_, seconds)) = t.curve.iter().find(|p| p.0 == n as f64) {
                rows.push(vec![n.to_string(), t.estimator.name().to_string(), seconds.to_string()]);
            }
        }
    }
    write_csv(&csv, &HEADER, rows)?;

    let mut series = Vec::new();
    let mut notes = Vec::new();
    for (k, t) in timings.iter().enumerate() {
        let millis = |(n, s): (f64, f64)| (n, s * 1e3);
        series.push(Series {
            name: t.estimator.name().into(),
            points: t.curve.iter().copied().map(millis).collect(),
            color: color(k),
            dashed: false,
        });
        match &t.fit {
            Some(fit) => {
                let model = match fit.preferred {
                    vslam_core::sim::Complexity::Linear => &fit.linear,
                    vslam_core::sim::Complexity::Quadratic => &fit.quadratic,
                };
                let (lo, hi) = (t.curve[0].0, t.curve[t.curve.len() - 1].0);
                series.push(Series {
                    name: format!("{} {} fit", t.estimator.name(), fit.preferred.name()),
                    points: (0..=40)
                        .map(|j| {
                            let n = lo + (hi - lo) * j as f64 / 40.0;
                            (n, model.evaluate(n) * 1e3)
                        })
                        .collect(),
                    color: color(k),
                    dashed: true,
                });
                notes.push(format!("{}: {}", t.estimator.name(), describe(fit)));
            }
            None => notes.push(format!("{}: fits need at least 4 landmark counts", t.estimator.name())),
        }
    }
    let svg = config.out.join(SVG_NAME);
    let chart = LineChart {
        title: "Median step time against landmark count".into(),
        x_label: "landmarks".into(),
        y_label: "step time (ms)".into(),
        log_y: false,
        series,
        notes,
        legend: true,
    };
    write_file(&svg, chart.render().as_bytes())?;

    Ok(BenchOutput {
        result,
        timings,
        files: vec![csv, svg],
    })
}

impl fmt::Display for BenchOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bench: {} trials per count", self.result.trials)?;
        for t in &self.timings {
            let points: Vec<String> = t.curve.iter().map(|(n, s)| format!("{n}: {:.3} ms", s * 1e3)).collect();
            writeln!(f, "  {:<8} {}", t.estimator.name(), points.join(", "))?;
            if let Some(fit) = &t.fit {
                writeln!(f, "  {:<8} {}", "", describe(fit))?;
            }
        }
        for file in &self.files {
            writeln!(f, "  wrote {}", file.display())?;
        }
        Ok(())
    }
}
