//! Final-RMSE comparison of the observer and the EKF over seeded trials.

use std::fmt;
use std::path::PathBuf;

use vslam_core::estimate::EstimatorKind;
use vslam_core::sim::{run_sweep, BoxStats, SweepResult};

use super::sweep_options;
use crate::config::{write_file, RunConfig};
use crate::error::Result;
use crate::output::{number, write_csv};
use crate::svg::{color, BoxGroup, BoxPlot};

pub const CSV_NAME: &str = "rmse.csv";
pub const SVG_NAME: &str = "rmse_boxplot.svg";
pub const HEADER: [&str; 5] = ["seed", "estimator", "rmse_final", "rmse_mean", "degeneracy_count"];

#[derive(Clone, Debug)]
pub struct CompareOutput {
    pub result: SweepResult,
    /// Final-RMSE statistics per estimator; `None` when some trial has no finite value.
    pub stats: Vec<(EstimatorKind, Option<BoxStats>)>,
    /// Trials whose final RMSE is missing or not finite.
    pub unusable: Vec<(EstimatorKind, usize)>,
    pub files: Vec<PathBuf>,
}

impl CompareOutput {
    pub fn stats_for(&self, kind: EstimatorKind) -> Option<&BoxStats> {
        self.stats
            .iter()
            .find(|(k, _)| *k == kind)
            .and_then(|(_, s)| s.as_ref())
    }
}

pub fn run(config: &RunConfig) -> Result<CompareOutput> {
    config.prepare_output()?;
    let n = config.counts[0];
    let result = run_sweep(&config.scenario, &[n], config.trials, sweep_options(config))?;

    // Seed-major rows; summaries are already ordered by seed then estimator.
    let csv = config.out.join(CSV_NAME);
    write_csv(
        &csv,
        &HEADER,
        result.summaries.iter().map(|s| {
            vec![
                s.seed.to_string(),
                s.estimator.name().to_string(),
                number(s.final_rmse),
                number(s.mean_rmse),
                s.degenerate_steps.to_string(),
            ]
        }),
    )?;

    let mut stats = Vec::new();
    let mut unusable = Vec::new();
    for kind in result.estimators() {
        let values: Vec<f64> = result
            .cell(kind, n)
            .filter_map(|s| s.final_rmse)
            .filter(|v| v.is_finite())
            .collect();
        unusable.push((kind, result.cell(kind, n).count() - values.len()));
        stats.push((kind, BoxStats::new(&values)));
    }

    let groups: Vec<BoxGroup> = stats
        .iter()
        .enumerate()
        .filter_map(|(k, (kind, s))| {
            s.clone().map(|stats| BoxGroup {
                name: kind.name().into(),
                stats,
                color: color(k),
            })
        })
        .collect();
    let spread = groups.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), g| {
        (lo.min(g.stats.min), hi.max(g.stats.max))
    });
    let notes = groups
        .iter()
        .map(|g| {
            format!(
                "{}: median {:.4} m, {} outliers",
                g.name,
                g.stats.median,
                g.stats.outliers.len()
            )
        })
        .collect();
    let svg = config.out.join(SVG_NAME);
    let plot = BoxPlot {
        title: format!("Final landmark RMSE, {n} landmarks, {} trials", config.trials),
        y_label: "body-frame RMSE (m)".into(),
        log_y: spread.0 > 0.0 && spread.1 / spread.0 > 100.0,
        groups,
        notes,
    };
    write_file(&svg, plot.render().as_bytes())?;

    Ok(CompareOutput {
        result,
        stats,
        unusable,
        files: vec![csv, svg],
    })
}

impl fmt::Display for CompareOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "compare: {} trials", self.result.trials)?;
        for (kind, stats) in &self.stats {
            match stats {
                Some(s) => writeln!(
                    f,
                    "  {:<8} median {:.4e}  q1 {:.4e}  q3 {:.4e}  mean {:.4e}  outliers {}",
                    kind.name(),
                    s.median,
                    s.q1,
                    s.q3,
                    s.mean,
                    s.outliers.len()
                )?,
                None => writeln!(f, "  {:<8} no finite final RMSE", kind.name())?,
            }
        }
        for (kind, count) in self.unusable.iter().filter(|(_, c)| *c > 0) {
            writeln!(f, "  {} trial(s) of {} without a finite final RMSE", count, kind.name())?;
        }
        for file in &self.files {
            writeln!(f, "  wrote {}", file.display())?;
        }
        Ok(())
    }
}
