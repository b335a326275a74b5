//! Monte-Carlo sweeps over seeds and landmark counts.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::EstimatorKind;

use super::metrics::BoxStats;
use super::scenario::Scenario;
use super::trial::{run_trial, TrialRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Run trials on a work pool. Disable for clean timings.
    pub parallel: bool,
    /// Cap on worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

/// Per-trial numbers kept from a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSummary {
    pub landmarks: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub final_rmse: Option<f64>,
    pub mean_rmse: Option<f64>,
    pub median_step_seconds: Option<f64>,
    pub mean_step_seconds: Option<f64>,
    pub degenerate_steps: usize,
    pub clamp_events: usize,
}

impl From<&TrialRecord> for TrialSummary {
    fn from(r: &TrialRecord) -> Self {
        Self {
            landmarks: r.final_estimate.landmarks.len(),
            seed: r.seed,
            estimator: r.estimator,
            final_rmse: r.final_rmse(),
            mean_rmse: r.mean_rmse(),
            median_step_seconds: r.median_step_seconds(),
            mean_step_seconds: r.mean_step_seconds(),
            degenerate_steps: r.degenerate_steps,
            clamp_events: r.clamp_events,
        }
    }
}

/// Statistics for one `(estimator, landmark count)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub landmarks: usize,
    pub estimator: EstimatorKind,
    pub final_rmse: Option<BoxStats>,
    pub median_step_seconds: Option<BoxStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub counts: Vec<usize>,
    pub trials: usize,
    /// Ordered by landmark count, then seed, then estimator.
    pub summaries: Vec<TrialSummary>,
}

impl SweepResult {
    pub fn cell(&self, estimator: EstimatorKind, landmarks: usize) -> impl Iterator<Item = &TrialSummary> {
        self.summaries
            .iter()
            .filter(move |s| s.estimator == estimator && s.landmarks == landmarks)
    }

    pub fn estimators(&self) -> Vec<EstimatorKind> {
        let mut kinds: Vec<_> = self.summaries.iter().map(|s| s.estimator).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for &n in &self.counts {
            for kind in self.estimators() {
                let rmse: Vec<f64> = self.cell(kind, n).filter_map(|s| s.final_rmse).collect();
                let time: Vec<f64> = self.cell(kind, n).filter_map(|s| s.median_step_seconds).collect();
                out.push(Aggregate {
                    landmarks: n,
                    estimator: kind,
                    final_rmse: BoxStats::new(&rmse),
                    median_step_seconds: BoxStats::new(&time),
                });
            }
        }
        out
    }

    /// `(n, median over trials of the per-trial median step time)` for one estimator.
    pub fn timing_curve(&self, estimator: EstimatorKind) -> Vec<(f64, f64)> {
        self.aggregates()
            .into_iter()
            .filter(|a| a.estimator == estimator)
            .filter_map(|a| a.median_step_seconds.map(|b| (a.landmarks as f64, b.median)))
            .collect()
    }
}

/// Runs `trials` seeded trials (seeds `base.seed() + k`) for every landmark count.
pub fn run_sweep(base: &Scenario, counts: &[usize], trials: usize, options: SweepOptions) -> Result<SweepResult> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::InvalidParameter(
            "landmark counts must be non-empty and at least 1".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("a sweep needs at least one trial".into()));
    }
    let jobs: Vec<Scenario> = counts
        .iter()
        .flat_map(|&n| {
            (0..trials as u64).map(move |k| {
                let mut s = base.clone().with_seed(base.seed().wrapping_add(k));
                s.system.landmark_count = n;
                s
            })
        })
        .collect();
    for job in &jobs {
        job.validate()?;
    }

    let run = |s: &Scenario| run_trial(s).map(|records| records.iter().map(TrialSummary::from).collect::<Vec<_>>());
    let results: Vec<Result<Vec<TrialSummary>>> = if options.parallel {
        match options.jobs {
            Some(threads) => rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("cannot start {threads} workers: {e}")))?
                .install(|| jobs.par_iter().map(run).collect()),
            None => jobs.par_iter().map(run).collect(),
        }
    } else {
        jobs.iter().map(run).collect()
    };

    let mut summaries = Vec::with_capacity(jobs.len() * 2);
    for r in results {
        summaries.extend(r?);
    }
    Ok(SweepResult {
        counts: counts.to_vec(),
        trials,
        summaries,
    })
}
