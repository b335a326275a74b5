//! One seeded trial with its full time series.

use std::fmt;
use std::path::PathBuf;

use vslam_core::sim::{build_scenario, run_trial, TrialRecord};

use crate::config::RunConfig;
use crate::error::Result;
use crate::output::{number, write_csv};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const LANDMARKS_CSV: &str = "landmarks.csv";

pub const TRAJECTORY_HEADER: [&str; 15] = [
    "estimator",
    "t",
    "visible",
    "rmse",
    "position_error",
    "rotation_error",
    "correction_norm",
    "bearing_storage",
    "depth_storage",
    "x",
    "y",
    "z",
    "true_x",
    "true_y",
    "true_z",
];

pub const LANDMARKS_HEADER: [&str; 9] = [
    "estimator",
    "landmark",
    "body_x",
    "body_y",
    "body_z",
    "true_body_x",
    "true_body_y",
    "true_body_z",
    "error",
];

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub records: Vec<TrialRecord>,
    /// `[estimator][landmark]` final body-frame error; `None` if never initialized.
    pub landmark_errors: Vec<Vec<Option<f64>>>,
    pub files: Vec<PathBuf>,
}

fn sum_defined(values: &[Option<f64>]) -> Option<f64> {
    values.iter().flatten().copied().reduce(|a, b| a + b)
}

pub fn run(config: &RunConfig) -> Result<SimOutput> {
    config.prepare_output()?;
    let scenario = &config.scenario;
    let records = run_trial(scenario)?;
    let truth = build_scenario(scenario)?.truth;

    let mut trajectory = Vec::new();
    for r in &records {
        for k in 0..r.frames() {
            let (estimate, actual) = (&r.pose_estimates[k], &r.true_poses[k]);
            let rotation_error = (estimate.rotation.inverse() * actual.rotation).log().norm();
            let correction = r.corrections.get(k).copied();
            trajectory.push(vec![
                r.estimator.name().to_string(),
                r.times[k].to_string(),
                r.visible[k].to_string(),
                number(r.rmse[k]),
                (estimate.translation - actual.translation).norm().to_string(),
                rotation_error.to_string(),
                number(correction),
                number(sum_defined(&r.bearing_storage[k])),
                number(sum_defined(&r.depth_storage[k])),
                estimate.translation.x.to_string(),
                estimate.translation.y.to_string(),
                estimate.translation.z.to_string(),
                actual.translation.x.to_string(),
                actual.translation.y.to_string(),
                actual.translation.z.to_string(),
            ]);
        }
    }
    let trajectory_path = config.out.join(TRAJECTORY_CSV);
    write_csv(&trajectory_path, &TRAJECTORY_HEADER, trajectory)?;

    let mut landmark_rows = Vec::new();
    let mut landmark_errors = Vec::new();
    for r in &records {
        let true_pose = r.true_poses.last().copied().unwrap_or(truth.pose);
        let mut errors = Vec::new();
        for (i, p) in truth.landmarks.iter().enumerate() {
            let actual = true_pose.inverse().transform_point(p);
            let estimate = r.final_estimate.body_landmark(i);
            let error = estimate.map(|e| (e - actual).norm());
            errors.push(error);
            landmark_rows.push(vec![
                r.estimator.name().to_string(),
                (i + 1).to_string(),
                number(estimate.map(|e| e.x)),
                number(estimate.map(|e| e.y)),
                number(estimate.map(|e| e.z)),
                actual.x.to_string(),
                actual.y.to_string(),
                actual.z.to_string(),
                number(error),
            ]);
        }
        landmark_errors.push(errors);
    }
    let landmarks_path = config.out.join(LANDMARKS_CSV);
    write_csv(&landmarks_path, &LANDMARKS_HEADER, landmark_rows)?;

    Ok(SimOutput {
        records,
        landmark_errors,
        files: vec![trajectory_path, landmarks_path],
    })
}

impl fmt::Display for SimOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, errors) in self.records.iter().zip(&self.landmark_errors) {
            let worst = errors.iter().flatten().copied().fold(0.0, f64::max);
            let initialized = errors.iter().flatten().count();
            writeln!(
                f,
                "sim {} (seed {}): final RMSE {}, mean RMSE {}, worst landmark error {:.3e} over {} initialized, {} degenerate steps, {} depth clamps, median step {:.3} ms",
                r.estimator.name(),
                r.seed,
                r.final_rmse().map_or("n/a".into(), |v| format!("{v:.4e}")),
                r.mean_rmse().map_or("n/a".into(), |v| format!("{v:.4e}")),
                worst,
                initialized,
                r.degenerate_steps,
                r.clamp_events,
                r.median_step_seconds().unwrap_or(0.0) * 1e3
            )?;
        }
        for file in &self.files {
            writeln!(f, "  wrote {}", file.display())?;
        }
        Ok(())
    }
}
