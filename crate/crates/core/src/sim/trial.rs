//! Single-trial execution.

use std::time::Instant;

use crate::ekf::Ekf;
use crate::error::Result;
use crate::estimate::{Estimator, EstimatorKind, MapEstimate};
use crate::lie::Pose;
use crate::observer::Observer;
use crate::system::{propagate, MeasurementFrame, Sensor};

use super::metrics::{median, rmse};
use super::scenario::{build_scenario, EstimatorSelection, Scenario, World};

/// Steps excluded from timing statistics while caches and allocations settle.
pub const WARM_UP_STEPS: usize = 5;

/// Everything recorded for one estimator over one trial. Per-frame series have
/// one entry per frame (steps + 1); per-step series have one per step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub times: Vec<f64>,
    /// `[frame][landmark]` bearing storage `l_y`, where defined.
    pub bearing_storage: Vec<Vec<Option<f64>>>,
    /// `[frame][landmark]` inverse-depth storage `l_z`, where defined.
    pub depth_storage: Vec<Vec<Option<f64>>>,
    /// Body-frame landmark RMSE per frame; `None` before any landmark is initialized.
    pub rmse: Vec<Option<f64>>,
    pub true_poses: Vec<Pose>,
    pub pose_estimates: Vec<Pose>,
    pub visible: Vec<usize>,
    /// Wall-clock seconds per step (lifecycle plus integration).
    pub step_seconds: Vec<f64>,
    pub corrections: Vec<f64>,
    pub degenerate_steps: usize,
    pub clamp_events: usize,
    pub final_estimate: MapEstimate,
}

impl TrialRecord {
    fn new(seed: u64, estimator: EstimatorKind, frames: usize) -> Self {
        Self {
            seed,
            estimator,
            times: Vec::with_capacity(frames),
            bearing_storage: Vec::with_capacity(frames),
            depth_storage: Vec::with_capacity(frames),
            rmse: Vec::with_capacity(frames),
            true_poses: Vec::with_capacity(frames),
            pose_estimates: Vec::with_capacity(frames),
            visible: Vec::with_capacity(frames),
            step_seconds: Vec::with_capacity(frames),
            corrections: Vec::with_capacity(frames),
            degenerate_steps: 0,
            clamp_events: 0,
            final_estimate: MapEstimate {
                pose: Pose::identity(),
                landmarks: Vec::new(),
            },
        }
    }

    pub fn frames(&self) -> usize {
        self.times.len()
    }

    pub fn final_rmse(&self) -> Option<f64> {
        self.rmse.last().copied().flatten()
    }

    /// Time average of the RMSE over frames where it is defined.
    pub fn mean_rmse(&self) -> Option<f64> {
        let defined: Vec<f64> = self.rmse.iter().flatten().copied().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }

    /// Steps used for timing statistics: all but the warm-up, unless that leaves none.
    fn timed_steps(&self) -> &[f64] {
        if self.step_seconds.len() > WARM_UP_STEPS {
            &self.step_seconds[WARM_UP_STEPS..]
        } else {
            &self.step_seconds
        }
    }

    pub fn median_step_seconds(&self) -> Option<f64> {
        median(self.timed_steps())
    }

    pub fn mean_step_seconds(&self) -> Option<f64> {
        let t = self.timed_steps();
        (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64)
    }

    /// Total `Σ l_y + Σ l_z` at a frame, over landmarks where both are defined.
    pub fn total_storage(&self, frame: usize) -> Option<f64> {
        let pairs = self.bearing_storage[frame].iter().zip(&self.depth_storage[frame]);
        let mut total = None;
        for (ly, lz) in pairs {
            if let (Some(ly), Some(lz)) = (ly, lz) {
                *total.get_or_insert(0.0) += ly + lz;
            }
        }
        total
    }

    /// Time series of one landmark's storage, `None` where undefined.
    pub fn landmark_series(&self, index: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        (
            self.bearing_storage.iter().map(|f| f[index]).collect(),
            self.depth_storage.iter().map(|f| f[index]).collect(),
        )
    }
}

/// Observer configured by the scenario for the given world.
pub fn build_observer(scenario: &Scenario, world: &World) -> Result<Observer> {
    let observer = match &world.reference {
        Some(reference) => Observer::with_reference(reference, scenario.gains)?,
        None => Observer::new(world.truth.pose, world.truth.len(), scenario.gains)?,
    };
    Ok(observer.with_integrator(scenario.integrator).with_lift(scenario.lift))
}

pub fn build_ekf(scenario: &Scenario, world: &World) -> Ekf {
    Ekf::new(world.truth.pose, world.truth.len(), scenario.ekf)
}

/// Runs the estimators selected by the scenario on one shared measurement
/// stream. Records come back observer first.
pub fn run_trial(scenario: &Scenario) -> Result<Vec<TrialRecord>> {
    let world = build_scenario(scenario)?;
    let mut estimators: Vec<Box<dyn Estimator>> = Vec::new();
    if matches!(
        scenario.estimators,
        EstimatorSelection::Observer | EstimatorSelection::Both
    ) {
        estimators.push(Box::new(build_observer(scenario, &world)?));
    }
    if matches!(scenario.estimators, EstimatorSelection::Ekf | EstimatorSelection::Both) {
        estimators.push(Box::new(build_ekf(scenario, &world)));
    }
    let mut refs: Vec<&mut dyn Estimator> = estimators
        .iter_mut()
        .map(|e| e.as_mut() as &mut dyn Estimator)
        .collect();
    simulate(scenario, &world, &mut refs)
}

/// Drives arbitrary estimators through the scenario from `world`. Each frame
/// is sensed once and handed to every estimator.
pub fn simulate(scenario: &Scenario, world: &World, estimators: &mut [&mut dyn Estimator]) -> Result<Vec<TrialRecord>> {
    let steps = scenario.steps()?;
    let dt = scenario.dt;
    let mut sensor = Sensor::new(scenario.system.clone())?;
    let mut truth = world.truth.clone();
    let mut records: Vec<TrialRecord> = estimators
        .iter()
        .map(|e| TrialRecord::new(scenario.seed(), e.kind(), steps + 1))
        .collect();
    let mut previous: Option<MeasurementFrame> = None;

    for k in 0..=steps {
        let time = k as f64 * dt;
        let frame = sensor.sense(&truth, &scenario.twist, time, previous.as_ref())?;
        for (estimator, record) in estimators.iter_mut().zip(records.iter_mut()) {
            let start = Instant::now();
            estimator.sync_landmarks(&frame)?;
            let mut elapsed = start.elapsed();

            let map = estimator.map_estimate();
            let storage = estimator.storage(&frame);
            record.times.push(time);
            record
                .bearing_storage
                .push(storage.iter().map(|s| s.map(|s| s.0)).collect());
            record
                .depth_storage
                .push(storage.iter().map(|s| s.map(|s| s.1)).collect());
            record.rmse.push(rmse(&map, &truth));
            record.true_poses.push(truth.pose);
            record.pose_estimates.push(map.pose);
            record.visible.push(frame.visible_count());

            if k < steps {
                let start = Instant::now();
                let report = estimator.step(&frame, dt)?;
                elapsed += start.elapsed();
                record.step_seconds.push(elapsed.as_secs_f64());
                record.corrections.push(report.correction_norm);
                record.degenerate_steps += usize::from(report.degenerate);
            } else {
                record.final_estimate = map;
            }
        }
        if k < steps {
            truth = propagate(&truth, &scenario.twist, dt)?;
        }
        previous = Some(frame);
    }
    for record in &mut records {
        record.clamp_events = sensor.clamp_events();
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_duration_has_one_frame() {
        let mut s = Scenario::convergence();
        s.duration = 0.0;
        let records = run_trial(&s).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].frames(), 1);
        assert!(records[0].step_seconds.is_empty());
    }

    #[test]
    fn series_lengths() {
        let mut s = Scenario::comparison(20);
        s.duration = 5.0;
        let records = run_trial(&s).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].estimator, EstimatorKind::Observer);
        assert_eq!(records[1].estimator, EstimatorKind::Ekf);
        for r in &records {
            assert_eq!(r.frames(), 11);
            assert_eq!(r.step_seconds.len(), 10);
            assert_eq!(r.bearing_storage.len(), 11);
        }
        assert_eq!(records[0].visible, records[1].visible);
        assert_eq!(records[0].true_poses, records[1].true_poses);
        assert!(records[1].bearing_storage.iter().flatten().all(Option::is_none));
    }
}
