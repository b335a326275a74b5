//! Interface shared by the observer and the EKF so the harness can drive both
//! from the same measurement stream.

use std::fmt;

use nalgebra::Vector3;

use crate::error::Result;
use crate::group::body_coordinates;
use crate::lie::Pose;
use crate::system::MeasurementFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EstimatorKind {
    Observer,
    Ekf,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Observer => "observer",
            EstimatorKind::Ekf => "ekf",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lifecycle of a landmark inside an estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LandmarkStatus {
    /// Never seen; carries no estimate.
    Uninitialized,
    /// Seen in the current frame and corrected by it.
    Active,
    /// Out of view; its inertial estimate is held fixed.
    Frozen,
}

/// Pose estimate plus inertial landmark estimates (`None` until initialized).
#[derive(Clone, Debug, PartialEq)]
pub struct MapEstimate {
    pub pose: Pose,
    pub landmarks: Vec<Option<Vector3<f64>>>,
}

impl MapEstimate {
    /// Landmark `index` expressed in the estimated body frame.
    pub fn body_landmark(&self, index: usize) -> Option<Vector3<f64>> {
        self.landmarks[index].map(|p| body_coordinates(&self.pose, &p))
    }
}

/// What happened during one estimator step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// The pose correction could not be computed (ill-conditioned geometry or a
    /// failed innovation-covariance solve) and was skipped.
    pub degenerate: bool,
    /// Norm of the correction applied, in whatever coordinates the estimator uses.
    pub correction_norm: f64,
}

pub trait Estimator {
    fn kind(&self) -> EstimatorKind;

    fn landmark_count(&self) -> usize;

    fn status(&self, index: usize) -> LandmarkStatus;

    fn initialize_landmark(&mut self, index: usize, frame: &MeasurementFrame) -> Result<()>;

    fn freeze(&mut self, index: usize) -> Result<()>;

    fn unfreeze(&mut self, index: usize) -> Result<()>;

    /// Integrates from `frame.time` to `frame.time + dt` using `frame`.
    fn step(&mut self, frame: &MeasurementFrame, dt: f64) -> Result<StepReport>;

    fn map_estimate(&self) -> MapEstimate;

    /// Per-landmark Lyapunov storage `(l_y, l_z)` against `frame`, for
    /// estimators that define one. `None` for landmarks without a value.
    fn storage(&self, frame: &MeasurementFrame) -> Vec<Option<(f64, f64)>> {
        vec![None; frame.len()]
    }

    /// Applies the landmark lifecycle for `frame`: new landmarks are
    /// initialized, landmarks leaving view are frozen, returning ones resume.
    fn sync_landmarks(&mut self, frame: &MeasurementFrame) -> Result<()> {
        for index in 0..self.landmark_count() {
            match (self.status(index), frame.is_visible(index)) {
                (LandmarkStatus::Uninitialized, true) => self.initialize_landmark(index, frame)?,
                (LandmarkStatus::Active, false) => self.freeze(index)?,
                (LandmarkStatus::Frozen, true) => self.unfreeze(index)?,
                _ => {}
            }
        }
        Ok(())
    }
}
