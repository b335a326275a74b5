//! Extended Kalman filter on the raw pose-and-map state.
//!
//! The pose error is a body-frame perturbation `P = P̂ · exp(ξ)` with
//! `ξ = (δθ, δx)`; landmark errors are additive in the reference frame. The
//! state vector is `[ξ, p_a, p_b, …]` with landmarks appended in the order
//! they are first seen. Each landmark contributes a bearing residual in the
//! two-dimensional tangent plane at the predicted bearing and a scalar
//! inverse-depth residual. Covariance algebra is dense.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x6, Matrix6, Vector3};

use crate::error::{Error, Result};
use crate::estimate::{Estimator, EstimatorKind, LandmarkStatus, MapEstimate, StepReport};
use crate::group::{body_coordinates, LandmarkOutput, TotalState};
use crate::lie::{skew, Pose, Twist};
use crate::system::{sphere_log, tangent_basis, MeasurementFrame, NoiseVariances};

const POSE_DIM: usize = 6;

/// Variances of the velocity noise driving the prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessNoise {
    pub angular: f64,
    pub linear: f64,
}

/// Per-landmark measurement variances: each tangent axis of the bearing, and the inverse depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementNoise {
    pub bearing: f64,
    pub inverse_depth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkfConfig {
    pub process: ProcessNoise,
    pub measurement: MeasurementNoise,
    /// Initial variance of each pose coordinate.
    pub initial_pose_variance: f64,
    /// Lower bound on the eigenvalues of a new landmark's covariance block.
    pub landmark_variance_floor: f64,
}

impl EkfConfig {
    /// Tuning matched to the sensor's noise model.
    pub fn from_variances(noise: &NoiseVariances) -> Self {
        Self {
            process: ProcessNoise {
                angular: noise.angular_velocity,
                linear: noise.linear_velocity,
            },
            measurement: MeasurementNoise {
                bearing: noise.bearing,
                inverse_depth: noise.inverse_depth,
            },
            initial_pose_variance: 0.0,
            landmark_variance_floor: 1e-4,
        }
    }
}

/// Body-frame error propagation `ξ⁺ = F ξ` over one prediction step.
pub fn process_jacobian(twist: &Twist, dt: f64) -> Matrix6<f64> {
    Pose::exp(twist, dt).inverse().adjoint()
}

/// Linearization of one landmark's measurement about the current estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearizedMeasurement {
    pub predicted: LandmarkOutput,
    /// Tangent basis at the predicted bearing; bearing residuals are expressed in it.
    pub basis: (Vector3<f64>, Vector3<f64>),
    /// Rows: two bearing coordinates, then inverse depth. Columns: `ξ`.
    pub pose_jacobian: Matrix3x6<f64>,
    /// Rows as above. Columns: landmark position.
    pub landmark_jacobian: Matrix3<f64>,
}

impl LinearizedMeasurement {
    /// Residual of a measured output in the coordinates of the Jacobians.
    pub fn residual(&self, measured: &LandmarkOutput) -> Vector3<f64> {
        let log = sphere_log(self.predicted.bearing(), measured.bearing());
        Vector3::new(
            self.basis.0.dot(&log),
            self.basis.1.dot(&log),
            measured.inverse_depth() - self.predicted.inverse_depth(),
        )
    }
}

/// Linearizes `h_i` at pose `pose` and landmark `landmark`.
pub fn linearize_measurement(index: usize, pose: &Pose, landmark: &Vector3<f64>) -> Result<LinearizedMeasurement> {
    let r = body_coordinates(pose, landmark);
    let predicted = LandmarkOutput::from_body_point(index, &r)?;
    let y = predicted.bearing();
    let z = predicted.inverse_depth();
    let (e1, e2) = tangent_basis(y);

    // Body-frame point derivatives.
    let mut dr_dxi = Matrix3x6::zeros();
    dr_dxi.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&r));
    dr_dxi.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
    let dr_dp = pose.rotation.transpose();

    let mut rows = Matrix3::zeros();
    rows.row_mut(0).copy_from(&(e1.transpose() * z));
    rows.row_mut(1).copy_from(&(e2.transpose() * z));
    rows.row_mut(2).copy_from(&(y.transpose() * (-z * z)));

    Ok(LinearizedMeasurement {
        predicted,
        basis: (e1, e2),
        pose_jacobian: rows * dr_dxi,
        landmark_jacobian: rows * dr_dp,
    })
}

/// New landmark position from a measurement, with its Jacobians with respect
/// to `ξ` and to the measurement coordinates `(b₁, b₂, z)` (tangent bearing
/// offsets along [`tangent_basis`] of the measured bearing, then inverse depth).
pub fn landmark_insertion(pose: &Pose, measured: &LandmarkOutput) -> (Vector3<f64>, Matrix3x6<f64>, Matrix3<f64>) {
    let r = measured.body_point();
    let rot = pose.rotation.matrix();
    let position = pose.transform_point(&r);

    let mut pose_jacobian = Matrix3x6::zeros();
    pose_jacobian.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rot * skew(&r)));
    pose_jacobian.fixed_view_mut::<3, 3>(0, 3).copy_from(rot);

    let z = measured.inverse_depth();
    let (e1, e2) = tangent_basis(measured.bearing());
    let mut meas_jacobian = Matrix3::zeros();
    meas_jacobian.set_column(0, &(rot * e1 / z));
    meas_jacobian.set_column(1, &(rot * e2 / z));
    meas_jacobian.set_column(2, &(-rot * measured.bearing() / (z * z)));
    (position, pose_jacobian, meas_jacobian)
}

/// Outcome of an EKF measurement update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateReport {
    pub measurements: usize,
    /// The innovation covariance could not be factored; the update was skipped.
    pub skipped: bool,
    pub correction_norm: f64,
}

#[derive(Clone, Debug)]
pub struct Ekf {
    pose: Pose,
    landmarks: Vec<Option<Vector3<f64>>>,
    slots: Vec<Option<usize>>,
    status: Vec<LandmarkStatus>,
    covariance: DMatrix<f64>,
    config: EkfConfig,
}

impl Ekf {
    /// Filter with pose mean `pose` and `n` uninitialized landmarks.
    pub fn new(pose: Pose, n: usize, config: EkfConfig) -> Self {
        Self {
            pose,
            landmarks: vec![None; n],
            slots: vec![None; n],
            status: vec![LandmarkStatus::Uninitialized; n],
            covariance: DMatrix::identity(POSE_DIM, POSE_DIM) * config.initial_pose_variance,
            config,
        }
    }

    /// Filter with every landmark of `mean` initialized, using the given covariance.
    pub fn with_state(mean: &TotalState, covariance: DMatrix<f64>, config: EkfConfig) -> Result<Self> {
        let dim = POSE_DIM + 3 * mean.len();
        if covariance.shape() != (dim, dim) {
            return Err(Error::InvalidParameter(format!(
                "covariance must be {dim}×{dim}, got {:?}",
                covariance.shape()
            )));
        }
        Ok(Self {
            pose: mean.pose,
            landmarks: mean.landmarks.iter().copied().map(Some).collect(),
            slots: (0..mean.len()).map(|i| Some(POSE_DIM + 3 * i)).collect(),
            status: vec![LandmarkStatus::Active; mean.len()],
            covariance,
            config,
        })
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn landmark(&self, index: usize) -> Option<Vector3<f64>> {
        self.landmarks[index]
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn config(&self) -> &EkfConfig {
        &self.config
    }

    /// Dimension of the filter state (pose plus initialized landmarks).
    pub fn dimension(&self) -> usize {
        self.covariance.nrows()
    }

    /// Row offset of landmark `index` in the state vector.
    pub fn slot(&self, index: usize) -> Option<usize> {
        self.slots[index]
    }

    /// Mean propagation `P̂ ← P̂ exp(dt · U)` with first-order covariance transport.
    pub fn predict(&mut self, twist: &Twist, dt: f64, noise: &ProcessNoise) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let f = process_jacobian(twist, dt);
        self.pose = self.pose * Pose::exp(twist, dt);

        let n = self.dimension();
        let rows = f * self.covariance.rows(0, POSE_DIM);
        self.covariance.rows_mut(0, POSE_DIM).copy_from(&rows);
        let cols = self.covariance.columns(0, POSE_DIM) * f.transpose();
        self.covariance.columns_mut(0, POSE_DIM).copy_from(&cols);

        // The velocity sample is held over the step, so its effect on ξ scales with dt².
        let dt2 = dt * dt;
        for k in 0..3 {
            self.covariance[(k, k)] += noise.angular * dt2;
            self.covariance[(k + 3, k + 3)] += noise.linear * dt2;
        }
        debug_assert_eq!(self.covariance.nrows(), n);
        Ok(())
    }

    /// Joseph-form update with every active landmark visible in `frame`.
    pub fn update(&mut self, frame: &MeasurementFrame, noise: &MeasurementNoise) -> Result<UpdateReport> {
        self.check_frame(frame)?;
        let mut models = Vec::new();
        let mut residual = Vec::new();
        for (i, m) in frame.landmarks.iter().enumerate() {
            let (LandmarkStatus::Active, Some(m)) = (self.status[i], m) else {
                continue;
            };
            let p = self.landmarks[i].expect("active landmark has a mean");
            let slot = self.slots[i].expect("active landmark has a slot");
            let lin = linearize_measurement(i, &self.pose, &p)?;
            residual.extend_from_slice(lin.residual(&m.output).as_slice());
            models.push((slot, lin));
        }
        if models.is_empty() {
            return Ok(UpdateReport::default());
        }

        let n = self.dimension();
        let dim_z = 3 * models.len();
        let p = &self.covariance;

        // C = P Hᵀ, assembled from the two nonzero column blocks of each row block of H.
        let mut c = DMatrix::<f64>::zeros(n, dim_z);
        let pose_cols = p.columns(0, POSE_DIM);
        for (j, (slot, lin)) in models.iter().enumerate() {
            let block =
                pose_cols * lin.pose_jacobian.transpose() + p.columns(*slot, 3) * lin.landmark_jacobian.transpose();
            c.columns_mut(3 * j, 3).copy_from(&block);
        }

        // S = H C + R.
        let mut s = DMatrix::<f64>::zeros(dim_z, dim_z);
        for (j, (slot, lin)) in models.iter().enumerate() {
            let block = lin.pose_jacobian * c.rows(0, POSE_DIM) + lin.landmark_jacobian * c.rows(*slot, 3);
            s.rows_mut(3 * j, 3).copy_from(&block);
        }
        for j in 0..models.len() {
            s[(3 * j, 3 * j)] += noise.bearing;
            s[(3 * j + 1, 3 * j + 1)] += noise.bearing;
            s[(3 * j + 2, 3 * j + 2)] += noise.inverse_depth;
        }
        let s = (&s + s.transpose()) * 0.5;

        let Some(chol) = s.clone().cholesky() else {
            return Ok(UpdateReport {
                measurements: models.len(),
                skipped: true,
                correction_norm: 0.0,
            });
        };
        let gain = chol.solve(&c.transpose()).transpose();
        let delta = &gain * DVector::from_vec(residual);

        // Joseph form, P + K Mᵀ + M Kᵀ with M = K S / 2 − C.
        let m = &gain * &s * 0.5 - &c;
        let mut updated = &self.covariance + &gain * m.transpose() + &m * gain.transpose();
        updated = (&updated + updated.transpose()) * 0.5;
        self.covariance = updated;

        let xi = Twist::from_vector(&delta.fixed_rows::<6>(0).into_owned());
        self.pose = self.pose * Pose::exp(&xi, 1.0);
        for (i, slot) in self.slots.iter().enumerate() {
            if let (Some(slot), Some(p)) = (slot, self.landmarks[i].as_mut()) {
                *p += delta.fixed_rows::<3>(*slot);
            }
        }

        Ok(UpdateReport {
            measurements: models.len(),
            skipped: false,
            correction_norm: delta.norm(),
        })
    }

    fn check_frame(&self, frame: &MeasurementFrame) -> Result<()> {
        if frame.len() != self.status.len() {
            return Err(Error::LandmarkCountMismatch {
                expected: self.status.len(),
                found: frame.len(),
            });
        }
        Ok(())
    }
}

fn floor_eigenvalues(m: &Matrix3<f64>, floor: f64) -> Matrix3<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = sym.symmetric_eigen();
    eig.eigenvalues.apply(|l| *l = l.max(floor));
    let m = eig.recompose();
    // Exactly symmetric, so later symmetrizations leave the block bit-identical.
    (m + m.transpose()) * 0.5
}

impl Estimator for Ekf {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Ekf
    }

    fn landmark_count(&self) -> usize {
        self.status.len()
    }

    fn status(&self, index: usize) -> LandmarkStatus {
        self.status[index]
    }

    /// Appends the landmark to the state with covariance from the linearized
    /// inverse measurement map.
    fn initialize_landmark(&mut self, index: usize, frame: &MeasurementFrame) -> Result<()> {
        self.check_frame(frame)?;
        if self.status[index] != LandmarkStatus::Uninitialized {
            return Err(Error::Lifecycle {
                index,
                reason: "landmark is already initialized",
            });
        }
        let m = frame.landmarks[index].ok_or(Error::Lifecycle {
            index,
            reason: "cannot initialize a landmark that is not visible",
        })?;
        let (position, g_pose, g_meas) = landmark_insertion(&self.pose, &m.output);
        let noise = &self.config.measurement;
        let r = Matrix3::from_diagonal(&Vector3::new(noise.bearing, noise.bearing, noise.inverse_depth));

        let n = self.dimension();
        let cross = g_pose * self.covariance.rows(0, POSE_DIM);
        let p_pose = self.covariance.view((0, 0), (POSE_DIM, POSE_DIM)).into_owned();
        let p_pose = Matrix6::from_iterator(p_pose.iter().copied());
        let block = g_pose * p_pose * g_pose.transpose() + g_meas * r * g_meas.transpose();
        let block = floor_eigenvalues(&block, self.config.landmark_variance_floor);

        let covariance = std::mem::replace(&mut self.covariance, DMatrix::zeros(0, 0));
        let mut grown = covariance.resize(n + 3, n + 3, 0.0);
        grown.view_mut((n, 0), (3, n)).copy_from(&cross);
        grown.view_mut((0, n), (n, 3)).copy_from(&cross.transpose());
        grown.view_mut((n, n), (3, 3)).copy_from(&block);
        self.covariance = grown;

        self.landmarks[index] = Some(position);
        self.slots[index] = Some(n);
        self.status[index] = LandmarkStatus::Active;
        Ok(())
    }

    /// Decorrelates the landmark from the rest of the state. Its mean and
    /// covariance block are then left untouched by predictions and updates.
    fn freeze(&mut self, index: usize) -> Result<()> {
        if self.status[index] != LandmarkStatus::Active {
            return Err(Error::Lifecycle {
                index,
                reason: "only active landmarks can be frozen",
            });
        }
        let slot = self.slots[index].expect("active landmark has a slot");
        let n = self.dimension();
        for k in (0..n).filter(|k| !(slot..slot + 3).contains(k)) {
            for d in slot..slot + 3 {
                self.covariance[(k, d)] = 0.0;
                self.covariance[(d, k)] = 0.0;
            }
        }
        self.status[index] = LandmarkStatus::Frozen;
        Ok(())
    }

    fn unfreeze(&mut self, index: usize) -> Result<()> {
        if self.status[index] != LandmarkStatus::Frozen {
            return Err(Error::Lifecycle {
                index,
                reason: "landmark is not frozen",
            });
        }
        self.status[index] = LandmarkStatus::Active;
        Ok(())
    }

    /// Update with `frame`, then predict across `dt` with its velocity.
    fn step(&mut self, frame: &MeasurementFrame, dt: f64) -> Result<StepReport> {
        let config = self.config;
        let report = self.update(frame, &config.measurement)?;
        self.predict(&frame.velocity, dt, &config.process)?;
        Ok(StepReport {
            degenerate: report.skipped,
            correction_norm: report.correction_norm,
        })
    }

    fn map_estimate(&self) -> MapEstimate {
        MapEstimate {
            pose: self.pose,
            landmarks: self.landmarks.clone(),
        }
    }
}
