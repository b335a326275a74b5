//! Equivariant observer on the visual SLAM group.
//!
//! The observer state is a group element `X̂` together with a fixed origin
//! configuration `Ξ̊`. The configuration estimate is `Υ(X̂, Ξ̊)` and the
//! predicted outputs are `ρ(X̂, h(Ξ̊))`. Each step integrates
//!
//! ```text
//! d/dt X̂ = X̂ λ(y, z, U, φ) − Δ X̂
//! ```
//!
//! where `λ` is the lift of the measured velocities and `Δ` is the innovation.
//! The bearing and inverse-depth output errors evolve autonomously under the
//! landmark innovations; the pose innovation only fixes the gauge-free drift of
//! the odometry and never enters the output error.

use nalgebra::{Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::estimate::{Estimator, EstimatorKind, LandmarkStatus, MapEstimate, StepReport};
use crate::group::{
    body_coordinates, GroupElement, LandmarkOutput, LandmarkTransform, LandmarkVelocity, Output, TotalState,
};
use crate::lie::{projector_unchecked, skew, Pose, PositiveScalar, Rotation, Twist};
use crate::system::{MeasurementFrame, MIN_INVERSE_DEPTH};

/// Condition-number limit for the pose-innovation normal equations.
pub const MAX_CONDITION: f64 = 1e8;

/// Constant observer gains shared by all landmarks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains {
    /// `k_Q`, bearing correction.
    pub bearing: f64,
    /// `k_a`, inverse-depth correction.
    pub inverse_depth: f64,
    /// `k_A`, pose correction.
    pub pose: f64,
}

impl Gains {
    pub fn new(bearing: f64, inverse_depth: f64, pose: f64) -> Result<Self> {
        let gains = Self {
            bearing,
            inverse_depth,
            pose,
        };
        gains.validate()?;
        Ok(gains)
    }

    /// Gains of the noise-free convergence experiment.
    pub fn convergence() -> Self {
        Self {
            bearing: 0.05,
            inverse_depth: 0.02,
            pose: 0.03,
        }
    }

    /// Gains of the EKF comparison experiment.
    pub fn comparison() -> Self {
        Self {
            bearing: 0.25,
            inverse_depth: 0.1,
            pose: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [
            ("bearing", self.bearing),
            ("inverse_depth", self.inverse_depth),
            ("pose", self.pose),
        ] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "gain {name} must be positive, got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Discretization of the observer kinematics over one time step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Integrator {
    /// Exponential-map Euler step; the state stays on the group exactly.
    #[default]
    Geometric,
    /// Additive Euler step on the matrix entries followed by re-projection.
    Additive,
    /// Like `Geometric`, but each landmark correction moves its output error
    /// along the exact solution of the error dynamics over the step, with the
    /// measurement held. Agrees with `Geometric` to first order in `dt` and
    /// stays bounded for any gain and step, including measurements near the
    /// inverse-depth floor where `Δ_a` is very large.
    ClosedForm,
}

/// How the measured velocities are turned into a group increment over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LiftMode {
    /// Landmark increments that move each measured output exactly to where the
    /// held velocity `U` carries it by the end of the step. Keeps the output
    /// error dynamics autonomous in discrete time. Ignores the measured flow,
    /// so it suits exact velocities.
    Discrete,
    /// The instantaneous lift `(φ × y, z yᵀ V)` held constant over the step.
    #[default]
    ZeroOrderHold,
}

/// Correction term `Δ = (Δ_A, (Δ_Q, Δ_a)_i)`. Landmarks that are not active
/// and visible carry zero entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Innovation {
    pub pose: Twist,
    pub landmarks: Vec<LandmarkVelocity>,
    /// Set when the pose normal equations were singular or ill-conditioned and
    /// `Δ_A` was zeroed.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Reference {
    position: Vector3<f64>,
    output: LandmarkOutput,
}

/// Solves the 6×6 pose normal equations, or `None` when they are too ill-conditioned.
fn solve_normal_equations(gram: &Matrix6<f64>, rhs: &Vector6<f64>) -> Option<Vector6<f64>> {
    let eigen = gram.symmetric_eigenvalues();
    let (min, max) = eigen.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| {
        (lo.min(l), hi.max(l))
    });
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return None;
    }
    gram.cholesky().map(|c| c.solve(rhs))
}

#[derive(Clone, Debug)]
pub struct Observer {
    estimate: GroupElement,
    origin_pose: Pose,
    reference: Vec<Option<Reference>>,
    status: Vec<LandmarkStatus>,
    frozen: Vec<Option<Vector3<f64>>>,
    gains: Gains,
    integrator: Integrator,
    lift: LiftMode,
}

impl Observer {
    /// Observer with `n` uninitialized landmarks and origin pose `origin_pose`.
    /// With `X̂ = id`, the initial pose estimate equals `origin_pose`.
    pub fn new(origin_pose: Pose, n: usize, gains: Gains) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            estimate: GroupElement::identity(n),
            origin_pose,
            reference: vec![None; n],
            status: vec![LandmarkStatus::Uninitialized; n],
            frozen: vec![None; n],
            gains,
            integrator: Integrator::Geometric,
            lift: LiftMode::ZeroOrderHold,
        })
    }

    /// Observer whose origin configuration contains every landmark, all active.
    pub fn with_reference(origin: &TotalState, gains: Gains) -> Result<Self> {
        let mut observer = Self::new(origin.pose, origin.len(), gains)?;
        for (i, p) in origin.landmarks.iter().enumerate() {
            let output = LandmarkOutput::from_body_point(i, &body_coordinates(&origin.pose, p))?;
            observer.reference[i] = Some(Reference { position: *p, output });
            observer.status[i] = LandmarkStatus::Active;
        }
        Ok(observer)
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_lift(mut self, lift: LiftMode) -> Self {
        self.lift = lift;
        self
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn lift_mode(&self) -> LiftMode {
        self.lift
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    pub fn estimate(&self) -> &GroupElement {
        &self.estimate
    }

    /// Overrides `X̂`; the landmark count must match.
    pub fn set_estimate(&mut self, estimate: GroupElement) -> Result<()> {
        if estimate.len() != self.estimate.len() {
            return Err(Error::LandmarkCountMismatch {
                expected: self.estimate.len(),
                found: estimate.len(),
            });
        }
        self.estimate = estimate;
        Ok(())
    }

    pub fn origin_pose(&self) -> &Pose {
        &self.origin_pose
    }

    /// Origin output `(ẙ, z̊)_i = h_i(Ξ̊)`.
    pub fn origin_output(&self, index: usize) -> Result<LandmarkOutput> {
        self.reference(index).map(|r| r.output)
    }

    pub fn origin_landmark(&self, index: usize) -> Option<Vector3<f64>> {
        self.reference[index].map(|r| r.position)
    }

    fn reference(&self, index: usize) -> Result<&Reference> {
        self.reference[index].as_ref().ok_or(Error::Lifecycle {
            index,
            reason: "landmark is not initialized",
        })
    }

    /// Current pose estimate `P̊ Â`.
    pub fn pose_estimate(&self) -> Pose {
        self.origin_pose * self.estimate.pose
    }

    /// Predicted output `(ŷ, ẑ)_i = ρ_i(X̂, h(Ξ̊))`.
    pub fn estimated_output(&self, index: usize) -> Result<LandmarkOutput> {
        let r = self.reference(index)?;
        Ok(r.output.act(&self.estimate.landmarks[index]))
    }

    pub fn estimated_outputs(&self) -> Result<Output> {
        (0..self.status.len())
            .map(|i| self.estimated_output(i))
            .collect::<Result<Vec<_>>>()
            .map(Output::new)
    }

    /// Output error `(e_y, e_z)_i = ρ_i(X̂⁻¹, (y, z))` for a measured output.
    pub fn output_error(&self, index: usize, measured: &LandmarkOutput) -> Result<LandmarkOutput> {
        self.reference(index)?;
        Ok(measured.act(&self.estimate.landmarks[index].inverse()))
    }

    /// Lyapunov storage `(½|e_y − ẙ|², ½(e_z − z̊)²)` of one landmark.
    pub fn lyapunov_components(&self, index: usize, measured: &LandmarkOutput) -> Result<(f64, f64)> {
        let origin = self.origin_output(index)?;
        let e = self.output_error(index, measured)?;
        Ok((
            0.5 * (e.bearing() - origin.bearing()).norm_squared(),
            0.5 * (e.inverse_depth() - origin.inverse_depth()).powi(2),
        ))
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

    /// Innovation for the active landmarks visible in `frame`.
    pub fn innovation(&self, frame: &MeasurementFrame) -> Result<Innovation> {
        self.check_frame(frame)?;
        let k = &self.gains;
        let mut landmarks = vec![LandmarkVelocity::zero(); self.status.len()];
        let mut gram = Matrix6::<f64>::zeros();
        let mut rhs = Vector6::<f64>::zeros();

        for (i, m) in frame.landmarks.iter().enumerate() {
            let (LandmarkStatus::Active, Some(m)) = (self.status[i], m) else {
                continue;
            };
            let origin = self.origin_output(i)?;
            let e = self.output_error(i, &m.output)?;
            let e_z = e.inverse_depth().max(MIN_INVERSE_DEPTH);
            landmarks[i] = LandmarkVelocity {
                rotation: -k.bearing * e.bearing().cross(origin.bearing()),
                scale: -k.inverse_depth * (e_z - origin.inverse_depth()) / e_z,
            };

            let est = self.estimated_output(i)?;
            let y = est.bearing();
            let z = est.inverse_depth();
            let proj = projector_unchecked(y);
            let y_x = skew(y);
            let mut block = Matrix6::zeros();
            block.fixed_view_mut::<3, 3>(0, 0).copy_from(&proj);
            block.fixed_view_mut::<3, 3>(0, 3).copy_from(&(y_x * z));
            block.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-y_x * z));
            block.fixed_view_mut::<3, 3>(3, 3).copy_from(&(proj * (z * z)));
            gram += block;
            let top = y_x * m.flow;
            let bottom = m.flow * z;
            rhs -= Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z);
        }

        let (pose, degenerate) = match solve_normal_equations(&gram, &rhs) {
            Some(solution) => {
                let drift = solution - frame.velocity.to_vector();
                let corrected = self.estimate.pose.adjoint() * drift * (-k.pose);
                (Twist::from_vector(&corrected), false)
            }
            None => (Twist::zero(), true),
        };
        Ok(Innovation {
            pose,
            landmarks,
            degenerate,
        })
    }

    /// Left factor that carries landmark `index`'s output error along the
    /// exact solutions of `θ̇ = −k_Q sin θ` (angle to `ẙ`) and
    /// `ė_z = −k_a (e_z − z̊)` over `dt`.
    fn closed_form_correction(&self, index: usize, measured: &LandmarkOutput, dt: f64) -> Result<LandmarkTransform> {
        let origin = self.origin_output(index)?;
        let e = self.output_error(index, measured)?;
        let axis = e.bearing().cross(origin.bearing());
        let sin = axis.norm();
        let theta = sin.atan2(e.bearing().dot(origin.bearing()));
        let next = 2.0 * ((0.5 * theta).tan() * (-self.gains.bearing * dt).exp()).atan();
        let rotation = if sin > 0.0 {
            axis * ((theta - next) / sin)
        } else {
            Vector3::zeros()
        };

        let e_z = e.inverse_depth();
        let z0 = origin.inverse_depth();
        let target = z0 + (e_z - z0) * (-self.gains.inverse_depth * dt).exp();
        Ok(LandmarkTransform::new(
            Rotation::exp(&rotation, 1.0),
            PositiveScalar::new(e_z / target)?,
        ))
    }

    /// One integration step over `dt` with the lift and innovation held at their
    /// values for `frame`. Frozen and uninitialized landmarks are left untouched.
    pub fn step(&mut self, frame: &MeasurementFrame, dt: f64) -> Result<StepReport> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let innovation = self.innovation(frame)?;
        let u = frame.velocity;
        let mut next = self.estimate.clone();
        let mut correction = innovation.pose.to_vector().norm_squared();

        for (i, status) in self.status.iter().enumerate() {
            if *status != LandmarkStatus::Active {
                continue;
            }
            let m = frame.landmarks[i].ok_or(Error::Lifecycle {
                index: i,
                reason: "active landmark is missing from the frame",
            })?;
            let lifted = match self.lift {
                LiftMode::Discrete => m.output.discrete_lift(&u, dt),
                LiftMode::ZeroOrderHold => None,
            }
            .unwrap_or_else(|| m.output.lift(&u, &m.flow));
            let delta = &innovation.landmarks[i];
            correction += delta.rotation.norm_squared() + delta.scale * delta.scale;
            next.landmarks[i] = match self.integrator {
                Integrator::Geometric => {
                    let left = LandmarkTransform::exp(&LandmarkVelocity::new(-delta.rotation, -delta.scale), dt);
                    let right = LandmarkTransform::exp(&lifted, dt);
                    left.compose(&self.estimate.landmarks[i]).compose(&right)
                }
                Integrator::ClosedForm => {
                    let left = self.closed_form_correction(i, &m.output, dt)?;
                    let right = LandmarkTransform::exp(&lifted, dt);
                    left.compose(&self.estimate.landmarks[i]).compose(&right)
                }
                Integrator::Additive => {
                    let t = &self.estimate.landmarks[i];
                    let q = t.rotation.matrix();
                    let q_next = q + (q * skew(&lifted.rotation) - skew(&delta.rotation) * q) * dt;
                    let a = t.scale.value();
                    let a_next = a + (a * lifted.scale - delta.scale * a) * dt;
                    LandmarkTransform::new(
                        Rotation::from_matrix_projected(&q_next),
                        PositiveScalar::new(a_next).map_err(|_| {
                            Error::InvalidParameter(format!(
                                "additive step drove scale of landmark {i} to {a_next}; reduce dt"
                            ))
                        })?,
                    )
                }
            };
        }

        next.pose = match self.integrator {
            Integrator::Geometric | Integrator::ClosedForm => {
                Pose::exp(&(-innovation.pose), dt) * self.estimate.pose * Pose::exp(&u, dt)
            }
            Integrator::Additive => {
                let a = self.estimate.pose.homogeneous();
                let a_next = a + (a * u.wedge() - innovation.pose.wedge() * a) * dt;
                Pose::new(
                    Rotation::from_matrix_projected(&a_next.fixed_view::<3, 3>(0, 0).into_owned()),
                    a_next.fixed_view::<3, 1>(0, 3).into_owned(),
                )
            }
        };

        self.estimate = next;
        Ok(StepReport {
            degenerate: innovation.degenerate,
            correction_norm: correction.sqrt(),
        })
    }

    fn reconstruct_landmark(&self, index: usize, pose: &Pose) -> Option<Vector3<f64>> {
        match self.status[index] {
            LandmarkStatus::Uninitialized => None,
            LandmarkStatus::Frozen => self.frozen[index],
            LandmarkStatus::Active => self
                .estimated_output(index)
                .ok()
                .map(|o| pose.transform_point(&o.body_point())),
        }
    }

    /// Configuration estimate `Υ(X̂, Ξ̊)`; every landmark must be initialized.
    pub fn reconstruct(&self) -> Result<TotalState> {
        let pose = self.pose_estimate();
        let landmarks = (0..self.status.len())
            .map(|i| {
                self.reconstruct_landmark(i, &pose).ok_or(Error::Lifecycle {
                    index: i,
                    reason: "landmark is not initialized",
                })
            })
            .collect::<Result<_>>()?;
        TotalState::new(pose, landmarks)
    }

    /// Re-anchors landmark `index` so that `X̂_i = id` and its reconstruction is `position`.
    fn anchor(&mut self, index: usize, body: Vector3<f64>) -> Result<()> {
        let output = LandmarkOutput::from_body_point(index, &body)?;
        self.reference[index] = Some(Reference {
            position: self.origin_pose.transform_point(&body),
            output,
        });
        self.estimate.landmarks[index] = LandmarkTransform::identity();
        Ok(())
    }
}

impl Estimator for Observer {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Observer
    }

    fn landmark_count(&self) -> usize {
        self.status.len()
    }

    fn status(&self, index: usize) -> LandmarkStatus {
        self.status[index]
    }

    /// Augments the origin configuration so that the reconstructed landmark sits
    /// at `x_P̂ + R_P̂ y/z` and its predicted output equals the measurement.
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
        self.anchor(index, m.output.body_point())?;
        self.status[index] = LandmarkStatus::Active;
        Ok(())
    }

    fn freeze(&mut self, index: usize) -> Result<()> {
        if self.status[index] != LandmarkStatus::Active {
            return Err(Error::Lifecycle {
                index,
                reason: "only active landmarks can be frozen",
            });
        }
        self.frozen[index] = self.reconstruct_landmark(index, &self.pose_estimate());
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
        let position = self.frozen[index].take().expect("frozen landmark has a position");
        let body = body_coordinates(&self.pose_estimate(), &position);
        self.anchor(index, body)?;
        self.status[index] = LandmarkStatus::Active;
        Ok(())
    }

    fn step(&mut self, frame: &MeasurementFrame, dt: f64) -> Result<StepReport> {
        Observer::step(self, frame, dt)
    }

    /// Storage of active, visible landmarks.
    fn storage(&self, frame: &MeasurementFrame) -> Vec<Option<(f64, f64)>> {
        frame
            .landmarks
            .iter()
            .enumerate()
            .map(|(i, m)| match (self.status.get(i), m) {
                (Some(LandmarkStatus::Active), Some(m)) => self.lyapunov_components(i, &m.output).ok(),
                _ => None,
            })
            .collect()
    }

    fn map_estimate(&self) -> MapEstimate {
        let pose = self.pose_estimate();
        MapEstimate {
            pose,
            landmarks: (0..self.status.len())
                .map(|i| self.reconstruct_landmark(i, &pose))
                .collect(),
        }
    }
}
