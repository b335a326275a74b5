//! The visual SLAM symmetry group `SE(3) × (SO(3) × MR)ⁿ`, its Lie algebra, and
//! the actions it induces on configurations and on bearing/inverse-depth outputs.
//!
//! The state action moves the pose by right multiplication and moves each
//! landmark by rotating and scaling its body-frame coordinates before mapping
//! them back through the new pose. The output action rotates each bearing by
//! `Qᵀ` and scales each inverse depth by `a`; measuring commutes with the two
//! actions, which is what the observer exploits.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::lie::{check_unit, projector_unchecked, Pose, PositiveScalar, Rotation, Twist};

/// Smallest landmark-to-camera distance (m) considered part of the reduced state space.
pub const MIN_SEPARATION: f64 = 1e-6;

/// Flow vectors whose normal component exceeds this are rejected rather than re-projected.
pub const TANGENCY_REPROJECT_LIMIT: f64 = 1e-6;

/// Per-landmark part `(Q, a)` of a group element.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LandmarkTransform {
    pub rotation: Rotation,
    pub scale: PositiveScalar,
}

impl LandmarkTransform {
    pub fn new(rotation: Rotation, scale: PositiveScalar) -> Self {
        Self { rotation, scale }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self::new(self.rotation * other.rotation, self.scale * other.scale)
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.rotation.inverse(), self.scale.inverse())
    }

    pub fn exp(velocity: &LandmarkVelocity, dt: f64) -> Self {
        Self::new(
            Rotation::exp(&velocity.rotation, dt),
            PositiveScalar::exp(velocity.scale, dt),
        )
    }
}

/// Element `X = (A, (Q_i, a_i))` of the symmetry group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub pose: Pose,
    pub landmarks: Vec<LandmarkTransform>,
}

fn check_count(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LandmarkCountMismatch { expected, found });
    }
    Ok(())
}

impl GroupElement {
    pub fn new(pose: Pose, landmarks: Vec<LandmarkTransform>) -> Self {
        Self { pose, landmarks }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Pose::identity(), vec![LandmarkTransform::identity(); n])
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        check_count(self.len(), other.len())?;
        Ok(GroupElement {
            pose: self.pose * other.pose,
            landmarks: self
                .landmarks
                .iter()
                .zip(&other.landmarks)
                .map(|(a, b)| a.compose(b))
                .collect(),
        })
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            pose: self.pose.inverse(),
            landmarks: self.landmarks.iter().map(LandmarkTransform::inverse).collect(),
        }
    }

    /// Group exponential of `dt · Λ`.
    pub fn exp(algebra: &AlgebraElement, dt: f64) -> GroupElement {
        GroupElement {
            pose: Pose::exp(&algebra.twist, dt),
            landmarks: algebra
                .landmarks
                .iter()
                .map(|v| LandmarkTransform::exp(v, dt))
                .collect(),
        }
    }
}

/// Per-landmark part `(W, w)` of a Lie-algebra element; `W` is held as the
/// vector whose skew matrix is the so(3) component.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LandmarkVelocity {
    pub rotation: Vector3<f64>,
    pub scale: f64,
}

impl LandmarkVelocity {
    pub fn new(rotation: Vector3<f64>, scale: f64) -> Self {
        Self { rotation, scale }
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

/// Element `(U, (W_i, w_i))` of the Lie algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    pub twist: Twist,
    pub landmarks: Vec<LandmarkVelocity>,
}

impl AlgebraElement {
    pub fn zero(n: usize) -> Self {
        Self {
            twist: Twist::zero(),
            landmarks: vec![LandmarkVelocity::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }
}

/// Robot pose plus inertial landmark positions `(P, p_1..p_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalState {
    pub pose: Pose,
    pub landmarks: Vec<Vector3<f64>>,
}

impl TotalState {
    /// Builds a configuration, rejecting landmarks that coincide with the camera centre.
    pub fn new(pose: Pose, landmarks: Vec<Vector3<f64>>) -> Result<Self> {
        let state = Self { pose, landmarks };
        state.validate()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (index, p) in self.landmarks.iter().enumerate() {
            separation(index, &(p - self.pose.translation))?;
        }
        Ok(())
    }

    /// Landmark `index` in body-fixed coordinates, `R_Pᵀ(p_i − x_P)`.
    pub fn body_landmark(&self, index: usize) -> Vector3<f64> {
        body_coordinates(&self.pose, &self.landmarks[index])
    }
}

pub(crate) fn body_coordinates(pose: &Pose, p: &Vector3<f64>) -> Vector3<f64> {
    pose.rotation.transpose() * (p - pose.translation)
}

fn separation(index: usize, offset: &Vector3<f64>) -> Result<f64> {
    let distance = offset.norm();
    if !(distance >= MIN_SEPARATION) {
        return Err(Error::DegenerateConfiguration { index, distance });
    }
    Ok(distance)
}

/// Bearing and inverse depth of one landmark, an element of `S² × ℝ⁺`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkOutput {
    bearing: Vector3<f64>,
    inverse_depth: f64,
}

impl LandmarkOutput {
    pub fn new(bearing: Vector3<f64>, inverse_depth: f64) -> Result<Self> {
        check_unit(&bearing)?;
        if !(inverse_depth > 0.0 && inverse_depth.is_finite()) {
            return Err(Error::NotPositive(inverse_depth));
        }
        Ok(Self { bearing, inverse_depth })
    }

    /// Output of a body-frame point; `index` is only used for error reporting.
    pub fn from_body_point(index: usize, point: &Vector3<f64>) -> Result<Self> {
        let distance = separation(index, point)?;
        Ok(Self {
            bearing: point / distance,
            inverse_depth: 1.0 / distance,
        })
    }

    pub fn bearing(&self) -> &Vector3<f64> {
        &self.bearing
    }

    pub fn inverse_depth(&self) -> f64 {
        self.inverse_depth
    }

    /// Body-frame point `y / z`.
    pub fn body_point(&self) -> Vector3<f64> {
        self.bearing / self.inverse_depth
    }

    /// `(Qᵀ y, a z)`, with the bearing renormalized after rotation.
    pub fn act(&self, transform: &LandmarkTransform) -> Self {
        Self {
            bearing: (transform.rotation.transpose() * self.bearing).normalize(),
            inverse_depth: transform.scale.value() * self.inverse_depth,
        }
    }

    /// Optical flow of a static landmark seen from a camera moving with `twist`:
    /// `−Ω × y − z (I − yyᵀ) V`.
    pub fn predicted_flow(&self, twist: &Twist) -> Vector3<f64> {
        -twist.angular.cross(&self.bearing) - projector_unchecked(&self.bearing) * twist.linear * self.inverse_depth
    }

    /// Constant landmark velocity whose exponential over `dt` carries this
    /// output exactly to the output seen after the camera moves by
    /// `exp(dt · twist)`. Depends only on `(y, z)` and the velocity, like
    /// [`lift`](Self::lift), but has no discretization error when the velocity
    /// is held over the step. Returns `None` if the camera would reach the landmark.
    pub fn discrete_lift(&self, twist: &Twist, dt: f64) -> Option<LandmarkVelocity> {
        if twist.norm() == 0.0 {
            return Some(LandmarkVelocity::zero());
        }
        let r = self.body_point();
        let moved = Pose::exp(twist, dt).inverse().transform_point(&r);
        let distance = moved.norm();
        if distance < MIN_SEPARATION {
            return None;
        }
        let next = moved / distance;
        let rotation = Rotation::between(&next, &self.bearing);
        Some(LandmarkVelocity {
            rotation: rotation.log() / dt,
            scale: (r.norm() / distance).ln() / dt,
        })
    }

    /// Lifted landmark velocity `((φ × y), z yᵀ V)` for a measured flow `φ`.
    pub fn lift(&self, twist: &Twist, flow: &Vector3<f64>) -> LandmarkVelocity {
        LandmarkVelocity {
            rotation: flow.cross(&self.bearing),
            scale: self.inverse_depth * self.bearing.dot(&twist.linear),
        }
    }
}

/// Outputs `(y_i, z_i)` for all landmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub landmarks: Vec<LandmarkOutput>,
}

impl Output {
    pub fn new(landmarks: Vec<LandmarkOutput>) -> Self {
        Self { landmarks }
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }
}

/// Projects `flow` onto the tangent plane at `bearing` when its normal
/// component is small, and rejects it otherwise.
pub fn tangent_flow(index: usize, bearing: &Vector3<f64>, flow: &Vector3<f64>) -> Result<Vector3<f64>> {
    let defect = bearing.dot(flow).abs();
    if !(defect <= TANGENCY_REPROJECT_LIMIT) {
        return Err(Error::NotTangent { index, defect });
    }
    Ok(flow - bearing * bearing.dot(flow))
}

/// Measured velocities `(U, φ_1..φ_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityMeasurement {
    pub twist: Twist,
    flows: Vec<Vector3<f64>>,
}

impl VelocityMeasurement {
    /// Validates tangency of each flow against the matching bearing in `outputs`.
    pub fn new(twist: Twist, flows: Vec<Vector3<f64>>, outputs: &Output) -> Result<Self> {
        check_count(outputs.len(), flows.len())?;
        let flows = flows
            .iter()
            .zip(&outputs.landmarks)
            .enumerate()
            .map(|(i, (flow, out))| tangent_flow(i, out.bearing(), flow))
            .collect::<Result<_>>()?;
        Ok(Self { twist, flows })
    }

    pub fn flows(&self) -> &[Vector3<f64>] {
        &self.flows
    }
}

/// Right action `Υ(X, Ξ)` of the group on configurations.
pub fn state_action(x: &GroupElement, state: &TotalState) -> Result<TotalState> {
    check_count(state.len(), x.len())?;
    let pose = state.pose * x.pose;
    let landmarks = state
        .landmarks
        .iter()
        .zip(&x.landmarks)
        .enumerate()
        .map(|(i, (p, t))| {
            let body = body_coordinates(&state.pose, p);
            separation(i, &body)?;
            let moved = t.rotation.transpose() * body / t.scale.value();
            separation(i, &moved)?;
            Ok(pose.transform_point(&moved))
        })
        .collect::<Result<_>>()?;
    Ok(TotalState { pose, landmarks })
}

/// Right action `ρ(X, (y, z))` of the group on outputs.
pub fn output_action(x: &GroupElement, output: &Output) -> Result<Output> {
    check_count(output.len(), x.len())?;
    Ok(Output::new(
        output
            .landmarks
            .iter()
            .zip(&x.landmarks)
            .map(|(o, t)| o.act(t))
            .collect(),
    ))
}

/// Lift `λ` of measured velocities into the Lie algebra.
///
/// The rotation component of each landmark is chosen orthogonal to its bearing;
/// rotations about the bearing leave the configuration unchanged.
pub fn lift(output: &Output, velocity: &VelocityMeasurement) -> Result<AlgebraElement> {
    check_count(output.len(), velocity.flows.len())?;
    Ok(AlgebraElement {
        twist: velocity.twist,
        landmarks: output
            .landmarks
            .iter()
            .zip(&velocity.flows)
            .map(|(o, flow)| o.lift(&velocity.twist, flow))
            .collect(),
    })
}

/// Exact optical flow of every (static) landmark under the camera velocity `twist`.
pub fn predicted_flow(output: &Output, twist: &Twist) -> Vec<Vector3<f64>> {
    output.landmarks.iter().map(|o| o.predicted_flow(twist)).collect()
}
