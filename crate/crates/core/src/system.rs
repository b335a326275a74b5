//! Ground-truth SLAM system: static landmarks, a rigid body moving with a
//! body-fixed twist, and a camera that reports bearings, inverse depths,
//! optical flow, and its own (noisy) velocity.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::group::{body_coordinates, LandmarkOutput, Output, TotalState};
use crate::lie::{Pose, Twist};

/// Floor applied to noisy inverse-depth measurements (1/m).
pub const MIN_INVERSE_DEPTH: f64 = 1e-4;

/// RNG stream used by [`Sensor`]; other streams of the same seed drive scenario generation.
pub const SENSOR_STREAM: u64 = 2;

/// Per-axis variances of the zero-mean Gaussian noise added to each signal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseVariances {
    pub linear_velocity: f64,
    pub angular_velocity: f64,
    pub flow: f64,
    pub bearing: f64,
    pub inverse_depth: f64,
}

impl NoiseVariances {
    pub fn zero() -> Self {
        Self {
            linear_velocity: 0.0,
            angular_velocity: 0.0,
            flow: 0.0,
            bearing: 0.0,
            inverse_depth: 0.0,
        }
    }

    /// Variances used in the EKF comparison experiments.
    pub fn comparison() -> Self {
        Self {
            linear_velocity: 0.2,
            angular_velocity: 0.1,
            flow: 0.02,
            bearing: 0.01,
            inverse_depth: 0.4,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.linear_velocity,
            self.angular_velocity,
            self.flow,
            self.bearing,
            self.inverse_depth,
        ];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "noise variances must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// How the sensor produces optical flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FlowMode {
    /// Exact flow of the static landmark plus Gaussian noise.
    #[default]
    Analytic,
    /// Backward difference of consecutive (noisy) bearings along the sphere.
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    pub landmark_count: usize,
    /// Landmarks farther than this (m) are not observed. May be infinite.
    pub sensor_range: f64,
    pub noise: NoiseVariances,
    pub seed: u64,
    pub flow_mode: FlowMode,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.landmark_count == 0 {
            return Err(Error::InvalidParameter("landmark count must be at least 1".into()));
        }
        if !(self.sensor_range > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sensor range must be positive, got {}",
                self.sensor_range
            )));
        }
        self.noise.validate()
    }
}

/// One observed landmark: its output and the flow of its bearing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkMeasurement {
    pub output: LandmarkOutput,
    pub flow: Vector3<f64>,
}

/// Everything the camera reports at one instant. Invisible landmarks are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementFrame {
    pub time: f64,
    pub velocity: Twist,
    pub landmarks: Vec<Option<LandmarkMeasurement>>,
}

impl MeasurementFrame {
    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn is_visible(&self, index: usize) -> bool {
        self.landmarks[index].is_some()
    }

    pub fn visible_count(&self) -> usize {
        self.landmarks.iter().filter(|m| m.is_some()).count()
    }

    /// Full output vector, if every landmark is visible.
    pub fn output(&self) -> Option<Output> {
        self.landmarks
            .iter()
            .map(|m| m.map(|m| m.output))
            .collect::<Option<Vec<_>>>()
            .map(Output::new)
    }
}

/// Output of a single landmark seen from `pose`.
pub fn measure_landmark(index: usize, pose: &Pose, landmark: &Vector3<f64>) -> Result<LandmarkOutput> {
    LandmarkOutput::from_body_point(index, &body_coordinates(pose, landmark))
}

/// The output map `h(Ξ)`: body-frame bearings and inverse depths.
pub fn measure(state: &TotalState) -> Result<Output> {
    state
        .landmarks
        .iter()
        .enumerate()
        .map(|(i, p)| measure_landmark(i, &state.pose, p))
        .collect::<Result<Vec<_>>>()
        .map(Output::new)
}

/// Advances the pose by `exp(dt · U)`; landmarks are static.
pub fn propagate(state: &TotalState, twist: &Twist, dt: f64) -> Result<TotalState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    Ok(TotalState {
        pose: state.pose * Pose::exp(twist, dt),
        landmarks: state.landmarks.clone(),
    })
}

/// Orthonormal basis of the tangent plane at the unit vector `y`.
pub fn tangent_basis(y: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if y.x.abs() <= y.y.abs() && y.x.abs() <= y.z.abs() {
        Vector3::x()
    } else if y.y.abs() <= y.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = y.cross(&axis).normalize();
    let e2 = y.cross(&e1);
    (e1, e2)
}

/// Sphere logarithm: the tangent vector at `from` pointing along the geodesic to `to`,
/// with length equal to the angle between them.
pub fn sphere_log(from: &Vector3<f64>, to: &Vector3<f64>) -> Vector3<f64> {
    let normal = to - from * from.dot(to);
    let sin = normal.norm();
    if sin == 0.0 {
        return Vector3::zeros();
    }
    let angle = sin.atan2(from.dot(to));
    normal * (angle / sin)
}

/// Noisy camera. Owns its random stream; two sensors with the same parameters
/// produce identical frames.
#[derive(Clone, Debug)]
pub struct Sensor {
    params: SystemParams,
    rng: ChaCha8Rng,
    clamp_events: usize,
}

impl Sensor {
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(SENSOR_STREAM);
        Ok(Self {
            params,
            rng,
            clamp_events: 0,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// Number of inverse-depth samples raised to [`MIN_INVERSE_DEPTH`] so far.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    fn gauss(&mut self, variance: f64) -> f64 {
        if variance == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * variance.sqrt()
    }

    fn gauss3(&mut self, variance: f64) -> Vector3<f64> {
        Vector3::new(self.gauss(variance), self.gauss(variance), self.gauss(variance))
    }

    /// Produces the frame observed at `time` from the true state and velocity.
    ///
    /// `previous` is the last frame returned by this sensor; it is only read in
    /// finite-difference flow mode.
    pub fn sense(
        &mut self,
        state: &TotalState,
        twist: &Twist,
        time: f64,
        previous: Option<&MeasurementFrame>,
    ) -> Result<MeasurementFrame> {
        if state.len() != self.params.landmark_count {
            return Err(Error::LandmarkCountMismatch {
                expected: self.params.landmark_count,
                found: state.len(),
            });
        }
        let noise = self.params.noise;
        let velocity = Twist::new(
            twist.angular + self.gauss3(noise.angular_velocity),
            twist.linear + self.gauss3(noise.linear_velocity),
        );

        let mut landmarks = Vec::with_capacity(state.len());
        for (i, p) in state.landmarks.iter().enumerate() {
            let truth = measure_landmark(i, &state.pose, p)?;
            if 1.0 / truth.inverse_depth() > self.params.sensor_range {
                landmarks.push(None);
                continue;
            }

            let (e1, e2) = tangent_basis(truth.bearing());
            let bearing =
                (truth.bearing() + e1 * self.gauss(noise.bearing) + e2 * self.gauss(noise.bearing)).normalize();
            let mut inverse_depth = truth.inverse_depth() + self.gauss(noise.inverse_depth);
            if inverse_depth < MIN_INVERSE_DEPTH {
                inverse_depth = MIN_INVERSE_DEPTH;
                self.clamp_events += 1;
            }
            let output = LandmarkOutput::new(bearing, inverse_depth)?;

            let raw_flow = match self.params.flow_mode {
                FlowMode::Analytic => truth.predicted_flow(twist) + self.gauss3(noise.flow),
                FlowMode::FiniteDifference => previous
                    .and_then(|prev| {
                        let dt = time - prev.time;
                        let last = prev.landmarks.get(i).copied().flatten()?;
                        (dt > 0.0).then(|| -sphere_log(&bearing, last.output.bearing()) / dt)
                    })
                    .unwrap_or_else(Vector3::zeros),
            };
            let flow = raw_flow - bearing * bearing.dot(&raw_flow);
            landmarks.push(Some(LandmarkMeasurement { output, flow }));
        }

        Ok(MeasurementFrame {
            time,
            velocity,
            landmarks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::predicted_flow;
    use crate::lie::Rotation;
    use std::f64::consts::PI;

    fn params(n: usize, noise: NoiseVariances) -> SystemParams {
        SystemParams {
            landmark_count: n,
            sensor_range: f64::INFINITY,
            noise,
            seed: 7,
            flow_mode: FlowMode::Analytic,
        }
    }

    fn circle_twist() -> Twist {
        Twist::new(Vector3::new(0.0, 0.0, 0.02 * PI), Vector3::new(0.1, 0.0, 0.0))
    }

    #[test]
    fn measure_axis_cases() {
        let s = TotalState::new(Pose::identity(), vec![Vector3::new(0.0, 0.0, 2.0)]).unwrap();
        let out = measure(&s).unwrap();
        assert_eq!(*out.landmarks[0].bearing(), Vector3::z());
        assert_eq!(out.landmarks[0].inverse_depth(), 0.5);

        let s = TotalState::new(Pose::identity(), vec![Vector3::new(0.6, 0.8, 0.0)]).unwrap();
        assert!((measure(&s).unwrap().landmarks[0].inverse_depth() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn propagate_examples() {
        let s = TotalState::new(Pose::identity(), vec![Vector3::new(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(propagate(&s, &Twist::zero(), 0.5).unwrap(), s);

        let moved = propagate(&s, &Twist::new(Vector3::zeros(), Vector3::x()), 1.0).unwrap();
        assert_eq!(moved.pose.translation, Vector3::x());
        assert_eq!(moved.landmarks, s.landmarks);

        assert!(propagate(&s, &Twist::zero(), 0.0).is_err());
    }

    #[test]
    fn circle_closes_after_one_period() {
        let mut s = TotalState::new(Pose::identity(), vec![Vector3::new(0.0, 3.0, 0.0)]).unwrap();
        for _ in 0..200 {
            s = propagate(&s, &circle_twist(), 0.5).unwrap();
        }
        assert!(s.pose.translation.norm() < 1e-6);
    }

    #[test]
    fn noise_free_sense_matches_model() {
        let s = TotalState::new(
            Pose::new(
                Rotation::exp(&Vector3::new(0.1, 0.2, 0.3), 1.0),
                Vector3::new(0.5, 0.0, 0.1),
            ),
            vec![Vector3::new(1.0, 2.0, 0.5), Vector3::new(-1.0, 0.0, 0.3)],
        )
        .unwrap();
        let mut sensor = Sensor::new(params(2, NoiseVariances::zero())).unwrap();
        let frame = sensor.sense(&s, &circle_twist(), 0.0, None).unwrap();
        let exact = measure(&s).unwrap();
        let flows = predicted_flow(&exact, &circle_twist());
        assert_eq!(frame.velocity, circle_twist());
        for (i, flow) in flows.iter().enumerate() {
            let m = frame.landmarks[i].unwrap();
            assert_eq!(m.output, exact.landmarks[i]);
            assert!((m.flow - flow).norm() < 1e-16);
        }
    }

    #[test]
    fn out_of_range_landmark_invisible() {
        let s = TotalState::new(
            Pose::identity(),
            vec![Vector3::new(1.5, 0.0, 0.0), Vector3::new(0.9, 0.0, 0.0)],
        )
        .unwrap();
        let mut p = params(2, NoiseVariances::zero());
        p.sensor_range = 1.0;
        let frame = Sensor::new(p).unwrap().sense(&s, &Twist::zero(), 0.0, None).unwrap();
        assert!(!frame.is_visible(0));
        assert!(frame.is_visible(1));
    }

    #[test]
    fn seeded_sensing_is_reproducible_and_clamped() {
        let s = TotalState::new(Pose::identity(), vec![Vector3::new(3.0, 0.0, 0.0); 4]).unwrap();
        let mut a = Sensor::new(params(4, NoiseVariances::comparison())).unwrap();
        let mut b = Sensor::new(params(4, NoiseVariances::comparison())).unwrap();
        for k in 0..200 {
            let t = k as f64 * 0.5;
            let fa = a.sense(&s, &circle_twist(), t, None).unwrap();
            let fb = b.sense(&s, &circle_twist(), t, None).unwrap();
            assert_eq!(fa, fb);
            for m in fa.landmarks.iter().flatten() {
                assert!(m.output.inverse_depth() >= MIN_INVERSE_DEPTH);
                assert!(m.output.bearing().dot(&m.flow).abs() < 1e-12);
            }
        }
        // True inverse depth 1/3 with variance 0.4: clamping happens regularly.
        assert!(a.clamp_events() > 0);
    }

    #[test]
    fn sphere_log_geodesic() {
        let v = sphere_log(&Vector3::x(), &Vector3::y());
        assert!((v - Vector3::y() * (PI / 2.0)).norm() < 1e-15);
        assert_eq!(sphere_log(&Vector3::z(), &Vector3::z()), Vector3::zeros());
    }
}
