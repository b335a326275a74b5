//! Experiment definitions and world construction.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ekf::EkfConfig;
use crate::error::{Error, Result};
use crate::group::TotalState;
use crate::lie::{Pose, Twist};
use crate::observer::{Gains, Integrator, LiftMode};
use crate::system::{FlowMode, NoiseVariances, SystemParams};

/// RNG stream for landmark placement.
pub const LANDMARK_STREAM: u64 = 0;
/// RNG stream for the random origin configuration.
pub const REFERENCE_STREAM: u64 = 1;

/// Which estimators a trial runs. `Both` feeds them identical frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EstimatorSelection {
    #[default]
    Observer,
    Ekf,
    Both,
}

/// How the observer's origin configuration is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferenceMode {
    /// Random landmark positions drawn from the same band, all active from the
    /// start. Requires every landmark to be visible at all times.
    Random,
    /// Empty; landmarks are added from measurements when first seen.
    #[default]
    Lifecycle,
}

/// Lateral band around the path in which landmarks are placed (m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub inner: f64,
    pub outer: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Constant body velocity; a nonzero yaw rate gives a circle.
    pub twist: Twist,
    pub band: Band,
    pub duration: f64,
    pub dt: f64,
    pub system: SystemParams,
    pub gains: Gains,
    pub estimators: EstimatorSelection,
    pub integrator: Integrator,
    pub lift: LiftMode,
    pub reference: ReferenceMode,
    pub ekf: EkfConfig,
}

fn circle_twist() -> Twist {
    Twist::new(Vector3::new(0.0, 0.0, 0.02 * PI), Vector3::new(0.1, 0.0, 0.0))
}

/// EKF tuning for a noise model. Variances are floored so the innovation
/// covariance stays invertible in noise-free runs.
pub fn ekf_config_for(noise: &NoiseVariances) -> EkfConfig {
    let floored = NoiseVariances {
        linear_velocity: noise.linear_velocity.max(1e-8),
        angular_velocity: noise.angular_velocity.max(1e-8),
        flow: noise.flow,
        bearing: noise.bearing.max(1e-8),
        inverse_depth: noise.inverse_depth.max(1e-8),
    };
    EkfConfig::from_variances(&floored)
}

impl Scenario {
    /// Noise-free convergence run: ten landmarks always in view, random origin.
    pub fn convergence() -> Self {
        let system = SystemParams {
            landmark_count: 10,
            sensor_range: f64::INFINITY,
            noise: NoiseVariances::zero(),
            seed: 1,
            flow_mode: FlowMode::Analytic,
        };
        Self {
            twist: circle_twist(),
            band: Band { inner: 0.5, outer: 1.0 },
            duration: 100.0,
            dt: 0.5,
            ekf: ekf_config_for(&system.noise),
            system,
            gains: Gains::convergence(),
            estimators: EstimatorSelection::Observer,
            integrator: Integrator::Geometric,
            lift: LiftMode::Discrete,
            reference: ReferenceMode::Random,
        }
    }

    /// Noisy comparison run with a 1 m sensor range and landmark lifecycle.
    pub fn comparison(landmarks: usize) -> Self {
        let system = SystemParams {
            landmark_count: landmarks,
            sensor_range: 1.0,
            noise: NoiseVariances::comparison(),
            seed: 1,
            flow_mode: FlowMode::Analytic,
        };
        Self {
            twist: circle_twist(),
            band: Band { inner: 0.5, outer: 1.0 },
            duration: 100.0,
            dt: 0.5,
            ekf: ekf_config_for(&system.noise),
            system,
            gains: Gains::comparison(),
            estimators: EstimatorSelection::Both,
            integrator: Integrator::ClosedForm,
            lift: LiftMode::ZeroOrderHold,
            reference: ReferenceMode::Lifecycle,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.system.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.system.seed
    }

    pub fn landmark_count(&self) -> usize {
        self.system.landmark_count
    }

    /// Number of integration steps; the trial records one more frame than this.
    pub fn steps(&self) -> Result<usize> {
        self.validate()?;
        Ok((self.duration / self.dt).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration must be non-negative, got {}",
                self.duration
            )));
        }
        let steps = self.duration / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "duration {} is not a whole number of steps of {}",
                self.duration, self.dt
            )));
        }
        if !(self.band.inner > 0.0 && self.band.inner < self.band.outer && self.band.outer.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "landmark band needs 0 < inner < outer, got {:?}",
                self.band
            )));
        }
        let radius = self.turn_radius();
        if radius <= self.band.outer {
            return Err(Error::InvalidParameter(format!(
                "turn radius {radius:.3} m must exceed the band's outer offset {}",
                self.band.outer
            )));
        }
        if self.twist.linear.norm() == 0.0 {
            return Err(Error::InvalidParameter(
                "the path needs a nonzero linear velocity".into(),
            ));
        }
        self.gains.validate()?;
        self.system.validate()
    }

    /// Radius of the planar path; infinite for straight motion.
    pub fn turn_radius(&self) -> f64 {
        let yaw = self.twist.angular.z.abs();
        if yaw == 0.0 {
            f64::INFINITY
        } else {
            self.twist.linear.norm() / yaw
        }
    }
}

/// Ground truth at time zero plus the observer's origin configuration when it is random.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub truth: TotalState,
    pub reference: Option<TotalState>,
}

/// Places the robot at the identity and samples landmarks uniformly by area
/// in the band on both sides of the path, at ground height.
pub fn build_scenario(scenario: &Scenario) -> Result<World> {
    scenario.validate()?;
    let n = scenario.landmark_count();
    let truth = TotalState::new(Pose::identity(), sample_band(scenario, LANDMARK_STREAM, n))?;
    let reference = match scenario.reference {
        ReferenceMode::Random => Some(TotalState::new(
            Pose::identity(),
            sample_band(scenario, REFERENCE_STREAM, n),
        )?),
        ReferenceMode::Lifecycle => None,
    };
    Ok(World { truth, reference })
}

fn sample_band(scenario: &Scenario, stream: u64, n: usize) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed());
    rng.set_stream(stream);
    let Band { inner, outer } = scenario.band;
    let radius = scenario.turn_radius();

    if radius.is_infinite() {
        // Straight path along body x: a strip on either side of the travelled segment.
        let length = scenario.twist.linear.norm() * scenario.duration;
        return (0..n)
            .map(|_| {
                let along = rng.random_range(0.0..=length);
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Vector3::new(along, side * rng.random_range(inner..outer), 0.0)
            })
            .collect();
    }

    // Circle through the origin with its centre on the turning side.
    let turn = scenario.twist.angular.z.signum();
    let centre = Vector3::new(0.0, turn * radius, 0.0);
    let outside = (radius + outer).powi(2) - (radius + inner).powi(2);
    let inside = (radius - inner).powi(2) - (radius - outer).powi(2);
    (0..n)
        .map(|_| {
            let (lo, hi) = if rng.random::<f64>() * (outside + inside) < outside {
                (radius + inner, radius + outer)
            } else {
                (radius - outer, radius - inner)
            };
            let r = rng.random_range(lo * lo..hi * hi).sqrt();
            let theta = rng.random_range(0.0..2.0 * PI);
            centre + Vector3::new(r * theta.cos(), r * theta.sin(), 0.0)
        })
        .collect()
}
