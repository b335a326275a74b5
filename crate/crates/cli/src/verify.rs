//! Randomized algebraic checks: group axioms, right actions, equivariance of
//! the output map, and the lift condition.

use std::fmt;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vslam_core::group::{
    lift, output_action, predicted_flow, state_action, GroupElement, LandmarkTransform, Output, TotalState,
    VelocityMeasurement,
};
use vslam_core::lie::{Pose, PositiveScalar, Rotation, Twist};
use vslam_core::system::measure;
use vslam_core::Result;

/// Signature of the output action; swappable so a corrupted action can be checked.
pub type OutputAction = fn(&GroupElement, &Output) -> Result<Output>;

/// Central-difference step for the lift check.
pub const LIFT_STEP: f64 = 1e-5;
pub const ALGEBRA_TOLERANCE: f64 = 1e-9;
pub const LIFT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Samples for the algebraic checks; the lift check uses a fifth of these.
    pub samples: usize,
    pub seed: u64,
    /// Landmarks per sampled configuration.
    pub landmarks: usize,
    pub output_action: OutputAction,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 1,
            landmarks: 10,
            output_action,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub samples: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_residual < self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} {} samples={:<6} max_residual={:.3e} tolerance={:.0e} ({:.3} s)",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.samples,
            self.max_residual,
            self.tolerance,
            self.seconds
        )
    }
}

fn vector(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose::new(Rotation::exp(&vector(rng, 3.0), 1.0), vector(rng, 2.0))
}

fn element(rng: &mut ChaCha8Rng, n: usize) -> GroupElement {
    let landmarks = (0..n)
        .map(|_| {
            let scale = PositiveScalar::new(rng.random_range(0.5..2.0)).expect("positive range");
            LandmarkTransform::new(Rotation::exp(&vector(rng, 3.0), 1.0), scale)
        })
        .collect();
    GroupElement::new(pose(rng), landmarks)
}

/// Landmarks between 0.3 and 3 m from the camera.
fn configuration(rng: &mut ChaCha8Rng, n: usize) -> TotalState {
    let pose = pose(rng);
    let landmarks = (0..n)
        .map(|_| {
            let dir = vector(rng, 1.0).normalize();
            pose.transform_point(&(dir * rng.random_range(0.3..3.0)))
        })
        .collect();
    TotalState::new(pose, landmarks).expect("landmarks are away from the camera")
}

fn element_distance(a: &GroupElement, b: &GroupElement) -> f64 {
    let mut d = (a.pose.homogeneous() - b.pose.homogeneous()).amax();
    for (x, y) in a.landmarks.iter().zip(&b.landmarks) {
        d = d
            .max((x.rotation.matrix() - y.rotation.matrix()).amax())
            .max((x.scale.value() - y.scale.value()).abs() / x.scale.value());
    }
    d
}

/// Largest entry-wise difference, relative for landmark positions.
fn state_distance(a: &TotalState, b: &TotalState) -> f64 {
    let mut d = (a.pose.homogeneous() - b.pose.homogeneous()).amax();
    for (p, q) in a.landmarks.iter().zip(&b.landmarks) {
        d = d.max((p - q).amax() / p.amax().max(1.0));
    }
    d
}

fn output_distance(a: &Output, b: &Output) -> f64 {
    a.landmarks
        .iter()
        .zip(&b.landmarks)
        .map(|(x, y)| {
            let z = (x.inverse_depth() - y.inverse_depth()).abs() / x.inverse_depth().max(1.0);
            (x.bearing() - y.bearing()).amax().max(z)
        })
        .fold(0.0, f64::max)
}

fn timed(
    name: &'static str,
    samples: usize,
    tolerance: f64,
    check: impl FnOnce() -> Result<f64>,
) -> Result<CheckResult> {
    let start = Instant::now();
    let max_residual = check()?;
    Ok(CheckResult {
        name,
        samples,
        max_residual,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn sampler(options: &VerifyOptions, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(salt);
    rng
}

/// Associativity, identity, and inverse.
pub fn group_axioms(options: &VerifyOptions) -> Result<CheckResult> {
    let n = options.landmarks;
    timed("group-axioms", options.samples, ALGEBRA_TOLERANCE, || {
        let mut rng = sampler(options, 1);
        let mut worst: f64 = 0.0;
        for _ in 0..options.samples {
            let (x, y, z) = (element(&mut rng, n), element(&mut rng, n), element(&mut rng, n));
            let left = x.compose(&y)?.compose(&z)?;
            let right = x.compose(&y.compose(&z)?)?;
            let identity = GroupElement::identity(n);
            worst = worst
                .max(element_distance(&left, &right))
                .max(element_distance(&x.compose(&identity)?, &x))
                .max(element_distance(&x.compose(&x.inverse())?, &identity));
        }
        Ok(worst)
    })
}

/// `Υ(Y, Υ(X, Ξ)) = Υ(XY, Ξ)`.
pub fn state_right_action(options: &VerifyOptions) -> Result<CheckResult> {
    let n = options.landmarks;
    timed("state-right-action", options.samples, ALGEBRA_TOLERANCE, || {
        let mut rng = sampler(options, 2);
        let mut worst: f64 = 0.0;
        for _ in 0..options.samples {
            let (x, y) = (element(&mut rng, n), element(&mut rng, n));
            let xi = configuration(&mut rng, n);
            let stepwise = state_action(&y, &state_action(&x, &xi)?)?;
            let joint = state_action(&x.compose(&y)?, &xi)?;
            worst = worst.max(state_distance(&stepwise, &joint));
        }
        Ok(worst)
    })
}

/// `ρ(Y, ρ(X, y)) = ρ(XY, y)` for the configured output action.
pub fn output_right_action(options: &VerifyOptions) -> Result<CheckResult> {
    let n = options.landmarks;
    let act = options.output_action;
    timed("output-right-action", options.samples, ALGEBRA_TOLERANCE, || {
        let mut rng = sampler(options, 3);
        let mut worst: f64 = 0.0;
        for _ in 0..options.samples {
            let (x, y) = (element(&mut rng, n), element(&mut rng, n));
            let out = measure(&configuration(&mut rng, n))?;
            let stepwise = act(&y, &act(&x, &out)?)?;
            let joint = act(&x.compose(&y)?, &out)?;
            worst = worst.max(output_distance(&stepwise, &joint));
        }
        Ok(worst)
    })
}

/// `ρ(X, h(Ξ)) = h(Υ(X, Ξ))`.
pub fn equivariance(options: &VerifyOptions) -> Result<CheckResult> {
    let n = options.landmarks;
    let act = options.output_action;
    timed("equivariance", options.samples, ALGEBRA_TOLERANCE, || {
        let mut rng = sampler(options, 4);
        let mut worst: f64 = 0.0;
        for _ in 0..options.samples {
            let x = element(&mut rng, n);
            let xi = configuration(&mut rng, n);
            let acted = act(&x, &measure(&xi)?)?;
            let measured = measure(&state_action(&x, &xi)?)?;
            worst = worst.max(output_distance(&acted, &measured));
        }
        Ok(worst)
    })
}

/// Central difference of `Υ(exp(t λ), Ξ)` at `t = 0` against `(P U, 0, …, 0)`.
pub fn lift_condition(options: &VerifyOptions) -> Result<CheckResult> {
    let samples = (options.samples / 5).max(1);
    let n = options.landmarks;
    timed("lift-condition", samples, LIFT_TOLERANCE, || {
        let mut rng = sampler(options, 5);
        let h = LIFT_STEP;
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let xi = configuration(&mut rng, n);
            let u = Twist::new(vector(&mut rng, 1.0), vector(&mut rng, 1.0));
            let out = measure(&xi)?;
            let velocity = VelocityMeasurement::new(u, predicted_flow(&out, &u), &out)?;
            let lambda = lift(&out, &velocity)?;
            let plus = state_action(&GroupElement::exp(&lambda, h), &xi)?;
            let minus = state_action(&GroupElement::exp(&lambda, -h), &xi)?;

            let pose_rate = (plus.pose.homogeneous() - minus.pose.homogeneous()) / (2.0 * h);
            worst = worst.max((pose_rate - xi.pose.homogeneous() * u.wedge()).amax());
            for (p, m) in plus.landmarks.iter().zip(&minus.landmarks) {
                worst = worst.max(((p - m) / (2.0 * h)).amax());
            }
        }
        Ok(worst)
    })
}

pub fn run_all(options: &VerifyOptions) -> Result<Vec<CheckResult>> {
    Ok(vec![
        group_axioms(options)?,
        state_right_action(options)?,
        output_right_action(options)?,
        equivariance(options)?,
        lift_condition(options)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use vslam_core::group::LandmarkOutput;

    /// Rotates bearings by `Q` instead of `Qᵀ`: the rotation angle's sign is flipped.
    fn corrupted(x: &GroupElement, output: &Output) -> Result<Output> {
        let landmarks = output
            .landmarks
            .iter()
            .zip(&x.landmarks)
            .map(|(o, t)| LandmarkOutput::new(t.rotation.matrix() * o.bearing(), t.scale.value() * o.inverse_depth()))
            .collect::<Result<_>>()?;
        Ok(Output::new(landmarks))
    }

    fn small() -> VerifyOptions {
        VerifyOptions {
            samples: 50,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn all_checks_pass() {
        for check in run_all(&small()).unwrap() {
            assert!(check.passed(), "{check}");
        }
    }

    #[test]
    fn corrupted_output_action_fails_equivariance() {
        let options = VerifyOptions {
            output_action: corrupted,
            ..small()
        };
        let check = equivariance(&options).unwrap();
        assert!(!check.passed(), "{check}");
        assert!(check.max_residual > 1e-2);
    }

    #[test]
    fn lift_check_uses_a_fifth_of_the_samples() {
        assert_eq!(lift_condition(&small()).unwrap().samples, 10);
    }
}
