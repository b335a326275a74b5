#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vslam_core::group::{GroupElement, LandmarkTransform, TotalState};
use vslam_core::lie::{Pose, PositiveScalar, Rotation, Twist};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vector(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn rotation(rng: &mut impl Rng) -> Rotation {
    Rotation::exp(&vector(rng, 3.0), 1.0)
}

pub fn pose(rng: &mut impl Rng) -> Pose {
    Pose::new(rotation(rng), vector(rng, 2.0))
}

pub fn twist(rng: &mut impl Rng, scale: f64) -> Twist {
    Twist::new(vector(rng, scale), vector(rng, scale))
}

/// Configuration whose landmarks sit between 0.3 and 3 m from the camera.
pub fn state(rng: &mut impl Rng, n: usize) -> TotalState {
    let pose = pose(rng);
    let landmarks = (0..n)
        .map(|_| {
            let dir = vector(rng, 1.0).normalize();
            let body = dir * rng.random_range(0.3..3.0);
            pose.transform_point(&body)
        })
        .collect();
    TotalState::new(pose, landmarks).unwrap()
}

pub fn element(rng: &mut impl Rng, n: usize) -> GroupElement {
    GroupElement::new(
        pose(rng),
        (0..n)
            .map(|_| LandmarkTransform::new(rotation(rng), PositiveScalar::new(rng.random_range(0.3..3.0)).unwrap()))
            .collect(),
    )
}

/// Largest entry-wise difference between two configurations.
pub fn state_distance(a: &TotalState, b: &TotalState) -> f64 {
    let pose = (a.pose.homogeneous() - b.pose.homogeneous()).amax();
    a.landmarks
        .iter()
        .zip(&b.landmarks)
        .map(|(p, q)| (p - q).amax())
        .fold(pose, f64::max)
}
