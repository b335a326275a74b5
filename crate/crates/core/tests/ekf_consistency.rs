//! EKF Jacobians against central differences, and covariance hygiene.

mod common;

use nalgebra::{DMatrix, Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use common::*;
use vslam_core::ekf::{
    landmark_insertion, linearize_measurement, process_jacobian, Ekf, EkfConfig, MeasurementNoise, ProcessNoise,
};
use vslam_core::estimate::{Estimator, LandmarkStatus};
use vslam_core::group::{LandmarkOutput, TotalState};
use vslam_core::lie::{Pose, Twist};
use vslam_core::system::{measure, measure_landmark, propagate, tangent_basis, LandmarkMeasurement, MeasurementFrame};

const H: f64 = 1e-6;

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let size: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / size.max(1.0)
}

fn perturb(pose: &Pose, xi: &Vector6<f64>) -> Pose {
    *pose * Pose::exp(&Twist::from_vector(xi), 1.0)
}

#[test]
fn process_jacobian_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..200 {
        let mut r = rng(seed);
        let p = pose(&mut r);
        let u = twist(&mut r, 1.0);
        let dt = r.random_range(0.05..1.0);
        let step = Pose::exp(&u, dt);
        let mean_next = p * step;
        let f = |xi: &Vector6<f64>| (mean_next.inverse() * perturb(&p, xi) * step).log().to_vector();
        let mut numeric = Matrix6::zeros();
        for j in 0..6 {
            let e = Vector6::ith(j, H);
            numeric.set_column(j, &((f(&e) - f(&-e)) / (2.0 * H)));
        }
        worst = worst.max(relative_error(process_jacobian(&u, dt).as_slice(), numeric.as_slice()));
    }
    assert!(worst < 1e-5, "{worst:e}");
}

#[test]
fn measurement_jacobian_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..200 {
        let mut r = rng(seed);
        let truth = state(&mut r, 1);
        let (p, l) = (truth.pose, truth.landmarks[0]);
        let lin = linearize_measurement(0, &p, &l).unwrap();
        let g = |pose: &Pose, landmark: &Vector3<f64>| lin.residual(&measure_landmark(0, pose, landmark).unwrap());

        let mut pose_numeric = Matrix3x6::zeros();
        for j in 0..6 {
            let e = Vector6::ith(j, H);
            pose_numeric.set_column(j, &((g(&perturb(&p, &e), &l) - g(&perturb(&p, &-e), &l)) / (2.0 * H)));
        }
        let mut landmark_numeric = Matrix3::zeros();
        for j in 0..3 {
            let e = Vector3::ith(j, H);
            landmark_numeric.set_column(j, &((g(&p, &(l + e)) - g(&p, &(l - e))) / (2.0 * H)));
        }
        worst = worst
            .max(relative_error(lin.pose_jacobian.as_slice(), pose_numeric.as_slice()))
            .max(relative_error(
                lin.landmark_jacobian.as_slice(),
                landmark_numeric.as_slice(),
            ));
    }
    assert!(worst < 1e-5, "{worst:e}");
}

#[test]
fn insertion_jacobians_match_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..200 {
        let mut r = rng(seed);
        let truth = state(&mut r, 1);
        let p = truth.pose;
        let out = measure(&truth).unwrap().landmarks[0];
        let (_, g_pose, g_meas) = landmark_insertion(&p, &out);

        let mut pose_numeric = Matrix3x6::zeros();
        for j in 0..6 {
            let e = Vector6::ith(j, H);
            let plus = landmark_insertion(&perturb(&p, &e), &out).0;
            let minus = landmark_insertion(&perturb(&p, &-e), &out).0;
            pose_numeric.set_column(j, &((plus - minus) / (2.0 * H)));
        }
        let (e1, e2) = tangent_basis(out.bearing());
        let shifted = |d: &Vector3<f64>| {
            let y = (out.bearing() + e1 * d.x + e2 * d.y).normalize();
            LandmarkOutput::new(y, out.inverse_depth() + d.z).unwrap()
        };
        let mut meas_numeric = Matrix3::zeros();
        for j in 0..3 {
            let e = Vector3::ith(j, H);
            let plus = landmark_insertion(&p, &shifted(&e)).0;
            let minus = landmark_insertion(&p, &shifted(&-e)).0;
            meas_numeric.set_column(j, &((plus - minus) / (2.0 * H)));
        }
        worst = worst
            .max(relative_error(g_pose.as_slice(), pose_numeric.as_slice()))
            .max(relative_error(g_meas.as_slice(), meas_numeric.as_slice()));
    }
    assert!(worst < 1e-5, "{worst:e}");
}

fn assert_symmetric_psd(p: &DMatrix<f64>) {
    let asym = (p - p.transpose()).amax();
    assert!(asym <= 1e-9, "asymmetry {asym:e}");
    let min = p.clone().symmetric_eigenvalues().min();
    assert!(min >= -1e-9, "smallest eigenvalue {min:e}");
}

#[test]
fn covariance_stays_symmetric_psd_over_many_updates() {
    let mut r = rng(11);
    let n = 5;
    let truth = state(&mut r, n);
    let config = EkfConfig {
        process: ProcessNoise {
            angular: 0.01,
            linear: 0.02,
        },
        measurement: MeasurementNoise {
            bearing: 1e-3,
            inverse_depth: 1e-2,
        },
        initial_pose_variance: 0.01,
        landmark_variance_floor: 1e-4,
    };
    let mut ekf = Ekf::new(truth.pose, n, config);
    let normal = |r: &mut rand_chacha::ChaCha8Rng, s: f64| -> f64 {
        let z: f64 = StandardNormal.sample(r);
        z * s
    };

    for k in 0..10_000 {
        // Noisy measurements of the fixed configuration, with random visibility.
        let landmarks = (0..n)
            .map(|i| {
                if r.random_bool(0.2) {
                    return None;
                }
                let exact = measure_landmark(i, &truth.pose, &truth.landmarks[i]).unwrap();
                let (e1, e2) = tangent_basis(exact.bearing());
                let y = (exact.bearing() + e1 * normal(&mut r, 0.03) + e2 * normal(&mut r, 0.03)).normalize();
                let z = (exact.inverse_depth() + normal(&mut r, 0.1)).max(1e-3);
                Some(LandmarkMeasurement {
                    output: LandmarkOutput::new(y, z).unwrap(),
                    flow: Vector3::zeros(),
                })
            })
            .collect();
        let frame = MeasurementFrame {
            time: k as f64,
            velocity: twist(&mut r, 0.01),
            landmarks,
        };
        ekf.sync_landmarks(&frame).unwrap();
        ekf.update(&frame, &config.measurement).unwrap();
        ekf.predict(&frame.velocity, 0.1, &config.process).unwrap();
        if k % 1000 == 0 {
            assert_symmetric_psd(ekf.covariance());
        }
    }
    assert_symmetric_psd(ekf.covariance());
    assert_eq!(ekf.dimension(), 6 + 3 * n);
    assert!((0..n).all(|i| ekf.status(i) != LandmarkStatus::Uninitialized));
}

#[test]
fn freezing_preserves_psd() {
    let mut r = rng(5);
    let truth = state(&mut r, 4);
    let config = EkfConfig {
        initial_pose_variance: 0.05,
        ..vslam_core::sim::ekf_config_for(&vslam_core::system::NoiseVariances::comparison())
    };
    let mut ekf = Ekf::new(truth.pose, 4, config);
    let out = measure(&truth).unwrap();
    let frame = MeasurementFrame {
        time: 0.0,
        velocity: Twist::zero(),
        landmarks: out
            .landmarks
            .iter()
            .map(|o| {
                Some(LandmarkMeasurement {
                    output: *o,
                    flow: Vector3::zeros(),
                })
            })
            .collect(),
    };
    ekf.sync_landmarks(&frame).unwrap();
    for i in [0, 2] {
        ekf.freeze(i).unwrap();
        assert_symmetric_psd(ekf.covariance());
    }
}

#[test]
fn vanishing_noise_tracks_the_truth() {
    let mut r = rng(21);
    let mut truth = state(&mut r, 6);
    let tiny = EkfConfig {
        process: ProcessNoise {
            angular: 1e-12,
            linear: 1e-12,
        },
        measurement: MeasurementNoise {
            bearing: 1e-12,
            inverse_depth: 1e-12,
        },
        initial_pose_variance: 0.0,
        landmark_variance_floor: 1e-12,
    };
    let mut ekf = Ekf::with_state(&truth, DMatrix::zeros(6 + 18, 6 + 18), tiny).unwrap();
    let u = Twist::new(Vector3::new(0.0, 0.0, 0.05), Vector3::new(0.05, 0.0, 0.0));
    for k in 0..50 {
        let out = measure(&truth).unwrap();
        let frame = MeasurementFrame {
            time: k as f64 * 0.1,
            velocity: u,
            landmarks: out
                .landmarks
                .iter()
                .map(|o| {
                    Some(LandmarkMeasurement {
                        output: *o,
                        flow: Vector3::zeros(),
                    })
                })
                .collect(),
        };
        ekf.step(&frame, 0.1).unwrap();
        truth = propagate(&truth, &u, 0.1).unwrap();
    }
    let err = (ekf.pose().homogeneous() - truth.pose.homogeneous()).amax();
    assert!(err < 1e-9, "pose error {err:e}");
    for i in 0..6 {
        assert!((ekf.landmark(i).unwrap() - truth.landmarks[i]).norm() < 1e-9);
    }
}

#[test]
fn with_state_rejects_wrong_covariance_shape() {
    let mut r = rng(1);
    let s: TotalState = state(&mut r, 2);
    let config = vslam_core::sim::ekf_config_for(&vslam_core::system::NoiseVariances::comparison());
    assert!(Ekf::with_state(&s, DMatrix::zeros(6, 6), config).is_err());
}
