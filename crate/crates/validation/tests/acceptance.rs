//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vslam_cli::commands::{bench, compare, fig2};
use vslam_cli::config::{Command, Options, RunConfig};
use vslam_cli::verify::{self, VerifyOptions};
use vslam_core::ekf::{linearize_measurement, process_jacobian};
use vslam_core::estimate::{EstimatorKind, MapEstimate};
use vslam_core::group::{predicted_flow, state_action, GroupElement, LandmarkTransform, TotalState};
use vslam_core::lie::{Pose, PositiveScalar, Rotation, Twist};
use vslam_core::observer::{Gains, Observer};
use vslam_core::sim::{rmse, Complexity};
use vslam_core::system::{measure, measure_landmark, LandmarkMeasurement, MeasurementFrame};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
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

fn configuration(rng: &mut ChaCha8Rng, n: usize) -> TotalState {
    let pose = pose(rng);
    let landmarks = (0..n)
        .map(|_| {
            let dir = vector(rng, 1.0).normalize();
            pose.transform_point(&(dir * rng.random_range(0.3..3.0)))
        })
        .collect();
    TotalState::new(pose, landmarks).unwrap()
}

fn element(rng: &mut ChaCha8Rng, n: usize) -> GroupElement {
    GroupElement::new(
        pose(rng),
        (0..n)
            .map(|_| {
                LandmarkTransform::new(
                    Rotation::exp(&vector(rng, 3.0), 1.0),
                    PositiveScalar::new(rng.random_range(0.5..2.0)).unwrap(),
                )
            })
            .collect(),
    )
}

fn exact_frame(truth: &TotalState, twist: &Twist) -> MeasurementFrame {
    let out = measure(truth).unwrap();
    let flows = predicted_flow(&out, twist);
    MeasurementFrame {
        time: 0.0,
        velocity: *twist,
        landmarks: out
            .landmarks
            .iter()
            .zip(flows)
            .map(|(o, flow)| Some(LandmarkMeasurement { output: *o, flow }))
            .collect(),
    }
}

fn temp_config(command: Command, dir: &tempfile::TempDir, options: Options) -> RunConfig {
    let options = Options {
        out: Some(dir.path().to_path_buf()),
        ..options
    };
    RunConfig::resolve(command, &options).unwrap()
}

fn c1_equivariance() -> Outcome {
    let check = verify::equivariance(&VerifyOptions::default()).unwrap();
    outcome(
        check.max_residual < 1e-9 && check.seconds < 1.0,
        format!(
            "max residual {:.2e} (< 1e-9) over {} samples, n = 10; {:.3} s (< 1 s)",
            check.max_residual, check.samples, check.seconds
        ),
    )
}

fn c2_lift_condition() -> Outcome {
    let check = verify::lift_condition(&VerifyOptions::default()).unwrap();
    outcome(
        check.max_residual < 1e-6 && check.samples == 200 && check.seconds < 5.0,
        format!(
            "max residual {:.2e} (< 1e-6, step {:.0e}) over {} samples; {:.3} s (< 5 s)",
            check.max_residual,
            verify::LIFT_STEP,
            check.samples,
            check.seconds
        ),
    )
}

fn c3_convergence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(Command::Fig2, &dir, Options::default());
    let start = Instant::now();
    let out = fig2::run(&config).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let gains = config.scenario.gains;

    let monotone = out.max_increase < 1e-12;
    let depth_bound = -2.0 * gains.inverse_depth * 0.9;
    let depth_worst = out
        .tails
        .iter()
        .map(|t| t.depth_slope.unwrap_or(f64::INFINITY))
        .fold(f64::NEG_INFINITY, f64::max);
    let depth_ok = depth_worst <= depth_bound;
    // Bearing storage obeys d/dt ln l_y = -k_Q (2 - l_y); the bound is that rate at the window start.
    let bearing_margin = out
        .tails
        .iter()
        .map(|t| match (t.bearing_slope, t.bearing_at_start) {
            (Some(s), Some(l0)) => s - (-0.9 * gains.bearing * (2.0 - l0)),
            _ => f64::INFINITY,
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let bearing_ok = bearing_margin <= 0.0;
    let bearing_worst = out
        .tails
        .iter()
        .filter_map(|t| t.bearing_slope)
        .fold(f64::NEG_INFINITY, f64::max);
    let ratio = out.final_ratio.unwrap_or(f64::INFINITY);
    let decay_ok = ratio < 1e-6;
    let fast = seconds < 1.0;

    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };
    outcome(
        monotone && depth_ok && bearing_ok && decay_ok && fast,
        format!(
            "largest step increase {:.2e} (< 1e-12) {}; worst l_z tail slope {:.4} (<= {:.3}) {}; \
             l_y tail slopes within -0.9 k_Q (2 - l_y(t0)) (worst {:.4}, margin {:.4}) {}; \
             L(T)/L(0) {:.2e} (< 1e-6) {}; {:.3} s (< 1 s) {}",
            out.max_increase,
            mark(monotone),
            depth_worst,
            depth_bound,
            mark(depth_ok),
            bearing_worst,
            bearing_margin,
            mark(bearing_ok),
            ratio,
            mark(decay_ok),
            seconds,
            mark(fast)
        ),
    )
}

fn c4_zero_innovation() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut degenerate = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 + (seed as usize % 8);
        let truth = configuration(&mut rng, n);
        let x_hat = element(&mut rng, n);
        let origin = state_action(&x_hat.inverse(), &truth).unwrap();
        let mut observer = Observer::with_reference(&origin, Gains::comparison()).unwrap();
        observer.set_estimate(x_hat).unwrap();
        let u = Twist::new(vector(&mut rng, 0.5), vector(&mut rng, 0.5));
        let innovation = observer.innovation(&exact_frame(&truth, &u)).unwrap();
        degenerate += usize::from(innovation.degenerate);
        worst = worst.max(innovation.pose.to_vector().amax());
        for d in &innovation.landmarks {
            worst = worst.max(d.rotation.amax()).max(d.scale.abs());
        }
    }
    outcome(
        worst < 1e-10 && degenerate == 0,
        format!("largest innovation entry {worst:.2e} (< 1e-10) over 100 configurations, n in 3..=10; {degenerate} degenerate"),
    )
}

fn c5_gauge_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let truth = configuration(&mut rng, 8);
        let estimate = configuration(&mut rng, 8);
        let g = GroupElement::new(pose(&mut rng), vec![LandmarkTransform::identity(); 8]);
        let before = rmse(&MapEstimate::from(&estimate), &truth).unwrap();
        let after = rmse(&MapEstimate::from(&state_action(&g, &estimate).unwrap()), &truth).unwrap();
        worst = worst.max((before - after).abs());
    }
    outcome(
        worst < 1e-10,
        format!("largest RMSE change {worst:.2e} (< 1e-10) over 100 cases"),
    )
}

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

fn c6_ekf_jacobians() -> Outcome {
    let h = 1e-6;
    let perturb = |p: &Pose, xi: &Vector6<f64>| *p * Pose::exp(&Twist::from_vector(xi), 1.0);
    let (mut process, mut measurement): (f64, f64) = (0.0, 0.0);
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let truth = configuration(&mut rng, 1);
        let (p, l) = (truth.pose, truth.landmarks[0]);

        let u = Twist::new(vector(&mut rng, 1.0), vector(&mut rng, 1.0));
        let dt = rng.random_range(0.05..1.0);
        let step = Pose::exp(&u, dt);
        let next = p * step;
        let f = |xi: &Vector6<f64>| (next.inverse() * perturb(&p, xi) * step).log().to_vector();
        let mut numeric = Matrix6::zeros();
        for j in 0..6 {
            let e = Vector6::ith(j, h);
            numeric.set_column(j, &((f(&e) - f(&-e)) / (2.0 * h)));
        }
        process = process.max(relative_error(process_jacobian(&u, dt).as_slice(), numeric.as_slice()));

        let lin = linearize_measurement(0, &p, &l).unwrap();
        let g = |pose: &Pose, landmark: &Vector3<f64>| lin.residual(&measure_landmark(0, pose, landmark).unwrap());
        let mut pose_numeric = Matrix3x6::zeros();
        for j in 0..6 {
            let e = Vector6::ith(j, h);
            pose_numeric.set_column(j, &((g(&perturb(&p, &e), &l) - g(&perturb(&p, &-e), &l)) / (2.0 * h)));
        }
        let mut landmark_numeric = Matrix3::zeros();
        for j in 0..3 {
            let e = Vector3::ith(j, h);
            landmark_numeric.set_column(j, &((g(&p, &(l + e)) - g(&p, &(l - e))) / (2.0 * h)));
        }
        measurement = measurement
            .max(relative_error(lin.pose_jacobian.as_slice(), pose_numeric.as_slice()))
            .max(relative_error(
                lin.landmark_jacobian.as_slice(),
                landmark_numeric.as_slice(),
            ));
    }
    outcome(
        process < 1e-5 && measurement < 1e-5,
        format!(
            "largest relative error: process {process:.2e}, measurement {measurement:.2e} (< 1e-5) over 200 states"
        ),
    )
}

fn c7_rmse_comparison() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(Command::Compare, &dir, Options::default());
    let start = Instant::now();
    let out = compare::run(&config).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let (Some(obs), Some(ekf)) = (
        out.stats_for(EstimatorKind::Observer),
        out.stats_for(EstimatorKind::Ekf),
    ) else {
        return outcome(false, format!("missing finite RMSE values: {:?}", out.unusable));
    };
    let ratio = obs.median / ekf.median;
    let within = (1.0 / 3.0..=3.0).contains(&ratio);
    let outliers = obs.outliers.len() <= ekf.outliers.len();
    let fast = seconds < 120.0;
    outcome(
        within && outliers && fast,
        format!(
            "{} landmarks, {} trials: median final RMSE observer {:.4e} / EKF {:.4e} = {:.3} (within 3x: {}); \
             outliers observer {} vs EKF {} (observer <= EKF: {}); {:.1} s (< 120 s)",
            config.counts[0],
            config.trials,
            obs.median,
            ekf.median,
            ratio,
            within,
            obs.outliers.len(),
            ekf.outliers.len(),
            outliers,
            seconds
        ),
    )
}

fn c8_complexity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let options = Options {
        sequential: true,
        ..Options::default()
    };
    let config = temp_config(Command::Bench, &dir, options);
    let start = Instant::now();
    let out = bench::run(&config).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let fit = |kind| out.timing(kind).and_then(|t| t.fit.clone());
    let (Some(obs), Some(ekf)) = (fit(EstimatorKind::Observer), fit(EstimatorKind::Ekf)) else {
        return outcome(false, "timing fits unavailable".into());
    };
    let linear_ok = obs.linear.r_squared >= 0.95;
    let c2 = ekf.quadratic.coefficients[2];
    let quadratic_ok = ekf.preferred == Complexity::Quadratic && c2 > 0.0;
    let fast = seconds < 600.0;
    outcome(
        linear_ok && quadratic_ok && fast,
        format!(
            "n = {:?}: observer linear R2 {:.4} (>= 0.95); EKF AIC quadratic {:.1} vs linear {:.1}, c2 {:.3e} (> 0); {:.1} s sequential (< 600 s)",
            config.counts, obs.linear.r_squared, ekf.quadratic.aic, ekf.linear.aic, c2, seconds
        ),
    )
}

fn antipodal_observer(angle: f64) -> (Observer, MeasurementFrame) {
    let truth = TotalState::new(
        Pose::identity(),
        vec![
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(1.0, 0.0, 1.5),
            Vector3::new(0.0, -1.0, 1.0),
        ],
    )
    .unwrap();
    let frame = exact_frame(&truth, &Twist::zero());
    let mut observer = Observer::with_reference(&truth, Gains::convergence()).unwrap();
    let mut x = GroupElement::identity(3);
    x.landmarks[0] = LandmarkTransform::new(Rotation::exp(&(Vector3::x() * angle), 1.0), PositiveScalar::one());
    observer.set_estimate(x).unwrap();
    (observer, frame)
}

fn c9_antipode() -> Outcome {
    let (mut exact, frame) = antipodal_observer(PI);
    let origin = *exact.origin_output(0).unwrap().bearing();
    let measured = frame.landmarks[0].unwrap().output;
    let mut drift: f64 = 0.0;
    for _ in 0..100 {
        exact.step(&frame, 0.5).unwrap();
        let e = exact.output_error(0, &measured).unwrap();
        drift = drift.max((e.bearing() + origin).norm());
    }

    let (mut perturbed, frame) = antipodal_observer(PI - 1e-6);
    let mut steps = 0;
    let mut distance = f64::INFINITY;
    while steps < 5000 {
        perturbed.step(&frame, 0.5).unwrap();
        steps += 1;
        distance = (perturbed.output_error(0, &measured).unwrap().bearing() - origin).norm();
        if distance < 1e-6 {
            break;
        }
    }
    outcome(
        drift < 1e-9 && distance < 1e-6,
        format!(
            "exact antipode moved {drift:.2e} over 100 steps; 1e-6 perturbation reached |e_y - y0| = {distance:.2e} after {steps} steps"
        ),
    )
}

fn c10_determinism() -> Outcome {
    let read = |dir: &tempfile::TempDir| {
        let config = temp_config(Command::Fig2, dir, Options::default());
        fig2::run(&config).unwrap();
        [fig2::CSV_NAME, fig2::LINEAR_SVG, fig2::LOG_SVG].map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, second) = (read(&a), read(&b));
    outcome(
        first == second && !first[0].is_empty(),
        format!(
            "two fig2 runs with seed 1: {} CSV bytes, byte-identical CSV {} and SVGs {}",
            first[0].len(),
            first[0] == second[0],
            first[1..] == second[1..]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("equivariance", c1_equivariance),
        ("lift condition", c2_lift_condition),
        ("noise-free convergence", c3_convergence),
        ("zero innovation at truth", c4_zero_innovation),
        ("RMSE gauge invariance", c5_gauge_invariance),
        ("EKF Jacobians", c6_ekf_jacobians),
        ("RMSE comparison", c7_rmse_comparison),
        ("step-time complexity", c8_complexity),
        ("antipodal instability", c9_antipode),
        ("determinism", c10_determinism),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        println!(
            "criterion {:>2} {} {name}: {}",
            k + 1,
            if result.passed { "PASS" } else { "FAIL" },
            result.detail
        );
        if !result.passed {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: {} of 10 criteria fail: {failed:?}", failed.len());
        std::process::exit(1);
    }
}
