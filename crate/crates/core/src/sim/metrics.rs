//! Error metrics and summary statistics.
//!
//! Estimates are only determined up to a rigid motion of the whole map, so the
//! primary error is measured on landmarks expressed in the (estimated or true)
//! body frame, which that motion leaves unchanged.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::estimate::MapEstimate;
use crate::group::TotalState;

impl From<&TotalState> for MapEstimate {
    fn from(state: &TotalState) -> Self {
        MapEstimate {
            pose: state.pose,
            landmarks: state.landmarks.iter().copied().map(Some).collect(),
        }
    }
}

/// Root-mean-square body-frame landmark error over initialized landmarks;
/// `None` when the estimate has none.
pub fn rmse(estimate: &MapEstimate, truth: &TotalState) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..truth.len() {
        if let Some(body) = estimate.body_landmark(i) {
            sum += (body - truth.body_landmark(i)).norm_squared();
            count += 1;
        }
    }
    (count > 0).then(|| (sum / count as f64).sqrt())
}

/// Inertial landmark RMSE after the rigid motion that best aligns the
/// estimated map with the true one. Needs at least three initialized landmarks.
pub fn aligned_rmse(estimate: &MapEstimate, truth: &TotalState) -> Option<f64> {
    let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = estimate
        .landmarks
        .iter()
        .zip(&truth.landmarks)
        .filter_map(|(e, t)| e.map(|e| (e, *t)))
        .collect();
    if pairs.len() < 3 {
        return None;
    }
    let n = pairs.len() as f64;
    let mean_e = pairs.iter().map(|p| p.0).sum::<Vector3<f64>>() / n;
    let mean_t = pairs.iter().map(|p| p.1).sum::<Vector3<f64>>() / n;
    let cross: Matrix3<f64> = pairs.iter().map(|(e, t)| (t - mean_t) * (e - mean_e).transpose()).sum();
    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let sum: f64 = pairs
        .iter()
        .map(|(e, t)| (rotation * (e - mean_e) + mean_t - t).norm_squared())
        .sum();
    Some((sum / n).sqrt())
}

/// Sample quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile(&sorted, 0.5))
}

/// Boxplot summary with Tukey whiskers at 1.5 IQR.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Most extreme samples inside the fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn new(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile(&sorted, 0.25);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = || sorted.iter().copied().filter(|v| (lo..=hi).contains(v));
        Some(Self {
            count: sorted.len(),
            min: sorted[0],
            q1,
            median: quantile(&sorted, 0.5),
            q3,
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            whisker_low: inside().next().unwrap_or(q1),
            whisker_high: inside().next_back().unwrap_or(q3),
            outliers: sorted.iter().copied().filter(|v| !(lo..=hi).contains(v)).collect(),
        })
    }
}

/// Least-squares polynomial `t = c₀ + c₁ n + …` with goodness-of-fit measures.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialFit {
    /// Ascending powers.
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub r_squared: f64,
    /// Akaike information criterion under Gaussian residuals.
    pub aic: f64,
}

impl PolynomialFit {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Complexity {
    Linear,
    Quadratic,
}

impl Complexity {
    pub fn name(self) -> &'static str {
        match self {
            Complexity::Linear => "linear",
            Complexity::Quadratic => "quadratic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityFit {
    pub linear: PolynomialFit,
    pub quadratic: PolynomialFit,
    /// Model with the lower AIC.
    pub preferred: Complexity,
}

pub fn polynomial_fit(points: &[(f64, f64)], degree: usize) -> Result<PolynomialFit> {
    let k = degree + 1;
    if points.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: points.len(),
        });
    }
    // Columns are scaled to unit max so the quadratic term stays well conditioned.
    let scale = points
        .iter()
        .map(|p| p.0.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let design = DMatrix::from_fn(points.len(), k, |r, c| (points[r].0 / scale).powi(c as i32));
    let target = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let scaled = design
        .clone()
        .svd(true, true)
        .solve(&target, 1e-12)
        .map_err(|e| Error::InvalidParameter(format!("least-squares solve failed: {e}")))?;
    let residual = &design * &scaled - &target;
    let n = points.len() as f64;
    let mean = target.mean();
    let tss: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
    let rss = residual.norm_squared();
    let floor = tss * 1e-20 + f64::MIN_POSITIVE;
    Ok(PolynomialFit {
        coefficients: scaled
            .iter()
            .enumerate()
            .map(|(c, v)| v / scale.powi(c as i32))
            .collect(),
        rss,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        aic: 2.0 * k as f64 + n * (rss.max(floor) / n).ln(),
    })
}

/// Fits linear and quadratic cost models to `(n, time)` samples.
pub fn complexity_fit(points: &[(f64, f64)]) -> Result<ComplexityFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: distinct.len(),
        });
    }
    let linear = polynomial_fit(points, 1)?;
    let quadratic = polynomial_fit(points, 2)?;
    let preferred = if quadratic.aic < linear.aic {
        Complexity::Quadratic
    } else {
        Complexity::Linear
    };
    Ok(ComplexityFit {
        linear,
        quadratic,
        preferred,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{Pose, Rotation};

    fn truth() -> TotalState {
        TotalState::new(
            Pose::new(
                Rotation::exp(&Vector3::new(0.0, 0.0, 0.4), 1.0),
                Vector3::new(0.3, -0.1, 0.0),
            ),
            vec![
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.5, 0.2),
                Vector3::new(-0.5, 0.4, 0.1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rmse_examples() {
        let t = truth();
        assert_eq!(rmse(&MapEstimate::from(&t), &t), Some(0.0));

        let mut moved = MapEstimate::from(&t);
        let body_shift = t.pose.rotation.matrix() * Vector3::new(0.0, 0.3, 0.0);
        moved.landmarks[1] = Some(t.landmarks[1] + body_shift);
        moved.landmarks[0] = None;
        moved.landmarks[2] = None;
        assert!((rmse(&moved, &t).unwrap() - 0.3).abs() < 1e-12);

        let empty = MapEstimate {
            pose: t.pose,
            landmarks: vec![None; 3],
        };
        assert_eq!(rmse(&empty, &t), None);
    }

    #[test]
    fn aligned_rmse_ignores_rigid_offset() {
        let t = truth();
        let g = Pose::new(
            Rotation::exp(&Vector3::new(0.2, -0.1, 0.7), 1.0),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let moved = MapEstimate {
            pose: g * t.pose,
            landmarks: t.landmarks.iter().map(|p| Some(g.transform_point(p))).collect(),
        };
        assert!(aligned_rmse(&moved, &t).unwrap() < 1e-12);
        assert!(rmse(&moved, &t).unwrap() < 1e-12);
    }

    #[test]
    fn quantiles_and_boxes() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 1.0), 4.0);
        let b = BoxStats::new(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0]).unwrap();
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_high, 5.0);
        assert_eq!(b.whisker_low, 1.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert!(BoxStats::new(&[]).is_none());
    }

    #[test]
    fn complexity_classification() {
        let ns = [10.0, 25.0, 50.0, 100.0, 200.0, 400.0];
        let linear: Vec<_> = ns.iter().map(|&n| (n, 3.0 + 0.5 * n)).collect();
        let fit = complexity_fit(&linear).unwrap();
        assert_eq!(fit.preferred, Complexity::Linear);
        assert!((fit.linear.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.linear.coefficients[1] - 0.5).abs() < 1e-9);

        let quad: Vec<_> = ns.iter().map(|&n| (n, 1.0 + 0.1 * n + 0.01 * n * n)).collect();
        let fit = complexity_fit(&quad).unwrap();
        assert_eq!(fit.preferred, Complexity::Quadratic);
        assert!((fit.quadratic.coefficients[2] - 0.01).abs() < 1e-9);
        assert!((fit.quadratic.evaluate(30.0) - (1.0 + 3.0 + 9.0)).abs() < 1e-9);

        assert!(matches!(
            complexity_fit(&linear[..3]),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }
}
