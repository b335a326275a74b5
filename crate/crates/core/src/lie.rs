//! Matrix Lie-group primitives: SO(3), SE(3), and the multiplicative positive reals.
//!
//! Rotations are stored as 3×3 matrices. Every product is checked against
//! [`ORTHOGONALITY_TOLERANCE`] and projected back onto SO(3) when it drifts.
//! Twists are ordered `(Ω, V)`: angular part first, then linear.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Matrix6, Rotation3, Vector3, Vector6};

use crate::error::{Error, Result};

/// Maximum entry of `R·Rᵀ − I` (and `|det R − 1|`) accepted for a rotation.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

/// Maximum deviation of `|y|` from one accepted for a unit vector.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Below this rotation angle (rad) the exponential and logarithm switch to series forms.
pub const SMALL_ANGLE: f64 = 1e-8;

/// The matrix `v^×` with `v^× w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; reads the antisymmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Projector `I − yyᵀ` onto the tangent plane of the sphere at `y`.
pub fn projector(y: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_unit(y)?;
    Ok(Matrix3::identity() - y * y.transpose())
}

pub(crate) fn check_unit(y: &Vector3<f64>) -> Result<()> {
    let norm = y.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
        return Err(Error::NotUnit { norm });
    }
    Ok(())
}

/// Tangent-plane projector without the unit-norm check, for bearings that are
/// already known to be normalized.
pub(crate) fn projector_unchecked(y: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - y * y.transpose()
}

fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    let gram = m * m.transpose() - Matrix3::identity();
    gram.amax().max((m.determinant() - 1.0).abs())
}

/// Nearest rotation in the Frobenius sense (polar decomposition).
fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` only if it is a rotation within [`ORTHOGONALITY_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let defect = orthogonality_defect(&m);
        if !(defect <= ORTHOGONALITY_TOLERANCE) {
            return Err(Error::NotRotation {
                defect,
                det: m.determinant(),
            });
        }
        Ok(Self(m))
    }

    /// Projects an arbitrary nonsingular matrix onto the nearest rotation.
    pub fn from_matrix_projected(m: &Matrix3<f64>) -> Self {
        Self(project_to_rotation(m))
    }

    fn renormalized(m: Matrix3<f64>) -> Self {
        if orthogonality_defect(&m) > ORTHOGONALITY_TOLERANCE {
            Self(project_to_rotation(&m))
        } else {
            Self(m)
        }
    }

    /// Smallest rotation `R` with `R · from = to`, for unit vectors.
    /// Antipodal pairs rotate by π about an arbitrary perpendicular axis.
    pub fn between(from: &Vector3<f64>, to: &Vector3<f64>) -> Self {
        let axis = from.cross(to);
        let angle = axis.norm().atan2(from.dot(to));
        if axis.norm() > SMALL_ANGLE {
            return Self::exp(&(axis.normalize() * angle), 1.0);
        }
        if angle < FRAC_PI_2 {
            // Nearly aligned: the first-order axis is exact enough.
            return Self::exp(&axis, 1.0);
        }
        let seed = if from.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        Self::exp(&(from.cross(&seed).normalize() * angle), 1.0)
    }

    /// Rodrigues exponential of `dt · Ω^×`.
    pub fn exp(omega: &Vector3<f64>, dt: f64) -> Self {
        let phi = omega * dt;
        let theta = phi.norm();
        let k = skew(&phi);
        let k2 = k * k;
        let (a, b) = if theta < SMALL_ANGLE {
            (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
        };
        Self::renormalized(Matrix3::identity() + k * a + k2 * b)
    }

    /// Rotation vector `φ` with `exp(φ, 1) = self`, `|φ| ≤ π`.
    /// Rotation vector with angle in `[0, π]`.
    pub fn log(&self) -> Vector3<f64> {
        // atan2 keeps full precision near the identity, where acos of the trace does not.
        let m = &self.0;
        let v = 0.5 * vee(&(m - m.transpose()));
        let sin = v.norm();
        let cos = 0.5 * (m.trace() - 1.0);
        let angle = sin.atan2(cos);
        if angle < SMALL_ANGLE {
            v * (1.0 + sin * sin / 6.0)
        } else if angle < PI - 1e-4 {
            v * (angle / sin)
        } else {
            Rotation3::from_matrix_unchecked(*m).scaled_axis()
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn transpose(&self) -> Matrix3<f64> {
        self.0.transpose()
    }

    /// Largest violation of the rotation invariants.
    pub fn defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation::renormalized(self.0 * rhs.0)
    }
}

impl Mul<&Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: &Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Body-fixed velocity `(Ω, V)` of a rigid body, an element of se(3).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub angular: Vector3<f64>,
    pub linear: Vector3<f64>,
}

impl Twist {
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Self { angular, linear }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Stacked coordinates `(Ω; V)`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            angular: v.fixed_rows::<3>(0).into_owned(),
            linear: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    /// 4×4 matrix `(Ω^×, V; 0, 0)`.
    pub fn wedge(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&self.angular));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.linear);
        m
    }

    /// Reads a twist back out of its 4×4 matrix form.
    pub fn vee(m: &Matrix4<f64>) -> Self {
        Self {
            angular: vee(&m.fixed_view::<3, 3>(0, 0).into_owned()),
            linear: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

impl Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.angular + rhs.angular, self.linear + rhs.linear)
    }
}

impl Sub for Twist {
    type Output = Twist;
    fn sub(self, rhs: Twist) -> Twist {
        Twist::new(self.angular - rhs.angular, self.linear - rhs.linear)
    }
}

impl Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.angular, -self.linear)
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist::new(self.angular * s, self.linear * s)
    }
}

/// Left Jacobian of SO(3) evaluated at the rotation vector `phi`.
fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let (b, c) = if theta < SMALL_ANGLE {
        (0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + k * b + k * k * c
}

fn so3_left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Rigid-body transform `P = (R_P, x_P; 0, 1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Rotation::identity(), translation)
    }

    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self> {
        let rotation = Rotation::from_matrix(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Self::new(rotation, m.fixed_view::<3, 1>(0, 3).into_owned()))
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.matrix() * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.inverse();
        Pose {
            translation: -(rt.matrix() * self.translation),
            rotation: rt,
        }
    }

    /// Maps a point from body coordinates to the reference frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix() * p + self.translation
    }

    /// Closed-form exponential of `dt · U^∧`.
    pub fn exp(twist: &Twist, dt: f64) -> Pose {
        let phi = twist.angular * dt;
        let rotation = Rotation::exp(&phi, 1.0);
        let translation = so3_left_jacobian(&phi) * (twist.linear * dt);
        Pose::new(rotation, translation)
    }

    /// Twist `U` with `exp(U, 1) = self`.
    pub fn log(&self) -> Twist {
        let phi = self.rotation.log();
        Twist::new(phi, so3_left_jacobian_inverse(&phi) * self.translation)
    }

    /// Adjoint matrix acting on `(Ω; V)` coordinates:
    /// `Ad_A · vee(U) = vee(A · U^∧ · A⁻¹)`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation.matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(skew(&self.translation) * r));
        ad
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// Element of the multiplicative group of positive reals.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PositiveScalar(f64);

impl Default for PositiveScalar {
    fn default() -> Self {
        Self::one()
    }
}

impl PositiveScalar {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::NotPositive(value))
        }
    }

    pub fn one() -> Self {
        Self(1.0)
    }

    /// `exp(rate · dt)`, saturated to stay strictly positive and finite.
    pub fn exp(rate: f64, dt: f64) -> Self {
        Self((rate * dt).exp().clamp(f64::MIN_POSITIVE, f64::MAX))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn inverse(self) -> Self {
        Self(1.0 / self.0)
    }
}

impl Mul for PositiveScalar {
    type Output = PositiveScalar;
    fn mul(self, rhs: PositiveScalar) -> PositiveScalar {
        PositiveScalar(self.0 * rhs.0)
    }
}
