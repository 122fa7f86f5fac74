//! Stereo pinhole camera and SE(3)/SO(3) Lie-group arithmetic.
//!
//! Twists are ordered `[rho, phi]`: the first three components are the
//! translational part and the last three the rotation vector (axis times
//! angle, radians). Covariances are always expressed in `(x, y, z)` order.

use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this rotation angle the SO(3) log switches to its Taylor expansion.
const LOG_TAYLOR_ANGLE: f64 = 1e-7;
/// Below this angle the coefficients of the SE(3) left Jacobian use series.
const SERIES_ANGLE: f64 = 1e-2;
/// Rotations this close to pi have no unique logarithm.
pub const LOG_ANGLE_LIMIT: f64 = std::f64::consts::PI - 1e-6;

/// Pinhole intrinsics of the left camera of a rectified stereo pair, plus
/// the stereo baseline in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
    pub width: u32,
    pub height: u32,
}

impl StereoCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64, width: u32, height: u32) -> Result<Self> {
        let cam = StereoCamera {
            fx,
            fy,
            cx,
            cy,
            baseline,
            width,
            height,
        };
        cam.validate("camera")?;
        Ok(cam)
    }

    /// Checks the type invariants, reporting the offending field under
    /// `prefix`.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return Err(Error::config(field("fx"), "must be positive"));
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::config(field("fy"), "must be positive"));
        }
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return Err(Error::config(field("baseline"), "must be positive"));
        }
        if self.width == 0 {
            return Err(Error::config(field("width"), "must be positive"));
        }
        if self.height == 0 {
            return Err(Error::config(field("height"), "must be positive"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(Error::config(field("cx"), "must lie strictly inside (0, width)"));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::config(field("cy"), "must lie strictly inside (0, height)"));
        }
        Ok(())
    }

    /// Lifts pixel `(u, v)` at metric depth `d` to a camera-frame point.
    pub fn backproject(&self, u: f64, v: f64, d: f64) -> Result<Vec3> {
        if !(d > 0.0) {
            return Err(Error::Domain(format!("depth must be positive, got {d}")));
        }
        Ok(Vec3::new((u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d))
    }

    /// Pinhole projection; returns `(u, v, depth)`.
    pub fn project(&self, p: &Vec3) -> Result<(f64, f64, f64)> {
        if !(p.z > 0.0) {
            return Err(Error::Domain(format!("point behind camera (z = {})", p.z)));
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues formula.
pub fn so3_exp(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let (a, b) = if theta < SERIES_ANGLE {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k * k * b
}

/// Rotation angle of `r` in `[0, pi]`, computed with `atan2` so that it stays
/// accurate near zero and near pi.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let s = vee(&(r - r.transpose())).norm() * 0.5;
    let c = (r.trace() - 1.0) * 0.5;
    s.atan2(c)
}

/// Inverse of [`so3_exp`] for rotations with angle below [`LOG_ANGLE_LIMIT`].
pub fn so3_log(r: &Mat3) -> Result<Vec3> {
    let theta = rotation_angle(r);
    if theta >= LOG_ANGLE_LIMIT {
        return Err(Error::Domain(format!(
            "rotation angle {theta} is too close to pi for a unique logarithm"
        )));
    }
    let axis2 = vee(&(r - r.transpose()));
    if theta < LOG_TAYLOR_ANGLE {
        // theta / (2 sin theta) = 1/2 + theta^2 / 12 + O(theta^4)
        Ok(axis2 * (0.5 + theta * theta / 12.0))
    } else {
        Ok(axis2 * (theta / (2.0 * theta.sin())))
    }
}

fn series_coefficients(theta: f64) -> (f64, f64) {
    let theta2 = theta * theta;
    if theta < SERIES_ANGLE {
        (
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
            1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0,
        )
    } else {
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    }
}

/// Left Jacobian of SO(3), which maps the translational part of a twist onto
/// the translation of its exponential.
pub fn so3_left_jacobian(w: &Vec3) -> Mat3 {
    let (b, c) = series_coefficients(w.norm());
    let k = hat(w);
    Mat3::identity() + k * b + k * k * c
}

pub fn so3_left_jacobian_inv(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let k = hat(w);
    let coeff = if theta < SERIES_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0 + theta.powi(4) / 30240.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / (theta * theta)
    };
    Mat3::identity() - k * 0.5 + k * k * coeff
}

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        PoseSE3 {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose, checking that `rotation` is a proper rotation to 1e-9.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Mat3::identity()).amax();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("not a rotation matrix (|RtR - I| = {ortho:e}, det = {det})")));
        }
        Ok(PoseSE3 { rotation, translation })
    }

    pub fn from_parts(rotation_vector: Vec3, translation: Vec3) -> Self {
        PoseSE3 {
            rotation: so3_exp(&rotation_vector),
            translation,
        }
    }

    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Self {
        // q = [qx, qy, qz, qw], TUM ordering
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]));
        PoseSE3 {
            rotation: *uq.to_rotation_matrix().matrix(),
            translation,
        }
    }

    /// Unit quaternion `[qx, qy, qz, qw]` with `qw >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
        [q.i * sign, q.j * sign, q.k * sign, q.w * sign]
    }

    pub fn exp(xi: &Vec6) -> Self {
        let rho = Vec3::new(xi[0], xi[1], xi[2]);
        let phi = Vec3::new(xi[3], xi[4], xi[5]);
        PoseSE3 {
            rotation: so3_exp(&phi),
            translation: so3_left_jacobian(&phi) * rho,
        }
    }

    pub fn log(&self) -> Result<Vec6> {
        let phi = so3_log(&self.rotation)?;
        let rho = so3_left_jacobian_inv(&phi) * self.translation;
        Ok(Vec6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z))
    }

    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Pose with the same rotation and translation multiplied by `s`.
    pub fn scaled(&self, s: f64) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation,
            translation: self.translation * s,
        }
    }

    /// Geodesic rotation angle plus translation norm of `self^-1 * other`,
    /// the distance used to compare recovered and reference poses.
    pub fn distance(&self, other: &PoseSE3) -> (f64, f64) {
        let rot = rotation_angle(&(self.rotation.transpose() * other.rotation));
        let trans = (self.translation - other.translation).norm();
        (rot, trans)
    }

    /// Re-orthonormalizes the rotation through its polar decomposition.
    pub fn renormalized(&self) -> PoseSE3 {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        PoseSE3 {
            rotation: r,
            translation: self.translation,
        }
    }
}

impl Mul for PoseSE3 {
    type Output = PoseSE3;
    fn mul(self, rhs: PoseSE3) -> PoseSE3 {
        self.compose(&rhs)
    }
}

impl Mul<&PoseSE3> for &PoseSE3 {
    type Output = PoseSE3;
    fn mul(self, rhs: &PoseSE3) -> PoseSE3 {
        self.compose(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Camera,
    World,
}

/// A 3D point with a full 3x3 covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark3D {
    pub position: Vec3,
    pub covariance: Mat3,
    pub frame: Frame,
}

impl Landmark3D {
    pub fn new(position: Vec3, covariance: Mat3, frame: Frame) -> Self {
        Landmark3D {
            position,
            covariance,
            frame,
        }
    }
}

/// Moves a camera-frame landmark into the world frame of `pose`: the point is
/// transformed and its covariance conjugated by the rotation.
pub fn transform_landmark(pose: &PoseSE3, landmark: &Landmark3D) -> Result<Landmark3D> {
    if landmark.frame != Frame::Camera {
        return Err(Error::Domain("transform_landmark expects a camera-frame landmark".into()));
    }
    let r = &pose.rotation;
    let cov = r * landmark.covariance * r.transpose();
    Ok(Landmark3D {
        position: pose.transform_point(&landmark.position),
        covariance: (cov + cov.transpose()) * 0.5,
        frame: Frame::World,
    })
}
