//! Attitude representations and the rotation primitives shared by the rest of
//! the crate.
//!
//! Conventions: right-handed frames, active rotations, body attitude in Z-Y-X
//! (yaw, pitch, roll) order so that `R = Rz(yaw) * Ry(pitch) * Rx(roll)` maps
//! body-frame vectors into the world frame.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Distance from ±90° pitch below which the Euler-rate map is refused.
pub const GIMBAL_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum GeometryError {
    #[error("gimbal singularity: pitch {pitch} rad is within {GIMBAL_MARGIN} rad of ±pi/2")]
    GimbalSingularity { pitch: f64 },
}

/// Roll, pitch and yaw in radians.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const ZERO: Self = Self {
        roll: 0.0,
        pitch: 0.0,
        yaw: 0.0,
    };

    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    /// A frame tilt: roll and pitch with the yaw axis locked by the joint.
    pub fn tilt(roll: f64, pitch: f64) -> Self {
        Self::new(roll, pitch, 0.0)
    }

    pub fn to_vec(self) -> Vec3 {
        Vec3::new(self.roll, self.pitch, self.yaw)
    }

    pub fn from_vec(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.yaw.is_finite()
    }

    /// Component-wise difference with the yaw term taken on the circle.
    pub fn error_to(&self, target: &EulerAngles) -> Vec3 {
        Vec3::new(
            wrap_angle(target.roll - self.roll),
            target.pitch - self.pitch,
            wrap_angle(target.yaw - self.yaw),
        )
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// A proper orthonormal 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Largest elementwise deviation of `RᵀR` from identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).amax()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Recovers Z-Y-X Euler angles. Pitch is in [-pi/2, pi/2], roll and yaw in
    /// (-pi, pi].
    pub fn to_euler(&self) -> EulerAngles {
        let m = &self.0;
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        EulerAngles::new(wrap_angle(roll), pitch, wrap_angle(yaw))
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

pub fn rot_x(angle: f64) -> RotationMatrix {
    let (s, c) = angle.sin_cos();
    RotationMatrix(Mat3::new(
        1.0, 0.0, 0.0, //
        0.0, c, -s, //
        0.0, s, c,
    ))
}

pub fn rot_y(angle: f64) -> RotationMatrix {
    let (s, c) = angle.sin_cos();
    RotationMatrix(Mat3::new(
        c, 0.0, s, //
        0.0, 1.0, 0.0, //
        -s, 0.0, c,
    ))
}

pub fn rot_z(angle: f64) -> RotationMatrix {
    let (s, c) = angle.sin_cos();
    RotationMatrix(Mat3::new(
        c, -s, 0.0, //
        s, c, 0.0, //
        0.0, 0.0, 1.0,
    ))
}

/// Rotation from a tilting rotor frame into its parallel body-fixed frame:
/// roll about X composed with pitch about Y, `Rx(roll) * Ry(pitch)`.
///
/// Tilt limits are not enforced here; the mechanical stop lives in the
/// dynamics.
pub fn frame_tilt_rotation(roll: f64, pitch: f64) -> RotationMatrix {
    rot_x(roll) * rot_y(pitch)
}

/// Body-to-world rotation, `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn body_rotation(att: &EulerAngles) -> RotationMatrix {
    let (sr, cr) = att.roll.sin_cos();
    let (sp, cp) = att.pitch.sin_cos();
    let (sy, cy) = att.yaw.sin_cos();
    RotationMatrix(Mat3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    ))
}

/// Kinematic map from body rates to Z-Y-X Euler-angle rates:
/// `(roll_dot, pitch_dot, yaw_dot) = E * omega_body`.
pub fn euler_rate_matrix(att: &EulerAngles) -> Result<Mat3, GeometryError> {
    if att.pitch.abs() >= FRAC_PI_2 - GIMBAL_MARGIN {
        return Err(GeometryError::GimbalSingularity { pitch: att.pitch });
    }
    let (sr, cr) = att.roll.sin_cos();
    let (sp, cp) = att.pitch.sin_cos();
    let tp = sp / cp;
    Ok(Mat3::new(
        1.0,
        sr * tp,
        cr * tp,
        0.0,
        cr,
        -sr,
        0.0,
        sr / cp,
        cr / cp,
    ))
}

/// Skew-symmetric cross-product matrix, `skew(a) * b == a x b`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}
