//! Zero-skew pinhole cameras with world-to-camera extrinsics, point-wise
//! (un)projection, and pose interpolation along a camera path.
//!
//! Pixel convention: integer `(u, v)` is the center of column `u`, row `v`,
//! and the homogeneous pixel is `[u, v, 1]`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when accepting user-supplied rotation matrices.
const ROTATION_TOL: f64 = 1e-6;

/// Below this `|z|` a projection is considered degenerate.
const MIN_PROJECTIVE_Z: f64 = 1e-12;

/// Continuous image-plane coordinate in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Result of projecting a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: PixelCoord,
    /// Camera-space depth `e3 . (R X + tau)`, returned as-is even when negative.
    pub depth: f64,
    pub behind: bool,
}

/// Pinhole camera `(K, R, tau)`; `R` and `tau` map world to camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        check_rotation(&rotation, ROTATION_TOL)?;
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        })
    }

    /// Camera with `K = I`, `R = I`, `tau = 0`.
    pub fn identity() -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a camera from its world-space center and world-to-camera rotation.
    pub fn from_center(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        center: Vector3<f64>,
    ) -> Result<Self> {
        let translation = -(rotation * center);
        Self::new(fx, fy, cx, cy, rotation, translation)
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Camera center in world coordinates, `c = -R^T tau`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Same intrinsics, new extrinsics.
    pub fn with_pose(&self, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            ..self.clone()
        }
    }

    /// `X = R^T (d K^-1 [u, v, 1] - tau)`.
    pub fn unproject(&self, p: PixelCoord, depth: f64) -> Result<Vector3<f64>> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::invalid(format!(
                "unprojection depth must be finite and positive, got {depth}"
            )));
        }
        Ok(self.unproject_unchecked(p.u, p.v, depth))
    }

    /// Unprojection without depth validation; callers guarantee `depth > 0`.
    #[inline]
    pub fn unproject_unchecked(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let ray = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        self.rotation.transpose() * (ray * depth - self.translation)
    }

    /// Point in camera coordinates.
    #[inline]
    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn project(&self, x: &Vector3<f64>) -> Result<Projection> {
        let xc = self.to_camera(x);
        if !xc.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("projected point must be finite"));
        }
        // The third row of K is e3, so the homogeneous z equals the camera depth.
        let z = xc.z;
        if z.abs() < MIN_PROJECTIVE_Z {
            return Err(Error::DegenerateProjection(z));
        }
        Ok(Projection {
            pixel: PixelCoord::new(self.fx * xc.x / z + self.cx, self.fy * xc.y / z + self.cy),
            depth: z,
            behind: z <= 0.0,
        })
    }
}

fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("rotation must be finite"));
    }
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > tol {
        return Err(Error::invalid(format!(
            "rotation is not orthonormal (max |R^T R - I| = {err:e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tol {
        return Err(Error::invalid(format!("rotation determinant is {det}, expected 1")));
    }
    Ok(())
}

/// Rotation quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let a = axis.normalize() * (angle * 0.5).sin();
        Self::new((angle * 0.5).cos(), a.x, a.y, a.z)
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    fn scaled(&self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    fn add(&self, o: &Quaternion) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(&self, other: &Quaternion, a: f64) -> Quaternion {
        let q0 = self.normalized();
        let mut q1 = other.normalized();
        let mut cos = q0.dot(&q1);
        if cos < 0.0 {
            q1 = q1.scaled(-1.0);
            cos = -cos;
        }
        if cos > 1.0 - 1e-12 {
            // Nearly parallel: the normalized lerp is accurate to rounding.
            return q0.scaled(1.0 - a).add(&q1.scaled(a)).normalized();
        }
        let theta = cos.min(1.0).acos();
        let sin = theta.sin();
        let w0 = ((1.0 - a) * theta).sin() / sin;
        let w1 = (a * theta).sin() / sin;
        q0.scaled(w0).add(&q1.scaled(w1)).normalized()
    }
}

/// Shepperd's method; returns a unit quaternion with a non-negative
/// largest component.
pub fn rotation_to_quaternion(r: &Matrix3<f64>) -> Result<Quaternion> {
    check_rotation(r, ROTATION_TOL)?;
    let tr = r.trace();
    let diag = [r[(0, 0)], r[(1, 1)], r[(2, 2)]];
    let q = if tr >= diag[0] && tr >= diag[1] && tr >= diag[2] {
        let s = (1.0 + tr).sqrt() * 2.0;
        Quaternion::new(
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        )
    } else if diag[0] >= diag[1] && diag[0] >= diag[2] {
        let s = (1.0 + diag[0] - diag[1] - diag[2]).sqrt() * 2.0;
        Quaternion::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        )
    } else if diag[1] >= diag[2] {
        let s = (1.0 - diag[0] + diag[1] - diag[2]).sqrt() * 2.0;
        Quaternion::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 - diag[0] - diag[1] + diag[2]).sqrt() * 2.0;
        Quaternion::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        )
    };
    Ok(q.normalized())
}

pub fn quaternion_to_rotation(q: &Quaternion) -> Result<Matrix3<f64>> {
    let n = q.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid("quaternion must be finite and nonzero"));
    }
    let Quaternion { w, x, y, z } = q.normalized();
    Ok(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Interpolated pose between two cameras: SLERP on the rotations, linear
/// interpolation of the camera centers. Intrinsics are taken from `cam0`.
///
/// The endpoints return the input extrinsics bit-for-bit.
pub fn interpolate_pose(cam0: &Camera, cam1: &Camera, a: f64) -> Camera {
    if a <= 0.0 {
        return cam0.clone();
    }
    if a >= 1.0 {
        return cam0.with_pose(cam1.rotation, cam1.translation);
    }
    // Both rotations are validated on construction, so conversion cannot fail.
    let q0 = rotation_to_quaternion(&cam0.rotation).expect("valid rotation");
    let q1 = rotation_to_quaternion(&cam1.rotation).expect("valid rotation");
    let rotation = quaternion_to_rotation(&q0.slerp(&q1, a)).expect("unit quaternion");
    let center = cam0.center() * (1.0 - a) + cam1.center() * a;
    cam0.with_pose(rotation, -(rotation * center))
}

/// Geodesic angle between two rotations, in radians.
pub fn rotation_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let e = a.transpose() * b;
    let cos = (e.trace() - 1.0) * 0.5;
    let sin = 0.5
        * Vector3::new(
            e[(2, 1)] - e[(1, 2)],
            e[(0, 2)] - e[(2, 0)],
            e[(1, 0)] - e[(0, 1)],
        )
        .norm();
    sin.atan2(cos)
}

/// One entry of a camera manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub view_id: String,
    pub frame_idx: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major world-to-camera rotation.
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    pub tau: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl CameraEntry {
    pub fn from_camera(
        view_id: impl Into<String>,
        frame_idx: usize,
        cam: &Camera,
        width: usize,
        height: usize,
    ) -> Self {
        let r = &cam.rotation;
        Self {
            view_id: view_id.into(),
            frame_idx,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            tau: [cam.translation.x, cam.translation.y, cam.translation.z],
            width,
            height,
        }
    }

    pub fn camera(&self) -> Result<Camera> {
        Camera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from_column_slice(&self.tau),
        )
    }
}
