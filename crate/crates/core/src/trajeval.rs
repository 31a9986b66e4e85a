//! Sim3 trajectory alignment and camera-motion fidelity metrics.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{rotation_angle, Camera};
use crate::error::{Error, Result};

/// `x -> s * R * x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3Transform {
    pub s: f64,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

impl Sim3Transform {
    pub fn identity() -> Self {
        Self {
            s: 1.0,
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.s * (self.r * x) + self.t
    }

    /// Moves a camera rigidly with the transform: its center maps through
    /// `apply` and its orientation rotates with `R`. Intrinsics are kept.
    pub fn apply_camera(&self, cam: &Camera) -> Camera {
        let center = self.apply(&cam.center());
        let rotation = cam.rotation * self.r.transpose();
        cam.with_pose(rotation, -(rotation * center))
    }

    /// RMS of `|apply(src_i) - dst_i|`.
    pub fn residual_rms(&self, src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
        if src.is_empty() {
            return 0.0;
        }
        let ss: f64 = src.iter().zip(dst).map(|(a, b)| (self.apply(a) - b).norm_squared()).sum();
        (ss / src.len() as f64).sqrt()
    }
}

/// Least-squares similarity with `s * R * src_i + t ≈ dst_i` (Umeyama), with
/// the reflection case corrected so that `det(R) = +1`.
pub fn umeyama_sim3(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Sim3Transform> {
    if src.len() != dst.len() {
        return Err(Error::invalid(format!(
            "umeyama_sim3: {} source vs {} destination points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateInput(format!("umeyama_sim3 needs >= 3 points, got {}", src.len())));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let (a, b) = (a - mu_s, b - mu_d);
        cov += b * a.transpose();
        var_s += a.norm_squared();
    }
    cov /= n;
    var_s /= n;
    let scale_ref = src.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
    if !(var_s > (1e-12 * scale_ref).powi(2)) {
        return Err(Error::DegenerateInput("umeyama_sim3: source points are coincident".into()));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
    let mut sign = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        sign[2] = -1.0;
    }
    // nalgebra does not sort singular values; flip the smallest one.
    let smallest = svd.singular_values.imin();
    if smallest != 2 {
        sign.swap_rows(2, smallest);
    }
    let r = u * Matrix3::from_diagonal(&sign) * v_t;
    let s = svd.singular_values.component_mul(&sign).sum() / var_s;
    let t = mu_d - s * (r * mu_s);
    Ok(Sim3Transform { s, r, t })
}

/// Trajectory fidelity after Sim3 alignment of `pred` onto `ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    #[serde(rename = "ATE Mean")]
    pub ate_mean: f64,
    #[serde(rename = "ATE RMSE")]
    pub ate_rmse: f64,
    #[serde(rename = "Rot Mean (Deg)")]
    pub rot_mean_deg: f64,
    #[serde(rename = "RPE Trans Mean")]
    pub rpe_trans_mean: f64,
    #[serde(rename = "Align Scale")]
    pub align_scale: f64,
}

/// Aligns predicted camera centers to the reference with [`umeyama_sim3`],
/// then reports absolute center errors, geodesic rotation errors of the
/// aligned orientations, and the error of frame-to-frame relative
/// translations (each expressed in the earlier camera's frame).
pub fn compute_metrics(pred: &[Camera], reference: &[Camera]) -> Result<TrajectoryMetrics> {
    if pred.len() != reference.len() {
        return Err(Error::invalid(format!(
            "trajectory length mismatch: {} predicted vs {} reference",
            pred.len(),
            reference.len()
        )));
    }
    let pc: Vec<_> = pred.iter().map(Camera::center).collect();
    let rc: Vec<_> = reference.iter().map(Camera::center).collect();
    let sim = umeyama_sim3(&pc, &rc)?;
    let aligned: Vec<Camera> = pred.iter().map(|c| sim.apply_camera(c)).collect();
    let n = pred.len() as f64;

    let errs: Vec<f64> = aligned.iter().zip(&rc).map(|(a, r)| (a.center() - r).norm()).collect();
    let ate_mean = errs.iter().sum::<f64>() / n;
    let ate_rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let rot_mean_deg = aligned
        .iter()
        .zip(reference)
        .map(|(a, r)| rotation_angle(&a.rotation, &r.rotation).to_degrees())
        .sum::<f64>()
        / n;

    let rel = |cams: &[Camera], i: usize| cams[i].rotation * (cams[i + 1].center() - cams[i].center());
    let rpe: Vec<f64> = (0..pred.len() - 1)
        .map(|i| (rel(&aligned, i) - rel(reference, i)).norm())
        .collect();
    let rpe_trans_mean = rpe.iter().sum::<f64>() / rpe.len() as f64;

    Ok(TrajectoryMetrics {
        ate_mean,
        ate_rmse: ate_rmse.max(ate_mean),
        rot_mean_deg,
        rpe_trans_mean,
        align_scale: sim.s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn pts() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::new(1.0, 1.0, 1.0),
        ]
    }

    #[test]
    fn identity_alignment() {
        let p = pts();
        let s = umeyama_sim3(&p, &p).unwrap();
        assert_relative_eq!(s.s, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.r, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(s.t.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn recovers_scaled_rotation_about_z() {
        let r = *Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).matrix();
        let truth = Sim3Transform {
            s: 2.0,
            r,
            t: Vector3::new(1.0, 0.0, 0.0),
        };
        let src = pts();
        let dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
        let got = umeyama_sim3(&src, &dst).unwrap();
        assert_relative_eq!(got.s, 2.0, epsilon = 1e-9);
        assert_relative_eq!(got.r, r, epsilon = 1e-9);
        assert_relative_eq!(got.t, truth.t, epsilon = 1e-9);
    }

    #[test]
    fn planar_points_do_not_reflect() {
        let src = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
        ];
        let dst: Vec<_> = src.iter().map(|p| Vector3::new(p.x, -p.y, 0.0)).collect();
        let got = umeyama_sim3(&src, &dst).unwrap();
        assert_relative_eq!(got.r.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let p = pts();
        assert!(matches!(umeyama_sim3(&p[..2], &p[..2]), Err(Error::DegenerateInput(_))));
        let same = vec![Vector3::new(1.0, 2.0, 3.0); 4];
        assert!(matches!(umeyama_sim3(&same, &p[..4]), Err(Error::DegenerateInput(_))));
    }

    fn trajectory() -> Vec<Camera> {
        (0..6)
            .map(|i| {
                let a = 0.1 * i as f64;
                let r = *Rotation3::from_euler_angles(0.05 * a, a, 0.0).matrix();
                Camera::from_center(100.0, 100.0, 32.0, 24.0, r, Vector3::new(a, 0.3 * a * a, -0.2 * a)).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_give_zero_metrics() {
        let t = trajectory();
        let m = compute_metrics(&t, &t).unwrap();
        assert!(m.ate_mean < 1e-12 && m.rot_mean_deg < 1e-6 && m.rpe_trans_mean < 1e-12);
        assert_relative_eq!(m.align_scale, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn scaled_prediction_aligns_with_inverse_scale() {
        let t = trajectory();
        let scaled: Vec<_> = t
            .iter()
            .map(|c| {
                Sim3Transform {
                    s: 3.0,
                    ..Sim3Transform::identity()
                }
                .apply_camera(c)
            })
            .collect();
        let m = compute_metrics(&scaled, &t).unwrap();
        assert_relative_eq!(m.align_scale, 1.0 / 3.0, epsilon = 1e-12);
        assert!(m.ate_mean < 1e-12 && m.rot_mean_deg < 1e-6);
    }

    #[test]
    fn metrics_json_uses_table_column_names() {
        let m = TrajectoryMetrics {
            ate_mean: 0.0,
            ate_rmse: 0.0,
            rot_mean_deg: 0.0,
            rpe_trans_mean: 0.0,
            align_scale: 1.0,
        };
        let s = serde_json::to_string(&m).unwrap();
        for key in ["ATE Mean", "ATE RMSE", "Rot Mean (Deg)", "RPE Trans Mean", "Align Scale"] {
            assert!(s.contains(key), "{s}");
        }
    }

    #[test]
    fn length_mismatch_is_invalid() {
        let t = trajectory();
        assert!(matches!(compute_metrics(&t[..4], &t[..5]), Err(Error::InvalidArgument(_))));
    }
}
