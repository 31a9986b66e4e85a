// Score a predicted camera trajectory against a reference after Sim3
// alignment.

use nalgebra::{Rotation3, Vector3};
use stitch4d::camera::Camera;
use stitch4d::trajeval::{compute_metrics, Sim3Transform};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let reference: Vec<Camera> = (0..8)
        .map(|k| {
            let t = k as f64 * 0.3;
            let r = *Rotation3::from_axis_angle(&Vector3::y_axis(), 0.1 * t).matrix();
            Camera::from_center(500.0, 500.0, 320.0, 240.0, r, Vector3::new(t.cos(), 0.1 * t, t.sin()))
        })
        .collect::<Result<_, _>>()?;
    // Prediction: same path in another frame at half scale, with a little drift.
    let g = Sim3Transform { s: 0.5, r: *Rotation3::from_euler_angles(0.3, -0.2, 1.0).matrix(), t: Vector3::new(2.0, 0.0, -1.0) };
    let pred: Vec<Camera> = reference
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let moved = g.apply_camera(c);
            moved.with_pose(moved.rotation, moved.translation + Vector3::new(0.002 * k as f64, 0.0, 0.0))
        })
        .collect();
    let m = compute_metrics(&pred, &reference)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    assert!((m.align_scale - 2.0).abs() < 0.05);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
