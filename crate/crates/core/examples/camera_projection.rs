// Project and unproject through a pinhole camera, then walk an interpolated
// path between two poses.

use nalgebra::{Matrix3, Rotation3, Vector3};
use stitch4d::camera::{interpolate_pose, rotation_angle, Camera, PixelCoord};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cam0 = Camera::new(500.0, 500.0, 319.5, 239.5, Matrix3::identity(), Vector3::zeros())?;
    let x = cam0.unproject(PixelCoord::new(100.0, 50.0), 3.0)?;
    let p = cam0.project(&x)?;
    println!("pixel (100, 50) at depth 3 -> {x:?} -> ({:.6}, {:.6}) depth {:.6}", p.pixel.u, p.pixel.v, p.depth);
    assert!((p.pixel.u - 100.0).abs() < 1e-9 && (p.depth - 3.0).abs() < 1e-9);

    let yaw = *Rotation3::from_axis_angle(&Vector3::y_axis(), 0.4).matrix();
    let cam1 = Camera::from_center(500.0, 500.0, 319.5, 239.5, yaw, Vector3::new(1.0, 0.0, 0.5))?;
    for k in 0..=4 {
        let a = k as f64 / 4.0;
        let c = interpolate_pose(&cam0, &cam1, a);
        println!("a = {a:.2}: center {:?}, {:.3} rad from cam0", c.center().as_slice(), rotation_angle(&c.rotation, &cam0.rotation));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
