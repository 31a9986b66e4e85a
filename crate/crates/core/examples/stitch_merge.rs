// Turn completed target pixels into stitch candidates, drop the ones that
// would occlude what the source camera saw, and merge the rest.

use nalgebra::{Matrix3, Vector3};
use stitch4d::camera::Camera;
use stitch4d::frames::{BitMask, DepthFrame, RgbFrame};
use stitch4d::raster::quad_mesh;
use stitch4d::stitch::{build_stitch_candidates, merge_asset, render_disagreement_filter, Geometry, ObservedView, Provenance, SceneAsset, DEFAULT_DEPTH_TOL, DEFAULT_VOTE_FRAC};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (48, 40);
    let src = Camera::new(40.0, 40.0, 23.5, 19.5, Matrix3::identity(), Vector3::zeros())?;
    let tgt = Camera::from_center(40.0, 40.0, 23.5, 19.5, Matrix3::identity(), Vector3::new(0.5, 0.0, 0.0))?;

    // Source asset: a wall at depth 4 covering the left half of the world.
    let mut asset = SceneAsset::new(vec![]);
    let v = Vector3::new;
    asset.add_layer(Provenance::new("src", "src", 0, 0), Geometry::Mesh(quad_mesh([v(-6.0, -6.0, 4.0), v(0.0, -6.0, 4.0), v(0.0, 6.0, 4.0), v(-6.0, 6.0, 4.0)], [120, 120, 120])))?;

    // Completed target view: mask covers everything; the left part claims
    // depth 2 (in front of the wall the source saw), the right part depth 5.
    let mut depth = DepthFrame::new(w, h);
    for y in 0..h {
        for x in 0..w {
            depth.set(x, y, if x < 12 { 2.0 } else { 5.0 });
        }
    }
    let cand = build_stitch_candidates(&RgbFrame::filled(w, h, [200, 30, 30]), &depth, &BitMask::filled(w, h, true), &tgt, 0)?;
    let observed = [ObservedView { camera: src.clone(), width: w, height: h }];
    let kept = render_disagreement_filter(&cand, &asset, &observed, DEFAULT_DEPTH_TOL, DEFAULT_VOTE_FRAC)?;
    println!("{} candidates, {} kept", cand.points.len(), kept.points.len());

    let merged = merge_asset(&asset, &kept, "src", "tgt", 1)?;
    let (before, after) = (asset.render(0, &src, w, h), merged.render(0, &src, w, h));
    let same = (0..w * h).filter(|&i| before.support.bits[i]).all(|i| before.depth.data[i] == after.depth.data[i]);
    println!("layers {} -> {}, source view unchanged where it had content: {same}", asset.layers().len(), merged.layers().len());
    assert!(same);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
