//! Rendering a merged asset along an interpolated camera path.

use std::path::Path;

use crate::camera::{interpolate_pose, Camera};
use crate::error::{Error, Result};
use crate::io;
use crate::stitch::SceneAsset;

/// Asset frame shown at video frame `k` of `n`: the asset's frames are
/// spread evenly over the video.
pub fn asset_frame_at(asset_frames: &[usize], k: usize, n: usize) -> usize {
    if asset_frames.is_empty() {
        return 0;
    }
    asset_frames[(k * asset_frames.len() / n).min(asset_frames.len() - 1)]
}

/// Renders `n_frames` views with poses `interpolate_pose(cam0, cam1, k / (n - 1))`
/// and writes `frame_<k>.png` and `depth_<k>.pfm` to `out_dir`. Returns the
/// cameras used.
pub fn render_novel_views(
    asset: &SceneAsset,
    cam0: &Camera,
    cam1: &Camera,
    width: usize,
    height: usize,
    n_frames: usize,
    out_dir: &Path,
) -> Result<Vec<Camera>> {
    if n_frames < 2 {
        return Err(Error::invalid("render_novel_views needs at least 2 frames"));
    }
    let frames = asset.frames();
    let mut cams = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let cam = interpolate_pose(cam0, cam1, k as f64 / (n_frames - 1) as f64);
        let r = asset.render(asset_frame_at(&frames, k, n_frames), &cam, width, height);
        io::write_rgb_png(&out_dir.join(format!("frame_{k:04}.png")), &r.color)?;
        io::write_pfm(&out_dir.join(format!("depth_{k:04}.pfm")), &r.depth)?;
        cams.push(cam);
    }
    Ok(cams)
}
