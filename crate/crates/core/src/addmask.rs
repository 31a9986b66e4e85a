//! Masks of target-view pixels where new content must be synthesized:
//! projection holes plus regions revealed by curtain geometry.

use crate::error::Result;
use crate::frames::{check_dims, BitMask};
use crate::imgops;
use crate::raster::RenderOutput;

pub const DEFAULT_REL_DEPTH_TOL: f64 = 0.03;
pub const DEFAULT_MIN_COMPONENT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskBundle {
    pub hole: BitMask,
    pub curtain_disc: BitMask,
    pub curtain_fb: BitMask,
    pub info_addition: BitMask,
}

impl MaskBundle {
    /// Builds the bundle and trims the curtain masks to the cleaned
    /// information-addition mask, so `info_addition` is exactly the union of
    /// the three stored masks.
    pub fn new(hole: BitMask, curtain_disc: BitMask, curtain_fb: BitMask, min_component: usize) -> Result<Self> {
        let info_addition = info_addition_mask(&hole, &curtain_disc, &curtain_fb, min_component)?;
        Ok(Self {
            curtain_disc: curtain_disc.intersection(&info_addition),
            curtain_fb: curtain_fb.intersection(&info_addition),
            hole,
            info_addition,
        })
    }

    /// `(kind, mask)` pairs in file-name order.
    pub fn kinds(&self) -> [(&'static str, &BitMask); 4] {
        [
            ("hole", &self.hole),
            ("cdisc", &self.curtain_disc),
            ("cfb", &self.curtain_fb),
            ("info", &self.info_addition),
        ]
    }
}

/// Pixels the point-cloud render leaves uncovered.
pub fn projection_hole_mask(render: &RenderOutput) -> BitMask {
    render.support.complement()
}

/// Pixels covered by the mesh but missing from, or disagreeing in depth
/// with, the point-cloud render.
pub fn curtain_discrepancy_mask(mesh_r: &RenderOutput, pcd_r: &RenderOutput, rel_depth_tol: f64) -> Result<BitMask> {
    check_dims(&mesh_r.support, &pcd_r.support, "curtain_discrepancy_mask")?;
    let bits = (0..mesh_r.support.bits.len())
        .map(|i| {
            if !mesh_r.support.bits[i] {
                return false;
            }
            if !pcd_r.support.bits[i] {
                return true;
            }
            let dm = mesh_r.depth.data[i] as f64;
            let dp = pcd_r.depth.data[i] as f64;
            (dm - dp).abs() > rel_depth_tol * dp
        })
        .collect();
    Ok(BitMask::from_bits(mesh_r.width(), mesh_r.height(), bits))
}

/// Pixels where the foreground/background curtain is visible: covered by the
/// curtain render and either missing from the point-cloud render or in front
/// of it by more than `rel_depth_tol`. Curtain parts hidden behind rendered
/// points are not reported.
pub fn curtain_fb_mask(curtain_r: &RenderOutput, pcd_r: &RenderOutput, rel_depth_tol: f64) -> Result<BitMask> {
    check_dims(&curtain_r.support, &pcd_r.support, "curtain_fb_mask")?;
    let bits = (0..curtain_r.support.bits.len())
        .map(|i| {
            curtain_r.support.bits[i]
                && (!pcd_r.support.bits[i]
                    || (curtain_r.depth.data[i] as f64) < pcd_r.depth.data[i] as f64 * (1.0 - rel_depth_tol))
        })
        .collect();
    Ok(BitMask::from_bits(curtain_r.width(), curtain_r.height(), bits))
}

/// Union of the three masks with 8-connected components smaller than
/// `min_component` removed. Hole pixels are always kept, so the result
/// contains `hole`; small components only lose their curtain pixels.
pub fn info_addition_mask(
    hole: &BitMask,
    curtain_disc: &BitMask,
    curtain_fb: &BitMask,
    min_component: usize,
) -> Result<BitMask> {
    check_dims(hole, curtain_disc, "info_addition_mask")?;
    check_dims(hole, curtain_fb, "info_addition_mask")?;
    let union = hole.union(curtain_disc).union(curtain_fb);
    Ok(remove_small_components(&union, min_component).union(hole))
}

/// Clears 8-connected components with fewer than `min_size` pixels.
pub fn remove_small_components(mask: &BitMask, min_size: usize) -> BitMask {
    if min_size <= 1 {
        return mask.clone();
    }
    mask.difference(&imgops::small_components(mask, min_size))
}
