//! Localized depth and mask cleanup run before lifting and refinement.
//!
//! Every operation only touches pixels inside its trigger mask:
//! `erode(region, 1)` for [`depth_spikefix`], the depth-edge mask for
//! [`edge_mapping`], and the cut mask (minus the border strip) for
//! [`occlusion_mask_refine`].

use crate::error::{Error, Result};
use crate::frames::{boundary_ring, check_dims, BitMask, DepthFrame, RgbFrame};
use crate::imgops;

pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_MAD_K: f64 = 3.0;
pub const DEFAULT_RING_THICKNESS: usize = 2;
pub const DEFAULT_RADIUS: usize = 3;
pub const DEFAULT_BORDER_MARGIN: usize = 4;
pub const DEFAULT_MIN_COMPONENT: usize = 16;
/// Default Laplacian threshold as a fraction of the median valid depth.
pub const DEFAULT_LAP_FRAC: f64 = 0.05;

/// MAD is scaled to a Gaussian standard deviation.
const MAD_TO_SIGMA: f64 = 1.4826;
/// Relative floor on the spread so flat windows still flag strict outliers.
const MAD_REL_FLOOR: f64 = 1e-6;

/// `DEFAULT_LAP_FRAC * median(valid depth)`, or 0 for an empty frame.
pub fn default_lap_thresh(depth: &DepthFrame) -> f64 {
    imgops::median_valid_depth(depth).map_or(0.0, |m| DEFAULT_LAP_FRAC * m)
}

/// `|5-point Laplacian| > lap_thresh`, closed and then dilated by a 3x3 square.
pub fn depth_edges(depth: &DepthFrame, lap_thresh: f64) -> BitMask {
    let lap = imgops::abs_laplacian(depth);
    let raw = BitMask::from_bits(depth.width, depth.height, lap.iter().map(|&l| l > lap_thresh).collect());
    imgops::dilate(&imgops::close(&raw, 1), 1)
}

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::invalid(format!("window must be odd and >= 3, got {window}")));
    }
    Ok(())
}

/// Calls `f(index)` for every in-bounds pixel of the square window of
/// radius `r` around `(x, y)`, in raster order.
fn for_window(w: usize, h: usize, x: usize, y: usize, r: usize, mut f: impl FnMut(usize)) {
    let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
    let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            f(yy * w + xx);
        }
    }
}

/// Flags pixels of `erode(region, 1)` whose depth deviates from the median
/// of their valid window by more than `mad_k` robust standard deviations.
/// Medians of even-sized sets take the lower middle element.
pub fn spike_flags(depth: &DepthFrame, region: &BitMask, window: usize, mad_k: f64, small_only: bool) -> Result<BitMask> {
    check_window(window)?;
    check_dims(depth, region, "depth_spikefix")?;
    let (w, h) = (depth.width, depth.height);
    let safe = imgops::erode(region, 1);
    let r = window / 2;
    let mut flags = BitMask::new(w, h);
    let mut vals = Vec::with_capacity(window * window);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !(safe.bits[i] && depth.valid[i]) {
                continue;
            }
            vals.clear();
            for_window(w, h, x, y, r, |j| {
                if depth.valid[j] {
                    vals.push(depth.data[j] as f64);
                }
            });
            let med = imgops::median_in_place(&mut vals).unwrap_or(0.0);
            for v in vals.iter_mut() {
                *v = (*v - med).abs();
            }
            let mad = imgops::median_in_place(&mut vals).unwrap_or(0.0);
            let sigma = (MAD_TO_SIGMA * mad).max(MAD_REL_FLOOR * med.abs());
            if (depth.data[i] as f64 - med).abs() > mad_k * sigma {
                flags.bits[i] = true;
            }
        }
    }
    if small_only {
        // Large outlier blobs are structure, not spikes.
        flags = imgops::small_components(&flags, window * window / 4);
    }
    Ok(flags)
}

/// Upper bound on detect-and-replace passes in [`depth_spikefix`].
pub const MAX_SPIKEFIX_PASSES: usize = 16;

/// Replaces each flagged spike (see [`spike_flags`]) by the mean of the
/// unflagged valid pixels in its window, repeating until no pixel changes
/// (at most [`MAX_SPIKEFIX_PASSES`] passes). A single pass can leave a mixed
/// FG/BG mean at a silhouette corner that the next pass flags again, so
/// iterating makes the output a fixed point. Spikes without unflagged
/// neighbors are left as they are.
pub fn depth_spikefix(depth: &DepthFrame, region: &BitMask, window: usize, mad_k: f64, small_only: bool) -> Result<DepthFrame> {
    let mut out = depth.clone();
    for _ in 0..MAX_SPIKEFIX_PASSES {
        let next = spikefix_pass(&out, region, window, mad_k, small_only)?;
        if depth_changes(&out, &next) == 0 {
            break;
        }
        out = next;
    }
    Ok(out)
}

/// One detect-and-replace pass of [`depth_spikefix`].
pub fn spikefix_pass(depth: &DepthFrame, region: &BitMask, window: usize, mad_k: f64, small_only: bool) -> Result<DepthFrame> {
    let flags = spike_flags(depth, region, window, mad_k, small_only)?;
    let (w, h) = (depth.width, depth.height);
    let mut out = depth.clone();
    for i in (0..w * h).filter(|&i| flags.bits[i]) {
        let (mut sum, mut n) = (0.0f64, 0usize);
        for_window(w, h, i % w, i / w, window / 2, |j| {
            if j != i && depth.valid[j] && !flags.bits[j] {
                sum += depth.data[j] as f64;
                n += 1;
            }
        });
        if n > 0 {
            out.data[i] = (sum / n as f64) as f32;
        }
    }
    Ok(out)
}

fn rgb_dist2(a: [u8; 3], b: [u8; 3]) -> u32 {
    a.iter().zip(&b).map(|(&p, &q)| (p as i32 - q as i32).pow(2) as u32).sum()
}

/// Snaps depth-edge pixels to the most RGB-similar non-edge pixel with valid
/// depth within `radius` (Chebyshev), copying both its color and depth.
/// Ties go to the first candidate in raster order.
pub fn edge_mapping(rgb: &RgbFrame, depth: &DepthFrame, lap_thresh: f64, radius: usize) -> Result<(RgbFrame, DepthFrame)> {
    if radius == 0 {
        return Err(Error::invalid("edge_mapping radius must be >= 1"));
    }
    check_dims(rgb, depth, "edge_mapping")?;
    let edges = depth_edges(depth, lap_thresh);
    let (w, h) = (depth.width, depth.height);
    let (mut out_rgb, mut out_depth) = (rgb.clone(), depth.clone());
    for i in (0..w * h).filter(|&i| edges.bits[i]) {
        let (x, y) = (i % w, i / w);
        let c = rgb.get(x, y);
        let mut best: Option<(u32, usize)> = None;
        for_window(w, h, x, y, radius, |j| {
            if edges.bits[j] || !depth.valid[j] {
                return;
            }
            let d = rgb_dist2(c, rgb.get(j % w, j / w));
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        });
        if let Some((_, j)) = best {
            out_rgb.set(x, y, rgb.get(j % w, j / w));
            out_depth.data[i] = depth.data[j];
            out_depth.valid[i] = true;
        }
    }
    Ok((out_rgb, out_depth))
}

/// Pixels whose label [`occlusion_mask_refine`] may change: the two-sided
/// boundary ring intersected with the depth edges, minus a strip of
/// `border_margin` pixels along the frame edge.
pub fn mask_cut(mask: &BitMask, depth: &DepthFrame, ring_thickness: usize, border_margin: usize) -> Result<BitMask> {
    check_dims(mask, depth, "occlusion_mask_refine")?;
    let ring = boundary_ring(mask, ring_thickness).union(&boundary_ring(&mask.complement(), ring_thickness));
    let mut cut = ring.intersection(&depth_edges(depth, default_lap_thresh(depth)));
    let (w, h) = (mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            if x < border_margin || y < border_margin || x + border_margin >= w || y + border_margin >= h {
                cut.bits[y * w + x] = false;
            }
        }
    }
    Ok(cut)
}

/// Reassigns each cut pixel (see [`mask_cut`]) to whichever side (inside or
/// outside the mask) has the closer mean disparity over the uncut valid
/// pixels of its window, then removes inside/outside components smaller
/// than `min_component`, flipping only cut pixels.
pub fn occlusion_mask_refine(
    mask: &BitMask,
    depth: &DepthFrame,
    ring_thickness: usize,
    window: usize,
    min_component: usize,
    border_margin: usize,
) -> Result<BitMask> {
    check_window(window)?;
    let cut = mask_cut(mask, depth, ring_thickness, border_margin)?;
    let (w, h) = (mask.width, mask.height);
    let mut out = mask.clone();
    for i in (0..w * h).filter(|&i| cut.bits[i] && depth.valid[i]) {
        let (mut sums, mut counts) = ([0.0f64; 2], [0usize; 2]);
        for_window(w, h, i % w, i / w, window / 2, |j| {
            if !cut.bits[j] && depth.valid[j] {
                let side = mask.bits[j] as usize;
                sums[side] += 1.0 / depth.data[j] as f64;
                counts[side] += 1;
            }
        });
        if counts[0] == 0 || counts[1] == 0 {
            continue;
        }
        let disp = 1.0 / depth.data[i] as f64;
        let d_out = (disp - sums[0] / counts[0] as f64).abs();
        let d_in = (disp - sums[1] / counts[1] as f64).abs();
        if d_in != d_out {
            out.bits[i] = d_in < d_out;
        }
    }
    if min_component > 0 {
        let fg_small = imgops::small_components(&out, min_component);
        let bg_small = imgops::small_components(&out.complement(), min_component);
        for i in 0..w * h {
            if cut.bits[i] && (fg_small.bits[i] || bg_small.bits[i]) {
                out.bits[i] = !out.bits[i];
            }
        }
    }
    Ok(out)
}

/// Number of pixels whose depth value or validity differs.
pub fn depth_changes(a: &DepthFrame, b: &DepthFrame) -> usize {
    (0..a.data.len())
        .filter(|&i| a.valid[i] != b.valid[i] || (a.valid[i] && a.data[i].to_bits() != b.data[i].to_bits()))
        .count()
}

/// Pixels whose depth value or validity differs.
pub fn depth_change_mask(a: &DepthFrame, b: &DepthFrame) -> BitMask {
    let bits = (0..a.data.len())
        .map(|i| a.valid[i] != b.valid[i] || (a.valid[i] && a.data[i].to_bits() != b.data[i].to_bits()))
        .collect();
    BitMask::from_bits(a.width, a.height, bits)
}
