//! Padded per-frame rasters and per-level node data shared by the
//! refinement steps.

use nalgebra::Vector3;

use super::{AnchorInput, RefineConfig};
use crate::error::{Error, Result};
use crate::frames::check_dims;
use crate::imgops;

/// 8-neighborhood offsets; `DIRS[k]` and `DIRS[7 - k]` are opposite.
pub const DIRS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// 4-neighborhood subset of [`DIRS`].
pub const DIRS4: [usize; 4] = [1, 3, 4, 6];

/// Frame rasters padded to a multiple of the coarsest stride plus one guard
/// pixel. Padding replicates the edge of `D^FF` and is never anchor-valid.
#[derive(Debug, Clone)]
pub struct FrameContext {
    pub width: usize,
    pub height: usize,
    pub pw: usize,
    pub ph: usize,
    pub d_ff: Vec<f64>,
    pub ff_valid: Vec<bool>,
    pub d_gt: Vec<f64>,
    pub anchor_valid: Vec<bool>,
    /// |Laplacian| of the padded `D^FF`.
    pub lap: Vec<f64>,
    pub max_lap: f64,
    pub median_depth: f64,
    /// Unit normals `(-dD/du, -dD/dv, 1)` from central differences.
    pub normals: Vec<Vector3<f64>>,
}

impl FrameContext {
    pub fn new(input: &AnchorInput, cfg: &RefineConfig) -> Result<Self> {
        check_dims(&input.d_ff, &input.d_anchor, "refine input")?;
        check_dims(&input.d_ff, &input.valid, "refine input")?;
        let (w, h) = (input.d_ff.width, input.d_ff.height);
        if w == 0 || h == 0 {
            return Err(Error::invalid("refine input is empty"));
        }
        let coarse = cfg.strides[0];
        let pw = w.div_ceil(coarse) * coarse + 1;
        let ph = h.div_ceil(coarse) * coarse + 1;

        let mut d_ff = vec![0.0; pw * ph];
        let mut ff_valid = vec![false; pw * ph];
        let mut d_gt = vec![0.0; pw * ph];
        let mut anchor_valid = vec![false; pw * ph];
        for y in 0..ph {
            let sy = y.min(h - 1);
            for x in 0..pw {
                let sx = x.min(w - 1);
                let (i, si) = (y * pw + x, sy * w + sx);
                d_ff[i] = input.d_ff.data[si] as f64;
                ff_valid[i] = input.d_ff.valid[si];
                if x < w && y < h {
                    let ok = input.valid.bits[si] && input.d_ff.valid[si] && input.d_anchor.valid[si];
                    anchor_valid[i] = ok;
                    if ok {
                        d_gt[i] = input.d_anchor.data[si] as f64;
                    }
                }
            }
        }
        if !anchor_valid.iter().any(|v| *v) {
            return Err(Error::NoAnchor);
        }

        let lap = laplacian_f64(&d_ff, &ff_valid, pw, ph);
        let max_lap = lap.iter().cloned().fold(0.0, f64::max);
        let mut gt: Vec<f64> = (0..pw * ph).filter(|&i| anchor_valid[i]).map(|i| d_gt[i]).collect();
        let median_depth = imgops::median_in_place(&mut gt).unwrap_or(1.0);
        let normals = pixel_normals(&d_ff, &ff_valid, pw, ph);

        Ok(Self {
            width: w,
            height: h,
            pw,
            ph,
            d_ff,
            ff_valid,
            d_gt,
            anchor_valid,
            lap,
            max_lap,
            median_depth,
            normals,
        })
    }

    /// Laplacian gate threshold at a level.
    pub fn tau_l(&self, cfg: &RefineConfig, level: usize) -> f64 {
        (cfg.tau_l_frac_at(level) * self.max_lap).max(cfg.tau_l_floor * self.median_depth)
    }

    /// Grid size at a stride: nodes sit at multiples of the stride.
    pub fn grid_dims(&self, stride: usize) -> (usize, usize) {
        ((self.pw - 1) / stride + 1, (self.ph - 1) / stride + 1)
    }

    /// Max |Laplacian| over the Bresenham segment from `a` to `b`; the start
    /// pixel is skipped when `include_start` is false.
    pub fn segment_max(&self, a: (usize, usize), b: (usize, usize), include_start: bool) -> f64 {
        let mut m = 0.0f64;
        bresenham(a, b, |x, y, first| {
            if include_start || !first {
                m = m.max(self.lap[y * self.pw + x]);
            }
        });
        m
    }
}

fn laplacian_f64(d: &[f64], valid: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid[i] {
                continue;
            }
            let mut lap = 0.0;
            if x > 0 && x + 1 < w && valid[i - 1] && valid[i + 1] {
                lap += d[i - 1] + d[i + 1] - 2.0 * d[i];
            }
            if y > 0 && y + 1 < h && valid[i - w] && valid[i + w] {
                lap += d[i - w] + d[i + w] - 2.0 * d[i];
            }
            out[i] = lap.abs();
        }
    }
    out
}

fn pixel_normals(d: &[f64], valid: &[bool], w: usize, h: usize) -> Vec<Vector3<f64>> {
    let deriv = |i: usize, prev: Option<usize>, next: Option<usize>| -> f64 {
        let p = prev.filter(|&j| valid[j]);
        let n = next.filter(|&j| valid[j]);
        match (p, n) {
            (Some(p), Some(n)) => (d[n] - d[p]) / 2.0,
            (Some(p), None) => d[i] - d[p],
            (None, Some(n)) => d[n] - d[i],
            (None, None) => 0.0,
        }
    };
    let mut out = vec![Vector3::z(); w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid[i] {
                continue;
            }
            let du = deriv(i, (x > 0).then(|| i - 1), (x + 1 < w).then(|| i + 1));
            let dv = deriv(i, (y > 0).then(|| i - w), (y + 1 < h).then(|| i + w));
            out[i] = Vector3::new(-du, -dv, 1.0).normalize();
        }
    }
    out
}

/// Visits the pixels of the Bresenham line from `a` to `b`, both inclusive.
/// The callback receives `(x, y, is_first)`.
pub fn bresenham(a: (usize, usize), b: (usize, usize), mut f: impl FnMut(usize, usize, bool)) {
    let (mut x, mut y) = (a.0 as isize, a.1 as isize);
    let (x1, y1) = (b.0 as isize, b.1 as isize);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut first = true;
    loop {
        f(x as usize, y as usize, first);
        first = false;
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Node-level quantities for one pyramid level of one frame.
#[derive(Debug, Clone)]
pub struct LevelData {
    pub level: usize,
    pub stride: usize,
    pub gw: usize,
    pub gh: usize,
    pub radius: usize,
    pub tau_l: f64,
    /// Laplacian gate of the warm-up iterations: the coarsest level's threshold.
    pub tau_l_loose: f64,
    /// Patch-averaged unit normals.
    pub normals: Vec<Vector3<f64>>,
    /// Fraction of patch pixels that are not anchor-valid.
    pub invalid_ratio: Vec<f64>,
    /// `D^FF` is valid at the node center.
    pub center_valid: Vec<bool>,
    /// Segment-max |Laplacian| towards each 8-neighbor (`NaN` off-grid).
    pub seg_max: Vec<[f64; 8]>,
}

impl LevelData {
    pub fn new(ctx: &FrameContext, cfg: &RefineConfig, level: usize) -> Self {
        let stride = cfg.strides[level];
        let (gw, gh) = ctx.grid_dims(stride);
        let radius = stride / 2;
        let n = gw * gh;
        let mut normals = vec![Vector3::z(); n];
        let mut invalid_ratio = vec![1.0; n];
        let mut center_valid = vec![false; n];
        let mut seg_max = vec![[f64::NAN; 8]; n];
        for j in 0..gh {
            for i in 0..gw {
                let node = j * gw + i;
                let (cx, cy) = (i * stride, j * stride);
                let (x0, x1) = (cx.saturating_sub(radius), (cx + radius).min(ctx.pw - 1));
                let (y0, y1) = (cy.saturating_sub(radius), (cy + radius).min(ctx.ph - 1));
                let mut nsum = Vector3::zeros();
                let (mut total, mut valid) = (0usize, 0usize);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let p = y * ctx.pw + x;
                        total += 1;
                        valid += ctx.anchor_valid[p] as usize;
                        if ctx.ff_valid[p] {
                            nsum += ctx.normals[p];
                        }
                    }
                }
                normals[node] = if nsum.norm() > 0.0 { nsum.normalize() } else { Vector3::z() };
                invalid_ratio[node] = 1.0 - valid as f64 / total as f64;
                center_valid[node] = ctx.ff_valid[cy * ctx.pw + cx];
                for (k, (dx, dy)) in DIRS.iter().enumerate() {
                    let (ni, nj) = (i as isize + dx, j as isize + dy);
                    if ni < 0 || nj < 0 || ni >= gw as isize || nj >= gh as isize {
                        continue;
                    }
                    let (ni, nj) = (ni as usize, nj as usize);
                    // Segments are symmetric; reuse the value computed from the other end.
                    let other = nj * gw + ni;
                    seg_max[node][k] = if other < node {
                        seg_max[other][7 - k]
                    } else {
                        ctx.segment_max((cx, cy), (ni * stride, nj * stride), true)
                    };
                }
            }
        }
        Self {
            level,
            stride,
            gw,
            gh,
            radius,
            tau_l: ctx.tau_l(cfg, level),
            tau_l_loose: ctx.tau_l(cfg, 0).max(ctx.tau_l(cfg, level)),
            normals,
            invalid_ratio,
            center_valid,
            seg_max,
        }
    }

    /// Neighbor index in direction `k`, if on the grid.
    #[inline]
    pub fn neighbor(&self, node: usize, k: usize) -> Option<usize> {
        let (i, j) = ((node % self.gw) as isize, (node / self.gw) as isize);
        let (dx, dy) = DIRS[k];
        let (ni, nj) = (i + dx, j + dy);
        (ni >= 0 && nj >= 0 && ni < self.gw as isize && nj < self.gh as isize).then(|| nj as usize * self.gw + ni as usize)
    }

    /// Inclusive pixel bounds of a node's patch.
    pub fn patch(&self, ctx: &FrameContext, node: usize) -> (usize, usize, usize, usize) {
        let (cx, cy) = ((node % self.gw) * self.stride, (node / self.gw) * self.stride);
        (
            cx.saturating_sub(self.radius),
            cy.saturating_sub(self.radius),
            (cx + self.radius).min(ctx.pw - 1),
            (cy + self.radius).min(ctx.ph - 1),
        )
    }
}
