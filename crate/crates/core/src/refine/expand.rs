//! Structure-aware expansion of the final node grid to per-pixel fields.

use super::context::FrameContext;
use super::{RefineConfig, RefineState};
use crate::frames::DepthFrame;

/// Per-pixel scale and shift over the original (unpadded) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFields {
    pub width: usize,
    pub height: usize,
    pub s: Vec<f64>,
    pub b: Vec<f64>,
}

/// Soft-assignment weights of a padded pixel over the corner nodes of its
/// grid cell: `alpha_i ∝ exp(-beta * l_i / tau_l)` where `l_i` is the max
/// |Laplacian| on the segment from the pixel (exclusive) to node `i`'s center
/// (inclusive). Returns `(node, alpha)` pairs.
pub fn soft_assignment(ctx: &FrameContext, state: &RefineState, tau_l: f64, beta: f64, x: usize, y: usize) -> Vec<(usize, f64)> {
    let s = state.stride;
    let axis = |c: usize, n: usize| -> Vec<usize> {
        if n == 1 {
            return vec![0];
        }
        let i0 = (c / s).min(n - 2);
        vec![i0, i0 + 1]
    };
    let mut out = Vec::with_capacity(4);
    for j in axis(y, state.gh) {
        for i in axis(x, state.gw) {
            let center = (i * s, j * s);
            let ell = if center == (x, y) { 0.0 } else { ctx.segment_max((x, y), center, false) };
            out.push((j * state.gw + i, ell));
        }
    }
    let scale = if tau_l > 0.0 { beta / tau_l } else { 0.0 };
    // Shift by the smallest barrier so the largest weight is exp(0).
    let lo = out.iter().map(|(_, l)| *l).fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (_, l) in out.iter_mut() {
        *l = (-scale * (*l - lo)).exp();
        total += *l;
    }
    for (_, a) in out.iter_mut() {
        *a /= total;
    }
    out
}

/// Blends the final-level nodes into dense `(s, b)` fields.
pub fn expand_to_full_res(ctx: &FrameContext, state: &RefineState, cfg: &RefineConfig) -> DenseFields {
    let tau_l = ctx.tau_l(cfg, state.level);
    let n = ctx.width * ctx.height;
    let mut s = vec![1.0; n];
    let mut b = vec![0.0; n];
    for y in 0..ctx.height {
        for x in 0..ctx.width {
            if !ctx.ff_valid[y * ctx.pw + x] {
                continue;
            }
            let (mut ss, mut bb) = (0.0, 0.0);
            for (node, a) in soft_assignment(ctx, state, tau_l, cfg.beta, x, y) {
                ss += a * state.s[node];
                bb += a * state.b[node];
            }
            s[y * ctx.width + x] = ss;
            b[y * ctx.width + x] = bb;
        }
    }
    DenseFields {
        width: ctx.width,
        height: ctx.height,
        s,
        b,
    }
}

/// `clamp(D + (s - 1) * D + b, 1e-6, d_max)` on valid `D^FF` pixels.
pub fn apply_fields(ctx: &FrameContext, fields: &DenseFields, d_max: f64) -> DepthFrame {
    let mut out = DepthFrame::new(ctx.width, ctx.height);
    for y in 0..ctx.height {
        for x in 0..ctx.width {
            let p = y * ctx.pw + x;
            if !ctx.ff_valid[p] {
                continue;
            }
            let i = y * ctx.width + x;
            let d = ctx.d_ff[p];
            let v = d + (fields.s[i] - 1.0) * d + fields.b[i];
            let v = if v.is_finite() { v.clamp(1e-6, d_max) } else { d_max };
            out.data[i] = v as f32;
            out.valid[i] = true;
        }
    }
    out
}
