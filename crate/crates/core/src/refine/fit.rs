//! Grid initialization across levels and the GT-anchored patch fit.

use super::context::{FrameContext, LevelData};
use super::relax::{edge_weight, GateMode};
use super::{RefineConfig, RefineState};
use crate::imgops::median_in_place;

/// Relative spread of `D^FF` in a patch below which the scale is not
/// identifiable and the fit falls back to a pure shift.
const MIN_REL_STD: f64 = 1e-5;

/// Weighted least-squares `(s, b)` mapping `x` onto `y`, or `None` without data.
///
/// Uses centered sums, which equal the raw-sum closed form
/// `s = (Sw*Sxy - Sx*Sy) / (Sw*Sxx - Sx^2 + eps)`,
/// `b = (Sy - s*Sx) / (Sw + eps)` but lose less precision.
pub fn fit_scale_shift(xs: &[f64], ys: &[f64], ws: &[f64], eps: f64) -> Option<(f64, f64)> {
    let sw: f64 = ws.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let sx: f64 = xs.iter().zip(ws).map(|(x, w)| w * x).sum();
    let sy: f64 = ys.iter().zip(ws).map(|(y, w)| w * y).sum();
    let (mx, my) = (sx / sw, sy / sw);
    let (mut cxx, mut cxy) = (0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        cxx += w * (x - mx) * (x - mx);
        cxy += w * (x - mx) * (y - my);
    }
    if cxx / sw <= (MIN_REL_STD * mx).powi(2) {
        return Some((1.0, (sy - sx) / (sw + eps)));
    }
    let s = sw * cxy / (sw * cxx + eps);
    Some((s, (sy - s * sx) / (sw + eps)))
}

/// Carries fields to the next (finer) level by bilinear interpolation on the
/// node grid. Anchor, unresolved and flag masks start empty; nodes that
/// coincide with old nodes keep their values exactly.
pub fn upsample_fields(state: &RefineState, new_stride: usize) -> RefineState {
    upsample_with(state, new_stride, |_, _| 0.0, 0.0)
}

/// Structure-aware variant used by the refinement driver: each bilinear
/// weight is damped by `exp(-beta * l / tau_l)`, where `l` is the max
/// |Laplacian| on the segment from the new node to the old one, so values do
/// not leak across depth discontinuities. On surfaces without Laplacian
/// response this equals [`upsample_fields`].
pub fn upsample_fields_guarded(ctx: &FrameContext, state: &RefineState, new_stride: usize, cfg: &RefineConfig) -> RefineState {
    let tau_l = ctx.tau_l(cfg, state.level + 1);
    let scale = if tau_l > 0.0 { cfg.beta / tau_l } else { 0.0 };
    upsample_with(state, new_stride, |new, old| ctx.segment_max(new, old, false), scale)
}

fn upsample_with(
    state: &RefineState,
    new_stride: usize,
    barrier: impl Fn((usize, usize), (usize, usize)) -> f64,
    scale: f64,
) -> RefineState {
    let ratio = state.stride as f64 / new_stride as f64;
    let gw = ((state.gw - 1) as f64 * ratio).round() as usize + 1;
    let gh = ((state.gh - 1) as f64 * ratio).round() as usize + 1;
    let mut out = RefineState::uninitialized(state.level + 1, new_stride, gw, gh);
    let axis = |i: usize, n_old: usize| -> (usize, usize, f64) {
        let f = i as f64 * new_stride as f64 / state.stride as f64;
        if n_old == 1 {
            return (0, 0, 0.0);
        }
        let i0 = (f.floor() as usize).min(n_old - 2);
        (i0, i0 + 1, f - i0 as f64)
    };
    let mut corners = Vec::with_capacity(4);
    for j in 0..gh {
        let (j0, j1, ty) = axis(j, state.gh);
        for i in 0..gw {
            let (i0, i1, tx) = axis(i, state.gw);
            corners.clear();
            for (oi, oj, w) in [
                (i0, j0, (1.0 - tx) * (1.0 - ty)),
                (i1, j0, tx * (1.0 - ty)),
                (i0, j1, (1.0 - tx) * ty),
                (i1, j1, tx * ty),
            ] {
                let k = oj * state.gw + oi;
                if w > 0.0 && state.initialized[k] {
                    let ell = if scale > 0.0 {
                        barrier((i * new_stride, j * new_stride), (oi * state.stride, oj * state.stride))
                    } else {
                        0.0
                    };
                    corners.push((k, w, ell));
                }
            }
            let lo = corners.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
            let (mut ws, mut s, mut b) = (0.0, 0.0, 0.0);
            for &(k, w, ell) in &corners {
                let w = w * (-scale * (ell - lo)).exp();
                ws += w;
                s += w * state.s[k];
                b += w * state.b[k];
            }
            if ws > 0.0 {
                let n = j * gw + i;
                out.s[n] = s / ws;
                out.b[n] = b / ws;
                out.initialized[n] = true;
            }
        }
    }
    out
}

/// Per-level fit statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitStats {
    pub candidates: usize,
    pub mad_rejected: usize,
    pub gt_anchors: usize,
    pub filled: usize,
    pub unresolved: usize,
}

/// Fits `(s, b)` on every patch with enough anchor-valid pixels, rejects
/// outliers with separate MAD gates on `s` and `b` (and on the relative fit
/// residual), then fills the remaining GT-supported cells from anchored 3x3
/// neighbors in Jacobi rounds, using the strict edge weights.
pub fn gt_anchor_fit(ctx: &FrameContext, ld: &LevelData, state: &mut RefineState, cfg: &RefineConfig) -> FitStats {
    let n = ld.gw * ld.gh;
    state.anchor = vec![false; n];
    state.gt_anchor = vec![false; n];
    state.unresolved = vec![false; n];

    let mut fits: Vec<Option<(f64, f64)>> = vec![None; n];
    let mut supported = vec![false; n];
    let mut residual = vec![0.0; n];
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for node in 0..n {
        let (x0, y0, x1, y1) = ld.patch(ctx, node);
        xs.clear();
        ys.clear();
        ws.clear();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = y * ctx.pw + x;
                if ctx.anchor_valid[p] {
                    xs.push(ctx.d_ff[p]);
                    ys.push(ctx.d_gt[p]);
                    ws.push(1.0);
                }
            }
        }
        supported[node] = !xs.is_empty();
        let total = (x1 - x0 + 1) * (y1 - y0 + 1);
        if (xs.len() as f64) < cfg.min_unit_ratio * total as f64 {
            continue;
        }
        fits[node] = fit_scale_shift(&xs, &ys, &ws, cfg.epsilon).filter(|(s, b)| s.is_finite() && b.is_finite());
        if let Some((s, b)) = fits[node] {
            let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (s * x + b - y).powi(2)).sum();
            let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
            residual[node] = (sse / xs.len() as f64).sqrt() / mean_y.abs().max(f64::MIN_POSITIVE);
        }
    }

    let mut stats = FitStats::default();
    let cands: Vec<usize> = (0..n).filter(|&i| fits[i].is_some()).collect();
    stats.candidates = cands.len();
    if !cands.is_empty() {
        let svals: Vec<f64> = cands.iter().map(|&i| fits[i].unwrap().0).collect();
        let bvals: Vec<f64> = cands.iter().map(|&i| fits[i].unwrap().1).collect();
        let s_gate = mad_gate(&svals, cfg.mad_k, |med| cfg.mad_floor * med.abs().max(1.0));
        let b_gate = mad_gate(&bvals, cfg.mad_k, |_| cfg.mad_floor * ctx.median_depth);
        // Patches mixing two surfaces fit poorly; reject unusually large residuals.
        let rvals: Vec<f64> = cands.iter().map(|&i| residual[i]).collect();
        let r_gate = mad_gate_upper(&rvals, cfg.mad_k, cfg.residual_floor);
        for (k, &node) in cands.iter().enumerate() {
            if s_gate(svals[k]) && b_gate(bvals[k]) && r_gate(rvals[k]) {
                let (s, b) = fits[node].unwrap();
                state.s[node] = s;
                state.b[node] = b;
                state.initialized[node] = true;
                state.anchor[node] = true;
                state.gt_anchor[node] = true;
                stats.gt_anchors += 1;
            } else {
                stats.mad_rejected += 1;
            }
        }
    }

    for node in 0..n {
        state.unresolved[node] = supported[node] && !state.anchor[node];
    }
    loop {
        let mut updates = Vec::new();
        for node in (0..n).filter(|&i| state.unresolved[i]) {
            let (mut ws, mut s, mut b) = (0.0, 0.0, 0.0);
            for k in 0..8 {
                let Some(m) = ld.neighbor(node, k) else { continue };
                if !state.anchor[m] {
                    continue;
                }
                let w = edge_weight(ld, node, k, m, GateMode::Strict, cfg);
                ws += w;
                s += w * state.s[m];
                b += w * state.b[m];
            }
            if ws > 0.0 {
                updates.push((node, s / ws, b / ws));
            }
        }
        if updates.is_empty() {
            break;
        }
        for (node, s, b) in updates {
            state.s[node] = s;
            state.b[node] = b;
            state.initialized[node] = true;
            state.anchor[node] = true;
            state.unresolved[node] = false;
            stats.filled += 1;
        }
    }
    stats.unresolved = state.unresolved.iter().filter(|v| **v).count();
    stats
}

/// Returns an acceptance predicate: `|v - median| <= k * 1.4826 * max(MAD, floor(median))`.
fn mad_gate(vals: &[f64], k: f64, floor: impl Fn(f64) -> f64) -> impl Fn(f64) -> bool {
    let mut v = vals.to_vec();
    let med = median_in_place(&mut v).unwrap_or(0.0);
    let mut dev: Vec<f64> = vals.iter().map(|x| (x - med).abs()).collect();
    let mad = median_in_place(&mut dev).unwrap_or(0.0);
    let thresh = k * 1.4826 * mad.max(floor(med));
    move |x| (x - med).abs() <= thresh
}

/// One-sided variant: only values far above the median are rejected.
fn mad_gate_upper(vals: &[f64], k: f64, floor: f64) -> impl Fn(f64) -> bool {
    let mut v = vals.to_vec();
    let med = median_in_place(&mut v).unwrap_or(0.0);
    let mut dev: Vec<f64> = vals.iter().map(|x| (x - med).abs()).collect();
    let mad = median_in_place(&mut dev).unwrap_or(0.0);
    let thresh = med + k * 1.4826 * mad.max(floor);
    move |x| x <= thresh
}

/// Fills nodes left uninitialized (no gate-passing path to an anchor) by
/// ungated neighbor averaging; a grid without any value becomes identity.
pub fn fill_uninitialized(ld: &LevelData, state: &mut RefineState) {
    if !state.initialized.iter().any(|v| *v) {
        state.s.iter_mut().for_each(|s| *s = 1.0);
        state.b.iter_mut().for_each(|b| *b = 0.0);
        state.initialized.iter_mut().for_each(|v| *v = true);
        return;
    }
    loop {
        let mut updates = Vec::new();
        for node in (0..state.s.len()).filter(|&i| !state.initialized[i]) {
            let (mut cnt, mut s, mut b) = (0usize, 0.0, 0.0);
            for k in 0..8 {
                if let Some(m) = ld.neighbor(node, k) {
                    if state.initialized[m] {
                        cnt += 1;
                        s += state.s[m];
                        b += state.b[m];
                    }
                }
            }
            if cnt > 0 {
                updates.push((node, s / cnt as f64, b / cnt as f64));
            }
        }
        if updates.is_empty() {
            break;
        }
        for (node, s, b) in updates {
            state.s[node] = s;
            state.b[node] = b;
            state.initialized[node] = true;
        }
    }
}
