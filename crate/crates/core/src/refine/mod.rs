//! Pyramidal source-anchored depth refinement.
//!
//! A generated target-view depth `D^FF` is corrected by a spatially varying
//! scale/shift field `(s, b)` so that it agrees with the anchor depth rendered
//! from trusted geometry wherever that render is valid. The field is
//! estimated on node grids of decreasing stride:
//!
//! 1. carry the previous level's field over ([`upsample_fields`]);
//! 2. fit `(s, b)` on patches with enough anchor pixels ([`gt_anchor_fit`]);
//! 3. propagate anchored values to the rest of the grid ([`prop_to_non_anchor`]);
//! 4. smooth poorly observed cells over space and time ([`non_anchor_reg`]).
//!
//! The finest grid is then blended into per-pixel fields
//! ([`expand_to_full_res`]) and applied to `D^FF`.

mod config;
pub mod context;
mod expand;
mod fit;
mod lower_bound;
mod objective;
mod relax;

use serde::Serialize;

pub use config::RefineConfig;
pub use context::{FrameContext, LevelData};
pub use expand::{apply_fields, expand_to_full_res, soft_assignment, DenseFields};
pub use fit::{fill_uninitialized, fit_scale_shift, gt_anchor_fit, upsample_fields, upsample_fields_guarded, FitStats};
pub use lower_bound::{curtain_lower_bound, LowerBoundConfig};
pub use objective::diagnostic_objective;
pub use relax::{edge_weight, non_anchor_reg, prop_to_non_anchor, reg_eligible, GateMode, PropStats};

use crate::error::{Error, Result};
use crate::frames::{BitMask, DepthFrame};

/// Depths to reconcile: the generated depth, the anchor render, and the
/// pixels where the anchor is trusted.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorInput {
    pub d_ff: DepthFrame,
    pub d_anchor: DepthFrame,
    pub valid: BitMask,
}

/// Scale/shift grid of one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineState {
    pub level: usize,
    pub stride: usize,
    pub gw: usize,
    pub gh: usize,
    pub s: Vec<f64>,
    pub b: Vec<f64>,
    /// Cells holding a value (level 0 starts empty).
    pub initialized: Vec<bool>,
    /// Anchor set `A`: GT-fitted, filled, or propagated cells.
    pub anchor: Vec<bool>,
    /// Cells whose value comes from their own patch fit.
    pub gt_anchor: Vec<bool>,
    /// GT-supported cells still without an anchor value.
    pub unresolved: Vec<bool>,
    /// Cells reached in the early propagation iterations.
    pub phi: Vec<bool>,
}

impl RefineState {
    pub fn uninitialized(level: usize, stride: usize, gw: usize, gh: usize) -> Self {
        let n = gw * gh;
        Self {
            level,
            stride,
            gw,
            gh,
            s: vec![1.0; n],
            b: vec![0.0; n],
            initialized: vec![false; n],
            anchor: vec![false; n],
            gt_anchor: vec![false; n],
            unresolved: vec![false; n],
            phi: vec![false; n],
        }
    }
}

/// Per-frame, per-level diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub frame: usize,
    pub level: usize,
    pub stride: usize,
    pub grid: [usize; 2],
    pub candidates: usize,
    pub mad_rejected: usize,
    pub gt_anchors: usize,
    pub filled: usize,
    pub unresolved: usize,
    pub prop_iterations: usize,
    pub propagated: usize,
    pub reg_iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RefineReport {
    pub levels: Vec<LevelReport>,
}

/// Refines a single frame; regularization uses only spatial neighbors.
pub fn refine_depth(input: &AnchorInput, cfg: &RefineConfig) -> Result<DepthFrame> {
    Ok(refine_sequence_with_report(std::slice::from_ref(input), cfg)?.0.remove(0))
}

pub fn refine_depth_with_report(input: &AnchorInput, cfg: &RefineConfig) -> Result<(DepthFrame, RefineReport)> {
    let (mut out, report) = refine_sequence_with_report(std::slice::from_ref(input), cfg)?;
    Ok((out.remove(0), report))
}

/// Refines a sequence of equally sized frames; regularization links each cell to the
/// same cell in adjacent frames.
pub fn refine_sequence(inputs: &[AnchorInput], cfg: &RefineConfig) -> Result<Vec<DepthFrame>> {
    Ok(refine_sequence_with_report(inputs, cfg)?.0)
}

pub fn refine_sequence_with_report(inputs: &[AnchorInput], cfg: &RefineConfig) -> Result<(Vec<DepthFrame>, RefineReport)> {
    cfg.validate()?;
    let ctxs = inputs
        .iter()
        .enumerate()
        .map(|(f, inp)| FrameContext::new(inp, cfg).map_err(|e| e.in_frame(f)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(c0) = ctxs.first() {
        if ctxs.iter().any(|c| (c.width, c.height) != (c0.width, c0.height)) {
            return Err(Error::invalid("all frames of a sequence must share dimensions"));
        }
    } else {
        return Ok((Vec::new(), RefineReport::default()));
    }

    let mut report = RefineReport::default();
    let mut states: Vec<RefineState> = Vec::new();
    for (level, &stride) in cfg.strides.iter().enumerate() {
        let lds: Vec<LevelData> = ctxs.iter().map(|c| LevelData::new(c, cfg, level)).collect();
        let mut fit_stats = Vec::new();
        let mut prop_stats = Vec::new();
        for (f, ld) in lds.iter().enumerate() {
            let mut st = if level == 0 {
                RefineState::uninitialized(0, stride, ld.gw, ld.gh)
            } else {
                upsample_fields_guarded(&ctxs[f], &states[f], stride, cfg)
            };
            debug_assert_eq!((st.gw, st.gh), (ld.gw, ld.gh));
            fit_stats.push(gt_anchor_fit(&ctxs[f], ld, &mut st, cfg));
            prop_stats.push(prop_to_non_anchor(ld, &mut st, cfg));
            fill_uninitialized(ld, &mut st);
            if level == 0 {
                states.push(st);
            } else {
                states[f] = st;
            }
        }
        let reg = non_anchor_reg(&lds, &mut states, cfg);
        for (f, ld) in lds.iter().enumerate() {
            let (fs, ps) = (fit_stats[f], prop_stats[f]);
            report.levels.push(LevelReport {
                frame: f,
                level,
                stride,
                grid: [ld.gw, ld.gh],
                candidates: fs.candidates,
                mad_rejected: fs.mad_rejected,
                gt_anchors: fs.gt_anchors,
                filled: fs.filled,
                unresolved: fs.unresolved,
                prop_iterations: ps.iterations,
                propagated: ps.propagated,
                reg_iterations: reg,
                objective: diagnostic_objective(&ctxs[f], &states[f], cfg),
            });
        }
    }

    let outputs = ctxs
        .iter()
        .zip(&states)
        .map(|(ctx, st)| apply_fields(ctx, &expand_to_full_res(ctx, st, cfg), cfg.d_max))
        .collect();
    Ok((outputs, report))
}
