//! Graph relaxation over the node grid: propagation from anchors to
//! non-anchors and regularization of poorly observed cells.
//! All updates are double-buffered so results do not depend on visit order.

use super::context::{LevelData, DIRS4};
use super::{RefineConfig, RefineState};

/// Which gates apply to an edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// Warm-up: no normal gate, and only the most permissive Laplacian gate
    /// of the schedule.
    Loose,
    /// Coarse-level regularization: squared normal similarity with the hard normal
    /// gate, and the permissive Laplacian gate.
    NormalOnly,
    /// Normal similarity with both the normal and the Laplacian gates.
    Strict,
}

/// `(n_i . n_j + 1) / 2`.
#[inline]
pub fn normal_similarity(ld: &LevelData, i: usize, j: usize) -> f64 {
    (ld.normals[i].dot(&ld.normals[j]) + 1.0) / 2.0
}

/// Weight of the edge from `node` towards its neighbor in direction `k`.
pub fn edge_weight(ld: &LevelData, node: usize, k: usize, other: usize, mode: GateMode, cfg: &RefineConfig) -> f64 {
    let w = normal_similarity(ld, node, other);
    if mode == GateMode::Loose {
        return if ld.seg_max[node][k] < ld.tau_l_loose { w } else { 0.0 };
    }
    if ld.normals[node].dot(&ld.normals[other]) < cfg.tau_n {
        return 0.0;
    }
    match mode {
        GateMode::Strict if !(ld.seg_max[node][k] < ld.tau_l) => 0.0,
        GateMode::NormalOnly if !(ld.seg_max[node][k] < ld.tau_l_loose) => 0.0,
        GateMode::NormalOnly => w * w,
        _ => w,
    }
}

/// Propagation statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PropStats {
    pub iterations: usize,
    pub propagated: usize,
}

/// Grows the anchor set: each iteration, non-anchored cells with at least
/// one positively weighted anchored 8-neighbor take
/// `(1 - eta) * own + eta * weighted_average` (the average alone if the cell
/// had no value yet) and become anchors. Cells updated during the first
/// `n_flag` iterations are flagged in `phi`.
pub fn prop_to_non_anchor(ld: &LevelData, state: &mut RefineState, cfg: &RefineConfig) -> PropStats {
    let level = ld.level;
    let steps = cfg.steps3_at(level, ld.gw, ld.gh);
    let warmup = cfg.warmup_at(level, ld.gw, ld.gh);
    let eta = cfg.eta3_at(level);
    let n_flag = cfg.n_flag_at(level);
    let n = ld.gw * ld.gh;
    state.phi = vec![false; n];
    let mut stats = PropStats::default();
    let mut updates = Vec::new();
    for it in 0..steps {
        let mode = if it < warmup { GateMode::Loose } else { GateMode::Strict };
        updates.clear();
        for node in (0..n).filter(|&i| !state.anchor[i]) {
            let (mut ws, mut s, mut b) = (0.0, 0.0, 0.0);
            for k in 0..8 {
                let Some(m) = ld.neighbor(node, k) else { continue };
                if !state.anchor[m] {
                    continue;
                }
                let w = edge_weight(ld, node, k, m, mode, cfg);
                if w > 0.0 {
                    ws += w;
                    s += w * state.s[m];
                    b += w * state.b[m];
                }
            }
            if ws > 0.0 {
                let (s, b) = (s / ws, b / ws);
                let (s, b) = if state.initialized[node] {
                    ((1.0 - eta) * state.s[node] + eta * s, (1.0 - eta) * state.b[node] + eta * b)
                } else {
                    (s, b)
                };
                updates.push((node, s, b));
            }
        }
        if updates.is_empty() {
            // Nothing reachable under the current gates; warm-up cannot reach
            // further than strict propagation would, so stop here too.
            break;
        }
        stats.iterations = it + 1;
        for &(node, s, b) in &updates {
            state.s[node] = s;
            state.b[node] = b;
            state.initialized[node] = true;
            state.anchor[node] = true;
            state.unresolved[node] = false;
            if it < n_flag {
                state.phi[node] = true;
            }
            stats.propagated += 1;
        }
    }
    stats
}

/// Cells eligible for regularization: mostly unobserved patches with a valid
/// center depth that are not GT-fitted anchors.
pub fn reg_eligible(ld: &LevelData, state: &RefineState, cfg: &RefineConfig) -> Vec<bool> {
    (0..ld.gw * ld.gh)
        .map(|i| ld.invalid_ratio[i] >= cfg.tau_inv && ld.center_valid[i] && !state.gt_anchor[i])
        .collect()
}

/// Regularization over a sequence of frames sharing one grid: eligible cells relax
/// toward the weighted average of their non-GT-anchored 4 spatial neighbors
/// and the same cell in the previous and next frame. Early-propagated cells
/// (`phi`) stay frozen for the first `n_freeze` iterations. Returns the
/// number of iterations run.
pub fn non_anchor_reg(levels: &[LevelData], states: &mut [RefineState], cfg: &RefineConfig) -> usize {
    assert_eq!(levels.len(), states.len(), "one level record per frame");
    let Some(ld0) = levels.first() else { return 0 };
    let level = ld0.level;
    let n = ld0.gw * ld0.gh;
    let steps = cfg.steps4_at(level, ld0.gw, ld0.gh);
    let warmup = cfg.warmup_at(level, ld0.gw, ld0.gh);
    let eta = cfg.eta4_at(level);
    let n_freeze = cfg.n_freeze_at(level);
    let settled = if level < cfg.normal_only_levels { GateMode::NormalOnly } else { GateMode::Strict };
    let eligible: Vec<Vec<bool>> = levels.iter().zip(states.iter()).map(|(ld, st)| reg_eligible(ld, st, cfg)).collect();
    if !eligible.iter().flatten().any(|e| *e) {
        return 0;
    }
    let nf = states.len();
    let mut updates = Vec::new();
    for it in 0..steps {
        let mode = if it < warmup { GateMode::Loose } else { settled };
        updates.clear();
        for f in 0..nf {
            let (ld, st) = (&levels[f], &states[f]);
            for node in 0..n {
                if !eligible[f][node] || !st.initialized[node] || (it < n_freeze && st.phi[node]) {
                    continue;
                }
                let (mut ws, mut s, mut b) = (0.0, 0.0, 0.0);
                for &k in &DIRS4 {
                    let Some(m) = ld.neighbor(node, k) else { continue };
                    if st.gt_anchor[m] || !st.initialized[m] {
                        continue;
                    }
                    let w = edge_weight(ld, node, k, m, mode, cfg);
                    ws += w;
                    s += w * st.s[m];
                    b += w * st.b[m];
                }
                for g in [f.wrapping_sub(1), f + 1] {
                    if g >= nf || states[g].gt_anchor[node] || !states[g].initialized[node] {
                        continue;
                    }
                    let dot = ld.normals[node].dot(&levels[g].normals[node]);
                    let w = if mode != GateMode::Loose && dot < cfg.tau_n { 0.0 } else { (dot + 1.0) / 2.0 };
                    ws += w;
                    s += w * states[g].s[node];
                    b += w * states[g].b[node];
                }
                if ws > 0.0 {
                    updates.push((
                        f,
                        node,
                        (1.0 - eta) * st.s[node] + eta * s / ws,
                        (1.0 - eta) * st.b[node] + eta * b / ws,
                    ));
                }
            }
        }
        for &(f, node, s, b) in &updates {
            states[f].s[node] = s;
            states[f].b[node] = b;
        }
    }
    steps
}
