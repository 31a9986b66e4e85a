use super::context::{FrameContext, LevelData};
use super::relax::{edge_weight, GateMode};
use super::{RefineConfig, RefineState};

/// Monitoring value of the stage-wise refinement:
///
/// `lambda1 * sum |s*D^FF + b - D_anc|` over anchor-valid pixels, each using
/// its nearest node; plus `lambda2 * sum w_ij (|ds| + |db|)` over 4-neighbor
/// edges between GT-fitted nodes; plus `lambda3` times the same sum over all
/// other edges between initialized nodes. `w_ij` are the strict gated
/// weights of the state's level.
pub fn diagnostic_objective(ctx: &FrameContext, state: &RefineState, cfg: &RefineConfig) -> f64 {
    let mut data = 0.0;
    if cfg.lambda1 > 0.0 {
        let s = state.stride;
        for y in 0..ctx.height {
            for x in 0..ctx.width {
                let p = y * ctx.pw + x;
                if !ctx.anchor_valid[p] {
                    continue;
                }
                let i = ((x + s / 2) / s).min(state.gw - 1);
                let j = ((y + s / 2) / s).min(state.gh - 1);
                let node = j * state.gw + i;
                if state.initialized[node] {
                    data += (state.s[node] * ctx.d_ff[p] + state.b[node] - ctx.d_gt[p]).abs();
                }
            }
        }
    }
    let (mut anchored, mut other) = (0.0, 0.0);
    if cfg.lambda2 > 0.0 || cfg.lambda3 > 0.0 {
        let ld = LevelData::new(ctx, cfg, state.level);
        for node in 0..ld.gw * ld.gh {
            // Right (4) and down (6) edges visit each 4-neighbor pair once.
            for k in [4usize, 6] {
                let Some(m) = ld.neighbor(node, k) else { continue };
                if !(state.initialized[node] && state.initialized[m]) {
                    continue;
                }
                let w = edge_weight(&ld, node, k, m, GateMode::Strict, cfg);
                let d = (state.s[node] - state.s[m]).abs() + (state.b[node] - state.b[m]).abs();
                if state.gt_anchor[node] && state.gt_anchor[m] {
                    anchored += w * d;
                } else {
                    other += w * d;
                }
            }
        }
    }
    cfg.lambda1 * data + cfg.lambda2 * anchored + cfg.lambda3 * other
}
