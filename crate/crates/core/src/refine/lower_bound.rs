use crate::addmask::remove_small_components;
use crate::error::Result;
use crate::frames::{check_dims, BitMask, DepthFrame};
use crate::imgops;

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundConfig {
    /// Masked Gaussian smoothing of the curtain depth before the max.
    pub smooth_sigma: Option<f64>,
    /// Components of the apply mask smaller than this are ignored.
    pub min_component: usize,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        Self {
            smooth_sigma: None,
            min_component: 16,
        }
    }
}

/// Inside the cleaned apply mask, pushes the refined depth back to at least
/// the curtain depth (the farther of the two wins). Pixels where either depth
/// is invalid keep the refined value, and invalid refined pixels stay invalid.
pub fn curtain_lower_bound(
    d_refined: &DepthFrame,
    d_curtain: &DepthFrame,
    apply_mask: &BitMask,
    cfg: &LowerBoundConfig,
) -> Result<DepthFrame> {
    check_dims(d_refined, d_curtain, "curtain_lower_bound")?;
    check_dims(d_refined, apply_mask, "curtain_lower_bound")?;
    let mask = remove_small_components(apply_mask, cfg.min_component);
    let smoothed;
    let curtain = match cfg.smooth_sigma {
        Some(sigma) if sigma > 0.0 => {
            smoothed = imgops::masked_gaussian(d_curtain, &mask, sigma);
            &smoothed
        }
        _ => d_curtain,
    };
    let mut out = d_refined.clone();
    for i in 0..out.data.len() {
        if mask.bits[i] && out.valid[i] && curtain.valid[i] {
            out.data[i] = out.data[i].max(curtain.data[i]);
        }
    }
    Ok(out)
}
