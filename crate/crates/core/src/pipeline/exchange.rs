//! File-exchange contract with the novel-view completer.
//!
//! For each target view and frame the pipeline writes the projected image,
//! the information-addition mask and a `record.json` with status `pending`.
//! A completer writes `completed.png` and `completed_depth.pfm` next to them;
//! the record then moves to `completed` (or `failed` on timeout).

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::OracleDepth;
use crate::error::{Error, Result};
use crate::frames::{check_dims, BitMask, DepthFrame, RgbFrame};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExchangeStatus {
    Pending,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub target_view: String,
    pub frame_idx: usize,
    /// Paths relative to the record's directory.
    pub projected: String,
    pub mask: String,
    pub completed: String,
    pub completed_depth: String,
    pub status: ExchangeStatus,
}

impl ExchangeRecord {
    pub fn new(target_view: &str, frame_idx: usize) -> Self {
        Self {
            target_view: target_view.to_string(),
            frame_idx,
            projected: "projected.png".into(),
            mask: "mask.png".into(),
            completed: "completed.png".into(),
            completed_depth: "completed_depth.pfm".into(),
            status: ExchangeStatus::Pending,
        }
    }

    /// Only `pending -> completed | failed` is allowed.
    pub fn transition(&mut self, to: ExchangeStatus) -> Result<()> {
        if self.status != ExchangeStatus::Pending || to == ExchangeStatus::Pending {
            return Err(Error::invalid(format!(
                "exchange status cannot go from {:?} to {:?}",
                self.status, to
            )));
        }
        self.status = to;
        Ok(())
    }
}

/// `exchange/<target>/<frame>/` under the work directory.
pub fn record_dir(work_dir: &Path, target_view: &str, frame: usize) -> PathBuf {
    work_dir.join("exchange").join(target_view).join(format!("{frame:04}"))
}

/// Writes the projected image, mask and a pending record.
pub fn post_request(dir: &Path, record: &ExchangeRecord, projected: &RgbFrame, mask: &BitMask) -> Result<()> {
    io::write_rgb_png(&dir.join(&record.projected), projected)?;
    io::write_mask_png(&dir.join(&record.mask), mask)?;
    io::write_json(&dir.join("record.json"), record)
}

/// Writes the completer's outputs.
pub fn post_completion(dir: &Path, record: &ExchangeRecord, rgb: &RgbFrame, depth: &DepthFrame) -> Result<()> {
    io::write_rgb_png(&dir.join(&record.completed), rgb)?;
    io::write_pfm(&dir.join(&record.completed_depth), depth)
}

/// Polls until both completed files exist, then marks the record completed
/// and returns them. On timeout the record is marked failed.
pub fn await_completion(dir: &Path, record: &mut ExchangeRecord, timeout: Duration, poll: Duration) -> Result<(RgbFrame, DepthFrame)> {
    let start = Instant::now();
    let (rgb_path, depth_path) = (dir.join(&record.completed), dir.join(&record.completed_depth));
    loop {
        if rgb_path.is_file() && depth_path.is_file() {
            let out = (io::read_rgb_png(&rgb_path)?, io::read_pfm(&depth_path)?);
            record.transition(ExchangeStatus::Completed)?;
            io::write_json(&dir.join("record.json"), record)?;
            return Ok(out);
        }
        if start.elapsed() >= timeout {
            record.transition(ExchangeStatus::Failed)?;
            io::write_json(&dir.join("record.json"), record)?;
            return Err(Error::ExchangeTimeout(format!("{} frame {}", record.target_view, record.frame_idx)));
        }
        std::thread::sleep(poll);
    }
}

/// Keeps `projected` outside the mask and takes `gt_target` inside it.
pub fn oracle_complete(projected: &RgbFrame, mask: &BitMask, gt_target: &RgbFrame) -> Result<RgbFrame> {
    check_dims(projected, mask, "oracle_complete")?;
    check_dims(projected, gt_target, "oracle_complete")?;
    let mut out = projected.clone();
    for i in (0..mask.bits.len()).filter(|&i| mask.bits[i]) {
        out.data[3 * i..3 * i + 3].copy_from_slice(&gt_target.data[3 * i..3 * i + 3]);
    }
    Ok(out)
}

/// Corrupted ground-truth depth used as the generated target depth in
/// oracle mode. Deterministic for a given seed.
pub fn oracle_depth(gt: &DepthFrame, cfg: &OracleDepth) -> DepthFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_rel.max(0.0)).expect("finite std");
    let mut out = gt.clone();
    for i in 0..out.data.len() {
        if !out.valid[i] {
            continue;
        }
        let mut d = cfg.scale * out.data[i] as f64 + cfg.shift;
        if cfg.noise_rel > 0.0 {
            d *= 1.0 + noise.sample(&mut rng);
        }
        if d > 0.0 && d.is_finite() {
            out.data[i] = d as f32;
        } else {
            out.data[i] = 0.0;
            out.valid[i] = false;
        }
    }
    out
}
