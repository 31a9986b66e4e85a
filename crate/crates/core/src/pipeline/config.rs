//! `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Relative paths, including the default `dataset`, `work` and `out`
//! directories, are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::addmask::{DEFAULT_MIN_COMPONENT, DEFAULT_REL_DEPTH_TOL};
use crate::error::{Error, Result};
use crate::preprocess;
use crate::refine::{LowerBoundConfig, RefineConfig};
use crate::stitch::{DEFAULT_DEPTH_TOL, DEFAULT_VOTE_FRAC};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completer {
    /// Fill masked pixels from ground-truth target renders in the dataset.
    Oracle,
    /// Wait for an external process to write the completed files.
    External,
}

/// Corruption applied to ground-truth target depth to produce `D^FF` in
/// oracle mode: `scale * d + shift`, times `1 + N(0, noise_rel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDepth {
    pub scale: f64,
    pub shift: f64,
    pub noise_rel: f64,
    pub seed: u64,
}

impl Default for OracleDepth {
    fn default() -> Self {
        Self {
            scale: 1.1,
            shift: 0.05,
            noise_rel: 0.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub enabled: bool,
    pub window: usize,
    pub mad_k: f64,
    pub small_only: bool,
    pub radius: usize,
    /// Edge threshold as a fraction of the median depth.
    pub lap_frac: f64,
    pub ring_thickness: usize,
    pub border_margin: usize,
    pub min_component: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            window: preprocess::DEFAULT_WINDOW,
            mad_k: preprocess::DEFAULT_MAD_K,
            small_only: true,
            radius: preprocess::DEFAULT_RADIUS,
            lap_frac: preprocess::DEFAULT_LAP_FRAC,
            ring_thickness: preprocess::DEFAULT_RING_THICKNESS,
            border_margin: preprocess::DEFAULT_BORDER_MARGIN,
            min_component: preprocess::DEFAULT_MIN_COMPONENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Dataset directory holding `cameras.json` and `views/`.
    pub dataset: PathBuf,
    /// Intermediates and the exchange directory.
    pub work_dir: PathBuf,
    /// Asset directory and `run.json`.
    pub out_dir: PathBuf,
    pub width: usize,
    pub height: usize,
    pub completer: Completer,
    pub exchange_timeout_s: f64,
    pub poll_ms: u64,
    pub oracle_depth: OracleDepth,
    pub preprocess: PreprocessConfig,
    /// Lattice quads whose depth ratio exceeds `1 + mesh_max_depth_jump` are
    /// left out of the asset mesh.
    pub mesh_max_depth_jump: f64,
    pub mask_rel_depth_tol: f64,
    pub mask_min_component: usize,
    pub curtain_thickness: usize,
    pub refine: RefineConfig,
    /// Regularize poorly observed cells jointly over all frames.
    pub refine_temporal: bool,
    pub lower_bound: bool,
    pub lower_bound_cfg: LowerBoundConfig,
    pub depth_tol: f64,
    pub vote_frac: f64,
    /// Extra views (besides the source) used as observed views by the filter.
    pub observed_views: Vec<String>,
    /// Store candidates as lattice meshes instead of point clouds.
    pub stitch_mesh: bool,
    pub step: usize,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset"),
            work_dir: PathBuf::from("work"),
            out_dir: PathBuf::from("out"),
            width: 672,
            height: 384,
            completer: Completer::Oracle,
            exchange_timeout_s: 600.0,
            poll_ms: 200,
            oracle_depth: OracleDepth::default(),
            preprocess: PreprocessConfig::default(),
            mesh_max_depth_jump: 0.05,
            mask_rel_depth_tol: DEFAULT_REL_DEPTH_TOL,
            mask_min_component: DEFAULT_MIN_COMPONENT,
            curtain_thickness: 2,
            refine: RefineConfig::default(),
            refine_temporal: true,
            lower_bound: true,
            lower_bound_cfg: LowerBoundConfig::default(),
            depth_tol: DEFAULT_DEPTH_TOL,
            vote_frac: DEFAULT_VOTE_FRAC,
            observed_views: Vec::new(),
            stitch_mesh: false,
            step: 1,
            workers: 1,
        }
    }
}

fn parse_val<T: FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad value {v:?} for {key}"),
    })
}

fn parse_list<T: FromStr>(key: &str, v: &str, line: usize) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_val(key, s.trim(), line)).collect()
}

fn parse_bool(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Parse {
            line,
            msg: format!("bad boolean {v:?} for {key}"),
        }),
    }
}

/// Splits `key = value` lines; keys must be unique.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, (String, usize)>> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected key = value, found {content:?}"),
        })?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), (value.trim().to_string(), line)).is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate key {key:?}"),
            });
        }
    }
    Ok(map)
}

impl PipelineConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = Self {
            dataset: base.join("dataset"),
            work_dir: base.join("work"),
            out_dir: base.join("out"),
            ..Self::default()
        };
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (key, (v, line)) in parse_kv(text)? {
            let (k, v, l) = (key.as_str(), v.as_str(), line);
            match k {
                "dataset" => c.dataset = path(v),
                "work_dir" => c.work_dir = path(v),
                "out_dir" => c.out_dir = path(v),
                "width" => c.width = parse_val(k, v, l)?,
                "height" => c.height = parse_val(k, v, l)?,
                "completer" => {
                    c.completer = match v {
                        "oracle" => Completer::Oracle,
                        "external" => Completer::External,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                msg: format!("completer must be oracle or external, found {v:?}"),
                            })
                        }
                    }
                }
                "exchange_timeout_s" => c.exchange_timeout_s = parse_val(k, v, l)?,
                "poll_ms" => c.poll_ms = parse_val(k, v, l)?,
                "oracle.depth_scale" => c.oracle_depth.scale = parse_val(k, v, l)?,
                "oracle.depth_shift" => c.oracle_depth.shift = parse_val(k, v, l)?,
                "oracle.noise_rel" => c.oracle_depth.noise_rel = parse_val(k, v, l)?,
                "oracle.seed" => c.oracle_depth.seed = parse_val(k, v, l)?,
                "preprocess.enabled" => c.preprocess.enabled = parse_bool(k, v, l)?,
                "preprocess.window" => c.preprocess.window = parse_val(k, v, l)?,
                "preprocess.mad_k" => c.preprocess.mad_k = parse_val(k, v, l)?,
                "preprocess.small_only" => c.preprocess.small_only = parse_bool(k, v, l)?,
                "preprocess.radius" => c.preprocess.radius = parse_val(k, v, l)?,
                "preprocess.lap_frac" => c.preprocess.lap_frac = parse_val(k, v, l)?,
                "preprocess.ring_thickness" => c.preprocess.ring_thickness = parse_val(k, v, l)?,
                "preprocess.border_margin" => c.preprocess.border_margin = parse_val(k, v, l)?,
                "preprocess.min_component" => c.preprocess.min_component = parse_val(k, v, l)?,
                "mesh.max_depth_jump" => c.mesh_max_depth_jump = parse_val(k, v, l)?,
                "mask.rel_depth_tol" => c.mask_rel_depth_tol = parse_val(k, v, l)?,
                "mask.min_component" => c.mask_min_component = parse_val(k, v, l)?,
                "mask.curtain_thickness" => c.curtain_thickness = parse_val(k, v, l)?,
                "refine.strides" => c.refine.strides = parse_list(k, v, l)?,
                "refine.min_unit_ratio" => c.refine.min_unit_ratio = parse_val(k, v, l)?,
                "refine.epsilon" => c.refine.epsilon = parse_val(k, v, l)?,
                "refine.mad_k" => c.refine.mad_k = parse_val(k, v, l)?,
                "refine.mad_floor" => c.refine.mad_floor = parse_val(k, v, l)?,
                "refine.residual_floor" => c.refine.residual_floor = parse_val(k, v, l)?,
                "refine.eta3" => c.refine.eta3 = parse_list(k, v, l)?,
                "refine.eta4" => c.refine.eta4 = parse_list(k, v, l)?,
                "refine.steps3" => c.refine.steps3 = parse_list(k, v, l)?,
                "refine.steps4" => c.refine.steps4 = parse_list(k, v, l)?,
                "refine.n_flag" => c.refine.n_flag = parse_list(k, v, l)?,
                "refine.n_freeze" => c.refine.n_freeze = parse_list(k, v, l)?,
                "refine.tau_l" => c.refine.tau_l = parse_list(k, v, l)?,
                "refine.tau_l_floor" => c.refine.tau_l_floor = parse_val(k, v, l)?,
                "refine.tau_n" => c.refine.tau_n = parse_val(k, v, l)?,
                "refine.tau_inv" => c.refine.tau_inv = parse_val(k, v, l)?,
                "refine.warmup_steps" => c.refine.warmup_steps = parse_list(k, v, l)?,
                "refine.normal_only_levels" => c.refine.normal_only_levels = parse_val(k, v, l)?,
                "refine.beta" => c.refine.beta = parse_val(k, v, l)?,
                "refine.d_max" => c.refine.d_max = parse_val(k, v, l)?,
                "refine.lambda1" => c.refine.lambda1 = parse_val(k, v, l)?,
                "refine.lambda2" => c.refine.lambda2 = parse_val(k, v, l)?,
                "refine.lambda3" => c.refine.lambda3 = parse_val(k, v, l)?,
                "refine.temporal" => c.refine_temporal = parse_bool(k, v, l)?,
                "lower_bound.enabled" => c.lower_bound = parse_bool(k, v, l)?,
                "lower_bound.sigma" => {
                    let s: f64 = parse_val(k, v, l)?;
                    c.lower_bound_cfg.smooth_sigma = (s > 0.0).then_some(s);
                }
                "lower_bound.min_component" => c.lower_bound_cfg.min_component = parse_val(k, v, l)?,
                "stitch.depth_tol" => c.depth_tol = parse_val(k, v, l)?,
                "stitch.vote_frac" => c.vote_frac = parse_val(k, v, l)?,
                "stitch.observed_views" => c.observed_views = parse_list(k, v, l)?,
                "stitch.mesh" => c.stitch_mesh = parse_bool(k, v, l)?,
                "stitch.step" => c.step = parse_val(k, v, l)?,
                "workers" => c.workers = parse_val(k, v, l)?,
                _ => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown key {k:?}"),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("resolution must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        if !(self.depth_tol >= 0.0 && self.vote_frac > 0.0 && self.vote_frac <= 1.0) {
            return Err(Error::invalid("stitch.depth_tol must be >= 0 and vote_frac in (0, 1]"));
        }
        if !(self.exchange_timeout_s >= 0.0) {
            return Err(Error::invalid("exchange_timeout_s must be non-negative"));
        }
        self.refine.validate()
    }

    /// Checks that the input paths exist.
    pub fn check_paths(&self) -> Result<()> {
        let manifest = self.dataset.join("cameras.json");
        if !manifest.is_file() {
            return Err(Error::invalid(format!("dataset manifest {} does not exist", manifest.display())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let text = "\
# comment
dataset = data
width = 64   # trailing comment
height = 48
completer = external
refine.strides = 16, 8
stitch.observed_views = a,b
lower_bound.sigma = 1.5
";
        let c = PipelineConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(c.dataset, PathBuf::from("/base/data"));
        assert_eq!((c.width, c.height), (64, 48));
        assert_eq!(c.completer, Completer::External);
        assert_eq!(c.refine.strides, vec![16, 8]);
        assert_eq!(c.observed_views, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(c.lower_bound_cfg.smooth_sigma, Some(1.5));
        assert_eq!(c.out_dir, PathBuf::from("/base/out"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = PipelineConfig::parse("width = 4\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = PipelineConfig::parse("width = x\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = PipelineConfig::parse("width = 4\nwidth = 5\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(PipelineConfig::parse("refine.strides = 8, 16\n", Path::new(".")).is_err());
    }
}
