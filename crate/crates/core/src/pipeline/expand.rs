//! `expand`: stitch a target view's new content into the source asset.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::config::{Completer, PipelineConfig};
use super::exchange::{self, ExchangeRecord};
use super::scene::DatasetLayout;
use crate::addmask::{curtain_discrepancy_mask, curtain_fb_mask, projection_hole_mask, MaskBundle};
use crate::camera::{Camera, CameraEntry};
use crate::error::{Error, Result};
use crate::frames::{self, BitMask, DepthFrame, MeshOptions, RgbFrame};
use crate::io;
use crate::preprocess;
use crate::raster::{render_mesh, render_points, RenderOutput};
use crate::refine::{curtain_lower_bound, refine_sequence_with_report, AnchorInput, LevelReport};
use crate::stitch::{build_stitch_candidates, merge_geometry, render_disagreement_filter, Geometry, ObservedView, Provenance, SceneAsset};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PreprocessStats {
    pub spikefix_changed: usize,
    pub edge_mapping_changed: usize,
    pub mask_refine_changed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MaskStats {
    pub hole: usize,
    pub cdisc: usize,
    pub cfb: usize,
    pub info: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FrameSummary {
    pub frame: usize,
    pub preprocess: PreprocessStats,
    pub masks: MaskStats,
    pub anchor_valid: usize,
    pub lower_bound_raised: usize,
    /// Info-mask pixels without a valid refined depth (not stitched).
    pub missing_depth: usize,
    pub candidates: usize,
    pub filtered_out: usize,
    pub merged: usize,
}

/// Contents of `run.json`. Everything except `timings` is deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub source: String,
    pub target: String,
    pub step: usize,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameSummary>,
    pub refine_levels: Vec<LevelReport>,
    /// Wall-clock seconds per stage, summed over frames.
    pub timings: BTreeMap<String, f64>,
}

/// Per-frame state after completion, before refinement.
struct Prepared {
    frame: usize,
    target_cam: Camera,
    source_view: ObservedView,
    masks: MaskBundle,
    bound_depth: DepthFrame,
    anchor_valid: BitMask,
    anchor_depth: DepthFrame,
    completed_rgb: RgbFrame,
    d_ff: DepthFrame,
    summary: FrameSummary,
    timings: Vec<(&'static str, f64)>,
}

fn lookup<'a>(entries: &'a [CameraEntry], view: &str, frame: usize) -> Result<&'a CameraEntry> {
    entries
        .iter()
        .find(|e| e.view_id == view && e.frame_idx == frame)
        .ok_or_else(|| Error::invalid(format!("manifest has no camera for view {view:?} frame {frame}")))
}

fn timed<T>(timings: &mut Vec<(&'static str, f64)>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f();
    timings.push((stage, t0.elapsed().as_secs_f64()));
    out
}

/// Runs `job` for every index on `workers` threads; results come back in
/// index order.
fn run_pool<T: Send>(n: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = job(i);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result slots").into_iter().map(|r| r.expect("job ran")).collect()
}

/// The source asset: one curtain-free lattice mesh per frame of the
/// (preprocessed) source view.
pub struct SourceFrame {
    pub frame: usize,
    pub camera: Camera,
    pub width: usize,
    pub height: usize,
    pub rgb: RgbFrame,
    pub depth: DepthFrame,
    pub fg_mask: BitMask,
    pub bg_depth: Option<DepthFrame>,
    pub preprocess: PreprocessStats,
}

/// Loads and preprocesses one source frame.
pub fn load_source_frame(cfg: &PipelineConfig, entries: &[CameraEntry], view: &str, frame: usize) -> Result<SourceFrame> {
    let layout = DatasetLayout::new(&cfg.dataset);
    let entry = lookup(entries, view, frame)?;
    let mut rgb = io::read_rgb_png(&layout.rgb(view, frame))?;
    let mut depth = io::read_pfm(&layout.depth(view, frame))?;
    let fg_path = layout.fg_mask(view, frame);
    let mut fg_mask = if fg_path.is_file() {
        io::read_mask_png(&fg_path)?
    } else {
        BitMask::new(depth.width, depth.height)
    };
    let bg_path = layout.bg_depth(view, frame);
    let bg_depth = if bg_path.is_file() { Some(io::read_pfm(&bg_path)?) } else { None };
    let mut stats = PreprocessStats::default();
    if cfg.preprocess.enabled {
        let p = &cfg.preprocess;
        let fixed = preprocess::depth_spikefix(&depth, &depth.validity_mask(), p.window, p.mad_k, p.small_only)?;
        stats.spikefix_changed = preprocess::depth_changes(&depth, &fixed);
        let lap = crate::imgops::median_valid_depth(&fixed).unwrap_or(0.0) * p.lap_frac;
        let (rgb2, mapped) = preprocess::edge_mapping(&rgb, &fixed, lap, p.radius)?;
        stats.edge_mapping_changed = preprocess::depth_changes(&fixed, &mapped);
        let refined = preprocess::occlusion_mask_refine(&fg_mask, &mapped, p.ring_thickness, p.window, p.min_component, p.border_margin)?;
        stats.mask_refine_changed = refined.difference(&fg_mask).count() + fg_mask.difference(&refined).count();
        rgb = rgb2;
        depth = mapped;
        fg_mask = refined;
    }
    Ok(SourceFrame {
        frame,
        camera: entry.camera()?,
        width: entry.width,
        height: entry.height,
        rgb,
        depth,
        fg_mask,
        bg_depth,
        preprocess: stats,
    })
}

/// Builds the asset layer of a source frame: its lattice mesh without the
/// quads spanning depth jumps.
pub fn source_layer(cfg: &PipelineConfig, src: &SourceFrame) -> Result<Geometry> {
    let mesh = frames::lift_lattice_mesh_with(&src.rgb, &src.depth, &src.camera, &MeshOptions::curtain_excluded(cfg.mesh_max_depth_jump))?;
    Ok(Geometry::Mesh(mesh))
}

/// Builds the initial asset (generation step 0) from every frame of a view.
pub fn build_source_asset(cfg: &PipelineConfig, entries: &[CameraEntry], view: &str) -> Result<(SceneAsset, Vec<SourceFrame>)> {
    let frames = view_frames(entries, view);
    if frames.is_empty() {
        return Err(Error::invalid(format!("manifest has no frames for view {view:?}")));
    }
    let loaded = run_pool(frames.len(), cfg.workers, |k| {
        let f = frames[k];
        load_source_frame(cfg, entries, view, f)
            .and_then(|s| source_layer(cfg, &s).map(|g| (s, g)))
            .map_err(|e| e.in_frame(f))
    });
    let mut asset = SceneAsset::new(entries.to_vec());
    let mut sources = Vec::new();
    for r in loaded {
        let (s, g) = r?;
        asset.add_layer(Provenance::new(view, view, 0, s.frame), g)?;
        sources.push(s);
    }
    Ok((asset, sources))
}

pub fn view_frames(entries: &[CameraEntry], view: &str) -> Vec<usize> {
    let mut f: Vec<usize> = entries.iter().filter(|e| e.view_id == view).map(|e| e.frame_idx).collect();
    f.sort_unstable();
    f.dedup();
    f
}

fn frame_dir(cfg: &PipelineConfig, target: &str, frame: usize) -> PathBuf {
    cfg.work_dir.join("frames").join(target).join(format!("{frame:04}"))
}

fn prepare_frame(cfg: &PipelineConfig, entries: &[CameraEntry], asset: &SceneAsset, src: &SourceFrame, target: &str) -> Result<Prepared> {
    let t = src.frame;
    let mut timings = Vec::new();
    let tgt_entry = lookup(entries, target, t)?;
    let tgt = tgt_entry.camera()?;
    let (w, h) = (tgt_entry.width, tgt_entry.height);
    if (w, h) != (cfg.width, cfg.height) {
        return Err(Error::invalid(format!(
            "target view is {w}x{h} but the configured resolution is {}x{}",
            cfg.width, cfg.height
        )));
    }

    let (mesh_r, pcd_r, curtain_r, anchor_r) = timed(&mut timings, "render", || {
        let full = frames::lift_lattice_mesh(&src.rgb, &src.depth, &src.camera)?;
        let pc = frames::lift_point_cloud(&src.rgb, &src.depth, &src.camera)?;
        let mesh_r = render_mesh(&full, &tgt, w, h, false);
        let pcd_r = render_points(&pc, &tgt, w, h);
        let curtain_r = match &src.bg_depth {
            Some(bg) => {
                let curtain = frames::build_fgbg_curtain(&src.depth, bg, &src.fg_mask, &src.camera, cfg.curtain_thickness, Some(&src.rgb))?;
                Some(render_mesh(&curtain, &tgt, w, h, false))
            }
            None => None,
        };
        let anchor_r = asset.render(t, &tgt, w, h);
        Ok((mesh_r, pcd_r, curtain_r, anchor_r))
    })?;

    let masks = timed(&mut timings, "masks", || {
        let hole = projection_hole_mask(&pcd_r);
        let cdisc = curtain_discrepancy_mask(&mesh_r, &pcd_r, cfg.mask_rel_depth_tol)?;
        let cfb = match &curtain_r {
            Some(c) => curtain_fb_mask(c, &pcd_r, cfg.mask_rel_depth_tol)?,
            None => BitMask::new(w, h),
        };
        MaskBundle::new(hole, cdisc, cfb, cfg.mask_min_component)
    })?;

    let dir = frame_dir(cfg, target, t);
    for (name, m) in masks.kinds() {
        io::write_mask_png(&dir.join(format!("mask_{name}.png")), m)?;
    }
    io::write_pfm(&dir.join("anchor_depth.pfm"), &anchor_r.depth)?;

    let (completed_rgb, d_ff) = timed(&mut timings, "completion", || {
        let ex_dir = exchange::record_dir(&cfg.work_dir, target, t);
        let mut record = ExchangeRecord::new(target, t);
        // Clear stale completions so a rerun waits for fresh results.
        for f in [&record.completed, &record.completed_depth] {
            let p = ex_dir.join(f);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        exchange::post_request(&ex_dir, &record, &pcd_r.color, &masks.info_addition)?;
        if cfg.completer == Completer::Oracle {
            let layout = DatasetLayout::new(&cfg.dataset);
            let gt_rgb = io::read_rgb_png(&layout.rgb(target, t))?;
            let gt_depth = io::read_pfm(&layout.depth(target, t))?;
            let done = exchange::oracle_complete(&pcd_r.color, &masks.info_addition, &gt_rgb)?;
            exchange::post_completion(&ex_dir, &record, &done, &exchange::oracle_depth(&gt_depth, &cfg.oracle_depth))?;
        }
        exchange::await_completion(
            &ex_dir,
            &mut record,
            Duration::from_secs_f64(cfg.exchange_timeout_s),
            Duration::from_millis(cfg.poll_ms),
        )
    })?;
    if !(completed_rgb.width == w && completed_rgb.height == h && d_ff.width == w && d_ff.height == h) {
        return Err(Error::invalid("completed image or depth does not match the target resolution"));
    }

    let bound_depth = curtain_depth(&mesh_r, curtain_r.as_ref(), &pcd_r, cfg.mask_rel_depth_tol);
    let mut anchor_valid = anchor_r.support.difference(&masks.info_addition);
    for i in 0..w * h {
        anchor_valid.bits[i] &= anchor_r.depth.valid[i] && d_ff.valid[i];
    }
    let summary = FrameSummary {
        frame: t,
        preprocess: src.preprocess.clone(),
        masks: MaskStats {
            hole: masks.hole.count(),
            cdisc: masks.curtain_disc.count(),
            cfb: masks.curtain_fb.count(),
            info: masks.info_addition.count(),
        },
        anchor_valid: anchor_valid.count(),
        ..FrameSummary::default()
    };
    Ok(Prepared {
        frame: t,
        target_cam: tgt,
        source_view: ObservedView {
            camera: src.camera.clone(),
            width: src.width,
            height: src.height,
        },
        masks,
        bound_depth,
        anchor_valid,
        anchor_depth: anchor_r.depth,
        completed_rgb,
        d_ff,
        summary,
        timings,
    })
}

/// Nearest depth among the lattice-mesh and FG/BG curtain renders, taken
/// only where that render lies in front of the point-cloud render (or the
/// points leave a hole). Where the points are nearer, the mesh shows a
/// surface hidden behind real content rather than a curtain.
fn curtain_depth(mesh_r: &RenderOutput, curtain_r: Option<&RenderOutput>, pcd_r: &RenderOutput, rel_tol: f64) -> DepthFrame {
    let mut out = DepthFrame::new(mesh_r.width(), mesh_r.height());
    for i in 0..out.data.len() {
        let pcd = (pcd_r.support.bits[i] && pcd_r.depth.valid[i]).then(|| pcd_r.depth.data[i] as f64);
        let mut best = f32::INFINITY;
        for r in std::iter::once(mesh_r).chain(curtain_r) {
            if !(r.support.bits[i] && r.depth.valid[i]) {
                continue;
            }
            let d = r.depth.data[i];
            if pcd.map_or(true, |p| (d as f64) < p * (1.0 - rel_tol)) {
                best = best.min(d);
            }
        }
        if best.is_finite() {
            out.data[i] = best;
            out.valid[i] = true;
        }
    }
    out
}

/// Stitch candidates of one frame after refinement.
fn finish_frame(
    cfg: &PipelineConfig,
    asset: &SceneAsset,
    observed_extra: &[ObservedView],
    p: &mut Prepared,
    refined: DepthFrame,
    target: &str,
) -> Result<Geometry> {
    let t0 = Instant::now();
    let dir = frame_dir(cfg, target, p.frame);
    let mut depth = refined;
    if cfg.lower_bound {
        let apply = p.masks.curtain_disc.union(&p.masks.curtain_fb);
        let bounded = curtain_lower_bound(&depth, &p.bound_depth, &apply, &cfg.lower_bound_cfg)?;
        p.summary.lower_bound_raised = preprocess::depth_changes(&depth, &bounded);
        depth = bounded;
    }
    io::write_pfm(&dir.join("refined_depth.pfm"), &depth)?;
    let mut mask = p.masks.info_addition.clone();
    for i in 0..mask.bits.len() {
        if mask.bits[i] && !depth.valid[i] {
            mask.bits[i] = false;
            p.summary.missing_depth += 1;
        }
    }
    let candidate = build_stitch_candidates(&p.completed_rgb, &depth, &mask, &p.target_cam, p.frame)?;
    let mut observed = vec![p.source_view.clone()];
    observed.extend_from_slice(observed_extra);
    let kept = render_disagreement_filter(&candidate, asset, &observed, cfg.depth_tol, cfg.vote_frac)?;
    p.summary.candidates = candidate.points.len();
    p.summary.filtered_out = candidate.points.len() - kept.points.len();
    p.summary.merged = kept.points.len();
    let geometry = if cfg.stitch_mesh {
        Geometry::Mesh(kept.to_mesh()?)
    } else {
        Geometry::Points(kept.points)
    };
    p.timings.push(("stitch", t0.elapsed().as_secs_f64()));
    Ok(geometry)
}

/// Result of [`run_expand_full`].
pub struct ExpandOutput {
    pub asset: SceneAsset,
    pub summary: RunSummary,
}

/// Expands the source view's asset with the new content seen from `target`,
/// writes the asset directory and `run.json` to `cfg.out_dir`, and returns
/// the merged asset.
pub fn run_expand(cfg: &PipelineConfig, source_view: &str, target_view: &str) -> Result<SceneAsset> {
    Ok(run_expand_full(cfg, source_view, target_view)?.asset)
}

pub fn run_expand_full(cfg: &PipelineConfig, source_view: &str, target_view: &str) -> Result<ExpandOutput> {
    cfg.validate()?;
    cfg.check_paths()?;
    let run_start = Instant::now();
    let entries = io::read_camera_manifest(&DatasetLayout::new(&cfg.dataset).manifest())?;
    let observed_extra: Vec<ObservedView> = cfg
        .observed_views
        .iter()
        .map(|v| {
            let e = entries
                .iter()
                .find(|e| &e.view_id == v)
                .ok_or_else(|| Error::invalid(format!("unknown observed view {v:?}")))?;
            ObservedView::from_entry(e)
        })
        .collect::<Result<_>>()?;

    let t_src = Instant::now();
    let (base, sources) = build_source_asset(cfg, &entries, source_view)?;
    let source_time = t_src.elapsed().as_secs_f64();

    let prepared = run_pool(sources.len(), cfg.workers, |k| {
        prepare_frame(cfg, &entries, &base, &sources[k], target_view).map_err(|e| e.in_frame(sources[k].frame))
    });
    let mut prepared: Vec<Prepared> = prepared.into_iter().collect::<Result<_>>()?;

    let t_ref = Instant::now();
    let inputs: Vec<AnchorInput> = prepared
        .iter()
        .map(|p| AnchorInput {
            d_ff: p.d_ff.clone(),
            d_anchor: p.anchor_depth.clone(),
            valid: p.anchor_valid.clone(),
        })
        .collect();
    let (refined, refine_levels) = if cfg.refine_temporal {
        let (r, rep) = refine_sequence_with_report(&inputs, &cfg.refine)?;
        (r, rep.levels)
    } else {
        let mut out = Vec::new();
        let mut levels = Vec::new();
        for (k, inp) in inputs.iter().enumerate() {
            let (mut r, rep) = refine_sequence_with_report(std::slice::from_ref(inp), &cfg.refine).map_err(|e| e.in_frame(prepared[k].frame))?;
            out.push(r.remove(0));
            levels.extend(rep.levels.into_iter().map(|mut l| {
                l.frame = k;
                l
            }));
        }
        (out, levels)
    };
    let refine_time = t_ref.elapsed().as_secs_f64();

    let mut asset = base.clone();
    let mut geoms = Vec::new();
    for (p, r) in prepared.iter_mut().zip(refined) {
        geoms.push(finish_frame(cfg, &base, &observed_extra, p, r, target_view).map_err(|e| e.in_frame(p.frame))?);
    }
    for (p, g) in prepared.iter().zip(geoms) {
        asset = merge_geometry(&asset, g, Provenance::new(source_view, target_view, cfg.step, p.frame))?;
    }

    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    timings.insert("source_asset".into(), source_time);
    timings.insert("refine".into(), refine_time);
    timings.insert("refine_per_frame".into(), refine_time / prepared.len() as f64);
    for p in &prepared {
        for (k, v) in &p.timings {
            *timings.entry((*k).to_string()).or_default() += v;
        }
    }
    let t_save = Instant::now();
    asset.save(&cfg.out_dir.join("asset"))?;
    timings.insert("save".into(), t_save.elapsed().as_secs_f64());
    timings.insert("total".into(), run_start.elapsed().as_secs_f64());
    let summary = RunSummary {
        source: source_view.to_string(),
        target: target_view.to_string(),
        step: cfg.step,
        width: cfg.width,
        height: cfg.height,
        frames: prepared.iter().map(|p| p.summary.clone()).collect(),
        refine_levels,
        timings,
    };
    io::write_json(&cfg.out_dir.join("run.json"), &summary)?;
    Ok(ExpandOutput { asset, summary })
}

/// Path of the asset directory written by [`run_expand`].
pub fn asset_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.out_dir.join("asset")
}

/// Removes timing fields from a `run.json` value so runs can be compared.
pub fn strip_timings(run_json: &mut serde_json::Value) {
    if let Some(o) = run_json.as_object_mut() {
        o.remove("timings");
    }
}
