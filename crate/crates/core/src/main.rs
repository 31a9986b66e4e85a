use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stitch4d::camera::{Camera, CameraEntry};
use stitch4d::frames::BitMask;
use stitch4d::pipeline::{self, expand, PipelineConfig};
use stitch4d::refine::{refine_depth, AnchorInput, RefineConfig};
use stitch4d::stitch::SceneAsset;
use stitch4d::{io, trajeval, Error, Result};

#[derive(Parser)]
#[command(name = "stitch4d", version, about = "Geometric stitching of novel-view content into posed RGB-D assets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset from a plain-text scene description.
    Gen {
        scene: PathBuf,
        out: PathBuf,
    },
    /// Preprocess one frame of a view and write the cleaned RGB-D and FG mask.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        view: String,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stitch the new content seen from `target` into the source view's asset.
    Expand {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
    },
    /// Render an asset along the interpolated path between two cameras.
    Render {
        /// Asset directory written by `expand`.
        asset: PathBuf,
        #[arg(long)]
        cam0: String,
        #[arg(long)]
        cam1: String,
        #[arg(long, default_value_t = 2)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a feed-forward depth map against an anchor depth.
    Refine {
        #[arg(long)]
        ff: PathBuf,
        #[arg(long)]
        anchor: PathBuf,
        /// Anchor mask PNG; defaults to pixels where both depths are valid.
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trajectory metrics between two camera manifests.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Only use entries of this view (ordered by frame).
        #[arg(long)]
        view: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen { scene, out } => {
            let spec = pipeline::gen_synthetic_scene(&io::read_text(&scene)?, &out)?;
            println!("{} cameras x {} frames at {}x{}", spec.cameras.len(), spec.frames, spec.width, spec.height);
        }
        Cmd::Preprocess { config, view, frame, out } => {
            let cfg = PipelineConfig::load(&config)?;
            cfg.check_paths()?;
            let entries = io::read_camera_manifest(&pipeline::DatasetLayout::new(&cfg.dataset).manifest())?;
            let src = expand::load_source_frame(&cfg, &entries, &view, frame)?;
            io::write_rgb_png(&out.join("rgb.png"), &src.rgb)?;
            io::write_pfm(&out.join("depth.pfm"), &src.depth)?;
            io::write_mask_png(&out.join("fgmask.png"), &src.fg_mask)?;
            println!("{}", serde_json::to_string_pretty(&src.preprocess)?);
        }
        Cmd::Expand { config, source, target } => {
            let cfg = PipelineConfig::load(&config)?;
            let out = pipeline::run_expand_full(&cfg, &source, &target)?;
            let merged: usize = out.summary.frames.iter().map(|f| f.merged).sum();
            println!("merged {merged} points over {} frames into {}", out.summary.frames.len(), expand::asset_dir(&cfg).display());
        }
        Cmd::Render { asset, cam0, cam1, frames, out } => {
            let asset = SceneAsset::load(&asset)?;
            let (c0, w, h) = first_camera(&asset.cameras, &cam0)?;
            let (c1, ..) = first_camera(&asset.cameras, &cam1)?;
            pipeline::render_novel_views(&asset, &c0, &c1, w, h, frames, &out)?;
            println!("wrote {frames} frames to {}", out.display());
        }
        Cmd::Refine { ff, anchor, valid, out } => {
            let d_ff = io::read_pfm(&ff)?;
            let d_anchor = io::read_pfm(&anchor)?;
            let valid = match valid {
                Some(p) => io::read_mask_png(&p)?,
                None => BitMask::from_bits(
                    d_ff.width,
                    d_ff.height,
                    d_ff.valid.iter().zip(&d_anchor.valid).map(|(a, b)| *a && *b).collect(),
                ),
            };
            let refined = refine_depth(&AnchorInput { d_ff, d_anchor, valid }, &RefineConfig::default())?;
            io::write_pfm(&out, &refined)?;
        }
        Cmd::Eval { pred, reference, view, out } => {
            let p = trajectory(&pred, view.as_deref())?;
            let r = trajectory(&reference, view.as_deref())?;
            let metrics = trajeval::compute_metrics(&p, &r)?;
            let text = serde_json::to_string_pretty(&metrics)?;
            match out {
                Some(path) => io::write_atomic(&path, format!("{text}\n").as_bytes())?,
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

fn first_camera(entries: &[CameraEntry], view: &str) -> Result<(Camera, usize, usize)> {
    let e = entries
        .iter()
        .filter(|e| e.view_id == view)
        .min_by_key(|e| e.frame_idx)
        .ok_or_else(|| Error::InvalidArgument(format!("asset has no camera for view {view:?}")))?;
    Ok((e.camera()?, e.width, e.height))
}

/// Cameras of a manifest in file order, or of one view ordered by frame.
fn trajectory(path: &Path, view: Option<&str>) -> Result<Vec<Camera>> {
    let mut entries = io::read_camera_manifest(path)?;
    if let Some(v) = view {
        entries.retain(|e| e.view_id == v);
        entries.sort_by_key(|e| e.frame_idx);
    }
    entries.iter().map(CameraEntry::camera).collect()
}
