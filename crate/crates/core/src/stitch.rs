//! Scene assets, stitch candidates and render-disagreement filtering.
//!
//! A [`SceneAsset`] holds geometry layers per frame index, each tagged with
//! its [`Provenance`]. Layers are append-only: merging a candidate adds a new
//! layer and never touches existing ones.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, CameraEntry, PixelCoord};
use crate::error::{Error, Result};
use crate::frames::{self, check_dims, BitMask, ColoredPointCloud, DepthFrame, LatticeMesh, Point, RgbFrame};
use crate::io;
use crate::raster::{render_mesh, render_points, RenderOutput};

pub const DEFAULT_DEPTH_TOL: f64 = 0.05;
pub const DEFAULT_VOTE_FRAC: f64 = 0.5;
/// Relative depth gap under which two layers are treated as the same surface
/// when compositing. A point kept by the disagreement filter at
/// [`DEFAULT_DEPTH_TOL`] lies at least `anchor * (1 - tol)` deep, so this is
/// the smallest gap at which the earlier (anchor) layer still wins, plus a
/// margin for f32 depth rounding.
pub const SAME_SURFACE_TOL: f64 = DEFAULT_DEPTH_TOL / (1.0 - DEFAULT_DEPTH_TOL) + 1e-6;

/// Where a layer came from. Unique within an asset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    /// Generation step: 0 for the initial asset, then one per expansion.
    pub step: usize,
    pub source: String,
    pub target: String,
    pub frame: usize,
}

impl Provenance {
    pub fn new(source: impl Into<String>, target: impl Into<String>, step: usize, frame: usize) -> Self {
        Self {
            step,
            source: source.into(),
            target: target.into(),
            frame,
        }
    }

    /// File stem for the layer's PLY, with ids reduced to `[A-Za-z0-9_-]`.
    pub fn file_stem(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect()
        };
        format!("f{:05}_s{:03}_{}_to_{}", self.frame, self.step, clean(&self.source), clean(&self.target))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Points(ColoredPointCloud),
    Mesh(LatticeMesh),
}

impl Geometry {
    pub fn kind(&self) -> &'static str {
        match self {
            Geometry::Points(_) => "points",
            Geometry::Mesh(_) => "mesh",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Geometry::Points(p) => p.len(),
            Geometry::Mesh(m) => m.vertices.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Meshes also splat their vertices, but only onto pixels no triangle
    /// covers. This fills the half-open last row and column and the gaps
    /// left by dropped depth-jump quads.
    pub fn render(&self, cam: &Camera, width: usize, height: usize) -> RenderOutput {
        match self {
            Geometry::Points(p) => render_points(p, cam, width, height),
            Geometry::Mesh(m) => {
                let mut out = render_mesh(m, cam, width, height, true);
                let verts = ColoredPointCloud {
                    points: m.vertices.clone(),
                };
                let fill = render_points(&verts, cam, width, height);
                for i in 0..width * height {
                    if !out.support.bits[i] && fill.support.bits[i] {
                        out.support.bits[i] = true;
                        out.depth.data[i] = fill.depth.data[i];
                        out.depth.valid[i] = fill.depth.valid[i];
                        out.color.data[3 * i..3 * i + 3].copy_from_slice(&fill.color.data[3 * i..3 * i + 3]);
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub provenance: Provenance,
    pub geometry: Geometry,
}

/// Explicit 4D scene: cameras plus provenance-tagged layers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneAsset {
    /// Cameras the asset refers to (observed and target views).
    pub cameras: Vec<CameraEntry>,
    layers: Vec<Layer>,
}

impl SceneAsset {
    pub fn new(cameras: Vec<CameraEntry>) -> Self {
        Self {
            cameras,
            layers: Vec::new(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_for_frame(&self, frame: usize) -> impl Iterator<Item = &Layer> {
        self.layers.iter().filter(move |l| l.provenance.frame == frame)
    }

    /// Sorted distinct frame indices that have at least one layer.
    pub fn frames(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.layers.iter().map(|l| l.provenance.frame).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Appends a layer; fails with a conflict if the provenance already exists.
    pub fn add_layer(&mut self, provenance: Provenance, geometry: Geometry) -> Result<()> {
        if self.layers.iter().any(|l| l.provenance == provenance) {
            return Err(Error::Conflict(format!("layer {} already exists", provenance.file_stem())));
        }
        self.layers.push(Layer { provenance, geometry });
        Ok(())
    }

    /// Renders the layers of `frame` and composites them (see [`composite`]).
    pub fn render(&self, frame: usize, cam: &Camera, width: usize, height: usize) -> RenderOutput {
        let mut layers: Vec<&Layer> = self.layers_for_frame(frame).collect();
        layers.sort_by(|a, b| a.provenance.cmp(&b.provenance));
        let renders: Vec<RenderOutput> = layers.iter().map(|l| l.geometry.render(cam, width, height)).collect();
        composite(&renders, width, height)
    }

    /// Writes `asset.json` and one PLY per layer under `dir/layers/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut manifest = AssetManifest {
            cameras: self.cameras.clone(),
            layers: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let file = format!("layers/{}.ply", layer.provenance.file_stem());
            let path = dir.join(&file);
            match &layer.geometry {
                Geometry::Points(p) => io::write_point_cloud_ply(&path, p)?,
                Geometry::Mesh(m) => io::write_mesh_ply(&path, m)?,
            }
            manifest.layers.push(LayerRecord {
                provenance: layer.provenance.clone(),
                kind: layer.geometry.kind().to_string(),
                count: layer.geometry.len(),
                file,
            });
        }
        io::write_json(&dir.join("asset.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: AssetManifest = io::read_json(&dir.join("asset.json"))?;
        let mut asset = SceneAsset::new(manifest.cameras);
        for rec in manifest.layers {
            let path = dir.join(&rec.file);
            let (vertices, triangles) = io::read_ply(&path)?;
            let geometry = match rec.kind.as_str() {
                "points" => Geometry::Points(ColoredPointCloud { points: vertices }),
                "mesh" => Geometry::Mesh(LatticeMesh { vertices, triangles }),
                other => {
                    return Err(Error::Format {
                        path,
                        msg: format!("unknown layer kind {other:?}"),
                    })
                }
            };
            asset.add_layer(rec.provenance, geometry)?;
        }
        Ok(asset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    #[serde(flatten)]
    provenance: Provenance,
    kind: String,
    count: usize,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AssetManifest {
    cameras: Vec<CameraEntry>,
    layers: Vec<LayerRecord>,
}

/// Per-pixel composite of layer renders given in priority order: the
/// nearest supported depth wins, except that layers within
/// [`SAME_SURFACE_TOL`] of the nearest depth count as the same surface and
/// the earliest of them keeps the pixel. The result depends only on the
/// priority order, not on how layers were merged.
pub fn composite(renders: &[RenderOutput], width: usize, height: usize) -> RenderOutput {
    let mut out = RenderOutput::empty(width, height);
    for i in 0..width * height {
        let z_min = renders
            .iter()
            .filter(|r| r.support.bits[i] && r.depth.valid[i])
            .map(|r| r.depth.data[i] as f64)
            .fold(f64::INFINITY, f64::min);
        if !z_min.is_finite() {
            continue;
        }
        let winner = renders
            .iter()
            .find(|r| r.support.bits[i] && r.depth.valid[i] && (r.depth.data[i] as f64) <= z_min * (1.0 + SAME_SURFACE_TOL))
            .expect("some layer attains z_min");
        out.support.bits[i] = true;
        out.depth.data[i] = winner.depth.data[i];
        out.depth.valid[i] = true;
        out.color.data[3 * i..3 * i + 3].copy_from_slice(&winner.color.data[3 * i..3 * i + 3]);
    }
    out
}

/// Colored points back-projected from the selected pixels of a completed
/// target view.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchCandidate {
    /// One point per set `origin_mask` pixel, in raster order.
    pub points: ColoredPointCloud,
    pub origin_mask: BitMask,
    pub target_cam: Camera,
    pub frame_idx: usize,
}

impl StitchCandidate {
    /// Lattice mesh over the candidate pixels, using each point's depth in
    /// the target camera.
    pub fn to_mesh(&self) -> Result<LatticeMesh> {
        let (w, h) = (self.origin_mask.width, self.origin_mask.height);
        let mut depth = DepthFrame::new(w, h);
        let mut rgb = RgbFrame::new(w, h);
        for p in &self.points.points {
            let i = p.source_pixel as usize;
            let z = self.target_cam.to_camera(&p.position).z;
            depth.set(i % w, i / w, z as f32);
            rgb.set(i % w, i / w, p.color);
        }
        frames::lift_lattice_mesh(&rgb, &depth, &self.target_cam)
    }
}

/// Back-projects every `mask` pixel with its refined depth.
pub fn build_stitch_candidates(
    completed_rgb: &RgbFrame,
    refined_depth: &DepthFrame,
    mask: &BitMask,
    target_cam: &Camera,
    frame_idx: usize,
) -> Result<StitchCandidate> {
    check_dims(completed_rgb, refined_depth, "build_stitch_candidates")?;
    check_dims(completed_rgb, mask, "build_stitch_candidates")?;
    let w = mask.width;
    let mut points = Vec::with_capacity(mask.count());
    for i in (0..mask.bits.len()).filter(|&i| mask.bits[i]) {
        let (x, y) = (i % w, i / w);
        let d = refined_depth.get(x, y).ok_or(Error::MissingDepth { x, y })?;
        points.push(Point {
            position: target_cam.unproject(PixelCoord::new(x as f64, y as f64), d as f64)?,
            color: completed_rgb.get(x, y),
            source_pixel: i as u32,
        });
    }
    Ok(StitchCandidate {
        points: ColoredPointCloud { points },
        origin_mask: mask.clone(),
        target_cam: target_cam.clone(),
        frame_idx,
    })
}

/// A camera with its image size.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedView {
    pub camera: Camera,
    pub width: usize,
    pub height: usize,
}

impl ObservedView {
    pub fn from_entry(e: &CameraEntry) -> Result<Self> {
        Ok(Self {
            camera: e.camera()?,
            width: e.width,
            height: e.height,
        })
    }
}

/// Per-point vote counts of [`render_disagreement_filter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Votes {
    pub visible: usize,
    pub disagree: usize,
}

/// In-frame pixels a point at subpixel `(u, v)` splats onto: the bilinear
/// neighbours with nonzero weight, as in [`render_points`].
fn splat_footprint(u: f64, v: f64, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    [
        (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
        (1.0, 0.0, fx * (1.0 - fy)),
        (0.0, 1.0, (1.0 - fx) * fy),
        (1.0, 1.0, fx * fy),
    ]
    .into_iter()
    .filter(move |&(dx, dy, wt)| {
        let (x, y) = (x0 + dx, y0 + dy);
        wt > 0.0 && x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64
    })
    .map(move |(dx, dy, _)| (y0 + dy) as usize * width + (x0 + dx) as usize)
}

/// Counts, per candidate point, the observed views it lands inside and the
/// views where it would occlude anchor-supported geometry. A point occludes
/// when its projected depth is nearer than `anchor_depth * (1 - depth_tol)`
/// on any pixel of its splat footprint, so a kept point can never cover
/// verified geometry when the merged asset is rendered.
pub fn disagreement_votes(candidate: &StitchCandidate, asset: &SceneAsset, observed: &[ObservedView], depth_tol: f64) -> Vec<Votes> {
    let mut votes = vec![Votes::default(); candidate.points.len()];
    for view in observed {
        let anchor = asset.render(candidate.frame_idx, &view.camera, view.width, view.height);
        for (p, v) in candidate.points.points.iter().zip(votes.iter_mut()) {
            let Ok(proj) = view.camera.project(&p.position) else { continue };
            if proj.behind || !proj.pixel.u.is_finite() || !proj.pixel.v.is_finite() {
                continue;
            }
            let mut inside = false;
            let mut occludes = false;
            for i in splat_footprint(proj.pixel.u, proj.pixel.v, view.width, view.height) {
                inside = true;
                if anchor.support.bits[i] && anchor.depth.valid[i] && proj.depth < anchor.depth.data[i] as f64 * (1.0 - depth_tol) {
                    occludes = true;
                }
            }
            if inside {
                v.visible += 1;
                v.disagree += occludes as usize;
            }
        }
    }
    votes
}

/// Drops candidate points that occlude verified geometry in at least
/// `vote_frac` of the observed views they are visible in. Points visible in
/// no view are kept.
pub fn render_disagreement_filter(
    candidate: &StitchCandidate,
    asset: &SceneAsset,
    observed: &[ObservedView],
    depth_tol: f64,
    vote_frac: f64,
) -> Result<StitchCandidate> {
    if observed.is_empty() {
        return Err(Error::invalid("render_disagreement_filter needs at least one observed view"));
    }
    let votes = disagreement_votes(candidate, asset, observed, depth_tol);
    let points = candidate
        .points
        .points
        .iter()
        .zip(&votes)
        .filter(|(_, v)| v.visible == 0 || (v.disagree as f64) < vote_frac * v.visible as f64)
        .map(|(p, _)| *p)
        .collect();
    Ok(StitchCandidate {
        points: ColoredPointCloud { points },
        ..candidate.clone()
    })
}

/// Returns a copy of `asset` with the candidate appended as a new layer.
pub fn merge_asset(asset: &SceneAsset, candidate: &StitchCandidate, source: &str, target: &str, step: usize) -> Result<SceneAsset> {
    merge_geometry(asset, Geometry::Points(candidate.points.clone()), Provenance::new(source, target, step, candidate.frame_idx))
}

/// Like [`merge_asset`] with arbitrary geometry (e.g. [`StitchCandidate::to_mesh`]).
pub fn merge_geometry(asset: &SceneAsset, geometry: Geometry, provenance: Provenance) -> Result<SceneAsset> {
    let mut out = asset.clone();
    out.add_layer(provenance, geometry)?;
    Ok(out)
}
