//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix6, UnitQuaternion, Vector3, Vector4, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stitch4d::camera::Camera;
use stitch4d::frames::{BitMask, ColoredPointCloud, DepthFrame, LatticeMesh, Point, RgbFrame};
use stitch4d::io::read_camera_manifest;
use stitch4d::pipeline::expand::build_source_asset;
use stitch4d::pipeline::{gen_synthetic_scene, DatasetLayout, PipelineConfig, SceneSpec};
use stitch4d::raster::{RenderOutput, NEAR};
use stitch4d::stitch::SceneAsset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly distributed rotation (normalized Gaussian quaternion).
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = Vector4::new(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    *UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(q)).to_rotation_matrix().matrix()
}

pub fn gauss(rng: &mut impl Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

pub fn random_vec(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

/// Random pinhole camera with arbitrary pose.
pub fn random_camera(rng: &mut impl Rng) -> Camera {
    Camera::from_center(
        rng.gen_range(50.0..800.0),
        rng.gen_range(50.0..800.0),
        rng.gen_range(-50.0..400.0),
        rng.gen_range(-50.0..300.0),
        random_rotation(rng),
        random_vec(rng, 10.0),
    )
    .unwrap()
}

/// Camera looking down +z from the origin with centered principal point.
pub fn front_camera(w: usize, h: usize, f: f64) -> Camera {
    Camera::new(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, Matrix3::identity(), Vector3::zeros()).unwrap()
}

pub fn point(position: Vector3<f64>, color: [u8; 3], id: u32) -> Point {
    Point {
        position,
        color,
        source_pixel: id,
    }
}

/// Splatting oracle: every pixel scans every point, uses the tent weight
/// `max(0, 1 - |u - x|) * max(0, 1 - |v - y|)`, sorts contributions by depth
/// and blends those within `rel_tol` of the nearest.
pub fn naive_render_points(pc: &ColoredPointCloud, cam: &Camera, w: usize, h: usize, rel_tol: f64, w_min: f64) -> RenderOutput {
    let proj: Vec<Option<(f64, f64, f64, [u8; 3])>> = pc
        .points
        .iter()
        .map(|p| {
            let xc = cam.rotation * p.position + cam.translation;
            (xc.z > NEAR).then(|| (cam.fx * xc.x / xc.z + cam.cx, cam.fy * xc.y / xc.z + cam.cy, xc.z, p.color))
        })
        .collect();
    let mut out = RenderOutput::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut contrib: Vec<(f64, f64, [u8; 3])> = proj
                .iter()
                .flatten()
                .filter_map(|&(u, v, z, c)| {
                    let wt = (1.0 - (u - x as f64).abs()).max(0.0) * (1.0 - (v - y as f64).abs()).max(0.0);
                    (wt > 0.0).then_some((z, wt, c))
                })
                .collect();
            if contrib.is_empty() {
                continue;
            }
            contrib.sort_by(|a, b| a.0.total_cmp(&b.0));
            let z_min = contrib[0].0;
            let kept: Vec<_> = contrib.iter().filter(|c| c.0 <= z_min * (1.0 + rel_tol)).collect();
            let wsum: f64 = kept.iter().map(|c| c.1).sum();
            if wsum < w_min {
                continue;
            }
            let i = y * w + x;
            out.support.bits[i] = true;
            out.depth.data[i] = (kept.iter().map(|c| c.0 * c.1).sum::<f64>() / wsum) as f32;
            out.depth.valid[i] = true;
            for k in 0..3 {
                let v = kept.iter().map(|c| c.2[k] as f64 * c.1).sum::<f64>() / wsum;
                out.color.data[3 * i + k] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Per-pixel coverage oracle for meshes: a pixel center is covered when it
/// lies strictly inside a projected triangle; depth is the camera-space z of
/// the ray/triangle-plane intersection, nearest wins. Pixels within `edge_eps`
/// pixels of any triangle edge are reported in `ambiguous`, where the
/// half-open fill rule decides.
pub struct MeshOracle {
    pub render: RenderOutput,
    pub ambiguous: BitMask,
}

pub fn naive_render_mesh(mesh: &LatticeMesh, cam: &Camera, w: usize, h: usize, edge_eps: f64) -> MeshOracle {
    let mut render = RenderOutput::empty(w, h);
    let mut ambiguous = BitMask::new(w, h);
    let cam_pts: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| cam.rotation * v.position + cam.translation).collect();
    for t in &mesh.triangles {
        let p = [cam_pts[t[0] as usize], cam_pts[t[1] as usize], cam_pts[t[2] as usize]];
        if p.iter().any(|q| q.z <= NEAR) {
            continue;
        }
        let s: Vec<(f64, f64)> = p.iter().map(|q| (cam.fx * q.x / q.z + cam.cx, cam.fy * q.y / q.z + cam.cy)).collect();
        let area = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[1].1 - s[0].1) * (s[2].0 - s[0].0);
        if area == 0.0 {
            continue;
        }
        let normal = (p[1] - p[0]).cross(&(p[2] - p[0]));
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64, y as f64);
                let mut inside = true;
                let mut near_edge = false;
                for k in 0..3 {
                    let (a, b) = (s[k], s[(k + 1) % 3]);
                    let e = ((b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0)) * area.signum();
                    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
                    if e.abs() <= edge_eps * len {
                        near_edge = true;
                    }
                    if e <= 0.0 {
                        inside = false;
                    }
                }
                let i = y * w + x;
                let ray = Vector3::new((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
                let z = normal.dot(&p[0]) / normal.dot(&ray);
                if near_edge {
                    // Covered or not, the pixel may legitimately go either way.
                    let bb = |v: f64, lo: f64, hi: f64| v >= lo - 1.0 && v <= hi + 1.0;
                    let (minx, maxx) = (s.iter().map(|q| q.0).fold(f64::INFINITY, f64::min), s.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max));
                    let (miny, maxy) = (s.iter().map(|q| q.1).fold(f64::INFINITY, f64::min), s.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max));
                    if bb(px, minx, maxx) && bb(py, miny, maxy) {
                        ambiguous.bits[i] = true;
                    }
                }
                if inside && (!render.depth.valid[i] || z < render.depth.data[i] as f64) {
                    render.support.bits[i] = true;
                    render.depth.data[i] = z as f32;
                    render.depth.valid[i] = true;
                }
            }
        }
    }
    MeshOracle { render, ambiguous }
}

/// Two-plane scene used by several tests: BG plane at `zb`, FG rectangle at
/// `zf` spanning `[x0, x1) x [y0, y1)` in world units.
pub struct TwoPlanes {
    pub zf: f64,
    pub zb: f64,
    pub rect: [f64; 4],
}

impl TwoPlanes {
    pub fn scene_text(&self, w: usize, h: usize, target_dx: f64) -> String {
        let [x0, y0, x1, y1] = self.rect;
        format!(
            "size {w} {h}\nplane 0 0 1 {zb} 90 120 200 checker 0.25 60 200 90\nrect {zf} {x0} {y0} {x1} {y1} 220 40 40 checker 0.1 250 250 40 fg\ncamera src 0 0 0\ncamera tgt {target_dx} 0 0\n",
            zb = self.zb,
            zf = self.zf
        )
    }

    fn in_rect(&self, p: &Vector3<f64>) -> bool {
        let [x0, y0, x1, y1] = self.rect;
        p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1
    }

    /// Target pixels whose ray hits the BG at a point the source camera (at
    /// the origin) cannot see because the FG rectangle is in the way.
    pub fn disocclusion_band(&self, target: &Camera, w: usize, h: usize) -> BitMask {
        let mut band = BitMask::new(w, h);
        let c = target.center();
        for y in 0..h {
            for x in 0..w {
                let dir = target.rotation.transpose() * Vector3::new((x as f64 - target.cx) / target.fx, (y as f64 - target.cy) / target.fy, 1.0);
                let fg_hit = c + dir * ((self.zf - c.z) / dir.z);
                if self.in_rect(&fg_hit) {
                    continue;
                }
                let bg = c + dir * ((self.zb - c.z) / dir.z);
                let shadow = bg * (self.zf / self.zb);
                if self.in_rect(&shadow) {
                    band.set(x, y, true);
                }
            }
        }
        band
    }
}

/// Planes `n . X = d` in world space.
pub type Plane = (Vector3<f64>, f64);

/// Estimates a camera pose from a rendered depth map of a known piecewise
/// planar scene by point-to-plane Gauss-Newton, starting from `init`. Pixels
/// are assigned to their nearest plane with a loose gate, then reassigned
/// with a tight one after the first solve so splatted pixels near plane
/// junctions drop out.
pub fn pose_from_depth(depth: &DepthFrame, init: &Camera, planes: &[Plane]) -> Camera {
    // World-from-camera: X = Rc * xc + tc.
    let mut rc = init.rotation.transpose();
    let mut tc = init.center();
    for gate in [0.05, 1e-4] {
        let mut pts = Vec::new();
        for y in (0..depth.height).step_by(3) {
            for x in (0..depth.width).step_by(3) {
                if let Some(d) = depth.get(x, y) {
                    let xc = Vector3::new((x as f64 - init.cx) / init.fx, (y as f64 - init.cy) / init.fy, 1.0) * d as f64;
                    let xw = rc * xc + tc;
                    let (k, r) = planes
                        .iter()
                        .enumerate()
                        .map(|(k, (n, dd))| (k, (n.dot(&xw) - dd).abs()))
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .unwrap();
                    if r < gate * (1.0 + xc.z) {
                        pts.push((xc, k));
                    }
                }
            }
        }
        for _ in 0..20 {
            let mut jtj = Matrix6::zeros();
            let mut jtr = Vector6::zeros();
            for (xc, k) in &pts {
                let (n, d) = planes[*k];
                let xw = rc * xc + tc;
                let r = n.dot(&xw) - d;
                // Left perturbation X -> exp(w) X + dt.
                let jw = xw.cross(&n);
                let j = Vector6::new(jw.x, jw.y, jw.z, n.x, n.y, n.z);
                jtj += j * j.transpose();
                jtr += j * r;
            }
            let Some(delta) = jtj.lu().solve(&(-jtr)) else { break };
            let rot = nalgebra::Rotation3::new(Vector3::new(delta[0], delta[1], delta[2]));
            rc = rot.matrix() * rc;
            tc = rot * tc + Vector3::new(delta[3], delta[4], delta[5]);
            if delta.norm() < 1e-14 {
                break;
            }
        }
    }
    let r = rc.transpose();
    init.with_pose(r, -(r * tc))
}

/// Minimizes `sum |s R x + t - y|^2` by pattern search over the rotation
/// vector from several starts, with `t` and `s` solved in closed form for
/// each rotation. Returns the best RMS residual found.
pub fn brute_force_sim3_rms(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
    let n = src.len() as f64;
    let ms = src.iter().sum::<Vector3<f64>>() / n;
    let md = dst.iter().sum::<Vector3<f64>>() / n;
    let rms_for = |w: &Vector3<f64>| {
        let r = nalgebra::Rotation3::new(*w);
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in src.iter().zip(dst) {
            let ra = r * (a - ms);
            num += ra.dot(&(b - md));
            den += ra.norm_squared();
        }
        let s = (num / den).max(0.0);
        let sse: f64 = src.iter().zip(dst).map(|(a, b)| (s * (r * (a - ms)) - (b - md)).norm_squared()).sum();
        (sse / n).sqrt()
    };
    let mut best = f64::INFINITY;
    let starts = [
        Vector3::zeros(),
        Vector3::new(2.0, 0.0, 0.0),
        Vector3::new(0.0, 2.0, 0.0),
        Vector3::new(0.0, 0.0, 2.0),
        Vector3::new(-1.5, 1.5, 0.5),
        Vector3::new(1.0, -1.0, -2.0),
    ];
    for start in starts {
        let mut w = start;
        let mut f = rms_for(&w);
        let mut step = 0.5;
        while step > 1e-12 {
            let mut improved = false;
            for a in 0..3 {
                for sgn in [-1.0, 1.0] {
                    let mut cand = w;
                    cand[a] += sgn * step;
                    let fc = rms_for(&cand);
                    if fc < f {
                        w = cand;
                        f = fc;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.min(f);
    }
    best
}

/// Generated dataset plus a pipeline config in a temporary directory.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub spec: SceneSpec,
    pub cfg: PipelineConfig,
}

impl Fixture {
    /// `extra` is appended to a config holding the scene's resolution.
    pub fn new(scene: &str, extra: &str) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let spec = gen_synthetic_scene(scene, &dir.path().join("dataset")).unwrap();
        let text = format!("width = {}\nheight = {}\n{extra}\n", spec.width, spec.height);
        std::fs::write(dir.path().join("config.txt"), &text).unwrap();
        let cfg = PipelineConfig::load(&dir.path().join("config.txt")).unwrap();
        Fixture { dir, spec, cfg }
    }

    pub fn path(&self) -> &std::path::Path {
        self.dir.path()
    }

    /// Asset built from the source view alone.
    pub fn base_asset(&self, source: &str) -> SceneAsset {
        let entries = read_camera_manifest(&DatasetLayout::new(&self.cfg.dataset).manifest()).unwrap();
        build_source_asset(&self.cfg, &entries, source).unwrap().0
    }
}

/// Target-view coverage and depth accuracy of a merged asset, and how much
/// the source-view render moved on pixels the base asset already supported.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionReport {
    pub coverage: f64,
    pub median_rel_err: f64,
    pub max_src_color_diff: u8,
    pub max_src_depth_rel_diff: f64,
    pub src_changed_pixels: usize,
}

pub fn expansion_report(fx: &Fixture, base: &SceneAsset, merged: &SceneAsset, source: &str, target: &str) -> ExpansionReport {
    let (w, h) = (fx.spec.width, fx.spec.height);
    let (src, tgt) = (fx.spec.camera(source).unwrap(), fx.spec.camera(target).unwrap());
    let (mut gt_n, mut cov, mut errs) = (0usize, 0usize, Vec::new());
    let (mut dc, mut dd, mut changed) = (0u8, 0.0f64, 0usize);
    for frame in 0..fx.spec.frames {
        let gt = fx.spec.render(tgt, frame, true);
        let r = merged.render(frame, tgt, w, h);
        for i in 0..w * h {
            if !gt.depth.valid[i] {
                continue;
            }
            gt_n += 1;
            if r.support.bits[i] && r.depth.valid[i] {
                cov += 1;
                errs.push(((r.depth.data[i] - gt.depth.data[i]) / gt.depth.data[i]).abs() as f64);
            }
        }
        let (before, after) = (base.render(frame, src, w, h), merged.render(frame, src, w, h));
        for i in (0..w * h).filter(|&i| before.support.bits[i]) {
            let c = (0..3).map(|k| before.color.data[3 * i + k].abs_diff(after.color.data[3 * i + k])).max().unwrap();
            let d = if after.support.bits[i] { ((after.depth.data[i] - before.depth.data[i]) / before.depth.data[i]).abs() as f64 } else { f64::INFINITY };
            dc = dc.max(c);
            dd = dd.max(d);
            changed += (c > 1 || d > 1e-4) as usize;
        }
    }
    errs.sort_by(f64::total_cmp);
    ExpansionReport {
        coverage: cov as f64 / gt_n.max(1) as f64,
        median_rel_err: errs.get(errs.len() / 2).copied().unwrap_or(f64::INFINITY),
        max_src_color_diff: dc,
        max_src_depth_rel_diff: dd,
        src_changed_pixels: changed,
    }
}

/// Byte contents of every file under `dir`, keyed by relative path.
pub fn dir_bytes(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Two frames of a FG rectangle sliding over a checkered BG plane, seen by a
/// source camera and a laterally shifted target.
pub fn moving_scene(w: usize, h: usize, target_dx: f64) -> String {
    format!(
        "size {w} {h}\nframes 2\nplane 0 0 1 4 90 120 200 checker 0.25 60 200 90\nrect 2 -0.4 -0.3 0.2 0.3 220 40 40 checker 0.1 250 250 40 fg move 0.05 0 0\ncamera src 0 0 0\ncamera tgt {target_dx} 0 0\n"
    )
}

pub struct RandomFrame {
    pub rgb: RgbFrame,
    pub depth: DepthFrame,
    pub fg: BitMask,
}

/// Slanted BG plane, a nearer FG rectangle with a slightly misaligned mask,
/// 2% depth spikes and a few invalid pixels.
pub fn random_frame(seed: u64, w: usize, h: usize) -> RandomFrame {
    let mut r = rng(seed);
    let (bg0, gx, gy) = (r.gen_range(3.0..6.0), r.gen_range(-0.01..0.01), r.gen_range(-0.01..0.01));
    let fz = r.gen_range(1.0..2.5);
    let (x0, y0) = (r.gen_range(4..w / 2), r.gen_range(4..h / 2));
    let (x1, y1) = (r.gen_range(x0 + 6..w - 2), r.gen_range(y0 + 6..h - 2));
    let (cb, cf): ([u8; 3], [u8; 3]) = ([r.gen(), r.gen(), r.gen()], [r.gen(), r.gen(), r.gen()]);
    let (dx, dy) = (r.gen_range(-1i64..=1), r.gen_range(-1i64..=1));
    let mut out = RandomFrame { rgb: RgbFrame::new(w, h), depth: DepthFrame::new(w, h), fg: BitMask::new(w, h) };
    for y in 0..h {
        for x in 0..w {
            let inside = (x0..x1).contains(&x) && (y0..y1).contains(&y);
            let d = if inside { fz } else { bg0 + gx * x as f64 + gy * y as f64 };
            out.depth.set(x, y, d as f32);
            out.rgb.set(x, y, if inside { cf } else { cb });
            let (mx, my) = (x as i64 - dx, y as i64 - dy);
            out.fg.set(x, y, (x0 as i64..x1 as i64).contains(&mx) && (y0 as i64..y1 as i64).contains(&my));
        }
    }
    for _ in 0..w * h / 50 {
        let (x, y) = (r.gen_range(0..w), r.gen_range(0..h));
        let d = out.depth.get(x, y).unwrap();
        out.depth.set(x, y, d * r.gen_range(0.5f32..1.8));
    }
    for _ in 0..w * h / 200 {
        out.depth.invalidate(r.gen_range(0..w), r.gen_range(0..h));
    }
    out
}
