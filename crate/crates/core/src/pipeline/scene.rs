//! Plain-text synthetic scenes with analytically exact depth.
//!
//! One directive per line, `#` starts a comment:
//!
//! ```text
//! size <w> <h>
//! intrinsics <fx> <fy> <cx> <cy>        # default: fx = fy = w, centered
//! frames <n>                            # default: 1
//! plane <nx> <ny> <nz> <d> <r> <g> <b> [options]   # n . X = d
//! rect <z> <x0> <y0> <x1> <y1> <r> <g> <b> [options] # z = const, x in [x0,x1), y in [y0,y1)
//! box <x0> <y0> <z0> <x1> <y1> <z1> <r> <g> <b> [options]
//! camera <id> <x> <y> <z> [<yaw> <pitch> <roll>]    # center, degrees
//! interp <prefix> <id0> <id1> <n>                   # prefix_0 .. prefix_{n-1}
//! ```
//!
//! Shape options: `fg` marks the shape as foreground, `move <dx> <dy> <dz>`
//! translates it by that amount per frame, `checker <period> <r> <g> <b>`
//! alternates with a second color on a world-space grid.
//!
//! Cameras look along their local +z with +y pointing down the image. The
//! camera-to-world rotation is `Ry(yaw) * Rx(pitch) * Rz(roll)`.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::camera::{interpolate_pose, Camera, CameraEntry, PixelCoord};
use crate::error::{Error, Result};
use crate::frames::{BitMask, DepthFrame, RgbFrame};
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    Plane { normal: Vector3<f64>, d: f64 },
    Rect { z: f64, x0: f64, y0: f64, x1: f64, y1: f64 },
    Box { min: Vector3<f64>, max: Vector3<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub color: [u8; 3],
    pub checker: Option<(f64, [u8; 3])>,
    pub fg: bool,
    /// Translation per frame.
    pub motion: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub intrinsics: [f64; 4],
    pub frames: usize,
    pub shapes: Vec<Shape>,
    /// Cameras in declaration order.
    pub cameras: Vec<(String, Camera)>,
}

/// Below this ray parameter a hit is ignored.
const MIN_HIT: f64 = 1e-6;

impl Shape {
    /// Ray parameter of the first hit of `origin + t * dir` at `frame`.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, frame: usize) -> Option<f64> {
        let o = origin - self.motion * frame as f64;
        let t = match &self.kind {
            ShapeKind::Plane { normal, d } => {
                let den = normal.dot(dir);
                if den == 0.0 {
                    return None;
                }
                (d - normal.dot(&o)) / den
            }
            ShapeKind::Rect { z, x0, y0, x1, y1 } => {
                if dir.z == 0.0 {
                    return None;
                }
                let t = (z - o.z) / dir.z;
                let p = o + dir * t;
                if !(p.x >= *x0 && p.x < *x1 && p.y >= *y0 && p.y < *y1) {
                    return None;
                }
                t
            }
            ShapeKind::Box { min, max } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if dir[a] == 0.0 {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (ta, tb) = ((min[a] - o[a]) / dir[a], (max[a] - o[a]) / dir[a]);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if t0 > t1 {
                    return None;
                }
                t0
            }
        };
        (t > MIN_HIT && t.is_finite()).then_some(t)
    }

    fn color_at(&self, p: &Vector3<f64>, frame: usize) -> [u8; 3] {
        match self.checker {
            Some((period, alt)) => {
                let q = (p - self.motion * frame as f64) / period;
                let parity = (q.x.floor() + q.y.floor() + q.z.floor()).rem_euclid(2.0);
                if parity < 1.0 {
                    self.color
                } else {
                    alt
                }
            }
            None => self.color,
        }
    }
}

/// Rendered view of the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRender {
    pub rgb: RgbFrame,
    pub depth: DepthFrame,
    pub fg_mask: BitMask,
}

impl SceneSpec {
    pub fn camera(&self, id: &str) -> Option<&Camera> {
        self.cameras.iter().find(|(n, _)| n == id).map(|(_, c)| c)
    }

    /// Casts one ray per pixel center; depth is the camera-space z of the
    /// nearest hit. With `include_fg = false` foreground shapes are skipped,
    /// which gives the background layer.
    pub fn render(&self, cam: &Camera, frame: usize, include_fg: bool) -> SceneRender {
        let (w, h) = (self.width, self.height);
        let mut out = SceneRender {
            rgb: RgbFrame::new(w, h),
            depth: DepthFrame::new(w, h),
            fg_mask: BitMask::new(w, h),
        };
        let origin = cam.center();
        let rt = cam.rotation.transpose();
        for y in 0..h {
            for x in 0..w {
                // Direction with unit camera-space z, so t is the depth.
                let dir = rt * Vector3::new((x as f64 - cam.cx) / cam.fx, (y as f64 - cam.cy) / cam.fy, 1.0);
                let mut best: Option<(f64, &Shape)> = None;
                for s in self.shapes.iter().filter(|s| include_fg || !s.fg) {
                    if let Some(t) = s.intersect(&origin, &dir, frame) {
                        if best.map_or(true, |(bt, _)| t < bt) {
                            best = Some((t, s));
                        }
                    }
                }
                if let Some((t, s)) = best {
                    out.depth.set(x, y, t as f32);
                    out.rgb.set(x, y, s.color_at(&(origin + dir * t), frame));
                    out.fg_mask.set(x, y, s.fg);
                }
            }
        }
        out
    }

    /// Exact world point seen at pixel `(u, v)` (any real coordinates).
    pub fn ray_hit(&self, cam: &Camera, u: f64, v: f64, frame: usize) -> Option<Vector3<f64>> {
        let origin = cam.center();
        let dir = cam.rotation.transpose() * Vector3::new((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
        let t = self
            .shapes
            .iter()
            .filter_map(|s| s.intersect(&origin, &dir, frame))
            .fold(f64::INFINITY, f64::min);
        t.is_finite().then(|| cam.unproject_unchecked(u, v, t))
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct Tokens<'a> {
    line: usize,
    toks: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        let t = self.toks.get(self.pos).copied().ok_or_else(|| perr(self.line, format!("missing {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn num(&mut self, what: &str) -> Result<f64> {
        let t = self.next(what)?;
        let v: f64 = t.parse().map_err(|_| perr(self.line, format!("{what}: expected a number, found {t:?}")))?;
        if !v.is_finite() {
            return Err(perr(self.line, format!("{what} must be finite")));
        }
        Ok(v)
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let t = self.next(what)?;
        t.parse().map_err(|_| perr(self.line, format!("{what}: expected a non-negative integer, found {t:?}")))
    }

    fn vec3(&mut self, what: &str) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.num(what)?, self.num(what)?, self.num(what)?))
    }

    fn color(&mut self) -> Result<[u8; 3]> {
        let mut c = [0u8; 3];
        for v in c.iter_mut() {
            let t = self.next("color")?;
            *v = t.parse().map_err(|_| perr(self.line, format!("color channel must be 0-255, found {t:?}")))?;
        }
        Ok(c)
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

fn rotation_from_ypr(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let c2w = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw.to_radians())
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch.to_radians())
        * Rotation3::from_axis_angle(&Vector3::z_axis(), roll.to_radians());
    *c2w.inverse().matrix()
}

/// Parses a scene description. Errors carry 1-based line numbers.
pub fn parse_scene(text: &str) -> Result<SceneSpec> {
    let mut size: Option<(usize, usize)> = None;
    let mut intrinsics: Option<[f64; 4]> = None;
    let mut frames = 1usize;
    let mut shapes = Vec::new();
    // Poses are resolved after intrinsics are known.
    enum Cam {
        Direct(String, Matrix3<f64>, Vector3<f64>),
        Interp(String, String, String, usize, usize),
    }
    let mut cams: Vec<Cam> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let mut t = Tokens { line, toks, pos: 1 };
        match t.toks[0] {
            "size" => {
                let (w, h) = (t.count("width")?, t.count("height")?);
                if w == 0 || h == 0 {
                    return Err(perr(line, "size must be positive"));
                }
                size = Some((w, h));
            }
            "intrinsics" => {
                let v = [t.num("fx")?, t.num("fy")?, t.num("cx")?, t.num("cy")?];
                if v[0] <= 0.0 || v[1] <= 0.0 {
                    return Err(perr(line, "focal lengths must be positive"));
                }
                intrinsics = Some(v);
            }
            "frames" => {
                frames = t.count("frame count")?;
                if frames == 0 {
                    return Err(perr(line, "frames must be positive"));
                }
            }
            kind @ ("plane" | "rect" | "box") => {
                let shape_kind = match kind {
                    "plane" => {
                        let normal = t.vec3("plane normal")?;
                        if normal.norm() == 0.0 {
                            return Err(perr(line, "plane normal must be nonzero"));
                        }
                        ShapeKind::Plane {
                            normal,
                            d: t.num("plane offset")?,
                        }
                    }
                    "rect" => {
                        let (z, x0, y0, x1, y1) = (t.num("z")?, t.num("x0")?, t.num("y0")?, t.num("x1")?, t.num("y1")?);
                        if !(x0 < x1 && y0 < y1) {
                            return Err(perr(line, "rect needs x0 < x1 and y0 < y1"));
                        }
                        ShapeKind::Rect { z, x0, y0, x1, y1 }
                    }
                    _ => {
                        let (min, max) = (t.vec3("box min")?, t.vec3("box max")?);
                        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
                            return Err(perr(line, "box needs min < max on every axis"));
                        }
                        ShapeKind::Box { min, max }
                    }
                };
                let mut shape = Shape {
                    kind: shape_kind,
                    color: t.color()?,
                    checker: None,
                    fg: false,
                    motion: Vector3::zeros(),
                };
                while !t.done() {
                    match t.next("option")? {
                        "fg" => shape.fg = true,
                        "move" => shape.motion = t.vec3("move")?,
                        "checker" => {
                            let p = t.num("checker period")?;
                            if p <= 0.0 {
                                return Err(perr(line, "checker period must be positive"));
                            }
                            shape.checker = Some((p, t.color()?));
                        }
                        other => return Err(perr(line, format!("unknown shape option {other:?}"))),
                    }
                }
                shapes.push(shape);
            }
            "camera" => {
                let id = t.next("camera id")?.to_string();
                let center = t.vec3("camera center")?;
                let r = if t.done() {
                    Matrix3::identity()
                } else {
                    rotation_from_ypr(t.num("yaw")?, t.num("pitch")?, t.num("roll")?)
                };
                cams.push(Cam::Direct(id, r, center));
            }
            "interp" => {
                let prefix = t.next("prefix")?.to_string();
                let (a, b) = (t.next("first camera")?.to_string(), t.next("second camera")?.to_string());
                let n = t.count("count")?;
                if n < 2 {
                    return Err(perr(line, "interp needs at least 2 cameras"));
                }
                cams.push(Cam::Interp(prefix, a, b, n, line));
            }
            other => return Err(perr(line, format!("unknown directive {other:?}"))),
        }
        if !t.done() {
            return Err(perr(line, format!("unexpected trailing token {:?}", t.toks[t.pos])));
        }
    }
    let (width, height) = size.ok_or_else(|| perr(0, "missing size directive"))?;
    let intrinsics = intrinsics.unwrap_or([width as f64, width as f64, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0]);
    let [fx, fy, cx, cy] = intrinsics;
    let mut cameras: Vec<(String, Camera)> = Vec::new();
    let push = |cameras: &mut Vec<(String, Camera)>, id: String, cam: Camera, line: usize| -> Result<()> {
        if cameras.iter().any(|(n, _)| *n == id) {
            return Err(perr(line, format!("duplicate camera id {id:?}")));
        }
        cameras.push((id, cam));
        Ok(())
    };
    for c in cams {
        match c {
            Cam::Direct(id, r, center) => {
                let cam = Camera::from_center(fx, fy, cx, cy, r, center)?;
                push(&mut cameras, id, cam, 0)?;
            }
            Cam::Interp(prefix, a, b, n, line) => {
                let find = |id: &str| {
                    cameras
                        .iter()
                        .find(|(n, _)| n == id)
                        .map(|(_, c)| c.clone())
                        .ok_or_else(|| perr(line, format!("interp refers to unknown camera {id:?}")))
                };
                let (c0, c1) = (find(&a)?, find(&b)?);
                for k in 0..n {
                    let cam = interpolate_pose(&c0, &c1, k as f64 / (n - 1) as f64);
                    push(&mut cameras, format!("{prefix}_{k}"), cam, line)?;
                }
            }
        }
    }
    if cameras.is_empty() {
        return Err(perr(0, "scene declares no camera"));
    }
    Ok(SceneSpec {
        width,
        height,
        intrinsics,
        frames,
        shapes,
        cameras,
    })
}

/// File layout of a dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("cameras.json")
    }

    /// `views/<view>/<kind>_<frame>.<ext>`.
    pub fn file(&self, view: &str, kind: &str, frame: usize, ext: &str) -> PathBuf {
        self.root.join("views").join(view).join(format!("{kind}_{frame:04}.{ext}"))
    }

    pub fn rgb(&self, view: &str, frame: usize) -> PathBuf {
        self.file(view, "rgb", frame, "png")
    }

    pub fn depth(&self, view: &str, frame: usize) -> PathBuf {
        self.file(view, "depth", frame, "pfm")
    }

    pub fn fg_mask(&self, view: &str, frame: usize) -> PathBuf {
        self.file(view, "fgmask", frame, "png")
    }

    pub fn bg_rgb(&self, view: &str, frame: usize) -> PathBuf {
        self.file(view, "bg_rgb", frame, "png")
    }

    pub fn bg_depth(&self, view: &str, frame: usize) -> PathBuf {
        self.file(view, "bg_depth", frame, "pfm")
    }
}

/// Writes `scene.txt`, `cameras.json` (one entry per camera and frame) and,
/// for every camera and frame, RGB, depth, FG mask and the background-only
/// RGB-D layer.
pub fn gen_synthetic_scene(text: &str, out_dir: &Path) -> Result<SceneSpec> {
    let spec = parse_scene(text)?;
    let layout = DatasetLayout::new(out_dir);
    io::write_atomic(&out_dir.join("scene.txt"), text.as_bytes())?;
    let mut entries = Vec::new();
    for frame in 0..spec.frames {
        for (id, cam) in &spec.cameras {
            let full = spec.render(cam, frame, true);
            let bg = spec.render(cam, frame, false);
            io::write_rgb_png(&layout.rgb(id, frame), &full.rgb)?;
            io::write_pfm(&layout.depth(id, frame), &full.depth)?;
            io::write_mask_png(&layout.fg_mask(id, frame), &full.fg_mask)?;
            io::write_rgb_png(&layout.bg_rgb(id, frame), &bg.rgb)?;
            io::write_pfm(&layout.bg_depth(id, frame), &bg.depth)?;
            entries.push(CameraEntry::from_camera(id.clone(), frame, cam, spec.width, spec.height));
        }
    }
    io::write_camera_manifest(&layout.manifest(), &entries)?;
    Ok(spec)
}

/// Unprojects pixel `(x, y)` of a render back to its world point.
pub fn render_point(cam: &Camera, r: &SceneRender, x: usize, y: usize) -> Option<Vector3<f64>> {
    let d = r.depth.get(x, y)?;
    cam.unproject(PixelCoord::new(x as f64, y as f64), d as f64).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_PLANES: &str = "\
size 32 24
intrinsics 30 30 15.5 11.5
plane 0 0 1 4   90 120 200
rect 2 -0.5 -0.5 0.5 0.5  220 40 40 fg
camera src 0 0 0
camera tgt 0.4 0 0
";

    #[test]
    fn single_plane_has_constant_depth() {
        let s = parse_scene("size 8 6\nplane 0 0 1 3 10 20 30\ncamera c 0 0 0\n").unwrap();
        let r = s.render(&s.cameras[0].1, 0, true);
        assert!(r.depth.data.iter().all(|&d| d == 3.0));
        assert!(r.fg_mask.is_empty());
    }

    #[test]
    fn fg_square_gives_two_depths_and_matching_mask() {
        let s = parse_scene(TWO_PLANES).unwrap();
        let r = s.render(s.camera("src").unwrap(), 0, true);
        let mut vals: Vec<f32> = r.depth.data.clone();
        vals.sort_by(f32::total_cmp);
        vals.dedup();
        assert_eq!(vals, vec![2.0, 4.0]);
        for i in 0..r.depth.data.len() {
            assert_eq!(r.fg_mask.bits[i], r.depth.data[i] == 2.0);
        }
        // x in [-0.5, 0.5) at z = 2 maps to u in [8, 23).
        assert!(r.fg_mask.get(8, 11) && !r.fg_mask.get(7, 11) && r.fg_mask.get(22, 11) && !r.fg_mask.get(23, 11));
        let bg = s.render(s.camera("src").unwrap(), 0, false);
        assert!(bg.depth.data.iter().all(|&d| d == 4.0));
    }

    #[test]
    fn parse_errors_report_line() {
        let err = parse_scene("size 8 6\n\nplane 0 0 1 x 1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_scene("size 8 6\nsphere 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_scene("size 8 6\ncamera a 0 0 0\ninterp p a b 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn interp_cameras_follow_slerp_and_lerp() {
        let s = parse_scene("size 8 6\ncamera a 0 0 0\ncamera b 2 0 0 90 0 0\ninterp m a b 3\n").unwrap();
        let mid = s.camera("m_1").unwrap();
        assert!((mid.center() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let c2w = mid.rotation.transpose();
        let expect = Rotation3::from_axis_angle(&Vector3::y_axis(), 45f64.to_radians());
        assert!((c2w - expect.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn moving_shape_translates_per_frame() {
        let s = parse_scene("size 16 16\nframes 2\nplane 0 0 1 5 1 1 1\nrect 2 -0.2 -0.2 0.2 0.2 9 9 9 fg move 0.5 0 0\ncamera c 0 0 0\n").unwrap();
        let c = &s.cameras[0].1;
        let f0 = s.render(c, 0, true);
        let f1 = s.render(c, 1, true);
        assert!(f0.fg_mask.get(8, 8));
        assert!(!f1.fg_mask.get(8, 8));
        assert!(f1.fg_mask.count() > 0);
    }
}
