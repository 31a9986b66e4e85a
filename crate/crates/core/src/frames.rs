//! Raster containers and the lifting of posed RGB-D frames into colored point
//! clouds, image-lattice meshes, and foreground/background curtain meshes.

use nalgebra::Vector3;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::imgops;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "rgb buffer has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let mut f = Self::new(width, height);
        f.data.chunks_exact_mut(3).for_each(|px| px.copy_from_slice(&color));
        f
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Rec. 601 luma in `[0, 255]`.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }
}

/// Row-major depth map with per-pixel validity. Invalid pixels store `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub valid: Vec<bool>,
}

impl DepthFrame {
    /// All pixels invalid.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Validity is inferred: finite and strictly positive values are valid.
    pub fn from_vec(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "depth buffer has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        let valid: Vec<bool> = data.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        for (d, ok) in data.iter_mut().zip(&valid) {
            if !ok {
                *d = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    pub fn filled(width: usize, height: usize, depth: f32) -> Self {
        let mut f = Self::new(width, height);
        for i in 0..width * height {
            f.data[i] = depth;
            f.valid[i] = true;
        }
        f
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.data[i])
    }

    /// Sets a depth; non-finite or non-positive values invalidate the pixel.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: f32) {
        let i = y * self.width + x;
        if d.is_finite() && d > 0.0 {
            self.data[i] = d;
            self.valid[i] = true;
        } else {
            self.data[i] = 0.0;
            self.valid[i] = false;
        }
    }

    #[inline]
    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.data[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn validity_mask(&self) -> BitMask {
        BitMask::from_bits(self.width, self.height, self.valid.clone())
    }

    pub fn same_dims<T: Dims>(&self, other: &T) -> bool {
        (self.width, self.height) == other.dims()
    }
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask buffer size");
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn complement(&self) -> BitMask {
        BitMask::from_bits(self.width, self.height, self.bits.iter().map(|b| !b).collect())
    }

    fn zip_with(&self, other: &BitMask, f: impl Fn(bool, bool) -> bool) -> BitMask {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        BitMask::from_bits(
            self.width,
            self.height,
            self.bits.iter().zip(&other.bits).map(|(a, b)| f(*a, *b)).collect(),
        )
    }

    pub fn union(&self, other: &BitMask) -> BitMask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BitMask) -> BitMask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &BitMask) -> BitMask {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }
}

/// Anything with raster dimensions.
pub trait Dims {
    fn dims(&self) -> (usize, usize);
}

impl Dims for RgbFrame {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Dims for DepthFrame {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Dims for BitMask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

pub(crate) fn check_dims(a: &impl Dims, b: &impl Dims, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "{what}: dimension mismatch {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// A lifted sample: world position, color, and the linear index of the
/// source pixel (`y * width + x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub source_pixel: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColoredPointCloud {
    pub points: Vec<Point>,
}

impl ColoredPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Triangle mesh whose vertices carry the same attributes as points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatticeMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
}

impl LatticeMesh {
    /// Checks index ranges and that no triangle repeats a vertex.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::invalid(format!("triangle {k} has an out-of-range index")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::invalid(format!("triangle {k} is degenerate")));
            }
        }
        Ok(())
    }
}

/// Options for [`lift_lattice_mesh_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeshOptions {
    /// Flip a quad's diagonal when the Sobel gradient of the image suggests the
    /// edge inside the quad runs along the other diagonal.
    pub sobel_flip: bool,
    /// Minimum averaged Sobel magnitude (luma units) before a flip is considered.
    pub sobel_min_magnitude: f64,
    /// Drop quads whose depth ratio `max / min - 1` exceeds this value. Used to
    /// build the curtain-excluded mesh.
    pub max_depth_jump: Option<f64>,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            sobel_flip: false,
            sobel_min_magnitude: 8.0,
            max_depth_jump: None,
        }
    }
}

impl MeshOptions {
    /// Options producing a mesh without triangles spanning depth discontinuities.
    pub fn curtain_excluded(max_depth_jump: f64) -> Self {
        Self {
            max_depth_jump: Some(max_depth_jump),
            ..Self::default()
        }
    }
}

/// One point per valid depth pixel, in raster order.
pub fn lift_point_cloud(rgb: &RgbFrame, depth: &DepthFrame, cam: &Camera) -> Result<ColoredPointCloud> {
    check_dims(rgb, depth, "lift_point_cloud")?;
    let w = depth.width;
    let points = (0..depth.width * depth.height)
        .filter(|&i| depth.valid[i])
        .map(|i| {
            let (x, y) = (i % w, i / w);
            Point {
                position: cam.unproject_unchecked(x as f64, y as f64, depth.data[i] as f64),
                color: rgb.get(x, y),
                source_pixel: i as u32,
            }
        })
        .collect();
    Ok(ColoredPointCloud { points })
}

/// Image-lattice triangulation with the default options.
pub fn lift_lattice_mesh(rgb: &RgbFrame, depth: &DepthFrame, cam: &Camera) -> Result<LatticeMesh> {
    lift_lattice_mesh_with(rgb, depth, cam, &MeshOptions::default())
}

/// Every 2x2 quad of valid pixels yields two triangles split along the
/// top-left/bottom-right diagonal (or the other diagonal when flipped).
/// Vertices are shared between quads.
pub fn lift_lattice_mesh_with(
    rgb: &RgbFrame,
    depth: &DepthFrame,
    cam: &Camera,
    opts: &MeshOptions,
) -> Result<LatticeMesh> {
    check_dims(rgb, depth, "lift_lattice_mesh")?;
    let (w, h) = (depth.width, depth.height);
    let mut index = vec![u32::MAX; w * h];
    let mut vertices = Vec::with_capacity(depth.valid_count());
    for i in 0..w * h {
        if depth.valid[i] {
            let (x, y) = (i % w, i / w);
            index[i] = vertices.len() as u32;
            vertices.push(Point {
                position: cam.unproject_unchecked(x as f64, y as f64, depth.data[i] as f64),
                color: rgb.get(x, y),
                source_pixel: i as u32,
            });
        }
    }
    let gradients = opts.sobel_flip.then(|| sobel(&rgb.luma(), w, h));

    let mut triangles = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let tl = y * w + x;
            let (tr, bl, br) = (tl + 1, tl + w, tl + w + 1);
            if !(depth.valid[tl] && depth.valid[tr] && depth.valid[bl] && depth.valid[br]) {
                continue;
            }
            if let Some(jump) = opts.max_depth_jump {
                let ds = [depth.data[tl], depth.data[tr], depth.data[bl], depth.data[br]];
                let lo = ds.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
                let hi = ds.iter().cloned().fold(0.0, f32::max) as f64;
                if hi / lo - 1.0 > jump {
                    continue;
                }
            }
            let flip = gradients.as_ref().is_some_and(|(gx, gy)| {
                let sx: f64 = [tl, tr, bl, br].iter().map(|&i| gx[i]).sum::<f64>() / 4.0;
                let sy: f64 = [tl, tr, bl, br].iter().map(|&i| gy[i]).sum::<f64>() / 4.0;
                // An edge runs perpendicular to the gradient; a gradient along
                // (1, 1) means the edge follows the top-right/bottom-left diagonal.
                sx.hypot(sy) >= opts.sobel_min_magnitude && sx * sy > 0.0
            });
            let [a, b, c, d] = [index[tl], index[tr], index[bl], index[br]];
            if flip {
                triangles.push([a, b, c]);
                triangles.push([b, d, c]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
    }
    Ok(LatticeMesh {
        vertices,
        triangles,
    })
}

fn sobel(luma: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        luma[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Mask pixels lying within Chebyshev distance `thickness` of a non-mask
/// pixel. The image border is not a transition.
pub fn boundary_ring(mask: &BitMask, thickness: usize) -> BitMask {
    let thickness = thickness.max(1);
    mask.intersection(&imgops::dilate(&mask.complement(), thickness))
}

/// Curtain mesh joining, along each source ray, the foreground point and the
/// background point of every boundary-ring pixel of `fg_mask`. Each pair of
/// 8-adjacent ring pixels contributes one quad. Ring pixels without valid
/// depths, or whose background is in front of the foreground, are skipped.
///
/// Both ends of a ray take the foreground color when `rgb` is given, black
/// otherwise.
pub fn build_fgbg_curtain(
    fg_depth: &DepthFrame,
    bg_depth: &DepthFrame,
    fg_mask: &BitMask,
    cam: &Camera,
    thickness: usize,
    rgb: Option<&RgbFrame>,
) -> Result<LatticeMesh> {
    check_dims(fg_depth, bg_depth, "build_fgbg_curtain")?;
    check_dims(fg_depth, fg_mask, "build_fgbg_curtain")?;
    if let Some(rgb) = rgb {
        check_dims(fg_depth, rgb, "build_fgbg_curtain")?;
    }
    let (w, h) = (fg_mask.width, fg_mask.height);
    let ring = boundary_ring(fg_mask, thickness);

    // Vertex pair (fg, bg) per usable ring pixel.
    let mut pair = vec![u32::MAX; w * h];
    let mut vertices = Vec::new();
    for i in 0..w * h {
        if !ring.bits[i] || !fg_depth.valid[i] || !bg_depth.valid[i] {
            continue;
        }
        let (fd, bd) = (fg_depth.data[i], bg_depth.data[i]);
        if bd < fd {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let color = rgb.map_or([0, 0, 0], |f| f.get(x, y));
        pair[i] = vertices.len() as u32;
        for d in [fd, bd] {
            vertices.push(Point {
                position: cam.unproject_unchecked(x as f64, y as f64, d as f64),
                color,
                source_pixel: i as u32,
            });
        }
    }

    let mut triangles = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if pair[p] == u32::MAX {
                continue;
            }
            // Forward half of the 8-neighborhood, so each unordered pair is visited once.
            for (dx, dy) in [(1isize, 0isize), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if pair[q] == u32::MAX {
                    continue;
                }
                let (fp, bp) = (pair[p], pair[p] + 1);
                let (fq, bq) = (pair[q], pair[q] + 1);
                triangles.push([fp, fq, bq]);
                triangles.push([fp, bq, bp]);
            }
        }
    }
    Ok(LatticeMesh {
        vertices,
        triangles,
    })
}
