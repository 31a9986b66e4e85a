//! Software rendering of point clouds and triangle meshes into a target camera.
//!
//! Both renderers run sequentially in a fixed order, so outputs are
//! bit-identical across runs.

use nalgebra::Vector3;

use crate::camera::Camera;
use crate::frames::{BitMask, ColoredPointCloud, DepthFrame, LatticeMesh, RgbFrame};

/// Geometry closer than this to the camera plane is not rendered.
pub const NEAR: f64 = 1e-4;

/// Sub-pixel precision of snapped triangle vertices.
const SUBPIXEL_BITS: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: RgbFrame,
    pub support: BitMask,
    pub depth: DepthFrame,
}

impl RenderOutput {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            color: RgbFrame::new(width, height),
            support: BitMask::new(width, height),
            depth: DepthFrame::new(width, height),
        }
    }

    pub fn width(&self) -> usize {
        self.support.width
    }

    pub fn height(&self) -> usize {
        self.support.height
    }
}

/// Splatting parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatParams {
    /// Contributions farther than `z_min * (1 + rel_tol)` are hidden.
    pub rel_tol: f64,
    /// Minimum surviving weight for a pixel to count as supported.
    pub w_min: f64,
}

impl Default for SplatParams {
    fn default() -> Self {
        Self {
            rel_tol: 0.01,
            w_min: 0.05,
        }
    }
}

/// Bilinear point splatting with default parameters.
pub fn render_points(pc: &ColoredPointCloud, cam: &Camera, width: usize, height: usize) -> RenderOutput {
    render_points_with(pc, cam, width, height, SplatParams::default())
}

struct Splat {
    pixel: usize,
    weight: f64,
    depth: f64,
    color: [u8; 3],
}

/// Each point in front of the near plane spreads onto its four enclosing
/// pixels with bilinear weights. Per pixel, contributions within
/// `rel_tol * z_min` of the nearest one are blended by weight.
pub fn render_points_with(
    pc: &ColoredPointCloud,
    cam: &Camera,
    width: usize,
    height: usize,
    params: SplatParams,
) -> RenderOutput {
    let n = width * height;
    let mut splats = Vec::with_capacity(pc.len() * 4);
    let mut z_min = vec![f64::INFINITY; n];
    for p in &pc.points {
        let Ok(proj) = cam.project(&p.position) else {
            continue;
        };
        if proj.depth <= NEAR || !proj.pixel.u.is_finite() || !proj.pixel.v.is_finite() {
            continue;
        }
        let (u, v) = (proj.pixel.u, proj.pixel.v);
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        for (dx, dy, wt) in [
            (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
            (1.0, 0.0, fx * (1.0 - fy)),
            (0.0, 1.0, (1.0 - fx) * fy),
            (1.0, 1.0, fx * fy),
        ] {
            let (x, y) = (x0 + dx, y0 + dy);
            if wt <= 0.0 || x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                continue;
            }
            let pixel = y as usize * width + x as usize;
            z_min[pixel] = z_min[pixel].min(proj.depth);
            splats.push(Splat {
                pixel,
                weight: wt,
                depth: proj.depth,
                color: p.color,
            });
        }
    }

    let mut acc_w = vec![0.0f64; n];
    let mut acc_z = vec![0.0f64; n];
    let mut acc_c = vec![[0.0f64; 3]; n];
    for s in &splats {
        if s.depth > z_min[s.pixel] * (1.0 + params.rel_tol) {
            continue;
        }
        acc_w[s.pixel] += s.weight;
        acc_z[s.pixel] += s.weight * s.depth;
        for k in 0..3 {
            acc_c[s.pixel][k] += s.weight * s.color[k] as f64;
        }
    }

    let mut out = RenderOutput::empty(width, height);
    for i in 0..n {
        if acc_w[i] < params.w_min {
            continue;
        }
        let w = acc_w[i];
        out.support.bits[i] = true;
        out.depth.data[i] = (acc_z[i] / w) as f32;
        out.depth.valid[i] = true;
        let c = acc_c[i].map(|v| (v / w).round().clamp(0.0, 255.0) as u8);
        out.color.data[i * 3..i * 3 + 3].copy_from_slice(&c);
    }
    out
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: i64,
    y: i64,
    z: f64,
    /// Camera-space position, for exact plane depth.
    cam: Vector3<f64>,
    color: [f64; 3],
}

#[inline]
fn edge(ax: i64, ay: i64, bx: i64, by: i64, px: i64, py: i64) -> i128 {
    (bx - ax) as i128 * (py - ay) as i128 - (by - ay) as i128 * (px - ax) as i128
}

/// Top-left rule: a pixel exactly on an edge belongs to the triangle when the
/// interior lies to its right, or below a horizontal edge.
#[inline]
fn owns_edge(ax: i64, ay: i64, bx: i64, by: i64) -> bool {
    let a = -(by - ay);
    let b = bx - ax;
    a > 0 || (a == 0 && b > 0)
}

/// Z-buffered triangle rasterization with perspective-correct interpolation.
///
/// Vertex positions are snapped to 1/65536 pixel so coverage decisions are
/// exact integer tests. Depth is the pixel ray's intersection with the
/// unsnapped triangle plane. Triangles with a vertex at or behind the near plane
/// are dropped; zero-area triangles are culled; there is no back-face culling.
/// Equal-depth fragments keep the earlier triangle.
pub fn render_mesh(mesh: &LatticeMesh, cam: &Camera, width: usize, height: usize, want_color: bool) -> RenderOutput {
    let one = 1i64 << SUBPIXEL_BITS;
    let scale = one as f64;
    let screen: Vec<Option<ScreenVertex>> = mesh
        .vertices
        .iter()
        .map(|v| {
            let proj = cam.project(&v.position).ok()?;
            if proj.depth <= NEAR {
                return None;
            }
            let (sx, sy) = (proj.pixel.u * scale, proj.pixel.v * scale);
            // Far outside the frame only matters for bounding; keep i64 safe.
            let limit = 1e15;
            if !(sx.abs() < limit && sy.abs() < limit) {
                return None;
            }
            Some(ScreenVertex {
                x: sx.round() as i64,
                y: sy.round() as i64,
                z: proj.depth,
                cam: cam.rotation * v.position + cam.translation,
                color: v.color.map(|c| c as f64),
            })
        })
        .collect();

    let n = width * height;
    let mut zbuf = vec![f64::INFINITY; n];
    let mut cbuf = vec![[0.0f64; 3]; n];
    let (wmax, hmax) = (width as i64 - 1, height as i64 - 1);

    for tri in &mesh.triangles {
        let (Some(mut a), Some(mut b), Some(c)) = (
            screen[tri[0] as usize],
            screen[tri[1] as usize],
            screen[tri[2] as usize],
        ) else {
            continue;
        };
        let mut area = edge(a.x, a.y, b.x, b.y, c.x, c.y);
        if area == 0 {
            continue;
        }
        if area < 0 {
            std::mem::swap(&mut a, &mut b);
            area = -area;
        }
        let min_x = a.x.min(b.x).min(c.x);
        let max_x = a.x.max(b.x).max(c.x);
        let min_y = a.y.min(b.y).min(c.y);
        let max_y = a.y.max(b.y).max(c.y);
        // Pixel centers sit at integer coordinates.
        let x0 = (min_x + one - 1).div_euclid(one).max(0);
        let x1 = max_x.div_euclid(one).min(wmax);
        let y0 = (min_y + one - 1).div_euclid(one).max(0);
        let y1 = max_y.div_euclid(one).min(hmax);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let own_bc = owns_edge(b.x, b.y, c.x, c.y);
        let own_ca = owns_edge(c.x, c.y, a.x, a.y);
        let own_ab = owns_edge(a.x, a.y, b.x, b.y);
        let area_f = area as f64;
        let inv_z = [1.0 / a.z, 1.0 / b.z, 1.0 / c.z];
        let normal = (b.cam - a.cam).cross(&(c.cam - a.cam));
        let plane_d = normal.dot(&a.cam);
        let (z_lo, z_hi) = (a.z.min(b.z).min(c.z), a.z.max(b.z).max(c.z));
        for py in y0..=y1 {
            let sy = py * one;
            for px in x0..=x1 {
                let sx = px * one;
                let e_a = edge(b.x, b.y, c.x, c.y, sx, sy);
                let e_b = edge(c.x, c.y, a.x, a.y, sx, sy);
                let e_c = edge(a.x, a.y, b.x, b.y, sx, sy);
                let inside = |e: i128, own: bool| e > 0 || (e == 0 && own);
                if !(inside(e_a, own_bc) && inside(e_b, own_ca) && inside(e_c, own_ab)) {
                    continue;
                }
                let l = [e_a as f64 / area_f, e_b as f64 / area_f, e_c as f64 / area_f];
                let iz = l[0] * inv_z[0] + l[1] * inv_z[1] + l[2] * inv_z[2];
                if iz <= 0.0 {
                    continue;
                }
                // Depth from the unsnapped plane; snapping only decides coverage.
                let ray = Vector3::new((px as f64 - cam.cx) / cam.fx, (py as f64 - cam.cy) / cam.fy, 1.0);
                let denom = normal.dot(&ray);
                let z = if denom.abs() > 1e-9 * normal.norm() * ray.norm() { (plane_d / denom).clamp(z_lo, z_hi) } else { 1.0 / iz };
                let i = py as usize * width + px as usize;
                if z >= zbuf[i] {
                    continue;
                }
                zbuf[i] = z;
                if want_color {
                    let w = [l[0] * inv_z[0] * z, l[1] * inv_z[1] * z, l[2] * inv_z[2] * z];
                    for k in 0..3 {
                        cbuf[i][k] = w[0] * a.color[k] + w[1] * b.color[k] + w[2] * c.color[k];
                    }
                }
            }
        }
    }

    let mut out = RenderOutput::empty(width, height);
    for i in 0..n {
        if zbuf[i].is_finite() && zbuf[i] > 0.0 {
            out.support.bits[i] = true;
            out.depth.data[i] = zbuf[i] as f32;
            out.depth.valid[i] = true;
            if want_color {
                let c = cbuf[i].map(|v| v.round().clamp(0.0, 255.0) as u8);
                out.color.data[i * 3..i * 3 + 3].copy_from_slice(&c);
            }
        }
    }
    out
}

/// World-space axis-aligned quad helper used by tests and synthetic scenes.
pub fn quad_mesh(corners: [Vector3<f64>; 4], color: [u8; 3]) -> LatticeMesh {
    use crate::frames::Point;
    LatticeMesh {
        vertices: corners
            .iter()
            .enumerate()
            .map(|(k, &position)| Point {
                position,
                color,
                source_pixel: k as u32,
            })
            .collect(),
        triangles: vec![[0, 1, 2], [0, 2, 3]],
    }
}
