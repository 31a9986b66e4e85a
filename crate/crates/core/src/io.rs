//! On-disk formats: PFM depth, PNG color and masks, ASCII PLY geometry, JSON
//! manifests. All writers go through [`write_atomic`].

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::camera::CameraEntry;
use crate::error::{Error, Result};
use crate::frames::{BitMask, ColoredPointCloud, DepthFrame, LatticeMesh, Point, RgbFrame};

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Writes to a temporary sibling file and renames it over `path`, creating
/// parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_camera_manifest(path: &Path, cams: &[CameraEntry]) -> Result<()> {
    write_json(path, cams)
}

pub fn read_camera_manifest(path: &Path) -> Result<Vec<CameraEntry>> {
    read_json(path)
}

/// Encodes a single-channel little-endian PFM (scale `-1.0`, rows stored
/// bottom to top). Invalid pixels are written as 0.
pub fn encode_pfm(depth: &DepthFrame) -> Vec<u8> {
    let (w, h) = (depth.width, depth.height);
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let i = y * w + x;
            let v = if depth.valid[i] { depth.data[i] } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(path: &Path, depth: &DepthFrame) -> Result<()> {
    write_atomic(path, &encode_pfm(depth))
}

/// Decodes a single-channel PFM of either endianness. Pixels that are not
/// finite and positive are marked invalid.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<DepthFrame> {
    // Header: three whitespace-terminated tokens after the magic line.
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated PFM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "Pf" {
        return Err(format_err(path, format!("expected single-channel PFM (Pf), found {magic:?}")));
    }
    let parse_dim = |s: String| s.parse::<usize>().map_err(|_| format_err(path, format!("bad PFM dimension {s:?}")));
    let w = parse_dim(token()?)?;
    let h = parse_dim(token()?)?;
    let scale_tok = token()?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| format_err(path, format!("bad PFM scale {scale_tok:?}")))?;
    // Exactly one whitespace byte separates the header from the data.
    pos += 1;
    let need = w * h * 4;
    if bytes.len() < pos + need {
        return Err(format_err(path, format!("PFM data truncated: need {need} bytes")));
    }
    let data = &bytes[pos..pos + need];
    let mut values = vec![0f32; w * h];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, x) = (k / w, k % w);
        values[(h - 1 - row) * w + x] = v;
    }
    DepthFrame::from_vec(w, h, values)
}

pub fn read_pfm(path: &Path) -> Result<DepthFrame> {
    decode_pfm(&read_bytes(path)?, path)
}

fn encode_png<P, C>(img: image::ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    write_atomic(path, &buf.into_inner())
}

pub fn write_rgb_png(path: &Path, rgb: &RgbFrame) -> Result<()> {
    let img = image::RgbImage::from_raw(rgb.width as u32, rgb.height as u32, rgb.data.clone())
        .ok_or_else(|| format_err(path, "RGB buffer size mismatch"))?;
    encode_png(img, path)
}

pub fn read_rgb_png(path: &Path) -> Result<RgbFrame> {
    let img = image::load_from_memory_with_format(&read_bytes(path)?, image::ImageFormat::Png)?.to_rgb8();
    RgbFrame::from_vec(img.width() as usize, img.height() as usize, img.into_raw())
}

/// Masks are stored as 8-bit grayscale, 255 for set pixels.
pub fn write_mask_png(path: &Path, mask: &BitMask) -> Result<()> {
    let data = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, data)
        .ok_or_else(|| format_err(path, "mask buffer size mismatch"))?;
    encode_png(img, path)
}

/// Any pixel with luma above 127 is set.
pub fn read_mask_png(path: &Path) -> Result<BitMask> {
    let img = image::load_from_memory_with_format(&read_bytes(path)?, image::ImageFormat::Png)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(BitMask::from_bits(w, h, img.into_raw().into_iter().map(|v| v > 127).collect()))
}

/// ASCII PLY with double-precision positions (shortest round-trip decimal
/// form), 8-bit colors, the source pixel index, and optional faces.
pub fn encode_ply(vertices: &[Point], triangles: &[[u32; 3]]) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    s.push_str(&format!("element vertex {}\n", vertices.len()));
    for p in ["double x", "double y", "double z", "uchar red", "uchar green", "uchar blue", "uint source_pixel"] {
        s.push_str(&format!("property {p}\n"));
    }
    if !triangles.is_empty() {
        s.push_str(&format!("element face {}\nproperty list uchar uint vertex_indices\n", triangles.len()));
    }
    s.push_str("end_header\n");
    for v in vertices {
        let [r, g, b] = v.color;
        s.push_str(&format!(
            "{} {} {} {r} {g} {b} {}\n",
            v.position.x, v.position.y, v.position.z, v.source_pixel
        ));
    }
    for t in triangles {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    s
}

/// Parses the layout written by [`encode_ply`].
pub fn decode_ply(text: &str, path: &Path) -> Result<(Vec<Point>, Vec<[u32; 3]>)> {
    let mut lines = text.lines();
    if lines.next() != Some("ply") || lines.next() != Some("format ascii 1.0") {
        return Err(format_err(path, "not an ASCII PLY file"));
    }
    let (mut nv, mut nf) = (0usize, 0usize);
    for line in lines.by_ref() {
        if line == "end_header" {
            break;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() == 3 && parts[0] == "element" {
            let n = parts[2].parse().map_err(|_| format_err(path, format!("bad element count in {line:?}")))?;
            match parts[1] {
                "vertex" => nv = n,
                "face" => nf = n,
                other => return Err(format_err(path, format!("unexpected element {other:?}"))),
            }
        }
    }
    let bad = |line: &str| format_err(path, format!("malformed PLY row {line:?}"));
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| format_err(path, "missing vertex rows"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(bad(line));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad(line));
        let byte = |k: usize| f[k].parse::<u8>().map_err(|_| bad(line));
        vertices.push(Point {
            position: Vector3::new(num(0)?, num(1)?, num(2)?),
            color: [byte(3)?, byte(4)?, byte(5)?],
            source_pixel: f[6].parse().map_err(|_| bad(line))?,
        });
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| format_err(path, "missing face rows"))?;
        let f: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(line)))
            .collect::<Result<_>>()?;
        if f.len() != 4 || f[0] != 3 {
            return Err(bad(line));
        }
        triangles.push([f[1], f[2], f[3]]);
    }
    Ok((vertices, triangles))
}

pub fn write_point_cloud_ply(path: &Path, pc: &ColoredPointCloud) -> Result<()> {
    write_atomic(path, encode_ply(&pc.points, &[]).as_bytes())
}

pub fn write_mesh_ply(path: &Path, mesh: &LatticeMesh) -> Result<()> {
    write_atomic(path, encode_ply(&mesh.vertices, &mesh.triangles).as_bytes())
}

pub fn read_ply(path: &Path) -> Result<(Vec<Point>, Vec<[u32; 3]>)> {
    decode_ply(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Camera;

    #[test]
    fn pfm_roundtrip_keeps_bits_and_validity() {
        let mut d = DepthFrame::from_vec(3, 2, vec![1.0, 2.5, 0.1, 7.0, 1e-3, 3.25]).unwrap();
        d.invalidate(1, 1);
        let bytes = encode_pfm(&d);
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        let back = decode_pfm(&bytes, Path::new("x.pfm")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let d = DepthFrame::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let bytes = encode_pfm(&d);
        let n = bytes.len();
        assert_eq!(&bytes[n - 8..n - 4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn pfm_rejects_color() {
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0\0\0\0\0\0\0\0\0", Path::new("c.pfm")).is_err());
    }

    #[test]
    fn png_and_mask_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rgb = RgbFrame::filled(4, 3, [1, 2, 3]);
        rgb.set(2, 1, [250, 0, 9]);
        let p = dir.path().join("a/rgb.png");
        write_rgb_png(&p, &rgb).unwrap();
        assert_eq!(read_rgb_png(&p).unwrap(), rgb);
        let mut m = BitMask::new(4, 3);
        m.set(3, 2, true);
        let q = dir.path().join("m.png");
        write_mask_png(&q, &m).unwrap();
        assert_eq!(read_mask_png(&q).unwrap(), m);
    }

    #[test]
    fn ply_roundtrip_is_exact() {
        let v = vec![
            Point {
                position: Vector3::new(0.1, -2.0 / 3.0, 1e-17),
                color: [1, 2, 3],
                source_pixel: 7,
            },
            Point {
                position: Vector3::new(1.0, 2.0, 3.0),
                color: [255, 0, 128],
                source_pixel: 9,
            },
            Point {
                position: Vector3::new(4.0, 5.0, 6.0),
                color: [0, 0, 0],
                source_pixel: 11,
            },
        ];
        let t = vec![[0, 1, 2]];
        let text = encode_ply(&v, &t);
        assert_eq!(decode_ply(&text, Path::new("m.ply")).unwrap(), (v.clone(), t));
        assert_eq!(decode_ply(&encode_ply(&v, &[]), Path::new("p.ply")).unwrap(), (v, vec![]));
    }

    #[test]
    fn camera_manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cam = Camera::from_center(
            500.0,
            510.0,
            320.5,
            240.25,
            nalgebra::Matrix3::identity(),
            Vector3::new(0.1, 0.2, -0.3),
        )
        .unwrap();
        let entries = vec![CameraEntry::from_camera("src", 0, &cam, 64, 48)];
        let p = dir.path().join("cams.json");
        write_camera_manifest(&p, &entries).unwrap();
        assert_eq!(read_camera_manifest(&p).unwrap(), entries);
    }
}
