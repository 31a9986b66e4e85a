//! Small raster utilities shared by the mask, preprocessing and refinement
//! stages: morphology, connected components, the depth Laplacian, and
//! masked smoothing.

use crate::frames::{BitMask, DepthFrame};

/// Dilation by a `(2r+1) x (2r+1)` square. Out-of-bounds pixels are unset.
pub fn dilate(mask: &BitMask, r: usize) -> BitMask {
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    // Separable running counts keep this linear in the pixel count.
    let mut rows = vec![false; w * h];
    for y in 0..h {
        let row = &mask.bits[y * w..(y + 1) * w];
        let mut count = 0usize;
        for x in 0..(r.min(w)) {
            count += row[x] as usize;
        }
        for x in 0..w {
            if x + r < w {
                count += row[x + r] as usize;
            }
            if x > r {
                count -= row[x - r - 1] as usize;
            }
            rows[y * w + x] = count > 0;
        }
    }
    let mut out = vec![false; w * h];
    for x in 0..w {
        let mut count = 0usize;
        for y in 0..(r.min(h)) {
            count += rows[y * w + x] as usize;
        }
        for y in 0..h {
            if y + r < h {
                count += rows[(y + r) * w + x] as usize;
            }
            if y > r {
                count -= rows[(y - r - 1) * w + x] as usize;
            }
            out[y * w + x] = count > 0;
        }
    }
    BitMask::from_bits(w, h, out)
}

/// Erosion by a square; the image border does not erode.
pub fn erode(mask: &BitMask, r: usize) -> BitMask {
    dilate(&mask.complement(), r).complement()
}

/// Morphological closing with a `(2r+1)` square.
pub fn close(mask: &BitMask, r: usize) -> BitMask {
    erode(&dilate(mask, r), r)
}

/// 8-connected component labels (0 = background, components numbered from 1
/// in raster-scan order of their first pixel) and per-label sizes
/// (`sizes[0]` is unused).
pub fn label_components(mask: &BitMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut sizes = vec![0usize];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0usize;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.bits[j] && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Pixels belonging to 8-connected components with fewer than `min_size` pixels.
pub fn small_components(mask: &BitMask, min_size: usize) -> BitMask {
    let (labels, sizes) = label_components(mask);
    let bits = labels
        .iter()
        .map(|&l| l != 0 && sizes[l as usize] < min_size)
        .collect();
    BitMask::from_bits(mask.width, mask.height, bits)
}

/// Absolute 5-point Laplacian of a depth map. An axis contributes its second
/// difference only when both neighbors along it are valid, so borders and
/// holes never produce spurious responses on smooth surfaces. Invalid pixels
/// get 0.
pub fn abs_laplacian(depth: &DepthFrame) -> Vec<f64> {
    let (w, h) = (depth.width, depth.height);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !depth.valid[i] {
                continue;
            }
            let c = depth.data[i] as f64;
            let mut lap = 0.0;
            if x > 0 && x + 1 < w && depth.valid[i - 1] && depth.valid[i + 1] {
                lap += depth.data[i - 1] as f64 + depth.data[i + 1] as f64 - 2.0 * c;
            }
            if y > 0 && y + 1 < h && depth.valid[i - w] && depth.valid[i + w] {
                lap += depth.data[i - w] as f64 + depth.data[i + w] as f64 - 2.0 * c;
            }
            out[i] = lap.abs();
        }
    }
    out
}

/// Median of valid depths, or `None` for an empty frame.
pub fn median_valid_depth(depth: &DepthFrame) -> Option<f64> {
    let mut v: Vec<f64> = depth
        .data
        .iter()
        .zip(&depth.valid)
        .filter(|(_, &ok)| ok)
        .map(|(&d, _)| d as f64)
        .collect();
    median_in_place(&mut v)
}

/// Lower median; sorts the slice.
pub fn median_in_place(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[(v.len() - 1) / 2])
}

/// Gaussian smoothing restricted to `mask`, normalized over the valid
/// pixels that fall inside the mask. Pixels outside the mask are copied.
pub fn masked_gaussian(depth: &DepthFrame, mask: &BitMask, sigma: f64) -> DepthFrame {
    let (w, h) = (depth.width, depth.height);
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let use_px = |i: usize| mask.bits[i] && depth.valid[i];
    // Horizontal pass on (weighted value, weight), then vertical.
    let mut num = vec![0.0; w * h];
    let mut den = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut n, mut d) = (0.0, 0.0);
            for k in -r..=r {
                let xx = x as isize + k;
                if xx < 0 || xx >= w as isize {
                    continue;
                }
                let j = y * w + xx as usize;
                if use_px(j) {
                    let kw = kernel[(k + r) as usize];
                    n += kw * depth.data[j] as f64;
                    d += kw;
                }
            }
            num[y * w + x] = n;
            den[y * w + x] = d;
        }
    }
    let mut out = depth.clone();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !use_px(i) {
                continue;
            }
            let (mut n, mut d) = (0.0, 0.0);
            for k in -r..=r {
                let yy = y as isize + k;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                let j = yy as usize * w + x;
                let kw = kernel[(k + r) as usize];
                n += kw * num[j];
                d += kw * den[j];
            }
            if d > 0.0 {
                out.data[i] = (n / d) as f32;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BitMask {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BitMask::from_bits(w, h, bits)
    }

    #[test]
    fn dilate_and_erode_square() {
        let m = mask_from(&[".....", ".....", "..#..", ".....", "....."]);
        let d = dilate(&m, 1);
        assert_eq!(d.count(), 9);
        assert_eq!(erode(&d, 1), m);
        let full = BitMask::filled(4, 3, true);
        assert_eq!(erode(&full, 2), full);
    }

    #[test]
    fn dilate_matches_brute_force() {
        let m = mask_from(&["#.......", "........", "...#....", ".......#", "........"]);
        for r in 0..4 {
            let d = dilate(&m, r);
            for y in 0..m.height {
                for x in 0..m.width {
                    let mut expect = false;
                    for yy in 0..m.height {
                        for xx in 0..m.width {
                            if m.get(xx, yy) && x.abs_diff(xx) <= r && y.abs_diff(yy) <= r {
                                expect = true;
                            }
                        }
                    }
                    assert_eq!(d.get(x, y), expect, "r={r} ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn components_use_eight_connectivity() {
        let m = mask_from(&["#....", ".#...", "...##", "....."]);
        let (labels, sizes) = label_components(&m);
        assert_eq!(sizes, vec![0, 2, 2]);
        assert_eq!(labels[0], 1);
        assert_eq!(labels[6], 1);
        assert_eq!(small_components(&m, 3).count(), 4);
        assert_eq!(small_components(&m, 2).count(), 0);
    }

    #[test]
    fn laplacian_vanishes_on_ramps() {
        let mut d = DepthFrame::new(6, 5);
        for y in 0..5 {
            for x in 0..6 {
                d.set(x, y, 1.0 + 0.25 * x as f32 + 0.5 * y as f32);
            }
        }
        assert!(abs_laplacian(&d).iter().all(|&v| v == 0.0));
        d.set(3, 2, 10.0);
        let lap = abs_laplacian(&d);
        assert!(lap[2 * 6 + 3] > 10.0);
    }
}
