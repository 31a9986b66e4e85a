//! Preprocessing locality and the spike detector against a direct oracle.

#[allow(unused)]
mod common;

use rand::Rng;

use common::{random_frame, rng};
use stitch4d::frames::{BitMask, DepthFrame};
use stitch4d::preprocess::{
    default_lap_thresh, depth_change_mask, depth_edges, depth_spikefix, edge_mapping, mask_cut, occlusion_mask_refine, spike_flags, spikefix_pass, DEFAULT_BORDER_MARGIN,
    DEFAULT_MAD_K, DEFAULT_MIN_COMPONENT, DEFAULT_RADIUS, DEFAULT_RING_THICKNESS, DEFAULT_WINDOW,
    MAX_SPIKEFIX_PASSES,
};
use stitch4d::imgops::erode;

/// Lower median for even counts.
fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Direct sliding-window MAD detector without component filtering.
fn oracle_flags(depth: &DepthFrame, region: &BitMask, window: usize, k: f64) -> BitMask {
    let (w, h) = (depth.width as i64, depth.height as i64);
    let r = (window / 2) as i64;
    let mut out = BitMask::new(depth.width, depth.height);
    for y in 0..h {
        for x in 0..w {
            // Eroded region: all 3x3 neighbors (inside the frame) in the region.
            let safe = (-1..=1).all(|dy| {
                (-1..=1).all(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx < 0 || ny < 0 || nx >= w || ny >= h || region.get(nx as usize, ny as usize)
                })
            });
            let Some(d) = depth.get(x as usize, y as usize) else { continue };
            if !safe {
                continue;
            }
            let mut vals: Vec<f64> = Vec::new();
            for ny in (y - r).max(0)..=(y + r).min(h - 1) {
                for nx in (x - r).max(0)..=(x + r).min(w - 1) {
                    if let Some(v) = depth.get(nx as usize, ny as usize) {
                        vals.push(v as f64);
                    }
                }
            }
            let med = median(&mut vals);
            let mut dev: Vec<f64> = vals.iter().map(|v| (v - med).abs()).collect();
            let sigma = (1.4826 * median(&mut dev)).max(1e-6 * med.abs());
            out.set(x as usize, y as usize, (d as f64 - med).abs() > k * sigma);
        }
    }
    out
}

#[test]
fn spike_flags_match_sliding_window_oracle() {
    for seed in 0..20 {
        let f = random_frame(seed, 48, 40);
        let region = BitMask::filled(48, 40, true);
        let got = spike_flags(&f.depth, &region, DEFAULT_WINDOW, DEFAULT_MAD_K, false).unwrap();
        let want = oracle_flags(&f.depth, &region, DEFAULT_WINDOW, DEFAULT_MAD_K);
        let diff: Vec<usize> = (0..48 * 40).filter(|&i| got.bits[i] != want.bits[i]).collect();
        assert!(diff.is_empty(), "seed {seed}: {diff:?}");
    }
}

#[test]
fn injected_spikes_on_smooth_plane_are_found() {
    let (w, h) = (64, 48);
    let mut r = rng(21);
    let mut depth = DepthFrame::new(w, h);
    for y in 0..h {
        for x in 0..w {
            depth.set(x, y, (3.0 + 0.01 * x as f64 + 0.005 * y as f64) as f32);
        }
    }
    let clean = depth.clone();
    let mut spikes = BitMask::new(w, h);
    while spikes.count() < w * h / 50 {
        let (x, y) = (r.gen_range(2..w - 2), r.gen_range(2..h - 2));
        // Keep spikes isolated so each window has a clean majority.
        if (-1i64..=1).all(|dy| (-1i64..=1).all(|dx| !spikes.get((x as i64 + dx) as usize, (y as i64 + dy) as usize))) {
            spikes.set(x, y, true);
            depth.set(x, y, clean.get(x, y).unwrap() * 1.5);
        }
    }
    let fixed = depth_spikefix(&depth, &BitMask::filled(w, h, true), DEFAULT_WINDOW, DEFAULT_MAD_K, true).unwrap();
    let changed = depth_change_mask(&depth, &fixed);
    assert_eq!(changed, spikes);
    for i in (0..w * h).filter(|&i| spikes.bits[i]) {
        assert!((fixed.data[i] - clean.data[i]).abs() / clean.data[i] < 0.05);
    }
}

#[test]
fn spikefix_changes_only_flagged_pixels_within_window_range() {
    for seed in 0..100 {
        let f = random_frame(seed, 40, 32);
        let region = f.depth.validity_mask();
        // First pass: every change is flagged and is a mean of window values.
        let flags = spike_flags(&f.depth, &region, DEFAULT_WINDOW, DEFAULT_MAD_K, false).unwrap();
        let out = spikefix_pass(&f.depth, &region, DEFAULT_WINDOW, DEFAULT_MAD_K, false).unwrap();
        let changed = depth_change_mask(&f.depth, &out);
        assert!(changed.is_subset_of(&flags), "seed {seed}");
        for i in (0..40 * 32).filter(|&i| changed.bits[i]) {
            let (x, y) = ((i % 40) as i64, (i / 40) as i64);
            let r = (DEFAULT_WINDOW / 2) as i64;
            let vals: Vec<f32> = (y - r..=y + r)
                .flat_map(|yy| (x - r..=x + r).map(move |xx| (xx, yy)))
                .filter(|&(xx, yy)| xx >= 0 && yy >= 0 && xx < 40 && yy < 32 && (xx, yy) != (x, y))
                .filter_map(|(xx, yy)| f.depth.get(xx as usize, yy as usize))
                .collect();
            let (lo, hi) = vals.iter().fold((f32::MAX, f32::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
            assert!(out.data[i] >= lo && out.data[i] <= hi);
        }
    }
}

#[test]
fn iterated_spikefix_changes_only_pixels_flagged_in_some_pass() {
    for seed in 0..100 {
        let f = random_frame(seed, 40, 32);
        let region = f.depth.validity_mask();
        let mut trigger = BitMask::new(40, 32);
        let mut cur = f.depth.clone();
        for _ in 0..MAX_SPIKEFIX_PASSES {
            trigger = trigger.union(&spike_flags(&cur, &region, DEFAULT_WINDOW, DEFAULT_MAD_K, true).unwrap());
            cur = spikefix_pass(&cur, &region, DEFAULT_WINDOW, DEFAULT_MAD_K, true).unwrap();
        }
        let out = depth_spikefix(&f.depth, &region, DEFAULT_WINDOW, DEFAULT_MAD_K, true).unwrap();
        assert!(depth_change_mask(&f.depth, &out).is_subset_of(&trigger), "seed {seed}");
        assert!(trigger.is_subset_of(&erode(&region, 1)));
    }
}

#[test]
fn spikefix_is_idempotent_on_its_output() {
    for seed in 0..100 {
        let f = random_frame(seed, 40, 32);
        let region = f.depth.validity_mask();
        let once = depth_spikefix(&f.depth, &region, DEFAULT_WINDOW, DEFAULT_MAD_K, true).unwrap();
        let twice = depth_spikefix(&once, &region, DEFAULT_WINDOW, DEFAULT_MAD_K, true).unwrap();
        assert_eq!(depth_change_mask(&once, &twice).count(), 0, "seed {seed}");
    }
}

#[test]
fn edge_mapping_changes_only_edge_pixels_to_window_values() {
    for seed in 0..100 {
        let f = random_frame(seed, 40, 32);
        let lap = default_lap_thresh(&f.depth);
        let edges = depth_edges(&f.depth, lap);
        let (rgb, depth) = edge_mapping(&f.rgb, &f.depth, lap, DEFAULT_RADIUS).unwrap();
        let changed = depth_change_mask(&f.depth, &depth);
        assert!(changed.is_subset_of(&edges), "seed {seed}");
        for y in 0..32 {
            for x in 0..40 {
                if !edges.get(x, y) {
                    assert_eq!(rgb.get(x, y), f.rgb.get(x, y));
                    continue;
                }
                // Any new value is some valid non-edge pixel's depth nearby.
                if let Some(d) = depth.get(x, y).filter(|_| changed.get(x, y)) {
                    let r = DEFAULT_RADIUS as i64;
                    let found = (-r..=r).any(|dy| {
                        (-r..=r).any(|dx| {
                            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                            nx >= 0 && ny >= 0 && nx < 40 && ny < 32 && !edges.get(nx as usize, ny as usize) && f.depth.get(nx as usize, ny as usize) == Some(d)
                        })
                    });
                    assert!(found, "seed {seed} ({x},{y})");
                }
            }
        }
    }
}

#[test]
fn mask_refinement_flips_only_cut_pixels() {
    let mut flipped = 0;
    for seed in 0..100 {
        let f = random_frame(seed, 40, 32);
        let cut = mask_cut(&f.fg, &f.depth, DEFAULT_RING_THICKNESS, DEFAULT_BORDER_MARGIN).unwrap();
        let out = occlusion_mask_refine(&f.fg, &f.depth, DEFAULT_RING_THICKNESS, DEFAULT_WINDOW, DEFAULT_MIN_COMPONENT, DEFAULT_BORDER_MARGIN).unwrap();
        let changed = BitMask::from_bits(40, 32, (0..40 * 32).map(|i| out.bits[i] != f.fg.bits[i]).collect());
        assert!(changed.is_subset_of(&cut), "seed {seed}");
        flipped += changed.count();
    }
    // The shifted masks do get corrected somewhere.
    assert!(flipped > 0);
}
