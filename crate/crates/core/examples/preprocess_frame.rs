// Clean a noisy depth frame: remove isolated spikes, then snap depth-edge
// pixels to a nearby side of the edge.

use stitch4d::frames::{BitMask, DepthFrame, RgbFrame};
use stitch4d::preprocess::{default_lap_thresh, depth_change_mask, depth_edges, depth_spikefix, edge_mapping, DEFAULT_MAD_K, DEFAULT_RADIUS, DEFAULT_WINDOW};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (64, 48);
    let rgb = RgbFrame::filled(w, h, [128, 128, 128]);
    let mut depth = DepthFrame::new(w, h);
    for y in 0..h {
        for x in 0..w {
            depth.set(x, y, if x < 32 { 2.0 } else { 3.0 + 0.01 * y as f32 });
        }
    }
    for (x, y) in [(10, 10), (20, 30), (45, 12), (50, 40)] {
        depth.set(x, y, 6.0);
    }

    let fixed = depth_spikefix(&depth, &BitMask::filled(w, h, true), DEFAULT_WINDOW, DEFAULT_MAD_K, true)?;
    let changed = depth_change_mask(&depth, &fixed);
    println!("spikefix changed {} px, (10,10): {:?} -> {:?}", changed.count(), depth.get(10, 10), fixed.get(10, 10));
    assert_eq!(changed.count(), 4);

    let lap = default_lap_thresh(&fixed);
    let (_, mapped) = edge_mapping(&rgb, &fixed, lap, DEFAULT_RADIUS)?;
    println!("{} edge px, {} remapped", depth_edges(&fixed, lap).count(), depth_change_mask(&fixed, &mapped).count());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
