// Find where a shifted view needs new content: projection holes plus the
// curtain discrepancy between mesh and point renders.

use stitch4d::addmask::{curtain_discrepancy_mask, info_addition_mask, projection_hole_mask, DEFAULT_REL_DEPTH_TOL};
use stitch4d::frames::{lift_lattice_mesh, lift_point_cloud, BitMask};
use stitch4d::pipeline::parse_scene;
use stitch4d::raster::{render_mesh, render_points};

const SCENE: &str = "size 80 60
plane 0 0 1 2 90 120 200 checker 0.25 60 200 90
rect 1 -0.3 -0.3 0.2 0.3 220 40 40 fg
camera src 0 0 0
camera tgt 0.15 0 0
";

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = parse_scene(SCENE)?;
    let (src, tgt) = (spec.camera("src").unwrap(), spec.camera("tgt").unwrap());
    let (w, h) = (spec.width, spec.height);
    let f = spec.render(src, 0, true);

    let mesh_r = render_mesh(&lift_lattice_mesh(&f.rgb, &f.depth, src)?, tgt, w, h, false);
    let pcd_r = render_points(&lift_point_cloud(&f.rgb, &f.depth, src)?, tgt, w, h);
    let hole = projection_hole_mask(&pcd_r);
    let cdisc = curtain_discrepancy_mask(&mesh_r, &pcd_r, DEFAULT_REL_DEPTH_TOL)?;
    let info = info_addition_mask(&hole, &cdisc, &BitMask::new(w, h), 4)?;
    println!("holes {} px, curtain discrepancy {} px, information addition {} px", hole.count(), cdisc.count(), info.count());

    // ASCII view of the mask around the FG rectangle.
    for y in (0..h).step_by(4) {
        let row: String = (0..w).step_by(2).map(|x| if info.get(x, y) { '#' } else { '.' }).collect();
        println!("{row}");
    }
    assert!(!cdisc.is_empty());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
