// Full run on a generated scene: write the dataset, expand the source asset
// with what a shifted target camera sees, and render a short video between
// the two cameras.

use stitch4d::pipeline::{gen_synthetic_scene, render_novel_views, run_expand_full, PipelineConfig};

const SCENE: &str = "size 128 96
frames 2
plane 0 0 1 4 90 120 200 checker 0.25 60 200 90
rect 2 -0.4 -0.3 0.2 0.3 220 40 40 checker 0.1 250 250 40 fg move 0.05 0 0
camera src 0 0 0
camera tgt 0.3 0 0
";

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = gen_synthetic_scene(SCENE, &dir.path().join("dataset"))?;
    std::fs::write(dir.path().join("config.txt"), "width = 128\nheight = 96\ncompleter = oracle\n")?;
    let cfg = PipelineConfig::load(&dir.path().join("config.txt"))?;

    let out = run_expand_full(&cfg, "src", "tgt")?;
    for f in &out.summary.frames {
        println!("frame {}: {} info px, {} candidates, {} merged", f.frame, f.masks.info, f.candidates, f.merged);
    }
    println!("refine per frame: {:.3} s", out.summary.timings["refine_per_frame"]);

    let (c0, c1) = (spec.camera("src").unwrap(), spec.camera("tgt").unwrap());
    let video = dir.path().join("video");
    let cams = render_novel_views(&out.asset, c0, c1, spec.width, spec.height, 5, &video)?;
    println!("rendered {} frames to {}", cams.len(), video.display());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
