//! Every example under examples/ runs to completion.

mod camera_projection {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/camera_projection.rs"));
}

mod lift_and_render {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/lift_and_render.rs"));
}

mod info_masks {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/info_masks.rs"));
}

mod refine_depth {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/refine_depth.rs"));
}

mod preprocess_frame {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/preprocess_frame.rs"));
}

mod stitch_merge {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/stitch_merge.rs"));
}

mod trajectory_eval {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/trajectory_eval.rs"));
}

mod expand_scene {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/expand_scene.rs"));
}

#[test]
fn camera_projection_runs() {
    camera_projection::run_example().unwrap();
}

#[test]
fn lift_and_render_runs() {
    lift_and_render::run_example().unwrap();
}

#[test]
fn info_masks_runs() {
    info_masks::run_example().unwrap();
}

#[test]
fn refine_depth_runs() {
    refine_depth::run_example().unwrap();
}

#[test]
fn preprocess_frame_runs() {
    preprocess_frame::run_example().unwrap();
}

#[test]
fn stitch_merge_runs() {
    stitch_merge::run_example().unwrap();
}

#[test]
fn trajectory_eval_runs() {
    trajectory_eval::run_example().unwrap();
}

#[test]
fn expand_scene_runs() {
    expand_scene::run_example().unwrap();
}
