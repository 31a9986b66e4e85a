//! Geometry toolkit for stitching novel-view content into explicit 4D scene assets.

pub mod addmask;
pub mod camera;
pub mod error;
pub mod frames;
pub mod imgops;
pub mod io;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod refine;
pub mod stitch;
pub mod trajeval;

pub use error::{Error, Result};
