//! Batch orchestration: configuration, synthetic datasets, the completer
//! exchange, scene expansion and novel-view rendering.

pub mod config;
pub mod exchange;
pub mod expand;
pub mod novel;
pub mod scene;

pub use config::{Completer, OracleDepth, PipelineConfig, PreprocessConfig};
pub use exchange::{oracle_complete, oracle_depth, ExchangeRecord, ExchangeStatus};
pub use expand::{run_expand, run_expand_full, ExpandOutput, FrameSummary, RunSummary};
pub use novel::render_novel_views;
pub use scene::{gen_synthetic_scene, parse_scene, DatasetLayout, SceneSpec};
