//! Ground truth, recall metrics and the throughput benchmark.

pub mod bench;
pub mod coco;
pub mod metrics;

pub use bench::{benchmark_frames, benchmark_pipeline, StageStats, TimingReport};
pub use coco::{load_coco, write_coco, Annotation, AnnotationSet, CocoDocument};
pub use metrics::{iou, recall_at, RecallReport};
