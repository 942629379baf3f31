//! Class-agnostic region proposals from tracked keypoints.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`imaging`] loads grayscale frames and builds scale pyramids.
//! 2. [`features`] detects FAST-9 corners, orients them and computes rotated
//!    binary descriptors.
//! 3. [`tracking`] links keypoints across frames into tracks, selects keyframes
//!    and answers time-windowed point queries.
//! 4. [`rpm`] clusters windowed points with several K-means runs and turns each
//!    cluster into an extent box plus nine centroid anchors, followed by NMS.
//! 5. [`evalkit`] scores proposals against COCO-style ground truth and times the
//!    whole thing.
//!
//! [`synthgen`] produces deterministic synthetic sequences with exact ground
//! truth, and [`pipeline`] wires stages 1 to 4 together for streaming use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evalkit;
pub mod features;
pub mod imaging;
pub mod pipeline;
pub mod rng;
pub mod rpm;
pub mod synthgen;
pub mod tracking;

pub use error::{Error, Result};
pub use features::{DetectorConfig, KeyPoint};
pub use imaging::{Frame, FrameManifest, ImagePyramid};
pub use pipeline::Pipeline;
pub use rpm::{BoundingBox, Proposal, RpmConfig};
pub use tracking::MapStore;
