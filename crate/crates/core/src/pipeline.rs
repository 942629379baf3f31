//! Streaming detect -> track -> propose driver.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::features::{detect_keypoints, DetectorConfig};
use crate::imaging::Frame;
use crate::rpm::{candidate_proposals, finalize_proposals, window_coords, Proposal, RpmConfig};
use crate::tracking::{MapStore, TrackerConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub detect: Duration,
    pub track: Duration,
    pub cluster: Duration,
    pub nms: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.detect + self.track + self.cluster + self.nms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_id: u64,
    pub proposals: Vec<Proposal>,
    /// Boxes before NMS.
    pub n_candidates: usize,
    pub n_keypoints: usize,
    pub n_window_points: usize,
    pub tracked_ratio: f64,
    pub keyframe_inserted: bool,
    pub timings: StageTimings,
}

/// Owns the map store; frames must be fed in timestamp order.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub detector: DetectorConfig,
    pub rpm: RpmConfig,
    store: MapStore,
}

impl Pipeline {
    pub fn new(detector: DetectorConfig, rpm: RpmConfig, tracker: TrackerConfig) -> Result<Self> {
        detector.validate()?;
        rpm.validate()?;
        Ok(Pipeline {
            detector,
            rpm,
            store: MapStore::new(tracker),
        })
    }

    pub fn store(&self) -> &MapStore {
        &self.store
    }

    pub fn process(&mut self, frame: &Frame) -> Result<FrameOutput> {
        let t0 = Instant::now();
        let keypoints = detect_keypoints(frame, &self.detector)?;
        let t1 = Instant::now();

        let tracking = self.store.process_frame(frame, &keypoints)?;
        let keyframe_inserted = self.store.should_insert_keyframe(tracking.tracked_ratio, frame.frame_id);
        if keyframe_inserted {
            self.store.insert_keyframe_from(frame, &keypoints, &tracking)?;
        }
        // Nothing older than the window is ever queried again.
        self.store.prune_keyframes_before(frame.timestamp_s - self.rpm.window_s);
        let t2 = Instant::now();

        let points = window_coords(&self.store.window_points(frame.timestamp_s, self.rpm.window_s));
        let candidates = candidate_proposals(&points, frame.dims(), &self.rpm)?;
        let t3 = Instant::now();
        let proposals = finalize_proposals(&candidates, &self.rpm);
        let t4 = Instant::now();

        Ok(FrameOutput {
            frame_id: frame.frame_id,
            n_candidates: candidates.len(),
            proposals,
            n_keypoints: keypoints.len(),
            n_window_points: points.len(),
            tracked_ratio: tracking.tracked_ratio,
            keyframe_inserted,
            timings: StageTimings {
                detect: t1 - t0,
                track: t2 - t1,
                cluster: t3 - t2,
                nms: t4 - t3,
            },
        })
    }
}
