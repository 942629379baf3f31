//! 2D stand-in for a SLAM map: tracks, keyframes and windowed point queries.
//!
//! A [`MapStore`] links keypoints across frames by descriptor matching inside
//! a spatial gate, keeps the tracked points of selected keyframes, and answers
//! "which points were seen in the last `w` seconds" for the proposal stage.
//! Keyframe dumps from an external SLAM system can be loaded with
//! [`ingest_external_keyframes`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::features::{match_descriptors_gated, Descriptor, KeyPoint};
use crate::imaging::Frame;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Largest displacement, in level-0 pixels, between a track's last
    /// position and a matching keypoint.
    pub gate_px: f64,
    /// Tracks unseen for longer than this are retired.
    pub retire_after_s: f64,
    /// Insert a keyframe when the tracked ratio drops below this.
    pub keyframe_min_ratio: f64,
    /// Insert a keyframe at least every this many frames.
    pub keyframe_max_gap: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            gate_px: 60.0,
            retire_after_s: 2.0,
            keyframe_min_ratio: 0.7,
            keyframe_max_gap: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub observations: Vec<Observation>,
    pub last_descriptor: Descriptor,
}

impl Track {
    pub fn last(&self) -> &Observation {
        self.observations.last().expect("track has at least one observation")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyFramePoint {
    pub track_id: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrame {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub width: usize,
    pub height: usize,
    pub points: Vec<KeyFramePoint>,
}

/// One point returned by [`MapStore::window_points`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPoint {
    pub track_id: u64,
    pub x: f64,
    pub y: f64,
    /// Keyframe the position was taken from.
    pub frame_id: u64,
    pub timestamp_s: f64,
}

/// Result of tracking one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTracking {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub tracked_ratio: f64,
    pub matched: usize,
    /// Track id assigned to each input keypoint, in input order.
    pub track_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapStore {
    pub config: TrackerConfig,
    keyframes: Vec<KeyFrame>,
    tracks: BTreeMap<u64, Track>,
    /// Ids of tracks eligible for matching, ascending.
    active: Vec<u64>,
    /// Number of stored keyframes referencing each track.
    keyframe_refs: HashMap<u64, u32>,
    next_track_id: u64,
    last_timestamp: Option<f64>,
}

impl MapStore {
    pub fn new(config: TrackerConfig) -> Self {
        MapStore {
            config,
            ..MapStore::default()
        }
    }

    pub fn keyframes(&self) -> &[KeyFrame] {
        &self.keyframes
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks.get(&id)
    }

    pub fn n_tracks(&self) -> usize {
        self.tracks.len()
    }

    pub fn active_track_ids(&self) -> &[u64] {
        &self.active
    }

    pub fn last_keyframe(&self) -> Option<&KeyFrame> {
        self.keyframes.last()
    }

    fn retire_stale(&mut self, t: f64) {
        let cutoff = self.config.retire_after_s;
        let tracks = &mut self.tracks;
        let refs = &self.keyframe_refs;
        self.active.retain(|id| {
            let keep = t - tracks[id].last().timestamp_s <= cutoff;
            if !keep && !refs.contains_key(id) {
                tracks.remove(id);
            }
            keep
        });
    }

    /// Matches `keypoints` against active tracks, extends matched tracks and
    /// spawns new ones for the rest.
    pub fn process_frame(&mut self, frame: &Frame, keypoints: &[KeyPoint]) -> Result<FrameTracking> {
        let t = frame.timestamp_s;
        let last = self
            .last_timestamp
            .into_iter()
            .chain(self.keyframes.last().map(|k| k.timestamp_s))
            .fold(f64::NEG_INFINITY, f64::max);
        if t <= last {
            return Err(Error::OutOfOrder { got: t, last });
        }
        self.last_timestamp = Some(t);

        self.retire_stale(t);
        let active_before = self.active.len();

        let track_pos: Vec<(f64, f64)> = self
            .active
            .iter()
            .map(|id| {
                let o = self.tracks[id].last();
                (o.x, o.y)
            })
            .collect();
        let track_desc: Vec<Descriptor> = self.active.iter().map(|id| self.tracks[id].last_descriptor).collect();
        let kp_desc: Vec<Descriptor> = keypoints.iter().map(|k| k.descriptor).collect();

        let gate = self.config.gate_px;
        let grid = SpatialGrid::new(&track_pos, gate);
        let matches = match_descriptors_gated(&kp_desc, &track_desc, |ia, out| {
            let kp = &keypoints[ia];
            grid.within(kp.x, kp.y, gate, &track_pos, out);
        });

        let mut track_ids = vec![u64::MAX; keypoints.len()];
        for m in &matches {
            track_ids[m.index_a] = self.active[m.index_b];
        }
        for (kp, slot) in keypoints.iter().zip(track_ids.iter_mut()) {
            let obs = Observation {
                frame_id: frame.frame_id,
                timestamp_s: t,
                x: kp.x,
                y: kp.y,
            };
            if *slot == u64::MAX {
                let id = self.next_track_id;
                self.next_track_id += 1;
                self.tracks.insert(
                    id,
                    Track {
                        track_id: id,
                        observations: vec![obs],
                        last_descriptor: kp.descriptor,
                    },
                );
                self.active.push(id);
                *slot = id;
            } else {
                let track = self.tracks.get_mut(slot).expect("matched track exists");
                track.observations.push(obs);
                track.last_descriptor = kp.descriptor;
            }
        }
        self.active.sort_unstable();

        Ok(FrameTracking {
            frame_id: frame.frame_id,
            timestamp_s: t,
            tracked_ratio: matches.len() as f64 / active_before.max(1) as f64,
            matched: matches.len(),
            track_ids,
        })
    }

    /// Keyframe policy: first frame, tracking loss, or a long enough gap.
    pub fn should_insert_keyframe(&self, tracked_ratio: f64, frame_id: u64) -> bool {
        match self.keyframes.last() {
            None => true,
            Some(kf) => {
                tracked_ratio < self.config.keyframe_min_ratio
                    || frame_id.saturating_sub(kf.frame_id) >= self.config.keyframe_max_gap
            }
        }
    }

    /// Stores the tracked keypoints of a processed frame as a keyframe.
    pub fn insert_keyframe_from(&mut self, frame: &Frame, keypoints: &[KeyPoint], tracking: &FrameTracking) -> Result<()> {
        let points = keypoints
            .iter()
            .zip(&tracking.track_ids)
            .map(|(kp, &track_id)| KeyFramePoint {
                track_id,
                x: kp.x,
                y: kp.y,
            })
            .collect();
        self.insert_keyframe(KeyFrame {
            frame_id: frame.frame_id,
            timestamp_s: frame.timestamp_s,
            width: frame.width,
            height: frame.height,
            points,
        })
    }

    pub fn insert_keyframe(&mut self, keyframe: KeyFrame) -> Result<()> {
        if let Some(last) = self.keyframes.last() {
            if keyframe.timestamp_s <= last.timestamp_s {
                return Err(Error::OutOfOrder {
                    got: keyframe.timestamp_s,
                    last: last.timestamp_s,
                });
            }
        }
        let mut seen = HashSet::with_capacity(keyframe.points.len());
        for p in &keyframe.points {
            if !self.tracks.contains_key(&p.track_id) {
                return Err(Error::Config(format!("keyframe references unknown track {}", p.track_id)));
            }
            if !seen.insert(p.track_id) {
                return Err(Error::Config(format!("track {} appears twice in one keyframe", p.track_id)));
            }
            if !(p.x >= 0.0 && p.x < keyframe.width as f64 && p.y >= 0.0 && p.y < keyframe.height as f64) {
                return Err(Error::Config(format!(
                    "keyframe point ({}, {}) outside {}x{} frame",
                    p.x, p.y, keyframe.width, keyframe.height
                )));
            }
        }
        for p in &keyframe.points {
            *self.keyframe_refs.entry(p.track_id).or_insert(0) += 1;
        }
        self.keyframes.push(keyframe);
        Ok(())
    }

    /// Drops keyframes older than `t` together with retired tracks nothing
    /// references any more.
    pub fn prune_keyframes_before(&mut self, t: f64) {
        let n_old = self.keyframes.partition_point(|k| k.timestamp_s < t);
        if n_old == 0 {
            return;
        }
        let active: HashSet<u64> = self.active.iter().copied().collect();
        for kf in self.keyframes.drain(..n_old) {
            for p in kf.points {
                let refs = self.keyframe_refs.get_mut(&p.track_id).expect("referenced track counted");
                *refs -= 1;
                if *refs == 0 {
                    self.keyframe_refs.remove(&p.track_id);
                    if !active.contains(&p.track_id) {
                        self.tracks.remove(&p.track_id);
                    }
                }
            }
        }
    }

    /// Points of every keyframe with `t_now - window_s <= t <= t_now`. A track
    /// seen in several of them contributes only its most recent position.
    /// Output is ordered by track id.
    pub fn window_points(&self, t_now: f64, window_s: f64) -> Vec<WindowPoint> {
        let start = t_now - window_s;
        let first = self.keyframes.partition_point(|k| k.timestamp_s < start);
        let mut latest: BTreeMap<u64, WindowPoint> = BTreeMap::new();
        for kf in self.keyframes[first..].iter().take_while(|k| k.timestamp_s <= t_now) {
            for p in &kf.points {
                latest.insert(
                    p.track_id,
                    WindowPoint {
                        track_id: p.track_id,
                        x: p.x,
                        y: p.y,
                        frame_id: kf.frame_id,
                        timestamp_s: kf.timestamp_s,
                    },
                );
            }
        }
        latest.into_values().collect()
    }
}

/// Uniform bucket grid over track positions for radius queries.
struct SpatialGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialGrid {
    fn new(points: &[(f64, f64)], cell: f64) -> Self {
        let cell = cell.max(1.0);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            buckets
                .entry(((x / cell).floor() as i64, (y / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        SpatialGrid { cell, buckets }
    }

    fn within(&self, x: f64, y: f64, radius: f64, points: &[(f64, f64)], out: &mut Vec<usize>) {
        let (cx, cy) = ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64);
        let reach = (radius / self.cell).ceil() as i64;
        let r2 = radius * radius;
        for by in cy - reach..=cy + reach {
            for bx in cx - reach..=cx + reach {
                if let Some(ids) = self.buckets.get(&(bx, by)) {
                    out.extend(ids.iter().copied().filter(|&i| {
                        let (px, py) = points[i];
                        (px - x).powi(2) + (py - y).powi(2) <= r2
                    }));
                }
            }
        }
        out.sort_unstable();
    }
}

#[derive(Debug, Deserialize)]
struct ExternalPoint {
    id: Option<i64>,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct ExternalKeyFrame {
    frame_id: u64,
    timestamp_s: f64,
    width: usize,
    height: usize,
    points: Vec<ExternalPoint>,
}

/// Builds a store from a line-delimited keyframe dump written by an external
/// SLAM system. Points without an id get fresh track ids above the largest
/// explicit one, in file order.
pub fn ingest_external_keyframes(path: &Path) -> Result<MapStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<(usize, ExternalKeyFrame)> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExternalKeyFrame = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, line_no, format!("malformed keyframe record: {e}")))?;
        if let Some((_, prev)) = records.last() {
            if rec.timestamp_s <= prev.timestamp_s {
                return Err(Error::NonMonotonicTimestamp { line: line_no });
            }
        }
        for p in &rec.points {
            if !(p.x >= 0.0 && p.x < rec.width as f64 && p.y >= 0.0 && p.y < rec.height as f64) {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!(
                        "record for frame {}: point ({}, {}) outside {}x{} frame",
                        rec.frame_id, p.x, p.y, rec.width, rec.height
                    ),
                ));
            }
            if p.id.is_some_and(|id| id < 0) {
                return Err(Error::parse(path, line_no, format!("record for frame {}: negative point id", rec.frame_id)));
            }
        }
        records.push((line_no, rec));
    }

    let mut next_id = records
        .iter()
        .flat_map(|(_, r)| r.points.iter().filter_map(|p| p.id))
        .max()
        .map_or(0, |m| m as u64 + 1);
    let mut store = MapStore::new(TrackerConfig::default());
    for (line_no, rec) in records {
        let mut points = Vec::with_capacity(rec.points.len());
        for p in &rec.points {
            let track_id = match p.id {
                Some(id) => id as u64,
                None => {
                    next_id += 1;
                    next_id - 1
                }
            };
            let obs = Observation {
                frame_id: rec.frame_id,
                timestamp_s: rec.timestamp_s,
                x: p.x,
                y: p.y,
            };
            store
                .tracks
                .entry(track_id)
                .and_modify(|t| t.observations.push(obs))
                .or_insert_with(|| Track {
                    track_id,
                    observations: vec![obs],
                    last_descriptor: Descriptor::default(),
                });
            points.push(KeyFramePoint {
                track_id,
                x: p.x,
                y: p.y,
            });
        }
        store
            .insert_keyframe(KeyFrame {
                frame_id: rec.frame_id,
                timestamp_s: rec.timestamp_s,
                width: rec.width,
                height: rec.height,
                points,
            })
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
    }
    store.next_track_id = next_id;
    store.last_timestamp = store.keyframes.last().map(|k| k.timestamp_s);
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn keypoints(n: usize, seed: u64) -> Vec<KeyPoint> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|_| KeyPoint {
                x: rng.range_f64(0.0, 640.0),
                y: rng.range_f64(0.0, 480.0),
                level: 0,
                response: 1.0,
                orientation_rad: 0.0,
                descriptor: Descriptor([rng.next_u64(), rng.next_u64(), rng.next_u64(), rng.next_u64()]),
            })
            .collect()
    }

    fn frame_at(frame_id: u64, t: f64) -> Frame {
        let mut f = Frame::filled(640, 480, 0);
        f.frame_id = frame_id;
        f.timestamp_s = t;
        f
    }

    #[test]
    fn cold_start_spawns_tracks() {
        let mut store = MapStore::new(TrackerConfig::default());
        let kps = keypoints(100, 1);
        let r = store.process_frame(&frame_at(0, 0.0), &kps).unwrap();
        assert_eq!(r.tracked_ratio, 0.0);
        assert_eq!(store.n_tracks(), 100);
        assert_eq!(r.track_ids, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn identical_frame_is_fully_tracked() {
        let mut store = MapStore::new(TrackerConfig::default());
        let kps = keypoints(100, 2);
        let a = store.process_frame(&frame_at(0, 0.0), &kps).unwrap();
        let b = store.process_frame(&frame_at(1, 0.04), &kps).unwrap();
        assert_eq!(b.tracked_ratio, 1.0);
        assert_eq!(a.track_ids, b.track_ids);
        assert_eq!(store.n_tracks(), 100);
        assert!(store.track(5).unwrap().observations.len() == 2);
    }

    #[test]
    fn long_gap_retires_everything() {
        let mut store = MapStore::new(TrackerConfig::default());
        let kps = keypoints(50, 3);
        store.process_frame(&frame_at(0, 0.0), &kps).unwrap();
        let r = store.process_frame(&frame_at(1, 3.0), &kps).unwrap();
        assert_eq!(r.tracked_ratio, 0.0);
        assert_eq!(r.matched, 0);
        assert!(r.track_ids.iter().all(|&id| id >= 50));
        // Unreferenced retired tracks are dropped.
        assert_eq!(store.n_tracks(), 50);
    }

    #[test]
    fn spatial_gate_blocks_far_matches() {
        let mut store = MapStore::new(TrackerConfig::default());
        let kps = keypoints(20, 4);
        store.process_frame(&frame_at(0, 0.0), &kps).unwrap();
        let moved: Vec<_> = kps
            .iter()
            .map(|k| KeyPoint {
                x: k.x + 61.0,
                ..k.clone()
            })
            .collect();
        let r = store.process_frame(&frame_at(1, 0.04), &moved).unwrap();
        assert_eq!(r.matched, 0);

        let mut store = MapStore::new(TrackerConfig::default());
        store.process_frame(&frame_at(0, 0.0), &kps).unwrap();
        let near: Vec<_> = kps.iter().map(|k| KeyPoint { x: k.x + 30.0, ..k.clone() }).collect();
        let r = store.process_frame(&frame_at(1, 0.04), &near).unwrap();
        assert_eq!(r.matched, 20);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut store = MapStore::new(TrackerConfig::default());
        store.process_frame(&frame_at(0, 1.0), &[]).unwrap();
        assert!(matches!(store.process_frame(&frame_at(1, 1.0), &[]), Err(Error::OutOfOrder { .. })));
    }

    #[test]
    fn keyframe_policy() {
        let mut store = MapStore::new(TrackerConfig::default());
        assert!(store.should_insert_keyframe(1.0, 0));
        let f = frame_at(0, 0.0);
        let r = store.process_frame(&f, &[]).unwrap();
        store.insert_keyframe_from(&f, &[], &r).unwrap();
        assert!(!store.should_insert_keyframe(0.9, 3));
        assert!(store.should_insert_keyframe(0.9, 15));
        assert!(store.should_insert_keyframe(0.69, 1));
    }

    fn store_with_keyframes(times: &[f64], points: &[Vec<(u64, f64, f64)>]) -> MapStore {
        let mut store = MapStore::new(TrackerConfig::default());
        for (i, (t, pts)) in times.iter().zip(points).enumerate() {
            for &(id, x, y) in pts {
                let obs = Observation {
                    frame_id: i as u64,
                    timestamp_s: *t,
                    x,
                    y,
                };
                store
                    .tracks
                    .entry(id)
                    .and_modify(|tr| tr.observations.push(obs))
                    .or_insert(Track {
                        track_id: id,
                        observations: vec![obs],
                        last_descriptor: Descriptor::default(),
                    });
            }
            store
                .insert_keyframe(KeyFrame {
                    frame_id: i as u64,
                    timestamp_s: *t,
                    width: 640,
                    height: 480,
                    points: pts.iter().map(|&(track_id, x, y)| KeyFramePoint { track_id, x, y }).collect(),
                })
                .unwrap();
        }
        store
    }

    #[test]
    fn window_selects_recent_keyframes() {
        let store = store_with_keyframes(
            &[1.0, 3.0, 7.0, 9.5],
            &[vec![(1, 1.0, 1.0)], vec![(2, 3.0, 3.0)], vec![(3, 7.0, 7.0)], vec![(4, 9.5, 9.5)]],
        );
        let ids: Vec<u64> = store.window_points(10.0, 5.0).iter().map(|p| p.track_id).collect();
        assert_eq!(ids, vec![3, 4]);
    }

    #[test]
    fn window_boundary_inclusive() {
        let store = store_with_keyframes(&[5.0, 8.0], &[vec![(1, 1.0, 1.0)], vec![(2, 2.0, 2.0)]]);
        assert_eq!(store.window_points(10.0, 5.0).len(), 2);
        assert_eq!(store.window_points(8.0, 3.0).len(), 2);
        assert_eq!(store.window_points(7.9, 5.0).len(), 1);
    }

    #[test]
    fn window_keeps_most_recent_observation() {
        let store = store_with_keyframes(&[7.0, 9.5], &[vec![(1, 100.0, 100.0)], vec![(1, 120.0, 110.0)]]);
        let pts = store.window_points(10.0, 5.0);
        assert_eq!(pts.len(), 1);
        assert_eq!((pts[0].x, pts[0].y), (120.0, 110.0));
    }

    #[test]
    fn pruning_drops_old_keyframes_and_orphans() {
        let mut store = MapStore::new(TrackerConfig::default());
        let kps = keypoints(10, 5);
        for i in 0..5u64 {
            let f = frame_at(i, i as f64 * 1.5);
            let r = store.process_frame(&f, &kps[i as usize * 2..i as usize * 2 + 2]).unwrap();
            store.insert_keyframe_from(&f, &kps[i as usize * 2..i as usize * 2 + 2], &r).unwrap();
        }
        store.prune_keyframes_before(3.0);
        assert_eq!(store.keyframes().len(), 3);
        for kf in store.keyframes() {
            for p in &kf.points {
                assert!(store.track(p.track_id).is_some());
            }
        }
    }

    fn write_dump(dir: &Path, text: &str) -> std::path::PathBuf {
        let p = dir.join("kf.jsonl");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn ingest_two_keyframes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_dump(
            dir.path(),
            r#"{"frame_id": 0, "timestamp_s": 0.0, "width": 64, "height": 48, "points": [{"id": 1, "x": 1.0, "y": 2.0}, {"id": 2, "x": 3.0, "y": 4.0}, {"id": null, "x": 5.0, "y": 6.0}]}
{"frame_id": 5, "timestamp_s": 0.2, "width": 64, "height": 48, "points": [{"id": 1, "x": 2.0, "y": 2.0}, {"id": 7, "x": 3.0, "y": 4.5}, {"id": null, "x": 5.0, "y": 6.0}]}
"#,
        );
        let store = ingest_external_keyframes(&p).unwrap();
        assert_eq!(store.keyframes().len(), 2);
        assert!(store.n_tracks() <= 6);
        assert_eq!(store.n_tracks(), 5);
        assert_eq!(store.track(1).unwrap().observations.len(), 2);
        // Fresh ids start above the largest explicit id.
        assert!(store.track(8).is_some() && store.track(9).is_some());
        assert_eq!(store, ingest_external_keyframes(&p).unwrap());
    }

    #[test]
    fn ingest_rejects_out_of_bounds_point() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_dump(
            dir.path(),
            r#"{"frame_id": 0, "timestamp_s": 0.0, "width": 64, "height": 48, "points": []}
{"frame_id": 3, "timestamp_s": 0.1, "width": 64, "height": 48, "points": [{"id": 1, "x": 70.0, "y": 2.0}]}
"#,
        );
        let err = ingest_external_keyframes(&p).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("frame 3"), "{err}");
    }

    #[test]
    fn ingest_rejects_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_dump(dir.path(), "{\"frame_id\": 0}\n");
        assert!(matches!(ingest_external_keyframes(&p), Err(Error::Parse { line: 1, .. })));
        let p = write_dump(
            dir.path(),
            r#"{"frame_id": 0, "timestamp_s": 1.0, "width": 64, "height": 48, "points": []}
{"frame_id": 1, "timestamp_s": 0.5, "width": 64, "height": 48, "points": []}
"#,
        );
        assert!(matches!(ingest_external_keyframes(&p), Err(Error::NonMonotonicTimestamp { line: 2 })));
    }
}
