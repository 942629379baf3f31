//! Per-stage latency and throughput of the full pipeline.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::DetectorConfig;
use crate::imaging::{Frame, FrameManifest};
use crate::pipeline::{Pipeline, StageTimings};
use crate::rpm::RpmConfig;
use crate::tracking::TrackerConfig;

/// Runtime figures the benchmark is compared against.
pub const REFERENCE_TOTAL_MS: f64 = 20.0;
pub const REFERENCE_FPS: f64 = 50.0;
pub const STAGES: [&str; 5] = ["detect", "track", "cluster", "nms", "total"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub stage: String,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
    pub threads_used: usize,
}

impl Environment {
    pub fn capture() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        });
        Environment {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model,
            threads_used: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub stages: Vec<StageStats>,
    /// Frames included in the statistics (warm-up excluded).
    pub frames: usize,
    pub warmup_frames: usize,
    pub wall_clock_s: f64,
    pub fps: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub mean_keypoints: f64,
    pub mean_proposals: f64,
    pub environment: Environment,
}

impl TimingReport {
    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn reference_line() -> String {
        format!("paper target: {REFERENCE_TOTAL_MS:.0} ms / {REFERENCE_FPS:.0} FPS")
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", Self::reference_line());
        let _ = writeln!(
            s,
            "frames: {} (after {} warm-up) at {}x{}, single-threaded, frames preloaded",
            self.frames, self.warmup_frames, self.frame_width, self.frame_height
        );
        let env = &self.environment;
        let _ = writeln!(
            s,
            "host: {} {} ({} logical CPUs){}",
            env.os,
            env.arch,
            env.logical_cpus,
            env.cpu_model.as_deref().map(|m| format!(", {m}")).unwrap_or_default()
        );
        let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>10}", "stage", "mean ms", "median ms", "p95 ms");
        for st in &self.stages {
            let _ = writeln!(s, "{:<8} {:>10.3} {:>10.3} {:>10.3}", st.stage, st.mean_ms, st.median_ms, st.p95_ms);
        }
        let _ = writeln!(s, "FPS: {:.1}  (keypoints/frame {:.0}, proposals/frame {:.1})", self.fps, self.mean_keypoints, self.mean_proposals);
        s
    }

    /// JSON record. With `timing_values == false` every measured duration is
    /// replaced by `null` so that the record is reproducible.
    pub fn record(&self, timing_values: bool) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["reference"] = serde_json::json!({"total_ms": REFERENCE_TOTAL_MS, "fps": REFERENCE_FPS});
        if !timing_values {
            v["wall_clock_s"] = serde_json::Value::Null;
            v["fps"] = serde_json::Value::Null;
            v["environment"] = serde_json::Value::Null;
            if let Some(stages) = v["stages"].as_array_mut() {
                for st in stages {
                    for key in ["mean_ms", "median_ms", "p95_ms"] {
                        st[key] = serde_json::Value::Null;
                    }
                }
            }
        }
        v.to_string()
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn stage_stats(name: &str, samples_ms: &[f64]) -> StageStats {
    let mut sorted = samples_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    StageStats {
        stage: name.into(),
        mean_ms: sorted.iter().sum::<f64>() / n as f64,
        median_ms: median,
        p95_ms: percentile(&sorted, 95.0),
    }
}

/// Times `frames` through a fresh pipeline, skipping the first
/// `warmup_frames` in the statistics.
pub fn benchmark_frames(frames: &[Frame], detector: &DetectorConfig, rpm: &RpmConfig, warmup_frames: usize) -> Result<TimingReport> {
    if frames.len() < warmup_frames + 10 {
        return Err(Error::Config(format!(
            "benchmark needs at least {} frames (warm-up {} + 10), got {}",
            warmup_frames + 10,
            warmup_frames,
            frames.len()
        )));
    }
    let mut pipeline = Pipeline::new(detector.clone(), rpm.clone(), TrackerConfig::default())?;
    for frame in &frames[..warmup_frames] {
        pipeline.process(frame)?;
    }
    let mut timings: Vec<StageTimings> = Vec::with_capacity(frames.len() - warmup_frames);
    let (mut kps, mut props) = (0usize, 0usize);
    let start = Instant::now();
    for frame in &frames[warmup_frames..] {
        let out = pipeline.process(frame)?;
        kps += out.n_keypoints;
        props += out.proposals.len();
        timings.push(out.timings);
    }
    let wall = start.elapsed().as_secs_f64();
    let n = timings.len();

    let column = |f: fn(&StageTimings) -> Duration| timings.iter().map(|t| ms(f(t))).collect::<Vec<_>>();
    let stages = vec![
        stage_stats("detect", &column(|t| t.detect)),
        stage_stats("track", &column(|t| t.track)),
        stage_stats("cluster", &column(|t| t.cluster)),
        stage_stats("nms", &column(|t| t.nms)),
        stage_stats("total", &column(|t| t.total())),
    ];
    Ok(TimingReport {
        stages,
        frames: n,
        warmup_frames,
        wall_clock_s: wall,
        fps: n as f64 / wall,
        frame_width: frames[0].width,
        frame_height: frames[0].height,
        mean_keypoints: kps as f64 / n as f64,
        mean_proposals: props as f64 / n as f64,
        environment: Environment::capture(),
    })
}

/// Loads every frame of `manifest` up front, then benchmarks them.
pub fn benchmark_pipeline(manifest: &FrameManifest, detector: &DetectorConfig, rpm: &RpmConfig, warmup_frames: usize) -> Result<TimingReport> {
    if manifest.len() < warmup_frames + 10 {
        return Err(Error::Config(format!(
            "benchmark needs at least {} frames (warm-up {} + 10), manifest has {}",
            warmup_frames + 10,
            warmup_frames,
            manifest.len()
        )));
    }
    let frames = (0..manifest.len()).map(|i| manifest.load_frame(i)).collect::<Result<Vec<_>>>()?;
    benchmark_frames(&frames, detector, rpm, warmup_frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_on_known_samples() {
        let s = stage_stats("x", &[4.0, 1.0, 3.0, 2.0]);
        assert_eq!((s.mean_ms, s.median_ms, s.p95_ms), (2.5, 2.5, 4.0));
        let samples: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = stage_stats("y", &samples);
        assert_eq!(s.p95_ms, 95.0);
        assert_eq!(s.median_ms, 50.5);
    }

    #[test]
    fn too_few_frames() {
        let frames = vec![Frame::filled(64, 64, 0); 12];
        let err = benchmark_frames(&frames, &DetectorConfig::default(), &RpmConfig::default(), 5).unwrap_err();
        assert!(err.to_string().contains("at least 15"));
    }

    #[test]
    fn reference_line_text() {
        assert_eq!(TimingReport::reference_line(), "paper target: 20 ms / 50 FPS");
    }
}
