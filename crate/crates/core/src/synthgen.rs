//! Deterministic synthetic sequences with exact ground truth.
//!
//! Each "tool" is a rectangle carrying a fixed high-contrast noise texture that
//! translates rigidly with it, moving at constant velocity and reflecting off
//! the frame borders. The background is a static low-amplitude noise pattern.
//! Every byte written is a function of the configuration alone.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evalkit::coco::{AnnotationSet, CocoAnnotation, CocoCategory, CocoDocument, CocoImage};
use crate::evalkit::write_coco;
use crate::imaging::{write_pgm, Frame, FrameManifest, ManifestEntry, MIN_FRAME_DIM};
use crate::rng::SplitMix64;

/// Tool classes of the m2cai16-tool-locations annotation set.
pub const TOOL_CATEGORIES: [&str; 7] = ["Grasper", "Bipolar", "Hook", "Scissors", "Clipper", "Irrigator", "SpecimenBag"];
pub const MAX_TOOLS: usize = 4;
const PLACEMENT_ATTEMPTS: usize = 2000;
const BACKGROUND_MEAN: f64 = 110.0;
const TOOL_MEAN: f64 = 128.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub n_tools: usize,
    /// Inclusive range of tool edge lengths, pixels.
    pub tool_size_range: (usize, usize),
    /// Speed range, pixels per frame.
    pub speed_range: (f64, f64),
    pub texture_noise_sigma: f64,
    pub background_sigma: f64,
    pub fps: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 640,
            height: 480,
            n_frames: 300,
            n_tools: 2,
            tool_size_range: (70, 120),
            speed_range: (0.5, 1.5),
            texture_noise_sigma: 60.0,
            background_sigma: 3.0,
            fps: 25.0,
            rng_seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width < MIN_FRAME_DIM || self.height < MIN_FRAME_DIM {
            return bad(format!("frame must be at least {MIN_FRAME_DIM}x{MIN_FRAME_DIM}"));
        }
        if self.n_tools > MAX_TOOLS {
            return bad(format!("n_tools must be 0..={MAX_TOOLS}, got {}", self.n_tools));
        }
        let (lo, hi) = self.tool_size_range;
        if lo == 0 || lo > hi {
            return bad(format!("invalid tool size range {lo}..={hi}"));
        }
        if hi >= self.width || hi >= self.height {
            return bad(format!("tool size {hi} does not fit a {}x{} frame", self.width, self.height));
        }
        let (slo, shi) = self.speed_range;
        if !(slo >= 0.0 && slo <= shi && shi.is_finite()) {
            return bad(format!("invalid speed range {slo}..{shi}"));
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        if !(self.background_sigma >= 0.0 && self.background_sigma < self.texture_noise_sigma) {
            return bad("background_sigma must be below texture_noise_sigma".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Tool {
    w: usize,
    h: usize,
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
    texture: Vec<u8>,
}

/// Position along one axis with reflection at `0` and `span`.
fn reflect(p: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * span;
    let m = p.rem_euclid(period);
    if m <= span {
        m
    } else {
        period - m
    }
}

impl Tool {
    /// Integer top-left corner at frame index `i`.
    fn position(&self, i: usize, width: usize, height: usize) -> (usize, usize) {
        let x = reflect(self.x0 + self.vx * i as f64, (width - self.w) as f64).round() as usize;
        let y = reflect(self.y0 + self.vy * i as f64, (height - self.h) as f64).round() as usize;
        (x.min(width - self.w), y.min(height - self.h))
    }

    fn rect(&self, i: usize, width: usize, height: usize) -> [usize; 4] {
        let (x, y) = self.position(i, width, height);
        [x, y, self.w, self.h]
    }
}

fn overlaps(a: &[usize; 4], b: &[usize; 4]) -> bool {
    a[0] < b[0] + b[2] && b[0] < a[0] + a[2] && a[1] < b[1] + b[3] && b[1] < a[1] + a[3]
}

fn noise_pixel(rng: &mut SplitMix64, mean: f64, sigma: f64) -> u8 {
    (mean + sigma * rng.normal()).round().clamp(0.0, 255.0) as u8
}

/// A generated sequence held in memory.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    /// Per frame, per tool: `[x, y, w, h]`.
    pub boxes: Vec<Vec<[usize; 4]>>,
    /// Category id of each tool.
    pub categories: Vec<u64>,
}

impl Sequence {
    pub fn annotation_set(&self) -> AnnotationSet {
        let mut doc = CocoDocument {
            images: Vec::with_capacity(self.frames.len()),
            annotations: Vec::new(),
            categories: TOOL_CATEGORIES
                .iter()
                .enumerate()
                .map(|(i, name)| CocoCategory {
                    id: i as u64 + 1,
                    name: (*name).into(),
                })
                .collect(),
        };
        for (frame, boxes) in self.frames.iter().zip(&self.boxes) {
            let image_id = frame.frame_id + 1;
            doc.images.push(CocoImage {
                id: image_id,
                frame_id: Some(frame.frame_id),
                width: frame.width,
                height: frame.height,
                file_name: Some(frame_file_name(frame.frame_id)),
            });
            for (b, &category_id) in boxes.iter().zip(&self.categories) {
                doc.annotations.push(CocoAnnotation {
                    id: doc.annotations.len() as u64 + 1,
                    image_id,
                    category_id,
                    bbox: [b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64],
                });
            }
        }
        AnnotationSet::from_document(doc).expect("generated annotations are valid")
    }
}

pub fn frame_file_name(frame_id: u64) -> String {
    format!("frame_{frame_id:06}.pgm")
}

fn place_tools(config: &SynthConfig, rng: &mut SplitMix64) -> Vec<Tool> {
    let (w, h) = (config.width, config.height);
    let mut tools: Vec<Tool> = Vec::with_capacity(config.n_tools);
    for _ in 0..config.n_tools {
        let mut fallback = None;
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let (lo, hi) = config.tool_size_range;
            let tw = lo + rng.below((hi - lo + 1) as u64) as usize;
            let th = lo + rng.below((hi - lo + 1) as u64) as usize;
            let x0 = rng.range_f64(0.0, (w - tw) as f64);
            let y0 = rng.range_f64(0.0, (h - th) as f64);
            let speed = rng.range_f64(config.speed_range.0, config.speed_range.1);
            let angle = rng.range_f64(0.0, std::f64::consts::TAU);
            let candidate = Tool {
                w: tw,
                h: th,
                x0,
                y0,
                vx: speed * angle.cos(),
                vy: speed * angle.sin(),
                texture: Vec::new(),
            };
            let disjoint = (0..config.n_frames).all(|i| {
                let r = candidate.rect(i, w, h);
                tools.iter().all(|t| !overlaps(&r, &t.rect(i, w, h)))
            });
            if disjoint {
                placed = Some(candidate);
                break;
            }
            fallback.get_or_insert(candidate);
        }
        // Crowded scenes fall back to overlapping trajectories.
        tools.push(placed.or(fallback).expect("at least one attempt"));
    }
    for tool in &mut tools {
        tool.texture = (0..tool.w * tool.h)
            .map(|_| noise_pixel(rng, TOOL_MEAN, config.texture_noise_sigma))
            .collect();
    }
    tools
}

/// Renders the whole sequence in memory.
pub fn render_sequence(config: &SynthConfig) -> Result<Sequence> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut rng = SplitMix64::new(config.rng_seed);
    let tools = place_tools(config, &mut rng);
    let background: Vec<u8> = (0..w * h)
        .map(|_| noise_pixel(&mut rng, BACKGROUND_MEAN, config.background_sigma))
        .collect();

    let mut frames = Vec::with_capacity(config.n_frames);
    let mut boxes = Vec::with_capacity(config.n_frames);
    for i in 0..config.n_frames {
        let mut pixels = background.clone();
        let mut frame_boxes = Vec::with_capacity(tools.len());
        for tool in &tools {
            let r = tool.rect(i, w, h);
            for ty in 0..tool.h {
                let dst = (r[1] + ty) * w + r[0];
                pixels[dst..dst + tool.w].copy_from_slice(&tool.texture[ty * tool.w..(ty + 1) * tool.w]);
            }
            frame_boxes.push(r);
        }
        frames.push(Frame::new(i as u64, i as f64 / config.fps, w, h, pixels)?);
        boxes.push(frame_boxes);
    }
    let categories = (0..tools.len()).map(|i| (i % TOOL_CATEGORIES.len()) as u64 + 1).collect();
    Ok(Sequence {
        frames,
        boxes,
        categories,
    })
}

/// Paths written by [`generate_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFiles {
    pub manifest: PathBuf,
    pub annotations: PathBuf,
    pub frames_dir: PathBuf,
}

/// Writes `frames/*.pgm`, `manifest.jsonl` and `annotations.json` under
/// `out_dir`.
pub fn generate_sequence(config: &SynthConfig, out_dir: &Path) -> Result<(FrameManifest, AnnotationSet, SequenceFiles)> {
    let seq = render_sequence(config)?;
    let frames_dir = out_dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut entries = Vec::with_capacity(seq.frames.len());
    for frame in &seq.frames {
        let name = frame_file_name(frame.frame_id);
        write_pgm(&frames_dir.join(&name), frame)?;
        entries.push(ManifestEntry {
            frame_id: frame.frame_id,
            timestamp_s: frame.timestamp_s,
            path: Path::new("frames").join(name),
        });
    }
    let manifest = FrameManifest {
        base_dir: out_dir.to_path_buf(),
        entries,
    };
    let files = SequenceFiles {
        manifest: out_dir.join("manifest.jsonl"),
        annotations: out_dir.join("annotations.json"),
        frames_dir,
    };
    manifest.write(&files.manifest)?;
    let annotations = seq.annotation_set();
    write_coco(&files.annotations, &annotations)?;
    Ok((manifest, annotations, files))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::detect_fast;

    fn small(n_tools: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_frames: 40,
            n_tools,
            rng_seed: seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn reflect_stays_in_span() {
        for i in -500..500 {
            let p = reflect(i as f64 * 0.77, 100.0);
            assert!((0.0..=100.0).contains(&p));
        }
        assert_eq!(reflect(130.0, 100.0), 70.0);
        assert_eq!(reflect(-30.0, 100.0), 30.0);
    }

    #[test]
    fn no_tools_is_pure_background() {
        let seq = render_sequence(&small(0, 1)).unwrap();
        assert!(seq.boxes.iter().all(Vec::is_empty));
        assert!(seq.frames.windows(2).all(|w| w[0].pixels == w[1].pixels));
        assert!(seq.annotation_set().annotations.is_empty());
    }

    #[test]
    fn static_tool_has_fixed_box() {
        let config = SynthConfig {
            n_tools: 1,
            speed_range: (0.0, 0.0),
            ..small(1, 5)
        };
        let seq = render_sequence(&config).unwrap();
        assert!(seq.boxes.iter().all(|b| b == &seq.boxes[0]));
    }

    #[test]
    fn boxes_inside_frame_and_disjoint() {
        for seed in 0..5 {
            let seq = render_sequence(&SynthConfig {
                rng_seed: seed,
                ..SynthConfig::default()
            })
            .unwrap();
            for b in &seq.boxes {
                for r in b {
                    assert!(r[0] + r[2] <= 640 && r[1] + r[3] <= 480);
                }
                assert!(!overlaps(&b[0], &b[1]));
            }
        }
    }

    #[test]
    fn texture_moves_rigidly() {
        let seq = render_sequence(&small(1, 9)).unwrap();
        let (a, b) = (&seq.frames[0], &seq.frames[30]);
        let (ra, rb) = (seq.boxes[0][0], seq.boxes[30][0]);
        for ty in 0..ra[3] {
            for tx in 0..ra[2] {
                assert_eq!(a.get(ra[0] + tx, ra[1] + ty), b.get(rb[0] + tx, rb[1] + ty));
            }
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let c = SynthConfig {
            tool_size_range: (100, 500),
            ..SynthConfig::default()
        };
        assert!(render_sequence(&c).is_err());
        let c = SynthConfig {
            n_tools: 9,
            ..SynthConfig::default()
        };
        assert!(render_sequence(&c).is_err());
    }

    #[test]
    fn corners_concentrate_on_tools() {
        let seq = render_sequence(&small(2, 42)).unwrap();
        for i in [0, 20, 39] {
            let frame = &seq.frames[i];
            let corners = detect_fast(frame, 20);
            let inside = corners
                .iter()
                .filter(|c| {
                    seq.boxes[i]
                        .iter()
                        .any(|r| c.x >= r[0] && c.x < r[0] + r[2] && c.y >= r[1] && c.y < r[1] + r[3])
                })
                .count();
            let outside = corners.len() - inside;
            assert!(inside >= 5 * outside.max(1), "inside {inside}, outside {outside}");
        }
    }
}
