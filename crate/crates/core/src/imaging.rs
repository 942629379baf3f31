//! Frame ingestion and scale pyramids.
//!
//! Sequences are a directory of still images (binary PGM or 8-bit PNG) plus a
//! line-delimited manifest giving each frame's id, timestamp and relative path.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted frame edge, in pixels.
pub const MIN_FRAME_DIM: usize = 32;
/// Smallest accepted pyramid level edge, in pixels.
pub const MIN_LEVEL_DIM: usize = 16;

/// An 8-bit grayscale image with its position in the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major intensities, `width * height` long.
    pub pixels: Vec<u8>,
}

impl Frame {
    /// Builds a full-size frame, enforcing the minimum frame size.
    pub fn new(
        frame_id: u64,
        timestamp_s: f64,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        if width < MIN_FRAME_DIM || height < MIN_FRAME_DIM {
            return Err(Error::FrameTooSmall {
                width,
                height,
                min: MIN_FRAME_DIM,
            });
        }
        Self::image(width, height, pixels).map(|mut f| {
            f.frame_id = frame_id;
            f.timestamp_s = timestamp_s;
            f
        })
    }

    /// Builds an image of any size (pyramid levels, test patches). Only the
    /// buffer length is checked.
    pub fn image(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Config(format!(
                "pixel buffer has {} entries, expected {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Frame {
            frame_id: 0,
            timestamp_s: 0.0,
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Frame {
            frame_id: 0,
            timestamp_s: 0.0,
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub frame_id: u64,
    pub timestamp_s: f64,
    /// Path as written in the manifest, relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameManifest {
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl FrameManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn load_frame(&self, index: usize) -> Result<Frame> {
        let entry = &self.entries[index];
        load_frame(entry, &self.resolve(entry))
    }

    /// Writes the manifest as JSON lines. Paths are written as stored.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for entry in &self.entries {
            let line = serde_json::to_string(entry).expect("manifest entry serializes");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a frame manifest.
pub fn load_manifest(path: &Path) -> Result<FrameManifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut entries: Vec<ManifestEntry> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, line_no, format!("malformed manifest line: {e}")))?;
        if !entry.timestamp_s.is_finite() || entry.timestamp_s < 0.0 {
            return Err(Error::parse(path, line_no, "timestamp must be finite and non-negative"));
        }
        if let Some(prev) = entries.last() {
            if entry.frame_id <= prev.frame_id {
                return Err(Error::parse(path, line_no, "frame ids must be strictly increasing"));
            }
            if entry.timestamp_s <= prev.timestamp_s {
                return Err(Error::NonMonotonicTimestamp { line: line_no });
            }
        }
        entries.push(entry);
    }
    Ok(FrameManifest { base_dir, entries })
}

/// Loads the image behind a manifest entry from `path`.
pub fn load_frame(entry: &ManifestEntry, path: &Path) -> Result<Frame> {
    let (width, height, pixels) = read_gray_image(path)?;
    Frame::new(entry.frame_id, entry.timestamp_s, width, height, pixels)
}

/// Decodes a PGM (P5) or PNG file into grayscale `(width, height, pixels)`.
/// Colour PNGs are converted with luma weights 0.299/0.587/0.114.
pub fn read_gray_image(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes)
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{}: not a binary PGM or PNG",
            path.display()
        )))
    }
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::UnsupportedFormat(format!("PGM: {m}"));
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates header and raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing raster separator"));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(bad("truncated raster"));
    }
    Ok((width, height, bytes[pos..pos + n].to_vec()))
}

fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: String| Error::UnsupportedFormat(format!("PNG: {m}"));
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(bad(format!("bit depth {:?} not supported", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let pixels = match info.color_type {
        png::ColorType::Grayscale => (0..h)
            .flat_map(|y| buf[y * stride..y * stride + w].iter().copied())
            .collect(),
        png::ColorType::Rgb => (0..h)
            .flat_map(|y| {
                buf[y * stride..y * stride + 3 * w]
                    .chunks_exact(3)
                    .map(|c| luma(c[0], c[1], c[2]))
            })
            .collect(),
        other => return Err(bad(format!("colour type {other:?} not supported"))),
    };
    Ok((w, h, pixels))
}

pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{} {}\n255\n", frame.width, frame.height)
        .and_then(|_| out.write_all(&frame.pixels))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), frame.width as u32, frame.height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e.to_string()));
    let mut writer = encoder.write_header().map_err(to_err)?;
    writer.write_image_data(&frame.pixels).map_err(to_err)?;
    writer.finish().map_err(to_err)
}

/// Multi-scale representation of one frame. Level 0 is the original.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    pub levels: Vec<Frame>,
    pub scale_factor: f64,
}

impl ImagePyramid {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Ratio between level-0 and level-`k` coordinates.
    pub fn level_scale(&self, k: usize) -> f64 {
        self.scale_factor.powi(k as i32)
    }
}

/// Dimensions of pyramid level `k`: `floor(dim / scale_factor^k)`.
pub fn level_dims(width: usize, height: usize, scale_factor: f64, k: usize) -> (usize, usize) {
    let s = scale_factor.powi(k as i32);
    ((width as f64 / s).floor() as usize, (height as f64 / s).floor() as usize)
}

/// Builds a pyramid by repeated bilinear downsampling at `scale_factor`.
pub fn build_pyramid(frame: &Frame, scale_factor: f64, n_levels: usize) -> Result<ImagePyramid> {
    if !(scale_factor > 1.0) || !scale_factor.is_finite() {
        return Err(Error::Config(format!("scale factor must be > 1, got {scale_factor}")));
    }
    if n_levels == 0 {
        return Err(Error::Config("pyramid needs at least one level".into()));
    }
    let last = n_levels - 1;
    let (lw, lh) = level_dims(frame.width, frame.height, scale_factor, last);
    if lw < MIN_LEVEL_DIM || lh < MIN_LEVEL_DIM {
        return Err(Error::TooManyLevels {
            level: last,
            width: lw,
            height: lh,
            min: MIN_LEVEL_DIM,
        });
    }
    let mut levels = Vec::with_capacity(n_levels);
    levels.push(frame.clone());
    for k in 1..n_levels {
        let (w, h) = level_dims(frame.width, frame.height, scale_factor, k);
        let mut next = downsample(&levels[k - 1], w, h, scale_factor);
        next.frame_id = frame.frame_id;
        next.timestamp_s = frame.timestamp_s;
        levels.push(next);
    }
    Ok(ImagePyramid {
        levels,
        scale_factor,
    })
}

struct Tap {
    i0: usize,
    i1: usize,
    w1: f32,
}

fn taps(dst_len: usize, src_len: usize, ratio: f64) -> Vec<Tap> {
    (0..dst_len)
        .map(|u| {
            let s = ((u as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src_len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            Tap {
                i0,
                i1,
                w1: (s - i0 as f64) as f32,
            }
        })
        .collect()
}

fn downsample(src: &Frame, width: usize, height: usize, ratio: f64) -> Frame {
    let xs = taps(width, src.width, ratio);
    let ys = taps(height, src.height, ratio);
    let mut pixels = Vec::with_capacity(width * height);
    for ty in &ys {
        let r0 = &src.pixels[ty.i0 * src.width..(ty.i0 + 1) * src.width];
        let r1 = &src.pixels[ty.i1 * src.width..(ty.i1 + 1) * src.width];
        let wy1 = ty.w1;
        let wy0 = 1.0 - wy1;
        for tx in &xs {
            let wx1 = tx.w1;
            let wx0 = 1.0 - wx1;
            let top = r0[tx.i0] as f32 * wx0 + r0[tx.i1] as f32 * wx1;
            let bottom = r1[tx.i0] as f32 * wx0 + r1[tx.i1] as f32 * wx1;
            pixels.push((top * wy0 + bottom * wy1).round().clamp(0.0, 255.0) as u8);
        }
    }
    Frame {
        frame_id: src.frame_id,
        timestamp_s: src.timestamp_s,
        width,
        height,
        pixels,
    }
}
