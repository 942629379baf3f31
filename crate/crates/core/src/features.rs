//! ORB-style keypoints: FAST-9 corners on a scale pyramid, grid-bucketed
//! retention, intensity-centroid orientation and rotated binary descriptors.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::imaging::{build_pyramid, Frame};
use crate::rng::SplitMix64;

/// Bresenham circle of radius 3, clockwise from 12 o'clock (y down).
pub const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Contiguous arc length required by FAST-9.
pub const FAST_ARC: u32 = 9;
pub const ORIENTATION_RADIUS: i32 = 15;
pub const DESCRIPTOR_SEED: u64 = 20160527;
pub const DESCRIPTOR_BITS: usize = 256;
/// Half-width of the sampling pattern's square before rotation.
pub const PATTERN_HALF: i64 = 13;
/// Largest rounded offset after rotation plus the smoothing radius.
pub const DESCRIPTOR_MARGIN: usize = 20;
/// Absolute Hamming gate for a match.
pub const MAX_MATCH_DISTANCE: u32 = 64;
pub const MATCH_RATIO: f64 = 0.8;

const SMOOTH_RADIUS: i64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub max_keypoints: usize,
    pub fast_threshold: u8,
    pub scale_factor: f64,
    pub n_levels: usize,
    pub grid_cells: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            max_keypoints: 2000,
            fast_threshold: 20,
            scale_factor: 1.2,
            n_levels: 8,
            grid_cells: 16,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_keypoints == 0 {
            return Err(Error::Config("max_keypoints must be >= 1".into()));
        }
        if self.fast_threshold == 0 {
            return Err(Error::Config("fast_threshold must be >= 1".into()));
        }
        if self.grid_cells == 0 {
            return Err(Error::Config("grid_cells must be >= 1".into()));
        }
        if !(self.scale_factor > 1.0) {
            return Err(Error::Config("scale_factor must be > 1".into()));
        }
        if self.n_levels == 0 {
            return Err(Error::Config("n_levels must be >= 1".into()));
        }
        Ok(())
    }
}

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    #[inline]
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn complement(&self) -> Descriptor {
        Descriptor(self.0.map(|w| !w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyPoint {
    /// Level-0 coordinates.
    pub x: f64,
    pub y: f64,
    pub level: usize,
    pub response: f64,
    pub orientation_rad: f64,
    pub descriptor: Descriptor,
}

/// A FAST corner in the coordinates of the image it was detected on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: usize,
    pub y: usize,
    pub response: f64,
}

/// A corner lifted to level-0 coordinates, remembering where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub x: f64,
    pub y: f64,
    pub response: f64,
    pub level: usize,
    pub level_x: usize,
    pub level_y: usize,
}

impl Candidate {
    pub fn at(x: f64, y: f64, response: f64) -> Self {
        Candidate {
            x,
            y,
            response,
            level: 0,
            level_x: x as usize,
            level_y: y as usize,
        }
    }
}

#[inline]
fn has_arc(mask: u32) -> bool {
    let m = mask | (mask << 16);
    let mut r = m;
    for i in 1..FAST_ARC {
        r &= m >> i;
    }
    r != 0
}

/// Longest circular run of set bits in a 16-bit mask: (start, length).
fn longest_run(mask: u32) -> (usize, usize) {
    if mask & 0xFFFF == 0xFFFF {
        return (0, 16);
    }
    let mut best = (0, 0);
    for start in 0..16 {
        // runs start right after a clear bit
        if mask >> ((start + 15) % 16) & 1 == 1 || mask >> start & 1 == 0 {
            continue;
        }
        let mut len = 0;
        while len < 16 && mask >> ((start + len) % 16) & 1 == 1 {
            len += 1;
        }
        if len > best.1 {
            best = (start, len);
        }
    }
    best
}

/// FAST-9 segment test with 3x3 non-maximum suppression on the arc response.
pub fn detect_fast(image: &Frame, threshold: u8) -> Vec<Corner> {
    let (w, h) = (image.width, image.height);
    if w < 7 || h < 7 {
        return Vec::new();
    }
    let px = &image.pixels;
    let offsets: [isize; 16] = CIRCLE.map(|(dx, dy)| dy as isize * w as isize + dx as isize);
    let t = threshold as i32;
    let mut response = vec![0f32; w * h];
    let mut hits = Vec::new();

    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let idx = y * w + x;
            let c = px[idx] as i32;
            let hi = c + t;
            let lo = c - t;
            let at = |k: usize| px[(idx as isize + offsets[k]) as usize] as i32;

            // A 9-arc covers at least two of the four compass pixels.
            let compass = [at(0), at(4), at(8), at(12)];
            let nb = compass.iter().filter(|&&v| v > hi).count();
            let nd = compass.iter().filter(|&&v| v < lo).count();
            if nb < 2 && nd < 2 {
                continue;
            }

            let mut bright = 0u32;
            let mut dark = 0u32;
            for k in 0..16 {
                let v = at(k);
                if v > hi {
                    bright |= 1 << k;
                } else if v < lo {
                    dark |= 1 << k;
                }
            }
            let mask = if has_arc(bright) {
                bright
            } else if has_arc(dark) {
                dark
            } else {
                continue;
            };
            let (start, len) = longest_run(mask);
            let score: i32 = (0..len).map(|i| (at((start + i) % 16) - c).abs()).sum();
            response[idx] = score as f32;
            hits.push(idx);
        }
    }

    hits.into_iter()
        .filter(|&idx| {
            let r = response[idx];
            let (x, y) = (idx % w, idx / w);
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    let n = ny * w + nx;
                    if n == idx {
                        continue;
                    }
                    let rn = response[n];
                    if rn > r || (rn == r && n < idx) {
                        return false;
                    }
                }
            }
            true
        })
        .map(|idx| Corner {
            x: idx % w,
            y: idx / w,
            response: response[idx] as f64,
        })
        .collect()
}

fn by_response_then_position(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.response
        .total_cmp(&a.response)
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
}

/// Spreads retained candidates over a `grid_cells x grid_cells` grid, keeping
/// at most `ceil(max_keypoints / cells)` per bucket and `max_keypoints` total.
/// Output is ordered by response (descending), then `(y, x)`.
pub fn retain_by_grid(
    candidates: &[Candidate],
    config: &DetectorConfig,
    dims: (usize, usize),
) -> Vec<Candidate> {
    let cells = config.grid_cells.max(1);
    let n_buckets = cells * cells;
    let quota = config.max_keypoints.div_ceil(n_buckets);
    let (w, h) = (dims.0.max(1) as f64, dims.1.max(1) as f64);

    let mut buckets: Vec<Vec<Candidate>> = vec![Vec::new(); n_buckets];
    for c in candidates {
        let bx = ((c.x * cells as f64 / w).floor().max(0.0) as usize).min(cells - 1);
        let by = ((c.y * cells as f64 / h).floor().max(0.0) as usize).min(cells - 1);
        buckets[by * cells + bx].push(*c);
    }
    let mut kept = Vec::with_capacity(candidates.len().min(config.max_keypoints + n_buckets));
    for mut bucket in buckets {
        if bucket.len() > quota {
            bucket.select_nth_unstable_by(quota, by_response_then_position);
            bucket.truncate(quota);
        }
        kept.extend(bucket);
    }
    kept.sort_by(by_response_then_position);
    kept.truncate(config.max_keypoints);
    kept
}

struct CirclePatch {
    half_widths: Vec<i32>,
}

fn orientation_patch() -> &'static CirclePatch {
    static PATCH: OnceLock<CirclePatch> = OnceLock::new();
    PATCH.get_or_init(|| {
        let r = ORIENTATION_RADIUS;
        let half_widths = (-r..=r)
            .map(|dy| ((r * r - dy * dy) as f64).sqrt().floor() as i32)
            .collect();
        CirclePatch { half_widths }
    })
}

/// Intensity-centroid angle `atan2(m01, m10)` over a radius-15 disc.
/// Returns `None` if the disc does not fit inside the image.
pub fn compute_orientation(image: &Frame, x: usize, y: usize) -> Option<f64> {
    let r = ORIENTATION_RADIUS as usize;
    if x < r || y < r || x + r >= image.width || y + r >= image.height {
        return None;
    }
    let patch = orientation_patch();
    let (mut m10, mut m01) = (0i64, 0i64);
    for (row, &hw) in patch.half_widths.iter().enumerate() {
        let dy = row as i64 - r as i64;
        let yy = (y as i64 + dy) as usize;
        let line = &image.pixels[yy * image.width..(yy + 1) * image.width];
        let mut row_sum = 0i64;
        for dx in -hw..=hw {
            let v = line[(x as i64 + dx as i64) as usize] as i64;
            m10 += dx as i64 * v;
            row_sum += v;
        }
        m01 += dy * row_sum;
    }
    if m10 == 0 && m01 == 0 {
        return Some(0.0);
    }
    Some((m01 as f64).atan2(m10 as f64))
}

/// The fixed sampling pattern: 256 point pairs in `[-13, 13]^2`.
pub fn descriptor_pattern() -> &'static [[(i64, i64); 2]; DESCRIPTOR_BITS] {
    static PATTERN: OnceLock<[[(i64, i64); 2]; DESCRIPTOR_BITS]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = SplitMix64::new(DESCRIPTOR_SEED);
        let mut pairs = [[(0, 0); 2]; DESCRIPTOR_BITS];
        for pair in pairs.iter_mut() {
            loop {
                let mut draw = || {
                    (
                        rng.range_i64(-PATTERN_HALF, PATTERN_HALF),
                        rng.range_i64(-PATTERN_HALF, PATTERN_HALF),
                    )
                };
                let p = draw();
                let q = draw();
                // At distance >= 2 the points stay distinct after rotation and rounding.
                let (dx, dy) = (p.0 - q.0, p.1 - q.1);
                if dx * dx + dy * dy >= 4 {
                    *pair = [p, q];
                    break;
                }
            }
        }
        pairs
    })
}

/// Summed-area table used for the 5x5 box smoothing behind descriptors.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<u32>,
}

impl IntegralImage {
    pub fn new(image: &Frame) -> Self {
        let (w, h) = (image.width, image.height);
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += image.pixels[y * w + x] as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        IntegralImage {
            width: w,
            height: h,
            sums,
        }
    }

    /// Sum of the 5x5 box centred on `(x, y)`. Caller guarantees it fits.
    #[inline]
    pub fn box_sum(&self, x: i64, y: i64) -> u32 {
        let stride = self.width + 1;
        let x0 = (x - SMOOTH_RADIUS) as usize;
        let y0 = (y - SMOOTH_RADIUS) as usize;
        let x1 = (x + SMOOTH_RADIUS + 1) as usize;
        let y1 = (y + SMOOTH_RADIUS + 1) as usize;
        self.sums[y1 * stride + x1] + self.sums[y0 * stride + x0]
            - self.sums[y0 * stride + x1]
            - self.sums[y1 * stride + x0]
    }
}

/// Pattern offsets rotated by `angle` and rounded to the nearest pixel.
pub fn rotated_pattern(angle: f64) -> Vec<[(i64, i64); 2]> {
    let (s, c) = angle.sin_cos();
    let rot = |(px, py): (i64, i64)| {
        let (px, py) = (px as f64, py as f64);
        ((c * px - s * py).round() as i64, (s * px + c * py).round() as i64)
    };
    descriptor_pattern()
        .iter()
        .map(|[p, q]| [rot(*p), rot(*q)])
        .collect()
}

/// Rotated-BRIEF descriptor at level coordinates `(x, y)`. Bit `i` is set iff
/// the smoothed intensity at `p_i` is below that at `q_i`. Returns `None` if
/// the rotated, smoothed pattern leaves the image.
pub fn compute_descriptor(
    integral: &IntegralImage,
    x: usize,
    y: usize,
    orientation_rad: f64,
) -> Option<Descriptor> {
    let m = DESCRIPTOR_MARGIN;
    if x < m || y < m || x + m >= integral.width || y + m >= integral.height {
        return None;
    }
    let (x, y) = (x as i64, y as i64);
    let mut d = Descriptor::default();
    for (i, [p, q]) in rotated_pattern(orientation_rad).iter().enumerate() {
        if integral.box_sum(x + p.0, y + p.1) < integral.box_sum(x + q.0, y + q.1) {
            d.set_bit(i);
        }
    }
    Some(d)
}

/// Detects, retains, orients and describes keypoints on one frame.
pub fn detect_keypoints(frame: &Frame, config: &DetectorConfig) -> Result<Vec<KeyPoint>> {
    config.validate()?;
    let pyramid = build_pyramid(frame, config.scale_factor, config.n_levels)?;
    let mut candidates = Vec::new();
    for (level, image) in pyramid.levels.iter().enumerate() {
        let scale = pyramid.level_scale(level);
        let m = DESCRIPTOR_MARGIN;
        for c in detect_fast(image, config.fast_threshold) {
            if c.x < m || c.y < m || c.x + m >= image.width || c.y + m >= image.height {
                continue;
            }
            candidates.push(Candidate {
                x: c.x as f64 * scale,
                y: c.y as f64 * scale,
                response: c.response,
                level,
                level_x: c.x,
                level_y: c.y,
            });
        }
    }
    let retained = retain_by_grid(&candidates, config, frame.dims());

    let mut integrals: Vec<Option<IntegralImage>> = vec![None; pyramid.n_levels()];
    let mut keypoints = Vec::with_capacity(retained.len());
    for c in retained {
        let image = &pyramid.levels[c.level];
        let Some(orientation) = compute_orientation(image, c.level_x, c.level_y) else {
            continue;
        };
        let integral = integrals[c.level].get_or_insert_with(|| IntegralImage::new(image));
        let Some(descriptor) = compute_descriptor(integral, c.level_x, c.level_y, orientation) else {
            continue;
        };
        keypoints.push(KeyPoint {
            x: c.x,
            y: c.y,
            level: c.level,
            response: c.response,
            orientation_rad: orientation,
            descriptor,
        });
    }
    Ok(keypoints)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: u32,
}

/// Brute-force Hamming matching with absolute gate, ratio test and mutual-best
/// filtering.
pub fn match_descriptors(set_a: &[Descriptor], set_b: &[Descriptor]) -> Vec<Match> {
    let all: Vec<usize> = (0..set_b.len()).collect();
    match_descriptors_gated(set_a, set_b, |_, out| out.extend_from_slice(&all))
}

/// Like [`match_descriptors`] but each `a` is only compared with the `b`
/// indices that `candidates` writes into the buffer.
pub fn match_descriptors_gated<F>(set_a: &[Descriptor], set_b: &[Descriptor], mut candidates: F) -> Vec<Match>
where
    F: FnMut(usize, &mut Vec<usize>),
{
    let mut best_for_b = vec![(u32::MAX, usize::MAX); set_b.len()];
    let mut proposed = Vec::with_capacity(set_a.len());
    let mut buf = Vec::new();
    for (ia, da) in set_a.iter().enumerate() {
        buf.clear();
        candidates(ia, &mut buf);
        let mut first = (u32::MAX, usize::MAX);
        let mut second = u32::MAX;
        for &ib in &buf {
            let d = da.hamming(&set_b[ib]);
            if d < first.0 || (d == first.0 && ib < first.1) {
                if first.1 != usize::MAX {
                    second = second.min(first.0);
                }
                first = (d, ib);
            } else {
                second = second.min(d);
            }
            let slot = &mut best_for_b[ib];
            if d < slot.0 || (d == slot.0 && ia < slot.1) {
                *slot = (d, ia);
            }
        }
        if first.1 == usize::MAX || first.0 > MAX_MATCH_DISTANCE {
            continue;
        }
        if second != u32::MAX && !((first.0 as f64) < MATCH_RATIO * second as f64) {
            continue;
        }
        proposed.push(Match {
            index_a: ia,
            index_b: first.1,
            distance: first.0,
        });
    }
    proposed.retain(|m| best_for_b[m.index_b].1 == m.index_a);
    proposed
}
