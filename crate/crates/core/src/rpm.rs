//! Region proposals from windowed keypoints.
//!
//! For every K in the configured list the windowed points are clustered with
//! seeded K-means. Each cluster with enough members yields a padded extent box
//! and, optionally, nine anchors (three scales by three aspect ratios) centred
//! on its centroid. Boxes from all K are pooled, clipped to the frame and
//! deduplicated with greedy NMS. A proposal's score is the share of windowed
//! points that fell in its cluster.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tracking::{MapStore, WindowPoint};

/// Smallest edge of a box built from a degenerate (zero-extent) cluster.
pub const MIN_BOX_PX: f64 = 4.0;
/// Floor on the per-side padding of extent boxes when padding is enabled.
pub const MIN_PAD_PX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RpmConfig {
    pub k_list: Vec<usize>,
    pub window_s: f64,
    pub anchors_enabled: bool,
    /// Anchor edge scales as fractions of `min(width, height)`.
    pub anchor_scale_fracs: Vec<f64>,
    /// Anchor aspect ratios, height / width.
    pub anchor_ratios: Vec<f64>,
    pub nms_iou: f64,
    pub min_cluster_points: usize,
    pub bbox_pad_frac: f64,
    pub kmeans_max_iters: usize,
    pub kmeans_restarts: usize,
    pub rng_seed: u64,
}

impl Default for RpmConfig {
    fn default() -> Self {
        RpmConfig {
            k_list: vec![2, 3, 4, 5, 6],
            window_s: 5.0,
            anchors_enabled: true,
            anchor_scale_fracs: vec![0.1, 0.2, 0.4],
            anchor_ratios: vec![0.5, 1.0, 2.0],
            nms_iou: 0.8,
            min_cluster_points: 3,
            bbox_pad_frac: 0.05,
            kmeans_max_iters: 50,
            kmeans_restarts: 5,
            rng_seed: 0,
        }
    }
}

impl RpmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_list.contains(&0) {
            return bad("every K must be >= 1".into());
        }
        if !(self.window_s > 0.0) {
            return bad(format!("window must be positive, got {}", self.window_s));
        }
        if self.anchor_scale_fracs.iter().chain(&self.anchor_ratios).any(|&v| !(v > 0.0)) {
            return bad("anchor scales and ratios must be positive".into());
        }
        if self.anchors_enabled && self.anchor_scale_fracs.len() * self.anchor_ratios.len() != 9 {
            return bad(format!(
                "anchors need 9 scale/ratio combinations, got {}x{}",
                self.anchor_scale_fracs.len(),
                self.anchor_ratios.len()
            ));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return bad(format!("nms_iou must be in (0, 1], got {}", self.nms_iou));
        }
        if !(self.bbox_pad_frac >= 0.0) {
            return bad("bbox_pad_frac must be non-negative".into());
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans_restarts must be >= 1".into());
        }
        Ok(())
    }
}

/// Axis-aligned box covering `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BoundingBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Intersection over union in continuous geometry.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        if self == other && self.area() > 0.0 {
            return 1.0;
        }
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).min(1.0)
    }

    /// Intersection with `[0, width) x [0, height)`, or `None` if empty.
    pub fn clip(&self, width: usize, height: usize) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width as f64);
        let y1 = self.bottom().min(height as f64);
        (x1 > x0 && y1 > y0).then(|| BoundingBox::from_corners(x0, y0, x1, y1))
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }
}

/// Closed bounding extent `[min_x, max_x] x [min_y, max_y]` of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Extent {
    pub fn of<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Option<Extent> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let init = Extent {
            min_x: first[0],
            min_y: first[1],
            max_x: first[0],
            max_y: first[1],
        };
        Some(it.fold(init, |e, p| Extent {
            min_x: e.min_x.min(p[0]),
            min_y: e.min_y.min(p[1]),
            max_x: e.max_x.max(p[0]),
            max_y: e.max_y.max(p[1]),
        }))
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub centroid: [f64; 2],
    pub member_indices: Vec<usize>,
    /// Tight extent of the members.
    pub extent: Extent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    pub sse: f64,
    /// Restart that produced this result.
    pub restart: usize,
}

/// State of one Lloyd run, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub sse: f64,
    /// SSE after every centroid update.
    pub sse_trace: Vec<f64>,
    pub converged: bool,
}

#[inline]
fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn sse_of(points: &[[f64; 2]], assignment: &[usize], centroids: &[[f64; 2]]) -> f64 {
    points.iter().zip(assignment).map(|(p, &c)| dist2(p, &centroids[c])).sum()
}

fn kmeanspp_init(points: &[[f64; 2]], k: usize, rng: &mut SplitMix64) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.below(n as u64) as usize]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            rng.below(n as u64) as usize
        };
        let c = points[pick];
        centroids.push(c);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(dist2(p, &c));
        }
    }
    centroids
}

/// Nearest centroid per point; ties keep the current assignment, otherwise
/// the lowest index wins. Returns whether anything changed.
fn assign_nearest(points: &[[f64; 2]], centroids: &[[f64; 2]], assignment: &mut [usize]) -> bool {
    let mut changed = false;
    for (p, a) in points.iter().zip(assignment.iter_mut()) {
        let current = *a;
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d = dist2(p, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if current < centroids.len() && dist2(p, &centroids[current]) == best_d {
            best = current;
        }
        if best != current {
            *a = best;
            changed = true;
        }
    }
    changed
}

fn means(points: &[[f64; 2]], assignment: &[usize], k: usize) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut sums = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    let centroids = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { [f64::NAN; 2] } else { [s[0] / c as f64, s[1] / c as f64] })
        .collect();
    (centroids, counts)
}

/// Recomputes centroids as member means. An empty cluster takes over the point
/// farthest from its own centroid (among clusters with more than one member).
fn update_centroids(points: &[[f64; 2]], assignment: &mut [usize], k: usize) -> Vec<[f64; 2]> {
    let (mut centroids, mut counts) = means(points, assignment, k);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if counts[a] < 2 {
                continue;
            }
            let d = dist2(p, &centroids[a]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("n >= k leaves a cluster with a spare point");
        counts[assignment[i]] -= 1;
        counts[empty] += 1;
        assignment[i] = empty;
        centroids = means(points, assignment, k).0;
    }
    centroids
}

/// One seeded kmeans++ initialisation followed by Lloyd iterations.
pub fn lloyd_run(points: &[[f64; 2]], k: usize, seed: u64, restart: usize, max_iters: usize) -> Result<LloydRun> {
    if points.len() < k || k == 0 {
        return Err(Error::InsufficientPoints {
            points: points.len(),
            k,
        });
    }
    let mut rng = SplitMix64::for_stream(seed, k as u64, restart as u64);
    let mut centroids = kmeanspp_init(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    assign_nearest(points, &centroids, &mut assignment);

    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        centroids = update_centroids(points, &mut assignment, k);
        trace.push(sse_of(points, &assignment, &centroids));
        if !assign_nearest(points, &centroids, &mut assignment) {
            converged = true;
            break;
        }
    }
    if !converged {
        centroids = update_centroids(points, &mut assignment, k);
        trace.push(sse_of(points, &assignment, &centroids));
    }
    Ok(LloydRun {
        sse: *trace.last().expect("at least one update"),
        assignment,
        centroids,
        sse_trace: trace,
        converged,
    })
}

/// K-means with kmeans++ seeding; keeps the restart with the lowest SSE
/// (earliest restart on ties).
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64, max_iters: usize, restarts: usize) -> Result<Clustering> {
    let mut best: Option<(usize, LloydRun)> = None;
    for r in 0..restarts.max(1) {
        let run = lloyd_run(points, k, seed, r, max_iters)?;
        if best.as_ref().is_none_or(|(_, b)| run.sse < b.sse) {
            best = Some((r, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in run.assignment.iter().enumerate() {
        members[a].push(i);
    }
    let clusters = members
        .into_iter()
        .zip(&run.centroids)
        .map(|(member_indices, &centroid)| {
            let extent = Extent::of(member_indices.iter().map(|&i| &points[i])).expect("clusters are non-empty");
            Cluster {
                centroid,
                member_indices,
                extent,
            }
        })
        .collect();
    Ok(Clustering {
        clusters,
        sse: run.sse,
        restart,
    })
}

/// Padded extent box of a cluster, clipped to the frame.
///
/// Each side grows by `max(pad_frac * max(extent_w, extent_h), 2)` pixels when
/// `pad_frac > 0`. A zero-size extent dimension is instead widened to 4 px
/// centred on the centroid, with no padding.
pub fn cluster_to_box(cluster: &Cluster, frame_dims: (usize, usize), pad_frac: f64) -> Option<BoundingBox> {
    let e = &cluster.extent;
    let (ew, eh) = (e.width(), e.height());
    let unclipped = if ew == 0.0 || eh == 0.0 {
        let span = |lo: f64, hi: f64, c: f64| {
            if hi - lo == 0.0 {
                (c - MIN_BOX_PX / 2.0, c + MIN_BOX_PX / 2.0)
            } else if hi - lo < MIN_BOX_PX {
                let mid = (lo + hi) / 2.0;
                (mid - MIN_BOX_PX / 2.0, mid + MIN_BOX_PX / 2.0)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(e.min_x, e.max_x, cluster.centroid[0]);
        let (y0, y1) = span(e.min_y, e.max_y, cluster.centroid[1]);
        BoundingBox::from_corners(x0, y0, x1, y1)
    } else {
        let pad = if pad_frac > 0.0 {
            (pad_frac * ew.max(eh)).max(MIN_PAD_PX)
        } else {
            0.0
        };
        BoundingBox::from_corners(e.min_x - pad, e.min_y - pad, e.max_x + pad, e.max_y + pad)
    };
    unclipped.clip(frame_dims.0, frame_dims.1)
}

/// Anchor boxes centred on `centroid` before clipping, scale-major.
pub fn anchors_unclipped(centroid: [f64; 2], frame_dims: (usize, usize), scale_fracs: &[f64], ratios: &[f64]) -> Vec<BoundingBox> {
    let base = frame_dims.0.min(frame_dims.1) as f64;
    let mut out = Vec::with_capacity(scale_fracs.len() * ratios.len());
    for &s in scale_fracs {
        let area = (s * base).powi(2);
        for &r in ratios {
            let w = (area / r).sqrt();
            let h = r * w;
            out.push(BoundingBox::new(centroid[0] - w / 2.0, centroid[1] - h / 2.0, w, h));
        }
    }
    out
}

/// Anchors clipped to the frame. Anchors that clip away entirely are skipped,
/// which cannot happen for a centroid inside the frame.
pub fn anchors_at(centroid: [f64; 2], frame_dims: (usize, usize), scale_fracs: &[f64], ratios: &[f64]) -> Vec<BoundingBox> {
    anchors_unclipped(centroid, frame_dims, scale_fracs, ratios)
        .iter()
        .filter_map(|b| b.clip(frame_dims.0, frame_dims.1))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSource {
    ClusterExtent,
    Anchor,
}

impl ProposalSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProposalSource::ClusterExtent => "cluster_extent",
            ProposalSource::Anchor => "anchor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub source: ProposalSource,
    pub k: usize,
    pub cluster_index: usize,
    /// Position in the scale-major anchor list, for anchors.
    pub anchor_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    /// Members of the generating cluster over all windowed points.
    pub score: f64,
    pub provenance: Provenance,
}

/// Greedy NMS. Candidates are visited by score (descending), then area
/// (descending), then input order; one is kept iff its IoU with every kept
/// proposal is below `iou_threshold`.
pub fn nms(proposals: &[Proposal], iou_threshold: f64) -> Vec<Proposal> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&proposals[a], &proposals[b]);
        pb.score
            .total_cmp(&pa.score)
            .then(pb.bbox.area().total_cmp(&pa.bbox.area()))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<Proposal> = Vec::new();
    for i in order {
        let p = &proposals[i];
        if kept.iter().all(|q| p.bbox.iou(&q.bbox) < iou_threshold) {
            kept.push(*p);
        }
    }
    kept
}

/// All clipped candidate boxes (extents and anchors) before NMS, in
/// generation order: K list order, cluster index, extent then anchors.
pub fn candidate_proposals(points: &[[f64; 2]], frame_dims: (usize, usize), config: &RpmConfig) -> Result<Vec<Proposal>> {
    config.validate()?;
    let total = points.len();
    let mut out = Vec::new();
    if total == 0 {
        return Ok(out);
    }
    for &k in &config.k_list {
        if total < k {
            continue;
        }
        let clustering = kmeans(points, k, config.rng_seed, config.kmeans_max_iters, config.kmeans_restarts)?;
        for (ci, cluster) in clustering.clusters.iter().enumerate() {
            if cluster.member_indices.len() < config.min_cluster_points {
                continue;
            }
            let score = cluster.member_indices.len() as f64 / total as f64;
            if let Some(bbox) = cluster_to_box(cluster, frame_dims, config.bbox_pad_frac) {
                out.push(Proposal {
                    bbox,
                    score,
                    provenance: Provenance {
                        source: ProposalSource::ClusterExtent,
                        k,
                        cluster_index: ci,
                        anchor_index: None,
                    },
                });
            }
            if config.anchors_enabled {
                let anchors = anchors_unclipped(cluster.centroid, frame_dims, &config.anchor_scale_fracs, &config.anchor_ratios);
                for (ai, anchor) in anchors.iter().enumerate() {
                    if let Some(bbox) = anchor.clip(frame_dims.0, frame_dims.1) {
                        out.push(Proposal {
                            bbox,
                            score,
                            provenance: Provenance {
                                source: ProposalSource::Anchor,
                                k,
                                cluster_index: ci,
                                anchor_index: Some(ai),
                            },
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// NMS followed by the output order: score descending, then `(x, y)`.
pub fn finalize_proposals(candidates: &[Proposal], config: &RpmConfig) -> Vec<Proposal> {
    let mut kept = nms(candidates, config.nms_iou);
    kept.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bbox.x.total_cmp(&b.bbox.x))
            .then(a.bbox.y.total_cmp(&b.bbox.y))
            .then(a.bbox.w.total_cmp(&b.bbox.w))
            .then(a.bbox.h.total_cmp(&b.bbox.h))
    });
    kept
}

pub fn window_coords(points: &[WindowPoint]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

/// Proposals for time `t_now` from the keyframes in the configured window.
pub fn generate_proposals(store: &MapStore, t_now: f64, frame_dims: (usize, usize), config: &RpmConfig) -> Result<Vec<Proposal>> {
    let points = window_coords(&store.window_points(t_now, config.window_s));
    let candidates = candidate_proposals(&points, frame_dims, config)?;
    Ok(finalize_proposals(&candidates, config))
}

/// One proposal as it appears in the proposal stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamProposal {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub source: ProposalSource,
    pub k: usize,
}

impl StreamProposal {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub frame_id: u64,
    pub proposals: Vec<StreamProposal>,
}

fn fixed4(v: f64) -> String {
    // avoid "-0.0000"
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

/// One proposal-stream line (no trailing newline), reals at 4 decimals.
pub fn format_proposal_record(frame_id: u64, proposals: &[Proposal]) -> String {
    let mut line = format!("{{\"frame_id\": {frame_id}, \"proposals\": [");
    for (i, p) in proposals.iter().enumerate() {
        if i > 0 {
            line.push_str(", ");
        }
        let _ = write!(
            line,
            "{{\"x\": {}, \"y\": {}, \"w\": {}, \"h\": {}, \"score\": {}, \"source\": \"{}\", \"k\": {}}}",
            fixed4(p.bbox.x),
            fixed4(p.bbox.y),
            fixed4(p.bbox.w),
            fixed4(p.bbox.h),
            fixed4(p.score),
            p.provenance.source.as_str(),
            p.provenance.k
        );
    }
    line.push_str("]}");
    line
}

pub fn write_proposal_record<W: Write>(out: &mut W, frame_id: u64, proposals: &[Proposal]) -> std::io::Result<()> {
    writeln!(out, "{}", format_proposal_record(frame_id, proposals))
}

pub fn read_proposal_stream(path: &Path) -> Result<Vec<ProposalRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProposalRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, i + 1, format!("malformed proposal record: {e}")))?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<[f64; 2]> {
        v.iter().map(|&(x, y)| [x, y]).collect()
    }

    #[test]
    fn two_pairs_k2() {
        let p = pts(&[(0.0, 0.0), (0.0, 1.0), (10.0, 0.0), (10.0, 1.0)]);
        let c = kmeans(&p, 2, 1, 50, 5).unwrap();
        assert!((c.sse - 1.0).abs() < 1e-12);
        let mut cents: Vec<[f64; 2]> = c.clusters.iter().map(|c| c.centroid).collect();
        cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cents, vec![[0.0, 0.5], [10.0, 0.5]]);
        let mut groups: Vec<Vec<usize>> = c.clusters.iter().map(|c| c.member_indices.clone()).collect();
        groups.sort();
        assert_eq!(groups, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn k_equals_n_gives_zero_sse() {
        let p = pts(&[(1.0, 2.0), (5.0, 5.0), (9.0, 1.0), (3.0, 7.0)]);
        let c = kmeans(&p, 4, 3, 50, 5).unwrap();
        assert_eq!(c.sse, 0.0);
        assert!(c.clusters.iter().all(|c| c.member_indices.len() == 1));
    }

    #[test]
    fn identical_points_repair_empty_cluster() {
        let p = vec![[4.0, 4.0]; 6];
        let c = kmeans(&p, 2, 9, 50, 5).unwrap();
        assert_eq!(c.sse, 0.0);
        assert_eq!(c.clusters.len(), 2);
        assert!(c.clusters.iter().all(|c| !c.member_indices.is_empty()));
    }

    #[test]
    fn insufficient_points() {
        let err = kmeans(&pts(&[(0.0, 0.0)]), 2, 0, 10, 1).unwrap_err();
        assert!(err.to_string().starts_with("insufficient points for K"));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let mut rng = SplitMix64::new(5);
        let p: Vec<[f64; 2]> = (0..200).map(|_| [rng.range_f64(0.0, 640.0), rng.range_f64(0.0, 480.0)]).collect();
        for k in 2..=6 {
            assert_eq!(kmeans(&p, k, 77, 50, 5).unwrap(), kmeans(&p, k, 77, 50, 5).unwrap());
        }
    }

    #[test]
    fn sse_trace_non_increasing() {
        let mut rng = SplitMix64::new(6);
        for trial in 0..50 {
            let p: Vec<[f64; 2]> = (0..60).map(|_| [rng.range_f64(0.0, 100.0), rng.range_f64(0.0, 100.0)]).collect();
            for k in 2..=6 {
                let run = lloyd_run(&p, k, trial, 0, 50).unwrap();
                for w in run.sse_trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-9, "{:?}", run.sse_trace);
                }
            }
        }
    }

    fn cluster_of(p: &[[f64; 2]]) -> Cluster {
        let n = p.len() as f64;
        Cluster {
            centroid: [p.iter().map(|q| q[0]).sum::<f64>() / n, p.iter().map(|q| q[1]).sum::<f64>() / n],
            member_indices: (0..p.len()).collect(),
            extent: Extent::of(p).unwrap(),
        }
    }

    #[test]
    fn tight_box_without_padding() {
        let c = cluster_of(&pts(&[(10.0, 10.0), (30.0, 10.0), (30.0, 40.0)]));
        assert_eq!(cluster_to_box(&c, (640, 480), 0.0), Some(BoundingBox::new(10.0, 10.0, 20.0, 30.0)));
    }

    #[test]
    fn padding_floor() {
        // extent 20x30, pad 0.05 -> max(1.5, 2) = 2 per side
        let c = cluster_of(&pts(&[(100.0, 100.0), (120.0, 130.0)]));
        assert_eq!(cluster_to_box(&c, (640, 480), 0.05), Some(BoundingBox::new(98.0, 98.0, 24.0, 34.0)));
        // extent 100x60, pad 0.05 -> 5 per side
        let c = cluster_of(&pts(&[(100.0, 100.0), (200.0, 160.0)]));
        assert_eq!(cluster_to_box(&c, (640, 480), 0.05), Some(BoundingBox::new(95.0, 95.0, 110.0, 70.0)));
    }

    #[test]
    fn single_point_cluster() {
        let c = cluster_of(&pts(&[(50.0, 60.0)]));
        assert_eq!(cluster_to_box(&c, (640, 480), 0.05), Some(BoundingBox::new(48.0, 58.0, 4.0, 4.0)));
        let c = cluster_of(&pts(&[(1.0, 1.0)]));
        assert_eq!(cluster_to_box(&c, (640, 480), 0.05), Some(BoundingBox::new(0.0, 0.0, 3.0, 3.0)));
    }

    #[test]
    fn collinear_cluster_gets_minimum_height() {
        let c = cluster_of(&pts(&[(10.0, 20.0), (30.0, 20.0), (50.0, 20.0)]));
        assert_eq!(cluster_to_box(&c, (640, 480), 0.05), Some(BoundingBox::new(10.0, 18.0, 40.0, 4.0)));
    }

    #[test]
    fn anchor_geometry() {
        let a = anchors_at([320.0, 240.0], (640, 480), &[0.2], &[1.0]);
        assert_eq!(a, vec![BoundingBox::new(272.0, 192.0, 96.0, 96.0)]);

        let all = anchors_unclipped([320.0, 240.0], (640, 480), &[0.1, 0.2, 0.4], &[0.5, 1.0, 2.0]);
        assert_eq!(all.len(), 9);
        for s in 0..3 {
            let (half, one, two) = (all[3 * s], all[3 * s + 1], all[3 * s + 2]);
            assert!((one.w - one.h).abs() < 1e-9);
            assert!((half.w - two.h).abs() < 1e-9 && (half.h - two.w).abs() < 1e-9);
            assert!((half.area() - one.area()).abs() < 1e-6);
        }
    }

    #[test]
    fn anchors_clip_near_corner() {
        let a = anchors_at([5.0, 5.0], (640, 480), &[0.1, 0.2, 0.4], &[0.5, 1.0, 2.0]);
        assert_eq!(a.len(), 9);
        for b in a {
            assert!(b.x >= 0.0 && b.y >= 0.0 && b.w > 0.0 && b.h > 0.0);
            assert!(b.right() <= 640.0 && b.bottom() <= 480.0);
        }
    }

    fn prop(b: BoundingBox, score: f64) -> Proposal {
        Proposal {
            bbox: b,
            score,
            provenance: Provenance {
                source: ProposalSource::ClusterExtent,
                k: 2,
                cluster_index: 0,
                anchor_index: None,
            },
        }
    }

    #[test]
    fn nms_cases() {
        let b = BoundingBox::new(10.0, 10.0, 20.0, 20.0);
        let kept = nms(&[prop(b, 0.4), prop(b, 0.6)], 0.8);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.6);

        let disjoint: Vec<_> = (0..5).map(|i| prop(BoundingBox::new(i as f64 * 30.0, 0.0, 20.0, 20.0), 0.5)).collect();
        assert_eq!(nms(&disjoint, 0.5).len(), 5);

        let near = BoundingBox::new(10.5, 10.0, 20.0, 20.0);
        assert_eq!(nms(&[prop(b, 0.5), prop(b, 0.5), prop(near, 0.5)], 1.0).len(), 2);
    }

    #[test]
    fn nms_prefers_larger_area_on_score_tie() {
        let small = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let big = BoundingBox::new(0.0, 0.0, 10.0, 11.0);
        let kept = nms(&[prop(small, 0.5), prop(big, 0.5)], 0.5);
        assert_eq!(kept, vec![prop(big, 0.5)]);
    }

    fn blob(cx: f64, cy: f64, n: usize, spread: f64, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|_| [cx + rng.range_f64(-spread, spread), cy + rng.range_f64(-spread, spread)])
            .collect()
    }

    #[test]
    fn candidate_count_without_drops() {
        let mut p = blob(150.0, 150.0, 300, 60.0, 1);
        p.extend(blob(450.0, 300.0, 300, 60.0, 2));
        let config = RpmConfig::default();
        let cands = candidate_proposals(&p, (640, 480), &config).unwrap();
        assert_eq!(cands.len(), 200);
        let extents = cands.iter().filter(|c| c.provenance.source == ProposalSource::ClusterExtent).count();
        assert_eq!(extents, 20);
    }

    #[test]
    fn two_blobs_are_recovered() {
        let mut p = blob(150.0, 150.0, 200, 40.0, 3);
        p.extend(blob(450.0, 330.0, 200, 40.0, 4));
        let truth = [
            BoundingBox::from_corners(110.0, 110.0, 190.0, 190.0),
            BoundingBox::from_corners(410.0, 290.0, 490.0, 370.0),
        ];
        for k in 2..=6 {
            let config = RpmConfig {
                k_list: vec![k],
                ..RpmConfig::default()
            };
            let out = finalize_proposals(&candidate_proposals(&p, (640, 480), &config).unwrap(), &config);
            for t in &truth {
                assert!(out.iter().any(|q| q.bbox.iou(t) >= 0.5), "K={k} misses {t:?}");
            }
        }
    }

    #[test]
    fn empty_points_give_no_proposals() {
        let store = MapStore::default();
        assert!(generate_proposals(&store, 10.0, (640, 480), &RpmConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        let mut c = RpmConfig::default();
        assert!(c.validate().is_ok());
        c.anchor_ratios = vec![1.0];
        assert!(c.validate().is_err());
        c.anchors_enabled = false;
        assert!(c.validate().is_ok());
        c.nms_iou = 0.0;
        assert!(c.validate().is_err());
        let c = RpmConfig {
            k_list: vec![0],
            ..RpmConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn record_format() {
        let p = Proposal {
            bbox: BoundingBox::new(1.0, 2.5, 3.0, 4.123456),
            score: 0.5,
            provenance: Provenance {
                source: ProposalSource::Anchor,
                k: 3,
                cluster_index: 1,
                anchor_index: Some(4),
            },
        };
        assert_eq!(
            format_proposal_record(7, &[p]),
            r#"{"frame_id": 7, "proposals": [{"x": 1.0000, "y": 2.5000, "w": 3.0000, "h": 4.1235, "score": 0.5000, "source": "anchor", "k": 3}]}"#
        );
        assert_eq!(format_proposal_record(0, &[]), r#"{"frame_id": 0, "proposals": []}"#);
        let parsed: ProposalRecord = serde_json::from_str(&format_proposal_record(7, &[p])).unwrap();
        assert_eq!(parsed.proposals[0].source, ProposalSource::Anchor);
        assert_eq!(parsed.proposals[0].h, 4.1235);
    }
}
