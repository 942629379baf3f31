//! Class-agnostic proposal recall and average best overlap.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use super::coco::AnnotationSet;
use crate::rpm::BoundingBox;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRecall {
    pub category_id: u64,
    pub name: String,
    pub n_ground_truth: usize,
    /// Parallel to [`RecallReport::thresholds`].
    pub recall: Vec<f64>,
    pub average_best_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
    pub average_best_overlap: f64,
    pub n_ground_truth: usize,
    pub n_proposals: usize,
    pub per_category: Vec<CategoryRecall>,
}

impl RecallReport {
    pub fn recall_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds.iter().position(|&t| t == threshold).map(|i| self.recall[i])
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ground truth: {}   proposals: {}", self.n_ground_truth, self.n_proposals);
        let _ = writeln!(s, "{:<14} {:>8}", "IoU threshold", "recall");
        for (t, r) in self.thresholds.iter().zip(&self.recall) {
            let _ = writeln!(s, "{:<14.2} {:>8.4}", t, r);
        }
        let _ = writeln!(s, "{:<14} {:>8.4}", "ABO", self.average_best_overlap);
        if !self.per_category.is_empty() {
            let _ = writeln!(s);
            let _ = write!(s, "{:<16} {:>5}", "category", "n");
            for t in &self.thresholds {
                let _ = write!(s, " {:>8}", format!("R@{t:.2}"));
            }
            let _ = writeln!(s, " {:>8}", "ABO");
            for c in &self.per_category {
                let _ = write!(s, "{:<16} {:>5}", c.name, c.n_ground_truth);
                for r in &c.recall {
                    let _ = write!(s, " {:>8.4}", r);
                }
                let _ = writeln!(s, " {:>8.4}", c.average_best_overlap);
            }
        }
        s
    }

    /// Line-delimited records: one overall line, then one per category.
    pub fn records(&self) -> Vec<String> {
        let rec = |scope: &str, name: Option<&str>, n: usize, recall: &[f64], abo: f64, n_prop: Option<usize>| {
            let recall: BTreeMap<String, f64> = self.thresholds.iter().map(|t| format!("{t}")).zip(recall.iter().copied()).collect();
            let mut v = serde_json::json!({
                "scope": scope,
                "n_ground_truth": n,
                "recall": recall,
                "average_best_overlap": abo,
            });
            if let Some(name) = name {
                v["category"] = name.into();
            }
            if let Some(p) = n_prop {
                v["n_proposals"] = p.into();
            }
            v.to_string()
        };
        let mut out = vec![rec("all", None, self.n_ground_truth, &self.recall, self.average_best_overlap, Some(self.n_proposals))];
        for c in &self.per_category {
            out.push(rec("category", Some(&c.name), c.n_ground_truth, &c.recall, c.average_best_overlap, None));
        }
        out
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// A ground-truth box counts as recalled at `t` iff some proposal in its frame
/// overlaps it with IoU >= t. Proposals may serve several boxes. Frames
/// without ground truth do not affect recall.
pub fn recall_at(proposals: &BTreeMap<u64, Vec<BoundingBox>>, annotations: &AnnotationSet, thresholds: &[f64]) -> RecallReport {
    // (category, best IoU) per ground-truth box
    let mut best: Vec<(u64, f64)> = Vec::with_capacity(annotations.annotations.len());
    for frame_id in annotations.annotated_frames() {
        let boxes = proposals.get(&frame_id).map(Vec::as_slice).unwrap_or(&[]);
        for gt in annotations.for_frame(frame_id) {
            let b = boxes.iter().map(|p| iou(p, &gt.bbox)).fold(0.0, f64::max);
            best.push((gt.category_id, b));
        }
    }
    let summarize = |vals: &[f64]| -> (Vec<f64>, f64) {
        let recall = thresholds
            .iter()
            .map(|&t| ratio(vals.iter().filter(|&&b| b >= t).count(), vals.len()))
            .collect();
        let abo = if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
        (recall, abo)
    };
    let all: Vec<f64> = best.iter().map(|&(_, b)| b).collect();
    let (recall, abo) = summarize(&all);

    let mut per_cat: HashMap<u64, Vec<f64>> = HashMap::new();
    for &(c, b) in &best {
        per_cat.entry(c).or_default().push(b);
    }
    let per_category = annotations
        .categories
        .iter()
        .filter_map(|c| {
            let vals = per_cat.get(&c.id)?;
            let (recall, abo) = summarize(vals);
            Some(CategoryRecall {
                category_id: c.id,
                name: c.name.clone(),
                n_ground_truth: vals.len(),
                recall,
                average_best_overlap: abo,
            })
        })
        .collect();

    RecallReport {
        thresholds: thresholds.to_vec(),
        recall,
        average_best_overlap: abo,
        n_ground_truth: all.len(),
        n_proposals: proposals.values().map(Vec::len).sum(),
        per_category,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::coco::{CocoAnnotation, CocoCategory, CocoDocument, CocoImage};

    fn gt(boxes: &[[f64; 4]]) -> AnnotationSet {
        AnnotationSet::from_document(CocoDocument {
            images: vec![CocoImage {
                id: 1,
                frame_id: Some(0),
                width: 100,
                height: 100,
                file_name: None,
            }],
            annotations: boxes
                .iter()
                .enumerate()
                .map(|(i, b)| CocoAnnotation {
                    id: i as u64 + 1,
                    image_id: 1,
                    category_id: 1,
                    bbox: *b,
                })
                .collect(),
            categories: vec![CocoCategory { id: 1, name: "Grasper".into() }],
        })
        .unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BoundingBox::new(1.0, 0.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BoundingBox::new(5.0, 5.0, 1.0, 1.0)), 0.0);
        // touching edges do not overlap
        assert_eq!(iou(&a, &BoundingBox::new(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    /// Rasterized IoU on a fine grid, for cross-checking the closed form.
    fn raster_iou(a: &BoundingBox, b: &BoundingBox, step: f64) -> f64 {
        let x0 = a.x.min(b.x);
        let y0 = a.y.min(b.y);
        let x1 = a.right().max(b.right());
        let y1 = a.bottom().max(b.bottom());
        let (mut inter, mut union) = (0u64, 0u64);
        let mut y = y0 + step / 2.0;
        while y < y1 {
            let mut x = x0 + step / 2.0;
            while x < x1 {
                let (ia, ib) = (a.contains_point(x, y), b.contains_point(x, y));
                inter += (ia && ib) as u64;
                union += (ia || ib) as u64;
                x += step;
            }
            y += step;
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_matches_raster() {
        let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BoundingBox::new(1.0, 0.0, 2.0, 2.0);
        assert!((raster_iou(&a, &b, 0.01) - iou(&a, &b)).abs() < 1e-3);
        let c = BoundingBox::new(0.3, 0.7, 1.9, 2.2);
        assert!((raster_iou(&a, &c, 0.005) - iou(&a, &c)).abs() < 5e-3);
    }

    #[test]
    fn perfect_and_empty_proposals() {
        let boxes = [[10.0, 10.0, 20.0, 20.0], [50.0, 40.0, 30.0, 10.0]];
        let set = gt(&boxes);
        let mut props = BTreeMap::new();
        props.insert(0, boxes.iter().map(|b| BoundingBox::new(b[0], b[1], b[2], b[3])).collect());
        let r = recall_at(&props, &set, &[0.5, 0.7, 0.9]);
        assert_eq!(r.recall, vec![1.0, 1.0, 1.0]);
        assert_eq!(r.average_best_overlap, 1.0);

        let r = recall_at(&BTreeMap::new(), &set, &[0.5, 0.7, 0.9]);
        assert_eq!(r.recall, vec![0.0, 0.0, 0.0]);
        assert_eq!(r.average_best_overlap, 0.0);
        assert_eq!(r.n_proposals, 0);
    }

    #[test]
    fn constructed_partial_overlaps() {
        // 10x10 boxes; a horizontal shift s gives IoU (10-s)/(10+s).
        // s = 2.5 -> 0.6, s = 30/7 -> 0.4
        let set = gt(&[[0.0, 0.0, 10.0, 10.0], [50.0, 50.0, 10.0, 10.0]]);
        let mut props = BTreeMap::new();
        props.insert(
            0,
            vec![BoundingBox::new(2.5, 0.0, 10.0, 10.0), BoundingBox::new(50.0 + 30.0 / 7.0, 50.0, 10.0, 10.0)],
        );
        let r = recall_at(&props, &set, &[0.5, 0.7]);
        assert_eq!(r.recall, vec![0.5, 0.0]);
        assert!((r.average_best_overlap - 0.5).abs() < 1e-12);
        assert_eq!(r.per_category[0].recall, vec![0.5, 0.0]);
    }

    #[test]
    fn proposals_in_other_frames_do_not_count() {
        let set = gt(&[[0.0, 0.0, 10.0, 10.0]]);
        let mut props = BTreeMap::new();
        props.insert(5, vec![BoundingBox::new(0.0, 0.0, 10.0, 10.0)]);
        assert_eq!(recall_at(&props, &set, &[0.5]).recall, vec![0.0]);
    }

    #[test]
    fn table_has_one_row_per_threshold() {
        let set = gt(&[[0.0, 0.0, 10.0, 10.0]]);
        let r = recall_at(&BTreeMap::new(), &set, &[0.5]);
        let t = r.table();
        assert!(t.contains("0.50") && !t.contains("0.70"));
        assert_eq!(r.records().len(), 2);
    }
}
