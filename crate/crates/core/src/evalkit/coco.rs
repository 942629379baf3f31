//! COCO-style ground truth (images, bbox annotations, categories).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rpm::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    /// Defaults to `id` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u64>,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, w, h]`
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageInfo {
    pub image_id: u64,
    pub frame_id: u64,
    pub width: usize,
    pub height: usize,
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BoundingBox,
}

/// Validated ground truth, indexed by frame id.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<CocoCategory>,
    by_frame: BTreeMap<u64, Vec<usize>>,
    image_by_frame: BTreeMap<u64, usize>,
}

impl AnnotationSet {
    pub fn from_document(doc: CocoDocument) -> Result<Self> {
        let bad = |m: String| Err(Error::Annotation(m));
        let mut image_index: HashMap<u64, usize> = HashMap::new();
        let mut image_by_frame = BTreeMap::new();
        let mut images = Vec::with_capacity(doc.images.len());
        for (i, img) in doc.images.into_iter().enumerate() {
            if image_index.insert(img.id, i).is_some() {
                return bad(format!("duplicate image id {}", img.id));
            }
            let frame_id = img.frame_id.unwrap_or(img.id);
            if image_by_frame.insert(frame_id, i).is_some() {
                return bad(format!("image {}: duplicate frame id {frame_id}", img.id));
            }
            images.push(ImageInfo {
                image_id: img.id,
                frame_id,
                width: img.width,
                height: img.height,
                file_name: img.file_name,
            });
        }
        let mut category_ids = HashSet::new();
        for c in &doc.categories {
            if !category_ids.insert(c.id) {
                return bad(format!("duplicate category id {}", c.id));
            }
        }

        let mut by_frame: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut ann_ids = HashSet::new();
        let mut annotations = Vec::with_capacity(doc.annotations.len());
        for (i, a) in doc.annotations.into_iter().enumerate() {
            if !ann_ids.insert(a.id) {
                return bad(format!("duplicate annotation id {}", a.id));
            }
            let Some(&img_i) = image_index.get(&a.image_id) else {
                return bad(format!("annotation {} references missing image_id {}", a.id, a.image_id));
            };
            if !category_ids.contains(&a.category_id) {
                return bad(format!("annotation {} references missing category_id {}", a.id, a.category_id));
            }
            let [x, y, w, h] = a.bbox;
            if !(w > 0.0 && h > 0.0) {
                return bad(format!("annotation {}: non-positive box dimensions {w}x{h}", a.id));
            }
            let img = &images[img_i];
            if !(x >= 0.0 && y >= 0.0 && x + w <= img.width as f64 && y + h <= img.height as f64) {
                return bad(format!(
                    "annotation {}: box outside image bounds ([{x}, {y}, {w}, {h}] in {}x{})",
                    a.id, img.width, img.height
                ));
            }
            by_frame.entry(img.frame_id).or_default().push(i);
            annotations.push(Annotation {
                id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox: BoundingBox::new(x, y, w, h),
            });
        }
        Ok(AnnotationSet {
            images,
            annotations,
            categories: doc.categories,
            by_frame,
            image_by_frame,
        })
    }

    pub fn to_document(&self) -> CocoDocument {
        CocoDocument {
            images: self
                .images
                .iter()
                .map(|i| CocoImage {
                    id: i.image_id,
                    frame_id: Some(i.frame_id),
                    width: i.width,
                    height: i.height,
                    file_name: i.file_name.clone(),
                })
                .collect(),
            annotations: self
                .annotations
                .iter()
                .map(|a| CocoAnnotation {
                    id: a.id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    bbox: [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h],
                })
                .collect(),
            categories: self.categories.clone(),
        }
    }

    /// Annotations whose image has this frame id.
    pub fn for_frame(&self, frame_id: u64) -> impl Iterator<Item = &Annotation> {
        self.by_frame
            .get(&frame_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.annotations[i])
    }

    pub fn has_frame(&self, frame_id: u64) -> bool {
        self.image_by_frame.contains_key(&frame_id)
    }

    pub fn image_for_frame(&self, frame_id: u64) -> Option<&ImageInfo> {
        self.image_by_frame.get(&frame_id).map(|&i| &self.images[i])
    }

    /// Frame ids that carry at least one annotation.
    pub fn annotated_frames(&self) -> impl Iterator<Item = u64> + '_ {
        self.by_frame.keys().copied()
    }

    pub fn category_name(&self, id: u64) -> Option<&str> {
        self.categories.iter().find(|c| c.id == id).map(|c| c.name.as_str())
    }
}

pub fn load_coco(path: &Path) -> Result<AnnotationSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let doc: CocoDocument = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse(path, e.line(), format!("malformed COCO document: {e}")))?;
    AnnotationSet::from_document(doc)
}

pub fn write_coco(path: &Path, set: &AnnotationSet) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &set.to_document())
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(bbox: [f64; 4], image_id: u64) -> CocoDocument {
        CocoDocument {
            images: vec![CocoImage {
                id: 1,
                frame_id: Some(0),
                width: 640,
                height: 480,
                file_name: None,
            }],
            annotations: vec![
                CocoAnnotation {
                    id: 1,
                    image_id: 1,
                    category_id: 1,
                    bbox: [10.0, 10.0, 50.0, 40.0],
                },
                CocoAnnotation {
                    id: 2,
                    image_id,
                    category_id: 3,
                    bbox,
                },
            ],
            categories: (1..=7)
                .map(|id| CocoCategory {
                    id,
                    name: format!("tool{id}"),
                })
                .collect(),
        }
    }

    #[test]
    fn counts() {
        let set = AnnotationSet::from_document(doc([100.0, 100.0, 20.0, 20.0], 1)).unwrap();
        assert_eq!((set.images.len(), set.annotations.len(), set.categories.len()), (1, 2, 7));
        assert_eq!(set.for_frame(0).count(), 2);
        assert_eq!(set.for_frame(1).count(), 0);
    }

    #[test]
    fn dangling_image() {
        let err = AnnotationSet::from_document(doc([0.0, 0.0, 5.0, 5.0], 9)).unwrap_err();
        assert!(err.to_string().contains("annotation 2 references missing image_id 9"), "{err}");
    }

    #[test]
    fn out_of_bounds_and_degenerate_boxes() {
        let err = AnnotationSet::from_document(doc([-5.0, 0.0, 10.0, 10.0], 1)).unwrap_err();
        assert!(err.to_string().contains("box outside image bounds"), "{err}");
        let err = AnnotationSet::from_document(doc([630.0, 0.0, 20.0, 10.0], 1)).unwrap_err();
        assert!(err.to_string().contains("box outside image bounds"), "{err}");
        let err = AnnotationSet::from_document(doc([5.0, 0.0, 0.0, 10.0], 1)).unwrap_err();
        assert!(err.to_string().contains("non-positive"), "{err}");
    }

    #[test]
    fn missing_frame_id_defaults_to_image_id() {
        let json = r#"{"images": [{"id": 4, "width": 64, "height": 64, "file_name": "a.png"}],
                       "annotations": [{"id": 1, "image_id": 4, "category_id": 1, "bbox": [1, 2, 3, 4], "area": 12, "iscrowd": 0}],
                       "categories": [{"id": 1, "name": "Grasper", "supercategory": "tool"}]}"#;
        let set = AnnotationSet::from_document(serde_json::from_str(json).unwrap()).unwrap();
        assert_eq!(set.images[0].frame_id, 4);
        assert_eq!(set.for_frame(4).next().unwrap().bbox, BoundingBox::new(1.0, 2.0, 3.0, 4.0));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.json");
        let set = AnnotationSet::from_document(doc([100.25, 100.0, 20.5, 20.0], 1)).unwrap();
        write_coco(&p, &set).unwrap();
        assert_eq!(load_coco(&p).unwrap(), set);
    }
}
