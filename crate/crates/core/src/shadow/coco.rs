//! Bounding boxes from a COCO-style annotation file.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{merge_regions, ShadowError, ShadowRegion};
use crate::imaging::Stack;

#[derive(Debug, Deserialize)]
struct CocoFile {
    images: Option<Vec<CocoImage>>,
    annotations: Option<Vec<CocoAnnotation>>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
}

#[derive(Debug, Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocoImport {
    pub regions: Vec<ShadowRegion>,
    /// Annotated file names that match no frame of the stack.
    pub unmatched: Vec<String>,
}

fn base_name(name: &str) -> &str {
    Path::new(name).file_name().and_then(|n| n.to_str()).unwrap_or(name)
}

/// Parse annotation JSON and attach each box to the frame with the same file name.
pub fn parse_coco_regions(json: &str, stack: &Stack) -> Result<CocoImport, ShadowError> {
    let file: CocoFile = serde_json::from_str(json).map_err(|e| ShadowError::Malformed(e.to_string()))?;
    let images = file
        .images
        .ok_or_else(|| ShadowError::Malformed("missing 'images' array".into()))?;
    let annotations = file
        .annotations
        .ok_or_else(|| ShadowError::Malformed("missing 'annotations' array".into()))?;

    let frames: HashMap<&str, usize> = stack
        .source_labels()
        .iter()
        .enumerate()
        .map(|(i, l)| (base_name(l), i))
        .collect();
    let by_id: HashMap<u64, &str> = images.iter().map(|im| (im.id, base_name(&im.file_name))).collect();
    let mut unmatched: Vec<String> = images
        .iter()
        .map(|im| base_name(&im.file_name))
        .filter(|n| !frames.contains_key(n))
        .map(str::to_string)
        .collect();
    unmatched.sort();
    unmatched.dedup();

    let (w, h) = (stack.width() as f64, stack.height() as f64);
    let mut regions = Vec::new();
    for a in &annotations {
        let name = by_id
            .get(&a.image_id)
            .ok_or_else(|| ShadowError::Malformed(format!("annotation references unknown image id {}", a.image_id)))?;
        let Some(&frame) = frames.get(name) else {
            continue;
        };
        let [x, y, bw, bh] = a.bbox;
        if !(bw > 0.0 && bh > 0.0) || a.bbox.iter().any(|v| !v.is_finite()) {
            return Err(ShadowError::Malformed(format!("degenerate bbox {:?}", a.bbox)));
        }
        let c0 = x.floor().clamp(0.0, w) as usize;
        let c1 = (x + bw).ceil().clamp(0.0, w) as usize;
        let r0 = y.floor().clamp(0.0, h) as usize;
        let r1 = (y + bh).ceil().clamp(0.0, h) as usize;
        if c0 >= c1 || r0 >= r1 {
            continue;
        }
        regions.push(ShadowRegion {
            frame_index: frame,
            col_start: c0,
            col_end: c1,
            row_start: Some(r0),
            row_end: Some(r1),
        });
    }
    if regions.is_empty() && !annotations.is_empty() {
        return Err(ShadowError::NoMatchingFrames);
    }
    Ok(CocoImport {
        regions: merge_regions(regions),
        unmatched,
    })
}

pub fn import_coco_regions(path: impl AsRef<Path>, stack: &Stack) -> Result<CocoImport, ShadowError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| ShadowError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_coco_regions(&text, stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;

    fn stack(n: usize) -> Stack {
        Stack::new(vec![Image::new(300, 512); n]).unwrap()
    }

    #[test]
    fn single_box_maps_to_frame() {
        let json = r#"{"images":[{"id":1,"file_name":"bscan_0007.png"}],
                       "annotations":[{"image_id":1,"bbox":[100,0,10,512]}]}"#;
        let r = parse_coco_regions(json, &stack(10)).unwrap();
        assert_eq!(
            r.regions,
            vec![ShadowRegion {
                frame_index: 7,
                col_start: 100,
                col_end: 110,
                row_start: Some(0),
                row_end: Some(512),
            }]
        );
        assert!(r.unmatched.is_empty());
    }

    #[test]
    fn missing_annotations_is_malformed() {
        let json = r#"{"images":[]}"#;
        assert!(matches!(parse_coco_regions(json, &stack(2)), Err(ShadowError::Malformed(_))));
    }

    #[test]
    fn no_matching_frames() {
        let json = r#"{"images":[{"id":1,"file_name":"other.png"}],
                       "annotations":[{"image_id":1,"bbox":[1,1,2,2]}]}"#;
        assert_eq!(parse_coco_regions(json, &stack(2)), Err(ShadowError::NoMatchingFrames));
    }

    #[test]
    fn fractional_boxes_cover_touched_pixels() {
        let json = r#"{"images":[{"id":3,"file_name":"dir/bscan_0001.png"},{"id":4,"file_name":"x.png"}],
                       "annotations":[{"image_id":3,"bbox":[10.5,2.2,3.0,4.0]}]}"#;
        let r = parse_coco_regions(json, &stack(2)).unwrap();
        assert_eq!((r.regions[0].col_start, r.regions[0].col_end), (10, 14));
        assert_eq!((r.regions[0].row_start, r.regions[0].row_end), (Some(2), Some(7)));
        assert_eq!(r.unmatched, vec!["x.png".to_string()]);
    }
}
