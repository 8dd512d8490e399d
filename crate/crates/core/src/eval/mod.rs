//! Localization metrics: IoU detection, center prediction and normalized
//! center distance.

mod heatmap;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::PartAnnotation;
use crate::geometry::{BBox, Point};
use crate::parser::ParseReport;

pub use heatmap::{heatmap_export, render_heatmap, write_pgm, Heatmap};

/// A prediction counts as a detection at this IoU or above.
pub const DETECTION_IOU: f64 = 0.5;

/// Label stored in reports for the distance normalizer.
pub const DISTANCE_NORMALIZER: &str = "image_diagonal";

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// True when the center lies in the closed ground-truth box.
pub fn center_prediction(pred: Point, gt: &BBox) -> bool {
    gt.contains(pred)
}

/// Center distance over the image diagonal.
pub fn normalized_distance(pred: Point, gt: Point, image_width: u32, image_height: u32) -> f64 {
    let diag = f64::from(image_width).hypot(f64::from(image_height));
    if diag == 0.0 {
        return 0.0;
    }
    pred.dist(gt) / diag
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image: String,
    pub template: usize,
    pub predicted_center: Point,
    pub predicted_bbox: BBox,
    pub gt_bbox: BBox,
    pub iou: f64,
    pub detected: bool,
    pub center_correct: bool,
    pub normalized_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub detection_rate: f64,
    pub center_prediction_rate: f64,
    pub mean_normalized_distance: f64,
    pub distance_normalizer: String,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn from_records(records: Vec<EvalRecord>) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&EvalRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let detection_rate = mean(&|r| f64::from(u8::from(r.detected)));
        let center_prediction_rate = mean(&|r| f64::from(u8::from(r.center_correct)));
        let mean_normalized_distance = mean(&|r| r.normalized_distance);
        Self {
            images: n,
            detection_rate,
            center_prediction_rate,
            mean_normalized_distance,
            distance_normalizer: DISTANCE_NORMALIZER.to_string(),
            records,
        }
    }
}

pub fn evaluate_one(
    parse: &ParseReport,
    gt: &PartAnnotation,
    image_width: u32,
    image_height: u32,
) -> EvalRecord {
    let v = iou(&parse.bbox, &gt.bbox);
    EvalRecord {
        image: parse.image.clone(),
        template: parse.template,
        predicted_center: parse.center,
        predicted_bbox: parse.bbox,
        gt_bbox: gt.bbox,
        iou: v,
        detected: v >= DETECTION_IOU,
        center_correct: center_prediction(parse.center, &gt.bbox),
        normalized_distance: normalized_distance(parse.center, gt.bbox.center(), image_width, image_height),
    }
}

/// Scores parses against ground truth, matched by image id. `dims` maps an
/// image id to its (width, height). Every parse needs a ground-truth box.
pub fn evaluate(
    parses: &[ParseReport],
    ground_truth: &[PartAnnotation],
    dims: &HashMap<String, (u32, u32)>,
) -> Result<EvalReport> {
    let mut gt: HashMap<&str, &PartAnnotation> = HashMap::new();
    for a in ground_truth {
        if gt.insert(a.image_id.as_str(), a).is_some() {
            return Err(Error::Argument(format!(
                "image {} has more than one ground-truth box",
                a.image_id
            )));
        }
    }
    let records = parses
        .iter()
        .map(|p| {
            let a = gt
                .get(p.image.as_str())
                .ok_or_else(|| Error::Lookup(format!("no ground truth for image {}", p.image)))?;
            let &(w, h) = dims
                .get(&p.image)
                .ok_or_else(|| Error::Lookup(format!("no image size for {}", p.image)))?;
            Ok(evaluate_one(p, a, w, h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_records(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox { x1, y1, x2, y2 }
    }

    #[test]
    fn iou_cases() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 30.0, 30.0)), 0.0);
        // overlap 5x10 = 50, union 150
        assert!((iou(&a, &bb(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&bb(1.0, 1.0, 1.0, 1.0), &bb(1.0, 1.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn center_rule_is_closed() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        assert!(center_prediction(Point::new(5.0, 5.0), &b));
        assert!(center_prediction(Point::new(10.0, 3.0), &b));
        assert!(!center_prediction(Point::new(10.5, 3.0), &b));
    }

    #[test]
    fn distance_normalizer() {
        assert_eq!(normalized_distance(Point::new(3.0, 4.0), Point::new(3.0, 4.0), 30, 40), 0.0);
        assert!((normalized_distance(Point::new(0.0, 0.0), Point::new(30.0, 40.0), 30, 40) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregates_are_means() {
        let rec = |hit: bool, d: f64| EvalRecord {
            image: "a".into(),
            template: 0,
            predicted_center: Point::default(),
            predicted_bbox: bb(0.0, 0.0, 1.0, 1.0),
            gt_bbox: bb(0.0, 0.0, 1.0, 1.0),
            iou: 1.0,
            detected: hit,
            center_correct: hit,
            normalized_distance: d,
        };
        let r = EvalReport::from_records(vec![rec(true, 0.1), rec(false, 0.3), rec(true, 0.2)]);
        assert!((r.center_prediction_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.detection_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.mean_normalized_distance - 0.2).abs() < 1e-12);
        let empty = EvalReport::from_records(Vec::new());
        assert_eq!(empty.images, 0);
        assert_eq!(empty.center_prediction_rate, 0.0);
    }
}
