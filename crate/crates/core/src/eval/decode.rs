//! Turn per-cell predictions into BEV detections: confidence filter, box
//! decoding relative to each cell's 3D point, and greedy rotated-IoU NMS.

use super::iou::rotated_iou;
use super::{BoxBEV, Detection, DetectionClass, SemanticClass};
use crate::nn::{PerPointPrediction, NUM_CLASSES};
use crate::rangeimage::{RangeImage, CH_AZIMUTH, CH_HEIGHT, CH_RANGE};
use crate::tensor::Scalar;

/// BEV position of an occupied cell from its stored channels
/// (`rho = sqrt(r^2 - z^2)`).
pub fn cell_bev_point(img: &RangeImage, row: usize, col: usize) -> (f64, f64) {
    let r = img.channel(row, col, CH_RANGE);
    let z = img.channel(row, col, CH_HEIGHT);
    let theta = img.channel(row, col, CH_AZIMUTH);
    let rho = (r * r - z * z).max(0.0).sqrt();
    (rho * theta.cos(), rho * theta.sin())
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Greedy per-class suppression by descending confidence (stable on ties):
/// each kept detection removes later overlapping ones of its class at
/// `IoU >= nms_iou`.
pub fn nms(candidates: &[Detection], nms_iou: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .confidence
            .partial_cmp(&candidates[a].confidence)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut suppressed = vec![false; candidates.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        for &j in &order[rank + 1..] {
            if !suppressed[j]
                && candidates[j].class == candidates[i].class
                && rotated_iou(&candidates[i].box_bev, &candidates[j].box_bev) >= nms_iou
            {
                suppressed[j] = true;
            }
        }
        kept.push(candidates[i].clone());
    }
    kept
}

/// Decode every occupied cell whose argmax class is an object class with
/// probability at least `conf_threshold`, then run [`nms`]. The result is
/// sorted by descending confidence.
pub fn decode_and_nms<T: Scalar>(
    pred: &PerPointPrediction<T>,
    img: &RangeImage,
    conf_threshold: f64,
    nms_iou: f64,
) -> Vec<Detection> {
    let (h, w, c) = pred.class_logits.dims3();
    assert_eq!(c, NUM_CLASSES);
    assert_eq!(
        (h, w),
        (img.height(), img.width()),
        "prediction/image shape mismatch"
    );

    let mut candidates: Vec<Detection> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if !img.is_occupied(row, col) {
                continue;
            }
            let logits: Vec<f64> = (0..NUM_CLASSES)
                .map(|k| pred.class_logits.at3(row, col, k).into_f64())
                .collect();
            let probs = softmax(&logits);
            let (argmax, &p) = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            let class = SemanticClass::from_u8(argmax as u8).unwrap();
            let Some(det_class) = DetectionClass::from_semantic(class) else {
                continue;
            };
            if p < conf_threshold {
                continue;
            }
            let (px, py) = cell_bev_point(img, row, col);
            let bp: Vec<f64> = (0..6)
                .map(|k| pred.box_params.at3(row, col, k).into_f64())
                .collect();
            let Ok(box_bev) = BoxBEV::new(
                px + bp[0],
                py + bp[1],
                bp[3].exp(),
                bp[2].exp(),
                bp[4].atan2(bp[5]),
            ) else {
                continue; // non-finite decode
            };
            candidates.push(Detection {
                box_bev,
                class: det_class,
                confidence: p,
            });
        }
    }
    nms(&candidates, nms_iou)
}
