//! Point-cloud semantic segmentation metrics: confusion matrix, per-class
//! IoU, mean class accuracy and mean class IoU.

use super::SemanticClass;
use crate::error::{CoreError, Result};
use crate::nn::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMetrics {
    /// `confusion[gt][pred]`; rows sum to the per-class ground-truth counts.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    /// `None` for classes absent from the ground truth.
    pub per_class_iou: [Option<f64>; NUM_CLASSES],
    pub per_class_recall: [Option<f64>; NUM_CLASSES],
    pub m_acc: f64,
    pub m_iou: f64,
    pub included_points: u64,
}

/// Computes the metrics over aligned prediction/ground-truth label slices.
/// Predictions of `None` mark unknown points (duplicate-cell occlusion);
/// those points are excluded from every count. Classes absent from the
/// ground truth are excluded from both means.
pub fn segmentation_metrics(
    pred: &[Option<SemanticClass>],
    gt: &[SemanticClass],
) -> Result<SegmentationMetrics> {
    if pred.len() != gt.len() {
        return Err(CoreError::Contract(format!(
            "prediction count {} does not match ground truth count {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (p, g) in pred.iter().zip(gt) {
        if let Some(p) = p {
            confusion[*g as usize][*p as usize] += 1;
        }
    }
    metrics_from_confusion(confusion)
}

/// Metrics from an already-accumulated confusion matrix (used when pooling
/// over many frames).
pub fn metrics_from_confusion(
    confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
) -> Result<SegmentationMetrics> {
    let included: u64 = confusion.iter().flatten().sum();
    if included == 0 {
        return Err(CoreError::NoLabeledPoints);
    }

    let mut per_class_iou = [None; NUM_CLASSES];
    let mut per_class_recall = [None; NUM_CLASSES];
    let mut acc_sum = 0.0;
    let mut iou_sum = 0.0;
    let mut present = 0usize;
    for c in 0..NUM_CLASSES {
        let row: u64 = confusion[c].iter().sum();
        if row == 0 {
            continue;
        }
        present += 1;
        let tp = confusion[c][c];
        let col: u64 = (0..NUM_CLASSES).map(|g| confusion[g][c]).sum();
        let recall = tp as f64 / row as f64;
        let denom = row + col - tp; // TP + FN + FP
        let iou = tp as f64 / denom as f64;
        per_class_recall[c] = Some(recall);
        per_class_iou[c] = Some(iou);
        acc_sum += recall;
        iou_sum += iou;
    }
    Ok(SegmentationMetrics {
        confusion,
        per_class_iou,
        per_class_recall,
        m_acc: acc_sum / present as f64,
        m_iou: iou_sum / present as f64,
        included_points: included,
    })
}
