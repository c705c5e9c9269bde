//! Average precision with greedy confidence-ordered matching and all-point
//! interpolation of the precision-recall curve.

use super::iou::rotated_iou;
use super::{BoxBEV, Detection};

/// Result of matching every detection against the ground truths, before any
/// range bucketing.
#[derive(Debug, Clone)]
pub struct Matching {
    /// Detection indices sorted by descending confidence (ties by index).
    pub order: Vec<usize>,
    /// For each detection (original index): the matched ground-truth index.
    pub matched_gt: Vec<Option<usize>>,
}

/// Greedy matching: walk detections in confidence order; each takes the
/// highest-IoU still-unmatched ground truth if that IoU reaches the
/// threshold. Ties on IoU go to the lower ground-truth index, ties on
/// confidence to the lower detection index, making the result deterministic.
pub fn match_detections(dets: &[Detection], gts: &[BoxBEV], iou_threshold: f64) -> Matching {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gts.len()];
    let mut matched_gt = vec![None; dets.len()];
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = rotated_iou(&dets[d].box_bev, gt);
            if iou >= iou_threshold {
                let better = match best {
                    None => true,
                    Some((_, bi)) => iou > bi,
                };
                if better {
                    best = Some((g, iou));
                }
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            matched_gt[d] = Some(g);
        }
    }
    Matching { order, matched_gt }
}

/// Area under the precision-recall curve with all-point interpolation: at
/// each recall step the precision is the maximum achieved at that recall or
/// beyond. `tp_flags` follows the confidence order.
pub fn pr_curve_area(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut points = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // Precision envelope from the right.
    let mut env = points.clone();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i].1 = env[i].1.max(env[i + 1].1);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &(r, p) in &env {
        if r > prev_recall {
            area += (r - prev_recall) * p;
            prev_recall = r;
        }
    }
    area
}

/// AP for one class. Matching runs over the full range; the bucket then keeps
/// ground truths whose BEV center range falls in `[lo, hi)`, detections that
/// matched such a ground truth, and unmatched detections whose own center
/// falls in the bucket. `None` when the bucket holds no ground truth.
pub fn compute_ap(
    dets: &[Detection],
    gts: &[BoxBEV],
    iou_threshold: f64,
    bucket: Option<(f64, f64)>,
) -> Option<f64> {
    let matching = match_detections(dets, gts, iou_threshold);
    let in_bucket = |cx: f64, cy: f64| -> bool {
        match bucket {
            None => true,
            Some((lo, hi)) => {
                let r = (cx * cx + cy * cy).sqrt();
                r >= lo && r < hi
            }
        }
    };
    let gt_in: Vec<bool> = gts.iter().map(|g| in_bucket(g.cx, g.cy)).collect();
    let n_gt = gt_in.iter().filter(|&&b| b).count();
    if n_gt == 0 {
        return None;
    }
    let mut tp_flags = Vec::new();
    for &d in &matching.order {
        match matching.matched_gt[d] {
            Some(g) => {
                if gt_in[g] {
                    tp_flags.push(true);
                }
                // matched to a ground truth outside the bucket: belongs to
                // that bucket, not this one
            }
            None => {
                let b = &dets[d].box_bev;
                if in_bucket(b.cx, b.cy) {
                    tp_flags.push(false);
                }
            }
        }
    }
    Some(pr_curve_area(&tp_flags, n_gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::DetectionClass;

    fn det(cx: f64, conf: f64) -> Detection {
        Detection {
            box_bev: BoxBEV::new(cx, 0.0, 2.0, 1.0, 0.0).unwrap(),
            class: DetectionClass::Vehicle,
            confidence: conf,
        }
    }

    fn gt(cx: f64) -> BoxBEV {
        BoxBEV::new(cx, 0.0, 2.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn single_matching_detection_has_ap_one() {
        let ap = compute_ap(&[det(5.0, 0.3)], &[gt(5.0)], 0.7, None).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn below_threshold_is_ap_zero() {
        // IoU of boxes offset by half their length is well under 0.7.
        let ap = compute_ap(&[det(6.0, 0.9)], &[gt(5.0)], 0.7, None).unwrap();
        assert_eq!(ap, 0.0);
    }

    #[test]
    fn no_ground_truth_is_undefined() {
        assert!(compute_ap(&[det(5.0, 0.9)], &[], 0.5, None).is_none());
        assert!(compute_ap(&[], &[gt(100.0)], 0.5, Some((0.0, 30.0))).is_none());
    }

    #[test]
    fn false_positive_before_true_positive_halves_ap() {
        // Confidence order: FP at 0.9 (no gt nearby), TP at 0.8.
        // PR points: (0, 0), (1, 1/2); envelope area = 0.5.
        let dets = vec![det(50.0, 0.9), det(5.0, 0.8)];
        let ap = compute_ap(&dets, &[gt(5.0)], 0.5, None).unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicate_detections_count_once() {
        let dets = vec![det(5.0, 0.9), det(5.0, 0.8)];
        let ap = compute_ap(&dets, &[gt(5.0)], 0.5, None).unwrap();
        // Second det cannot match the taken gt; envelope keeps AP at 1.
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn bucketing_assigns_matched_dets_to_gt_bucket() {
        // One gt at 20 m (near), one at 40 m (mid); both detected.
        let dets = vec![det(20.0, 0.9), det(40.0, 0.8)];
        let gts = vec![gt(20.0), gt(40.0)];
        let near = compute_ap(&dets, &gts, 0.5, Some((0.0, 30.0))).unwrap();
        let mid = compute_ap(&dets, &gts, 0.5, Some((30.0, 50.0))).unwrap();
        assert_eq!(near, 1.0);
        assert_eq!(mid, 1.0);
        assert!(compute_ap(&dets, &gts, 0.5, Some((50.0, 70.0))).is_none());
    }
}
