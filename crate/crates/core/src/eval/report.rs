//! Dataset-level evaluation: runs the model (or a ground-truth oracle) over
//! frames, pools per-frame detection matchings into range-bucketed AP, and
//! accumulates point-label confusion per bucket.
//!
//! Protocol: detections are matched per frame (greedy, confidence order);
//! matched detections fall into their ground truth's bucket, unmatched false
//! positives into their own center's bucket. Segmentation counts every return
//! under 70 m whose cell it won; duplicate (occluded) returns are unknown and
//! excluded.

use super::{
    decode_and_nms, match_detections, metrics_from_confusion, pr_curve_area, BoxBEV, Detection,
    DetectionClass, RangeBucket, SegmentationMetrics, SemanticClass,
};
use crate::error::Result;
use crate::io::Frame;
use crate::nn::{prepare_frame, FusedModel, TrainMode, NUM_CLASSES};
use crate::parallel::map_indexed;
use crate::tensor::Scalar;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub mode: TrainMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            conf_threshold: 0.5,
            nms_iou: 0.3,
            mode: TrainMode::Fused,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// AP per detection class and range bucket; `None` when the bucket holds
    /// no ground truth.
    pub ap: BTreeMap<(DetectionClass, RangeBucket), Option<f64>>,
    /// Segmentation metrics over 0-70 m.
    pub seg: SegmentationMetrics,
    /// Segmentation metrics per range bucket (`None` for empty buckets).
    pub seg_by_bucket: BTreeMap<RangeBucket, Option<SegmentationMetrics>>,
    pub frames: usize,
}

/// Per-frame intermediate: detections with the gt they matched, plus the
/// frame's gt boxes, pooled later into PR curves.
struct FrameDetections {
    /// (confidence, matched gt range, unmatched det range) per class.
    scored: Vec<(DetectionClass, f64, Option<f64>, f64)>,
    /// (class, center range) of every gt box.
    gts: Vec<(DetectionClass, f64)>,
}

fn frame_detections(dets: &[Detection], boxes: &[(DetectionClass, BoxBEV)]) -> FrameDetections {
    let mut scored = Vec::new();
    let mut gts = Vec::new();
    for class in DetectionClass::ALL {
        let class_dets: Vec<Detection> = dets.iter().filter(|d| d.class == class).cloned().collect();
        let class_gts: Vec<BoxBEV> = boxes
            .iter()
            .filter(|(c, _)| *c == class)
            .map(|(_, b)| *b)
            .collect();
        let matching = match_detections(&class_dets, &class_gts, class.iou_threshold());
        for (i, d) in class_dets.iter().enumerate() {
            match matching.matched_gt[i] {
                Some(g) => scored.push((class, d.confidence, Some(class_gts[g].center_range()), 0.0)),
                None => scored.push((class, d.confidence, None, d.box_bev.center_range())),
            }
        }
        for g in &class_gts {
            gts.push((class, g.center_range()));
        }
    }
    FrameDetections { scored, gts }
}

/// Predictions for one frame: per-return label (None = unknown/excluded) and
/// the decoded detections.
pub struct FramePrediction {
    pub point_labels: Vec<Option<SemanticClass>>,
    pub detections: Vec<Detection>,
}

/// Runs the model on one frame and derives per-return labels: a return is
/// classified by its cell iff it is the cell's winning (closest) point and
/// the cell lies inside the cropped range view; all other returns are
/// unknown.
pub fn predict_frame<T: Scalar>(
    model: &FusedModel<T>,
    frame: &Frame,
    cfg: &EvalConfig,
) -> Result<FramePrediction> {
    let prepared = prepare_frame::<T>(frame, cfg.mode)?;
    let (pred, _) = model.forward(&prepared.lidar_input, &prepared.rgb, &prepared.mapping)?;
    let img = &frame.range_image;
    let rc = &frame.range_cfg;
    let laser_rows = rc.laser_rows();
    let bin = rc.azimuth_bin_width();

    let mut point_labels = vec![None; frame.sweep.returns.len()];
    for (i, ret) in frame.sweep.returns.iter().enumerate() {
        let theta = ret.theta as f64;
        if theta < rc.azimuth_min || theta >= rc.azimuth_max {
            continue; // outside the evaluated field of view
        }
        let col = ((theta - rc.azimuth_min) / bin).floor() as usize;
        if col >= rc.width {
            continue;
        }
        let row = laser_rows[ret.laser_id as usize];
        if img.point_index_at(row, col) != Some(i as u32) {
            continue; // occluded duplicate: unknown
        }
        let logits: Vec<f64> = (0..NUM_CLASSES)
            .map(|k| pred.class_logits.at3(row, col, k).into_f64())
            .collect();
        let argmax = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        point_labels[i] = SemanticClass::from_u8(argmax as u8);
    }

    let detections = decode_and_nms(&pred, img, cfg.conf_threshold, cfg.nms_iou);
    Ok(FramePrediction {
        point_labels,
        detections,
    })
}

/// Ground-truth oracle: every winning return keeps its true label and every
/// gt box becomes a unit-confidence detection. Used to validate the metric
/// plumbing end to end.
pub fn oracle_frame_prediction(frame: &Frame) -> FramePrediction {
    let img = &frame.range_image;
    let rc = &frame.range_cfg;
    let laser_rows = rc.laser_rows();
    let bin = rc.azimuth_bin_width();
    let mut point_labels = vec![None; frame.sweep.returns.len()];
    for (i, ret) in frame.sweep.returns.iter().enumerate() {
        let theta = ret.theta as f64;
        if theta < rc.azimuth_min || theta >= rc.azimuth_max {
            continue;
        }
        let col = ((theta - rc.azimuth_min) / bin).floor() as usize;
        if col >= rc.width {
            continue;
        }
        let row = laser_rows[ret.laser_id as usize];
        if img.point_index_at(row, col) != Some(i as u32) {
            continue;
        }
        point_labels[i] = Some(frame.point_labels[i].class);
    }
    let detections = frame
        .boxes
        .iter()
        .filter_map(|b| {
            DetectionClass::from_semantic(b.class).map(|class| Detection {
                box_bev: b.to_bev(),
                class,
                confidence: 1.0,
            })
        })
        .collect();
    FramePrediction {
        point_labels,
        detections,
    }
}

/// Evaluates predictions over a dataset. `model = None` runs the
/// ground-truth oracle instead of a network.
pub fn evaluate_frames<T: Scalar>(
    model: Option<&FusedModel<T>>,
    frames: &[Frame],
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let predictions: Vec<Result<FramePrediction>> = map_indexed(frames.len(), |i| match model {
        Some(m) => predict_frame(m, &frames[i], cfg),
        None => Ok(oracle_frame_prediction(&frames[i])),
    });

    let mut confusion: BTreeMap<RangeBucket, [[u64; NUM_CLASSES]; NUM_CLASSES]> = RangeBucket::ALL
        .iter()
        .map(|&b| (b, [[0u64; NUM_CLASSES]; NUM_CLASSES]))
        .collect();
    let mut pooled: Vec<FrameDetections> = Vec::with_capacity(frames.len());

    for (frame, prediction) in frames.iter().zip(predictions) {
        let prediction = prediction?;
        for (i, (ret, pred_label)) in frame
            .sweep
            .returns
            .iter()
            .zip(&prediction.point_labels)
            .enumerate()
        {
            let Some(pred_label) = pred_label else { continue };
            let range = ret.r as f64;
            let gt = frame.point_labels[i].class;
            for bucket in RangeBucket::ALL {
                if bucket.contains(range) {
                    confusion.get_mut(&bucket).unwrap()[gt as usize][*pred_label as usize] += 1;
                }
            }
        }
        let gt_boxes: Vec<(DetectionClass, BoxBEV)> = frame
            .boxes
            .iter()
            .filter_map(|b| DetectionClass::from_semantic(b.class).map(|c| (c, b.to_bev())))
            .collect();
        pooled.push(frame_detections(&prediction.detections, &gt_boxes));
    }

    // Pool detections across frames per class and bucket.
    let mut ap = BTreeMap::new();
    for class in DetectionClass::ALL {
        for bucket in RangeBucket::ALL {
            let n_gt: usize = pooled
                .iter()
                .flat_map(|f| &f.gts)
                .filter(|(c, r)| *c == class && bucket.contains(*r))
                .count();
            if n_gt == 0 {
                ap.insert((class, bucket), None);
                continue;
            }
            let mut scored: Vec<(f64, bool)> = Vec::new();
            for f in &pooled {
                for (c, conf, matched_range, det_range) in &f.scored {
                    if *c != class {
                        continue;
                    }
                    match matched_range {
                        Some(r) if bucket.contains(*r) => scored.push((*conf, true)),
                        Some(_) => {}
                        None if bucket.contains(*det_range) => scored.push((*conf, false)),
                        None => {}
                    }
                }
            }
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let flags: Vec<bool> = scored.iter().map(|(_, tp)| *tp).collect();
            ap.insert((class, bucket), Some(pr_curve_area(&flags, n_gt)));
        }
    }

    let seg = metrics_from_confusion(confusion[&RangeBucket::All])?;
    let seg_by_bucket = confusion
        .iter()
        .map(|(b, m)| (*b, metrics_from_confusion(*m).ok()))
        .collect();

    Ok(MetricsReport {
        ap,
        seg,
        seg_by_bucket,
        frames: frames.len(),
    })
}

impl MetricsReport {
    /// Key = value report grouped by class and bucket.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("frames = {}\n\n# detection AP\n", self.frames));
        for class in DetectionClass::ALL {
            for bucket in RangeBucket::ALL {
                let v = match self.ap[&(class, bucket)] {
                    Some(v) => format!("{v:.4}"),
                    None => "absent".to_string(),
                };
                out.push_str(&format!(
                    "ap.{}.iou{:.1}.{} = {}\n",
                    class.name(),
                    class.iou_threshold(),
                    bucket.label(),
                    v
                ));
            }
        }
        out.push_str("\n# segmentation (0-70m)\n");
        out.push_str(&format!("seg.macc = {:.4}\n", self.seg.m_acc));
        out.push_str(&format!("seg.miou = {:.4}\n", self.seg.m_iou));
        for class in SemanticClass::ALL {
            let v = match self.seg.per_class_iou[class as usize] {
                Some(v) => format!("{v:.4}"),
                None => "absent".to_string(),
            };
            out.push_str(&format!("seg.iou.{} = {}\n", class.name(), v));
        }
        out.push_str("\n# segmentation mIoU by range\n");
        for bucket in RangeBucket::ALL {
            let v = match &self.seg_by_bucket[&bucket] {
                Some(m) => format!("{:.4}", m.m_iou),
                None => "absent".to_string(),
            };
            out.push_str(&format!("seg.miou.{} = {}\n", bucket.label(), v));
        }
        out.push_str("\n# confusion matrix (rows = ground truth)\n");
        for g in SemanticClass::ALL {
            let row: Vec<String> = SemanticClass::ALL
                .iter()
                .map(|p| self.seg.confusion[g as usize][*p as usize].to_string())
                .collect();
            out.push_str(&format!("confusion.{} = {}\n", g.name(), row.join(" ")));
        }
        out
    }

    /// Machine-readable table: one `metric,class,bucket,value` row per line.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("metric,class,bucket,value\n");
        for class in DetectionClass::ALL {
            for bucket in RangeBucket::ALL {
                let v = self.ap[&(class, bucket)]
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_default();
                out.push_str(&format!("ap,{},{},{}\n", class.name(), bucket.label(), v));
            }
        }
        out.push_str(&format!("macc,all,0-70m,{:.6}\n", self.seg.m_acc));
        out.push_str(&format!("miou,all,0-70m,{:.6}\n", self.seg.m_iou));
        for class in SemanticClass::ALL {
            if let Some(v) = self.seg.per_class_iou[class as usize] {
                out.push_str(&format!("class_iou,{},0-70m,{v:.6}\n", class.name()));
            }
        }
        for bucket in RangeBucket::ALL {
            if let Some(m) = &self.seg_by_bucket[&bucket] {
                out.push_str(&format!("miou,all,{},{:.6}\n", bucket.label(), m.m_iou));
            }
        }
        for g in SemanticClass::ALL {
            for p in SemanticClass::ALL {
                out.push_str(&format!(
                    "confusion,{}>{},0-70m,{}\n",
                    g.name(),
                    p.name(),
                    self.seg.confusion[g as usize][p as usize]
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, make_frame, SceneConfig, SensorRig};

    fn frames(n: usize) -> Vec<Frame> {
        (0..n)
            .map(|i| {
                let scene = generate_scene(&SceneConfig::default(), 300 + i as u64).unwrap();
                let rig = SensorRig::with_beams(32, 128, 48, 512);
                make_frame(&scene, &rig, 0.0).unwrap()
            })
            .collect()
    }

    #[test]
    fn oracle_predictions_are_perfect() {
        let frames = frames(3);
        let report = evaluate_frames::<f32>(None, &frames, &EvalConfig::default()).unwrap();
        assert!((report.seg.m_iou - 1.0).abs() < 1e-12);
        assert!((report.seg.m_acc - 1.0).abs() < 1e-12);
        for (_, ap) in &report.ap {
            if let Some(v) = ap {
                assert!(
                    (*v - 1.0).abs() < 1e-12,
                    "oracle AP should be 1 where defined, got {v}"
                );
            }
        }
        // All detection classes exist somewhere in three default scenes.
        assert!(report
            .ap
            .iter()
            .any(|((_, b), v)| *b == RangeBucket::All && v.is_some()));
    }

    #[test]
    fn untrained_model_produces_bounded_report() {
        use crate::nn::{FusedModel, NetworkConfig};
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let model = FusedModel::<f32>::new(
            &NetworkConfig {
                aux_channels: [2, 3, 4],
                primary_channels: [4, 5, 6],
            },
            &mut rng,
        );
        let frames = frames(2);
        let report = evaluate_frames(Some(&model), &frames, &EvalConfig::default()).unwrap();
        assert!(report.seg.m_acc >= 0.0 && report.seg.m_acc <= 1.0);
        assert!(report.seg.m_iou <= report.seg.m_acc);
        for v in report.ap.values().flatten() {
            assert!((0.0..=1.0).contains(v));
        }
        let text = report.render_text();
        assert!(text.contains("seg.miou"));
        let csv = report.render_csv();
        assert!(csv.lines().count() > 10);
    }
}
