//! Detection and segmentation evaluation: rotated BEV IoU, range-bucketed
//! average precision, and point-cloud segmentation metrics.

mod ap;
mod decode;
mod iou;
pub mod report;
mod seg;

pub use ap::{compute_ap, match_detections, pr_curve_area, Matching};
pub use decode::{cell_bev_point, decode_and_nms, nms};
pub use iou::rotated_iou;
pub use report::{evaluate_frames, EvalConfig, MetricsReport};
pub use seg::{metrics_from_confusion, segmentation_metrics, SegmentationMetrics};

use crate::error::{CoreError, Result};

/// The six trainable classes. Evaluation additionally uses an `unknown`
/// marker for occluded duplicate points, represented as `Option::None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum SemanticClass {
    Background = 0,
    Road = 1,
    Vehicle = 2,
    Pedestrian = 3,
    Bicycle = 4,
    Motorcycle = 5,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 6] = [
        SemanticClass::Background,
        SemanticClass::Road,
        SemanticClass::Vehicle,
        SemanticClass::Pedestrian,
        SemanticClass::Bicycle,
        SemanticClass::Motorcycle,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn is_object(&self) -> bool {
        matches!(
            self,
            SemanticClass::Vehicle
                | SemanticClass::Pedestrian
                | SemanticClass::Bicycle
                | SemanticClass::Motorcycle
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            SemanticClass::Background => "background",
            SemanticClass::Road => "road",
            SemanticClass::Vehicle => "vehicle",
            SemanticClass::Pedestrian => "pedestrian",
            SemanticClass::Bicycle => "bicycle",
            SemanticClass::Motorcycle => "motorcycle",
        }
    }
}

/// Detection classes: bicycles and motorcycles are merged into `bike`, the
/// convention used when comparing detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectionClass {
    Vehicle,
    Pedestrian,
    Bike,
}

impl DetectionClass {
    pub const ALL: [DetectionClass; 3] = [
        DetectionClass::Vehicle,
        DetectionClass::Pedestrian,
        DetectionClass::Bike,
    ];

    pub fn from_semantic(c: SemanticClass) -> Option<Self> {
        match c {
            SemanticClass::Vehicle => Some(DetectionClass::Vehicle),
            SemanticClass::Pedestrian => Some(DetectionClass::Pedestrian),
            SemanticClass::Bicycle | SemanticClass::Motorcycle => Some(DetectionClass::Bike),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DetectionClass::Vehicle => "vehicle",
            DetectionClass::Pedestrian => "pedestrian",
            DetectionClass::Bike => "bike",
        }
    }

    /// IoU threshold for a true positive: 0.7 for vehicles, 0.5 otherwise.
    pub fn iou_threshold(&self) -> f64 {
        match self {
            DetectionClass::Vehicle => 0.7,
            _ => 0.5,
        }
    }
}

/// Oriented rectangle in the bird's eye view. `length` runs along the yaw
/// heading, `width` across it; yaw is normalized into `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBEV {
    pub cx: f64,
    pub cy: f64,
    pub length: f64,
    pub width: f64,
    pub yaw: f64,
}

impl BoxBEV {
    pub fn new(cx: f64, cy: f64, length: f64, width: f64, yaw: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && yaw.is_finite()) {
            return Err(CoreError::Contract("non-finite box".into()));
        }
        if !(length > 0.0 && width > 0.0 && length.is_finite() && width.is_finite()) {
            return Err(CoreError::Contract(format!(
                "box dimensions must be positive, got {length} x {width}"
            )));
        }
        let mut yaw = yaw.rem_euclid(2.0 * std::f64::consts::PI);
        if yaw > std::f64::consts::PI {
            yaw -= 2.0 * std::f64::consts::PI;
        }
        Ok(BoxBEV {
            cx,
            cy,
            length,
            width,
            yaw,
        })
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// BEV distance of the center from the sensor origin.
    pub fn center_range(&self) -> f64 {
        (self.cx * self.cx + self.cy * self.cy).sqrt()
    }
}

/// A scored detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub box_bev: BoxBEV,
    pub class: DetectionClass,
    pub confidence: f64,
}

/// Range buckets used throughout the reports (meters from the sensor).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RangeBucket {
    All,
    Near,
    Mid,
    Far,
}

impl RangeBucket {
    pub const ALL: [RangeBucket; 4] = [
        RangeBucket::All,
        RangeBucket::Near,
        RangeBucket::Mid,
        RangeBucket::Far,
    ];

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            RangeBucket::All => (0.0, 70.0),
            RangeBucket::Near => (0.0, 30.0),
            RangeBucket::Mid => (30.0, 50.0),
            RangeBucket::Far => (50.0, 70.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RangeBucket::All => "0-70m",
            RangeBucket::Near => "0-30m",
            RangeBucket::Mid => "30-50m",
            RangeBucket::Far => "50-70m",
        }
    }

    pub fn contains(&self, range: f64) -> bool {
        let (lo, hi) = self.bounds();
        range >= lo && range < hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_is_normalized() {
        let b = BoxBEV::new(0.0, 0.0, 1.0, 1.0, 3.0 * std::f64::consts::PI).unwrap();
        assert!((b.yaw - std::f64::consts::PI).abs() < 1e-12);
        let b = BoxBEV::new(0.0, 0.0, 1.0, 1.0, -0.5).unwrap();
        assert!((b.yaw + 0.5).abs() < 1e-12);
    }

    #[test]
    fn class_thresholds() {
        assert_eq!(DetectionClass::Vehicle.iou_threshold(), 0.7);
        assert_eq!(DetectionClass::Pedestrian.iou_threshold(), 0.5);
        assert_eq!(DetectionClass::Bike.iou_threshold(), 0.5);
    }

    #[test]
    fn exactly_six_trainable_classes() {
        assert_eq!(SemanticClass::ALL.len(), 6);
        assert!(SemanticClass::from_u8(6).is_none());
    }
}
