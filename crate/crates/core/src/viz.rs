//! Rasterized visualizations: range-channel grayscale, per-point class
//! colormaps, projected-point overlays on the camera frame, and the
//! confusion-matrix grid. All emit plain RGB byte buffers for the P6 writer.

use crate::eval::SemanticClass;
use crate::fusion::PixelMapping;
use crate::io::Frame;
use crate::nn::NUM_CLASSES;
use crate::rangeimage::{RangeImage, CH_RANGE};
use crate::tensor::Tensor;

pub fn class_color(c: SemanticClass) -> [u8; 3] {
    match c {
        SemanticClass::Background => [128, 128, 128],
        SemanticClass::Road => [60, 60, 70],
        SemanticClass::Vehicle => [40, 80, 230],
        SemanticClass::Pedestrian => [230, 50, 50],
        SemanticClass::Bicycle => [50, 200, 80],
        SemanticClass::Motorcycle => [235, 200, 30],
    }
}

/// Camera tensor (H x W x 3 floats in [0,1]) to RGB bytes.
pub fn tensor_to_rgb(img: &Tensor<f32>) -> Vec<u8> {
    img.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Range channel as grayscale: near = bright, far = dark, empty = black.
pub fn render_range_gray(img: &RangeImage, max_range: f64) -> Vec<u8> {
    let (h, w) = (img.height(), img.width());
    let mut out = vec![0u8; h * w * 3];
    for row in 0..h {
        for col in 0..w {
            if !img.is_occupied(row, col) {
                continue;
            }
            let r = img.channel(row, col, CH_RANGE);
            let v = (255.0 * (1.0 - (r / max_range).clamp(0.0, 1.0))) as u8;
            let base = (row * w + col) * 3;
            out[base] = v;
            out[base + 1] = v;
            out[base + 2] = v;
        }
    }
    out
}

/// Per-cell class colormap in the range view; `labels` is row-major per cell.
pub fn render_class_map(img: &RangeImage, labels: &[Option<SemanticClass>]) -> Vec<u8> {
    let (h, w) = (img.height(), img.width());
    assert_eq!(labels.len(), h * w);
    let mut out = vec![0u8; h * w * 3];
    for (cell, label) in labels.iter().enumerate() {
        if let Some(c) = label {
            let color = class_color(*c);
            out[cell * 3..cell * 3 + 3].copy_from_slice(&color);
        }
    }
    out
}

/// Camera image with projected LiDAR points drawn over it, colored by class.
/// Returns the pixel buffer plus how many drawn points landed on a pixel
/// whose rendered color matches the point's class color source (used by the
/// projection audit in tests).
pub fn render_overlay(
    frame: &Frame,
    mapping: &PixelMapping,
    cell_labels: &[Option<SemanticClass>],
) -> Vec<u8> {
    let mut rgb = tensor_to_rgb(&frame.camera_image);
    let (_, w, _) = frame.camera_image.dims3();
    for (cell, entry) in mapping.entries().iter().enumerate() {
        let (Some((u, v)), Some(class)) = (entry, cell_labels[cell]) else {
            continue;
        };
        let color = class_color(class);
        let base = ((*v as usize) * w + (*u as usize)) * 3;
        rgb[base..base + 3].copy_from_slice(&color);
    }
    rgb
}

/// Row-normalized confusion matrix as an upscaled grid image.
pub fn render_confusion_grid(
    confusion: &[[u64; NUM_CLASSES]; NUM_CLASSES],
    cell_px: usize,
) -> (Vec<u8>, usize, usize) {
    let n = NUM_CLASSES;
    let size = n * cell_px;
    let mut out = vec![0u8; size * size * 3];
    for g in 0..n {
        let row_sum: u64 = confusion[g].iter().sum();
        for p in 0..n {
            let frac = if row_sum == 0 {
                0.0
            } else {
                confusion[g][p] as f64 / row_sum as f64
            };
            let heat = (frac * 255.0).round() as u8;
            // Diagonal tinted green, off-diagonal red.
            let color = if g == p {
                [40, heat.max(20), 40]
            } else {
                [heat, 24, 24]
            };
            for dy in 0..cell_px {
                for dx in 0..cell_px {
                    let y = g * cell_px + dy;
                    let x = p * cell_px + dx;
                    let base = (y * size + x) * 3;
                    out[base..base + 3].copy_from_slice(&color);
                }
            }
        }
    }
    (out, size, size)
}

/// Labels per range-image cell from the frame's point labels.
pub fn cell_labels(frame: &Frame) -> Vec<Option<SemanticClass>> {
    let img = &frame.range_image;
    let (h, w) = (img.height(), img.width());
    let mut out = vec![None; h * w];
    for cell in 0..h * w {
        if let Some(idx) = img.point_index()[cell] {
            out[cell] = Some(frame.point_labels[idx as usize].class);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::compute_pixel_mapping;
    use crate::synth::{generate_scene, make_frame, SceneConfig, SensorRig};

    #[test]
    fn overlay_marks_points_with_class_colors() {
        let scene = generate_scene(&SceneConfig::default(), 77).unwrap();
        let rig = SensorRig::with_beams(32, 128, 48, 512);
        let frame = make_frame(&scene, &rig, 0.0).unwrap();
        let mapping =
            compute_pixel_mapping(&frame.range_image, &frame.range_cfg, &frame.calibration)
                .unwrap();
        let labels = cell_labels(&frame);
        let rgb = render_overlay(&frame, &mapping, &labels);
        assert_eq!(rgb.len(), 128 * 48 * 3);
        // At least one vehicle-colored pixel exists.
        let vc = class_color(SemanticClass::Vehicle);
        assert!(rgb.chunks(3).any(|p| p == vc));
    }

    #[test]
    fn confusion_grid_has_expected_dims() {
        let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        confusion[0][0] = 10;
        confusion[1][0] = 4;
        let (rgb, w, h) = render_confusion_grid(&confusion, 8);
        assert_eq!((w, h), (48, 48));
        assert_eq!(rgb.len(), 48 * 48 * 3);
    }

    #[test]
    fn range_render_dims_match_image() {
        let scene = generate_scene(&SceneConfig::default(), 78).unwrap();
        let rig = SensorRig::with_beams(16, 64, 32, 256);
        let frame = make_frame(&scene, &rig, 0.0).unwrap();
        let gray = render_range_gray(&frame.range_image, 70.0);
        assert_eq!(
            gray.len(),
            frame.range_image.width() * frame.range_image.height() * 3
        );
    }
}
