//! LiDAR-cell to camera-pixel mapping and the feature warp.
//!
//! The mapping is computed once per frame at full camera resolution, then
//! divided down to the feature-map scale. Warping is a nearest-neighbor
//! gather (one feature row copied per occupied, in-frustum cell); its adjoint
//! is the matching scatter-add, accumulated in fixed cell order so the result
//! does not depend on scheduling.
//!
//! Rounding is to the nearest integer with ties away from zero, both for the
//! full-resolution projection and for the feature-scale division.

use crate::error::{CoreError, Result};
use crate::geometry::{project_to_camera, spherical_to_cartesian, CameraCalibration, SphericalCoord};
use crate::rangeimage::{RangeImage, RangeImageConfig, CH_AZIMUTH, CH_RANGE};
use crate::tensor::{Scalar, Tensor};

/// Per-cell optional camera pixel, plus the scale the pixels are expressed at
/// (1,1 = full camera resolution) and the pixel bounds at that scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMapping {
    /// Row-major over the range image: `entries[row * width + col]`.
    entries: Vec<Option<(u32, u32)>>,
    width: usize,
    height: usize,
    scale: (f64, f64),
    bounds: (usize, usize), // (max_u, max_v) exclusive, at `scale`
}

impl PixelMapping {
    /// Mapping with no present entries (the LiDAR-only mode).
    pub fn all_absent(width: usize, height: usize) -> Self {
        PixelMapping {
            entries: vec![None; width * height],
            width,
            height,
            scale: (1.0, 1.0),
            bounds: (0, 0),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> (f64, f64) {
        self.scale
    }

    pub fn bounds(&self) -> (usize, usize) {
        self.bounds
    }

    pub fn entries(&self) -> &[Option<(u32, u32)>] {
        &self.entries
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> Option<(u32, u32)> {
        self.entries[row * self.width + col]
    }

    pub fn present_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// Dense H x W x C feature map tagged with its scale relative to the source
/// camera image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub tensor: Tensor<T>,
    pub scale: (f64, f64),
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(tensor: Tensor<T>, scale: (f64, f64)) -> Self {
        debug_assert_eq!(tensor.shape().len(), 3);
        FeatureMap { tensor, scale }
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[2]
    }
}

#[inline]
fn round_ties_away(v: f64) -> f64 {
    v.round() // f64::round is round-half-away-from-zero
}

/// Project every occupied cell's 3D point into the camera. Entries are
/// full-resolution integer pixels; unoccupied cells, behind-camera points and
/// out-of-bounds projections stay absent.
pub fn compute_pixel_mapping(
    img: &RangeImage,
    cfg: &RangeImageConfig,
    cal: &CameraCalibration,
) -> Result<PixelMapping> {
    if img.width() != cfg.width || img.height() != cfg.num_lasers() {
        return Err(CoreError::Contract(format!(
            "range image {}x{} does not match config {}x{}",
            img.width(),
            img.height(),
            cfg.width,
            cfg.num_lasers()
        )));
    }
    let row_phi = cfg.row_elevations();
    let (w, h) = (img.width(), img.height());
    let mut entries = vec![None; w * h];
    for row in 0..h {
        let phi = row_phi[row];
        for col in 0..w {
            if !img.is_occupied(row, col) {
                continue;
            }
            let r = img.channel(row, col, CH_RANGE);
            let theta = img.channel(row, col, CH_AZIMUTH);
            let s = SphericalCoord::new(r, theta, phi)?;
            let p = spherical_to_cartesian(s);
            if let Some(px) = project_to_camera(p, cal) {
                let u = round_ties_away(px.u);
                let v = round_ties_away(px.v);
                if u >= 0.0
                    && v >= 0.0
                    && (u as u32) < cal.image_width
                    && (v as u32) < cal.image_height
                {
                    entries[row * w + col] = Some((u as u32, v as u32));
                }
            }
        }
    }
    Ok(PixelMapping {
        entries,
        width: w,
        height: h,
        scale: (1.0, 1.0),
        bounds: (cal.image_width as usize, cal.image_height as usize),
    })
}

/// Divide pixel coordinates down to a coarser feature-map scale. Entries that
/// round outside the scaled bounds become absent.
pub fn rescale_mapping(m: &PixelMapping, s_x: f64, s_y: f64) -> Result<PixelMapping> {
    if !(s_x >= 1.0 && s_y >= 1.0) {
        return Err(CoreError::Contract(format!(
            "scale factors must be >= 1, got ({s_x}, {s_y})"
        )));
    }
    let new_bounds = (
        (m.bounds.0 as f64 / s_x).floor() as usize,
        (m.bounds.1 as f64 / s_y).floor() as usize,
    );
    let entries = m
        .entries
        .iter()
        .map(|e| {
            e.and_then(|(u, v)| {
                let nu = round_ties_away(u as f64 / s_x);
                let nv = round_ties_away(v as f64 / s_y);
                if (nu as usize) < new_bounds.0 && (nv as usize) < new_bounds.1 {
                    Some((nu as u32, nv as u32))
                } else {
                    None
                }
            })
        })
        .collect();
    Ok(PixelMapping {
        entries,
        width: m.width,
        height: m.height,
        scale: (m.scale.0 * s_x, m.scale.1 * s_y),
        bounds: new_bounds,
    })
}

/// Gather camera features into the range view: cell (row, col) with entry
/// (u, v) receives `f[v, u, :]`; absent cells receive zeros.
pub fn warp_features<T: Scalar>(f: &FeatureMap<T>, m: &PixelMapping) -> Result<FeatureMap<T>> {
    if f.scale != m.scale() {
        return Err(CoreError::Contract(format!(
            "feature map scale {:?} does not match mapping scale {:?}",
            f.scale,
            m.scale()
        )));
    }
    let c = f.channels();
    let (fw, fh) = (f.width(), f.height());
    let mut out = Tensor::<T>::zeros(&[m.height(), m.width(), c]);
    let data = out.data_mut();
    let src = f.tensor.data();
    for (cell, entry) in m.entries().iter().enumerate() {
        if let Some((u, v)) = *entry {
            let (u, v) = (u as usize, v as usize);
            if u >= fw || v >= fh {
                return Err(CoreError::Contract(format!(
                    "mapping entry ({u}, {v}) outside feature map {fw}x{fh}"
                )));
            }
            let s = (v * fw + u) * c;
            data[cell * c..(cell + 1) * c].copy_from_slice(&src[s..s + c]);
        }
    }
    Ok(FeatureMap::new(out, (1.0, 1.0)))
}

/// Adjoint of [`warp_features`]: scatter-add range-view cotangents back onto
/// camera-feature positions. A pixel referenced by k cells accumulates k
/// contributions, in cell order.
pub fn warp_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    m: &PixelMapping,
    camera_shape: (usize, usize, usize),
) -> Result<Tensor<T>> {
    let (gh, gw, gc) = grad_out.dims3();
    if gh != m.height() || gw != m.width() {
        return Err(CoreError::Contract(format!(
            "cotangent {gh}x{gw} does not match mapping {}x{}",
            m.height(),
            m.width()
        )));
    }
    let (ch, cw, cc) = camera_shape;
    if cc != gc {
        return Err(CoreError::Contract(format!(
            "channel mismatch: cotangent {gc}, camera {cc}"
        )));
    }
    let mut grad_f = Tensor::<T>::zeros(&[ch, cw, cc]);
    let dst = grad_f.data_mut();
    let src = grad_out.data();
    for (cell, entry) in m.entries().iter().enumerate() {
        if let Some((u, v)) = *entry {
            let (u, v) = (u as usize, v as usize);
            if u >= cw || v >= ch {
                return Err(CoreError::Contract(format!(
                    "mapping entry ({u}, {v}) outside camera shape {cw}x{ch}"
                )));
            }
            let d = (v * cw + u) * cc;
            let s = cell * cc;
            for k in 0..cc {
                dst[d + k] += src[s + k];
            }
        }
    }
    Ok(grad_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_mapping(rng: &mut ChaCha8Rng, w: usize, h: usize, fw: usize, fh: usize) -> PixelMapping {
        let entries = (0..w * h)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    Some((rng.gen_range(0..fw as u32), rng.gen_range(0..fh as u32)))
                } else {
                    None
                }
            })
            .collect();
        PixelMapping {
            entries,
            width: w,
            height: h,
            scale: (1.0, 1.0),
            bounds: (fw, fh),
        }
    }

    fn random_features(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap<f64> {
        let data = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMap::new(Tensor::from_vec(&[h, w, c], data), (1.0, 1.0))
    }

    #[test]
    fn rescale_examples() {
        let m = PixelMapping {
            entries: vec![Some((100, 37))],
            width: 1,
            height: 1,
            scale: (1.0, 1.0),
            bounds: (1920, 640),
        };
        let r = rescale_mapping(&m, 8.0, 8.0).unwrap();
        assert_eq!(r.entry(0, 0), Some((13, 5))); // 12.5 ties away, 4.625 rounds up
        assert_eq!(r.scale(), (8.0, 8.0));
        assert_eq!(r.bounds(), (240, 80));

        let id = rescale_mapping(&m, 1.0, 1.0).unwrap();
        assert_eq!(id.entries(), m.entries());
    }

    #[test]
    fn rescale_drops_rounded_out_of_bounds() {
        // u = W-1 = 1919 at s=8 rounds to 240 which equals the scaled width.
        let m = PixelMapping {
            entries: vec![Some((1919, 0))],
            width: 1,
            height: 1,
            scale: (1.0, 1.0),
            bounds: (1920, 640),
        };
        let r = rescale_mapping(&m, 8.0, 8.0).unwrap();
        assert_eq!(r.entry(0, 0), None);
    }

    #[test]
    fn warp_absent_is_zero_and_single_entry_copies() {
        let f = FeatureMap::new(
            Tensor::<f64>::from_vec(&[2, 2, 3], vec![1.0; 12]),
            (1.0, 1.0),
        );
        let mut m = PixelMapping::all_absent(4, 2);
        m.bounds = (2, 2);
        let out = warp_features(&f, &m).unwrap();
        assert!(out.tensor.data().iter().all(|&v| v == 0.0));

        m.entries[5] = Some((1, 0));
        let out = warp_features(&f, &m).unwrap();
        let nonzero: Vec<_> = out.tensor.data().iter().filter(|&&v| v != 0.0).collect();
        assert_eq!(nonzero.len(), 3);
        assert_eq!(out.tensor.at3(1, 1, 0), 1.0);
    }

    #[test]
    fn warp_matches_per_cell_gather_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (w, h, fw, fh, c) = (13, 7, 9, 5, 4);
            let m = random_mapping(&mut rng, w, h, fw, fh);
            let f = random_features(&mut rng, fh, fw, c);
            let out = warp_features(&f, &m).unwrap();
            for row in 0..h {
                for col in 0..w {
                    for k in 0..c {
                        let expect = match m.entry(row, col) {
                            Some((u, v)) => f.tensor.at3(v as usize, u as usize, k),
                            None => 0.0,
                        };
                        assert_eq!(out.tensor.at3(row, col, k), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn backward_accumulates_shared_pixels() {
        let mut m = PixelMapping::all_absent(3, 1);
        m.bounds = (2, 2);
        m.entries[0] = Some((1, 1));
        m.entries[2] = Some((1, 1));
        let grad_out = Tensor::<f64>::from_vec(&[1, 3, 1], vec![1.0, 5.0, 1.0]);
        let g = warp_backward(&grad_out, &m, (2, 2, 1)).unwrap();
        assert_eq!(g.at3(1, 1, 0), 2.0);
        assert_eq!(g.at3(0, 0, 0), 0.0);
    }

    #[test]
    fn adjoint_identity_holds_in_double() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let (w, h, fw, fh, c) = (21, 6, 16, 11, 5);
            let m = random_mapping(&mut rng, w, h, fw, fh);
            let x = random_features(&mut rng, fh, fw, c);
            let y: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = Tensor::from_vec(&[h, w, c], y);

            let wx = warp_features(&x, &m).unwrap();
            let wty = warp_backward(&y, &m, (fh, fw, c)).unwrap();

            let lhs: f64 = wx
                .tensor
                .data()
                .iter()
                .zip(y.data())
                .map(|(a, b)| a * b)
                .sum();
            let rhs: f64 = x
                .tensor
                .data()
                .iter()
                .zip(wty.data())
                .map(|(a, b)| a * b)
                .sum();
            let denom = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!(
                ((lhs - rhs) / denom).abs() < 1e-10,
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn warp_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (w, h, fw, fh, c) = (11, 5, 8, 6, 3);
        let m = random_mapping(&mut rng, w, h, fw, fh);
        let f = random_features(&mut rng, fh, fw, c);
        let g = random_features(&mut rng, fh, fw, c);
        let (a, b) = (2.5_f64, -0.75_f64);
        let combo = FeatureMap::new(
            Tensor::from_vec(
                &[fh, fw, c],
                f.tensor
                    .data()
                    .iter()
                    .zip(g.tensor.data())
                    .map(|(x, y)| a * x + b * y)
                    .collect(),
            ),
            (1.0, 1.0),
        );
        let lhs = warp_features(&combo, &m).unwrap();
        let wf = warp_features(&f, &m).unwrap();
        let wg = warp_features(&g, &m).unwrap();
        for i in 0..lhs.tensor.len() {
            let expect = a * wf.tensor.data()[i] + b * wg.tensor.data()[i];
            assert!((lhs.tensor.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_mismatch_is_contract_error() {
        let f = FeatureMap::new(Tensor::<f64>::zeros(&[2, 2, 1]), (8.0, 8.0));
        let m = PixelMapping::all_absent(2, 2);
        assert!(matches!(
            warp_features(&f, &m),
            Err(CoreError::Contract(_))
        ));
    }
}
