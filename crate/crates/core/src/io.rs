//! Bit-exact persistence: the `RFRM` frame container, `RCKP` parameter
//! checkpoints, P6 image output, and dataset manifests.
//!
//! Frame layout (all little-endian):
//!
//! ```text
//! magic "RFRM" | version u16 | section_count u16
//! section := id u16 | length u32 | payload
//!   1 calibration  K,R,t as f64, image dims u32, range config (f64 table)
//!   2 sweep        timestamp f64, count u32, (r f32, e f32, theta f32, laser u16)*
//!   3 range image  width u32, height u32, point_index u32* (0xFFFFFFFF = empty)
//!   4 camera image height u32, width u32, channels u32, f32*
//!   5 point labels count u32, (class u8, object_id u32)*
//!   6 gt boxes     count u32, (cx cy cz l w h yaw f32, class u8, object_id u32)*
//! ```
//!
//! The range image stores only the per-cell winner indices; channels are
//! rebuilt from the sweep with the exact build arithmetic, so the round trip
//! is bit-identical. Unknown section ids are skipped via their length prefix
//! (forward compatibility); files one version ahead load with a warning.

use crate::error::{CoreError, Result};
use crate::eval::SemanticClass;
use crate::geometry::CameraCalibration;
use crate::nn::FusedModel;
use crate::rangeimage::{LidarReturn, LidarSweep, RangeImage, RangeImageConfig};
use crate::synth::PointLabel;
use crate::tensor::Tensor;
use nalgebra::{Matrix3, Vector3};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

pub const FRAME_MAGIC: &[u8; 4] = b"RFRM";
pub const FRAME_VERSION: u16 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RCKP";
pub const CHECKPOINT_VERSION: u16 = 1;

const SEC_CALIBRATION: u16 = 1;
const SEC_SWEEP: u16 = 2;
const SEC_RANGE_IMAGE: u16 = 3;
const SEC_CAMERA_IMAGE: u16 = 4;
const SEC_POINT_LABELS: u16 = 5;
const SEC_GT_BOXES: u16 = 6;

const NO_POINT: u32 = u32::MAX;

/// Ground-truth 3D box as stored in frames (f32, like all sensor payloads).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub cx: f32,
    pub cy: f32,
    pub cz: f32,
    pub length: f32,
    pub width: f32,
    pub height: f32,
    pub yaw: f32,
    pub class: SemanticClass,
    pub object_id: u32,
}

impl LabeledBox {
    pub fn to_bev(&self) -> crate::eval::BoxBEV {
        crate::eval::BoxBEV::new(
            self.cx as f64,
            self.cy as f64,
            self.length as f64,
            self.width as f64,
            self.yaw as f64,
        )
        .expect("stored boxes are valid")
    }
}

/// One complete sample: sensors, labels and calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub calibration: CameraCalibration,
    pub range_cfg: RangeImageConfig,
    pub sweep: LidarSweep,
    pub range_image: RangeImage,
    /// H x W x 3, values in [0, 1].
    pub camera_image: Tensor<f32>,
    /// Parallel to `sweep.returns`.
    pub point_labels: Vec<PointLabel>,
    pub boxes: Vec<LabeledBox>,
}

// ---------------------------------------------------------------------------
// little-endian encode/decode helpers

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
    section: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CoreError::Truncated {
                path: self.path.to_string(),
                section: format!(
                    "{} (need {} bytes at offset {}, have {})",
                    self.section,
                    n,
                    self.pos,
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

// ---------------------------------------------------------------------------
// frame sections

fn encode_calibration(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::new();
    let cal = &frame.calibration;
    for r in 0..3 {
        for c in 0..3 {
            put_f64(&mut out, cal.k[(r, c)]);
        }
    }
    for r in 0..3 {
        for c in 0..3 {
            put_f64(&mut out, cal.r[(r, c)]);
        }
    }
    for i in 0..3 {
        put_f64(&mut out, cal.t[i]);
    }
    put_u32(&mut out, cal.image_width);
    put_u32(&mut out, cal.image_height);
    let rc = &frame.range_cfg;
    put_u32(&mut out, rc.width as u32);
    put_u32(&mut out, rc.num_lasers() as u32);
    put_f64(&mut out, rc.azimuth_min);
    put_f64(&mut out, rc.azimuth_max);
    for &e in &rc.elevation_table {
        put_f64(&mut out, e);
    }
    out
}

fn decode_calibration(cur: &mut Cursor<'_>) -> Result<(CameraCalibration, RangeImageConfig)> {
    let mut k = Matrix3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            k[(r, c)] = cur.f64()?;
        }
    }
    let mut rm = Matrix3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            rm[(r, c)] = cur.f64()?;
        }
    }
    let t = Vector3::new(cur.f64()?, cur.f64()?, cur.f64()?);
    let iw = cur.u32()?;
    let ih = cur.u32()?;
    let cal = CameraCalibration::new(k, rm, t, iw, ih)?;
    let width = cur.u32()? as usize;
    let lasers = cur.u32()? as usize;
    let az_min = cur.f64()?;
    let az_max = cur.f64()?;
    let mut table = Vec::with_capacity(lasers);
    for _ in 0..lasers {
        table.push(cur.f64()?);
    }
    let rc = RangeImageConfig::new(width, table, az_min, az_max)?;
    Ok((cal, rc))
}

fn encode_sweep(sweep: &LidarSweep) -> Vec<u8> {
    let mut out = Vec::new();
    put_f64(&mut out, sweep.timestamp);
    put_u32(&mut out, sweep.returns.len() as u32);
    for r in &sweep.returns {
        put_f32(&mut out, r.r);
        put_f32(&mut out, r.e);
        put_f32(&mut out, r.theta);
        put_u16(&mut out, r.laser_id);
    }
    out
}

fn decode_sweep(cur: &mut Cursor<'_>) -> Result<LidarSweep> {
    let timestamp = cur.f64()?;
    let count = cur.u32()? as usize;
    let mut returns = Vec::with_capacity(count);
    for _ in 0..count {
        returns.push(LidarReturn {
            r: cur.f32()?,
            e: cur.f32()?,
            theta: cur.f32()?,
            laser_id: cur.u16()?,
        });
    }
    Ok(LidarSweep { returns, timestamp })
}

fn encode_range_image(img: &RangeImage) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, img.width() as u32);
    put_u32(&mut out, img.height() as u32);
    for idx in img.point_index() {
        put_u32(&mut out, idx.unwrap_or(NO_POINT));
    }
    out
}

fn decode_range_image(
    cur: &mut Cursor<'_>,
    sweep: &LidarSweep,
    cfg: &RangeImageConfig,
) -> Result<RangeImage> {
    let w = cur.u32()? as usize;
    let h = cur.u32()? as usize;
    let mut point_index = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let v = cur.u32()?;
        point_index.push(if v == NO_POINT { None } else { Some(v) });
    }
    RangeImage::from_point_index(sweep, cfg, w, h, point_index)
}

fn encode_camera_image(img: &Tensor<f32>) -> Vec<u8> {
    let (h, w, c) = img.dims3();
    let mut out = Vec::new();
    put_u32(&mut out, h as u32);
    put_u32(&mut out, w as u32);
    put_u32(&mut out, c as u32);
    for &v in img.data() {
        put_f32(&mut out, v);
    }
    out
}

fn decode_camera_image(cur: &mut Cursor<'_>) -> Result<Tensor<f32>> {
    let h = cur.u32()? as usize;
    let w = cur.u32()? as usize;
    let c = cur.u32()? as usize;
    let mut data = Vec::with_capacity(h * w * c);
    for _ in 0..h * w * c {
        data.push(cur.f32()?);
    }
    Ok(Tensor::from_vec(&[h, w, c], data))
}

fn encode_point_labels(labels: &[PointLabel]) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, labels.len() as u32);
    for l in labels {
        out.push(l.class as u8);
        put_u32(&mut out, l.object_id);
    }
    out
}

fn decode_point_labels(cur: &mut Cursor<'_>) -> Result<Vec<PointLabel>> {
    let count = cur.u32()? as usize;
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let class = cur.u8()?;
        let class = SemanticClass::from_u8(class).ok_or_else(|| CoreError::Contract(format!(
            "invalid class id {class} in point labels"
        )))?;
        labels.push(PointLabel {
            class,
            object_id: cur.u32()?,
        });
    }
    Ok(labels)
}

fn encode_boxes(boxes: &[LabeledBox]) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, boxes.len() as u32);
    for b in boxes {
        for v in [b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw] {
            put_f32(&mut out, v);
        }
        out.push(b.class as u8);
        put_u32(&mut out, b.object_id);
    }
    out
}

fn decode_boxes(cur: &mut Cursor<'_>) -> Result<Vec<LabeledBox>> {
    let count = cur.u32()? as usize;
    let mut boxes = Vec::with_capacity(count);
    for _ in 0..count {
        let vals: [f32; 7] = [
            cur.f32()?,
            cur.f32()?,
            cur.f32()?,
            cur.f32()?,
            cur.f32()?,
            cur.f32()?,
            cur.f32()?,
        ];
        let class = cur.u8()?;
        let class = SemanticClass::from_u8(class)
            .ok_or_else(|| CoreError::Contract(format!("invalid class id {class} in boxes")))?;
        boxes.push(LabeledBox {
            cx: vals[0],
            cy: vals[1],
            cz: vals[2],
            length: vals[3],
            width: vals[4],
            height: vals[5],
            yaw: vals[6],
            class,
            object_id: cur.u32()?,
        });
    }
    Ok(boxes)
}

// ---------------------------------------------------------------------------
// frame read/write

pub fn frame_to_bytes(frame: &Frame) -> Vec<u8> {
    let sections: Vec<(u16, Vec<u8>)> = vec![
        (SEC_CALIBRATION, encode_calibration(frame)),
        (SEC_SWEEP, encode_sweep(&frame.sweep)),
        (SEC_RANGE_IMAGE, encode_range_image(&frame.range_image)),
        (SEC_CAMERA_IMAGE, encode_camera_image(&frame.camera_image)),
        (SEC_POINT_LABELS, encode_point_labels(&frame.point_labels)),
        (SEC_GT_BOXES, encode_boxes(&frame.boxes)),
    ];
    let mut out = Vec::new();
    out.extend_from_slice(FRAME_MAGIC);
    put_u16(&mut out, FRAME_VERSION);
    put_u16(&mut out, sections.len() as u16);
    for (id, payload) in sections {
        put_u16(&mut out, id);
        put_u32(&mut out, payload.len() as u32);
        out.extend_from_slice(&payload);
    }
    out
}

pub fn write_frame(frame: &Frame, path: &Path) -> Result<()> {
    let bytes = frame_to_bytes(frame);
    std::fs::write(path, bytes).map_err(|e| CoreError::io(path.display().to_string(), e))
}

pub fn frame_from_bytes(bytes: &[u8], path: &str) -> Result<(Frame, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut cur = Cursor {
        buf: bytes,
        pos: 0,
        path,
        section: "header",
    };
    let magic = cur.take(4)?;
    if magic != FRAME_MAGIC {
        return Err(CoreError::BadMagic {
            path: path.to_string(),
            expected: "RFRM",
        });
    }
    let version = cur.u16()?;
    if version < FRAME_VERSION {
        return Err(CoreError::UnsupportedVersion {
            kind: "frame",
            path: path.to_string(),
            found: version,
            min: FRAME_VERSION,
        });
    }
    if version > FRAME_VERSION {
        warnings.push(format!(
            "frame version {version} is newer than supported {FRAME_VERSION}; unknown sections will be skipped"
        ));
    }
    let section_count = cur.u16()?;

    let mut calibration = None;
    let mut sweep = None;
    let mut range_image_raw: Option<Vec<u8>> = None;
    let mut camera_image = None;
    let mut point_labels = None;
    let mut boxes = None;

    for _ in 0..section_count {
        cur.section = "section header";
        let id = cur.u16()?;
        let len = cur.u32()? as usize;
        cur.section = section_name(id);
        let payload = cur.take(len)?;
        let mut sub = Cursor {
            buf: payload,
            pos: 0,
            path,
            section: section_name(id),
        };
        match id {
            SEC_CALIBRATION => calibration = Some(decode_calibration(&mut sub)?),
            SEC_SWEEP => sweep = Some(decode_sweep(&mut sub)?),
            SEC_RANGE_IMAGE => range_image_raw = Some(payload.to_vec()),
            SEC_CAMERA_IMAGE => camera_image = Some(decode_camera_image(&mut sub)?),
            SEC_POINT_LABELS => point_labels = Some(decode_point_labels(&mut sub)?),
            SEC_GT_BOXES => boxes = Some(decode_boxes(&mut sub)?),
            other => {
                warnings.push(format!("skipped unknown section id {other} ({len} bytes)"));
            }
        }
    }
    if !cur.done() {
        warnings.push(format!(
            "{} trailing bytes after the last declared section",
            bytes.len() - cur.pos
        ));
    }

    let missing = |name: &str| CoreError::Contract(format!("frame file is missing the {name} section"));
    let (calibration, range_cfg) = calibration.ok_or_else(|| missing("calibration"))?;
    let sweep = sweep.ok_or_else(|| missing("sweep"))?;
    let raw = range_image_raw.ok_or_else(|| missing("range image"))?;
    let mut sub = Cursor {
        buf: &raw,
        pos: 0,
        path,
        section: "range image",
    };
    let range_image = decode_range_image(&mut sub, &sweep, &range_cfg)?;
    let camera_image = camera_image.ok_or_else(|| missing("camera image"))?;
    let point_labels = point_labels.ok_or_else(|| missing("point labels"))?;
    let boxes = boxes.ok_or_else(|| missing("ground-truth boxes"))?;
    if point_labels.len() != sweep.returns.len() {
        return Err(CoreError::Contract(format!(
            "{} point labels for {} returns",
            point_labels.len(),
            sweep.returns.len()
        )));
    }

    Ok((
        Frame {
            calibration,
            range_cfg,
            sweep,
            range_image,
            camera_image,
            point_labels,
            boxes,
        },
        warnings,
    ))
}

fn section_name(id: u16) -> &'static str {
    match id {
        SEC_CALIBRATION => "calibration",
        SEC_SWEEP => "sweep",
        SEC_RANGE_IMAGE => "range image",
        SEC_CAMERA_IMAGE => "camera image",
        SEC_POINT_LABELS => "point labels",
        SEC_GT_BOXES => "ground-truth boxes",
        _ => "unknown",
    }
}

pub fn read_frame_with_warnings(path: &Path) -> Result<(Frame, Vec<String>)> {
    let bytes =
        std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    frame_from_bytes(&bytes, &path.display().to_string())
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    Ok(read_frame_with_warnings(path)?.0)
}

// ---------------------------------------------------------------------------
// checkpoints

/// Serialized parameters, single precision, with the run's provenance.
pub fn checkpoint_to_bytes(model: &mut FusedModel<f32>, seed: u64, config_digest: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u16(&mut out, CHECKPOINT_VERSION);
    put_u64(&mut out, seed);
    out.extend_from_slice(config_digest);
    let params = model.params_mut();
    put_u32(&mut out, params.len() as u32);
    for p in &params {
        let name = p.name.as_bytes();
        put_u16(&mut out, name.len() as u16);
        out.extend_from_slice(name);
        out.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            put_u32(&mut out, d as u32);
        }
        for &v in p.value.data() {
            put_f32(&mut out, v);
        }
    }
    out
}

pub fn write_checkpoint(
    model: &mut FusedModel<f32>,
    path: &Path,
    seed: u64,
    config_digest: &[u8; 32],
) -> Result<()> {
    let bytes = checkpoint_to_bytes(model, seed, config_digest);
    std::fs::write(path, bytes).map_err(|e| CoreError::io(path.display().to_string(), e))
}

pub struct Checkpoint {
    pub seed: u64,
    pub config_digest: [u8; 32],
    pub tensors: Vec<(String, Tensor<f32>)>,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut cur = Cursor {
        buf: &bytes,
        pos: 0,
        path: &path.display().to_string(),
        section: "checkpoint header",
    };
    let magic = cur.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CoreError::BadMagic {
            path: path.display().to_string(),
            expected: "RCKP",
        });
    }
    let version = cur.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(CoreError::UnsupportedVersion {
            kind: "checkpoint",
            path: path.display().to_string(),
            found: version,
            min: CHECKPOINT_VERSION,
        });
    }
    let seed = cur.u64()?;
    let mut config_digest = [0u8; 32];
    config_digest.copy_from_slice(cur.take(32)?);
    let count = cur.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        cur.section = "checkpoint tensor";
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| CoreError::Contract("checkpoint tensor name is not UTF-8".into()))?;
        let ndim = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(cur.f32()?);
        }
        tensors.push((name, Tensor::from_vec(&shape, data)));
    }
    Ok(Checkpoint {
        seed,
        config_digest,
        tensors,
    })
}

/// Load checkpoint tensors into a model built from the run config; every
/// name must resolve and every shape must match.
pub fn apply_checkpoint(model: &mut FusedModel<f32>, ckpt: &Checkpoint) -> Result<()> {
    let mut by_name: std::collections::HashMap<&str, &Tensor<f32>> = ckpt
        .tensors
        .iter()
        .map(|(n, t)| (n.as_str(), t))
        .collect();
    for p in model.params_mut() {
        let Some(t) = by_name.remove(p.name.as_str()) else {
            return Err(CoreError::CheckpointMismatch(format!(
                "parameter {} missing from checkpoint",
                p.name
            )));
        };
        if t.shape() != p.value.shape() {
            return Err(CoreError::CheckpointMismatch(format!(
                "parameter {} has shape {:?} in the checkpoint but {:?} in the model (network config mismatch)",
                p.name,
                t.shape(),
                p.value.shape()
            )));
        }
        p.value.data_mut().copy_from_slice(t.data());
    }
    if let Some(name) = by_name.keys().next() {
        return Err(CoreError::CheckpointMismatch(format!(
            "checkpoint tensor {name} does not exist in the model"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// images and digests

/// Uncompressed binary PPM (P6).
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(CoreError::Contract(format!(
            "pixel buffer {} does not match {width}x{height}x3",
            rgb.len()
        )));
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let header = format!("P6\n{width} {height}\n255\n");
    f.write_all(header.as_bytes())
        .and_then(|_| f.write_all(rgb))
        .map_err(|e| CoreError::io(path.display().to_string(), e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Frame files of a dataset directory, sorted by name.
pub fn list_dataset(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files = Vec::new();
    let entries =
        std::fs::read_dir(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CoreError::io(dir.display().to_string(), e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("rfrm") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CoreError::Contract(format!(
            "no .rfrm frames found in {}",
            dir.display()
        )));
    }
    Ok(files)
}

// ---------------------------------------------------------------------------
// dataset manifest

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config_digest: String,
    pub seed: u64,
    pub entries: Vec<(String, String)>, // (file name, sha256)
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("version = 1\n");
    out.push_str(&format!("config_digest = {}\n", manifest.config_digest));
    out.push_str(&format!("seed = {}\n", manifest.seed));
    out.push_str(&format!("count = {}\n", manifest.entries.len()));
    for (name, digest) in &manifest.entries {
        out.push_str(&format!("{name} = {digest}\n"));
    }
    std::fs::write(path, out).map_err(|e| CoreError::io(path.display().to_string(), e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut config_digest = String::new();
    let mut seed = 0u64;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CoreError::Config {
                line: i + 1,
                msg: format!("manifest line has no '=': {line}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "version" | "count" => {}
            "config_digest" => config_digest = value.to_string(),
            "seed" => {
                seed = value.parse().map_err(|_| CoreError::Config {
                    line: i + 1,
                    msg: format!("bad seed: {value}"),
                })?
            }
            name => entries.push((name.to_string(), value.to_string())),
        }
    }
    Ok(Manifest {
        config_digest,
        seed,
        entries,
    })
}
