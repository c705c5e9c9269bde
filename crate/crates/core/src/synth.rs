//! Deterministic synthetic world: labeled box scenes on a ground plane, a
//! raycast multi-beam LiDAR, and a flat-shaded camera render sharing one
//! calibration.
//!
//! Albedos are class-correlated with per-object jitter (vehicles blue-ish,
//! pedestrians red-ish, bicycles green-ish, motorcycles yellow-ish) while the
//! scalar reflectance seen by the LiDAR is the albedo mean, which the classes
//! share almost exactly. Color therefore carries class information that the
//! LiDAR channels do not.

use crate::error::{CoreError, Result};
use crate::eval::{rotated_iou, BoxBEV, SemanticClass};
use crate::geometry::{CameraCalibration, Point3};
use crate::parallel::map_indexed;
use crate::rangeimage::{LidarReturn, LidarSweep};
use crate::tensor::Tensor;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Upright 3D box (no roll/pitch).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn to_bev(&self) -> BoxBEV {
        BoxBEV::new(self.cx, self.cy, self.length, self.width, self.yaw)
            .expect("scene boxes are valid")
    }

    /// Entry distance of a ray with this box, if any.
    fn intersect_ray(&self, origin: &Point3, dir: &Point3) -> Option<f64> {
        // Transform into the box frame (translate, rotate by -yaw).
        let (c, s) = (self.yaw.cos(), self.yaw.sin());
        let ox = origin.x - self.cx;
        let oy = origin.y - self.cy;
        let oz = origin.z - self.cz;
        let o = (c * ox + s * oy, -s * ox + c * oy, oz);
        let d = (
            c * dir.x + s * dir.y,
            -s * dir.x + c * dir.y,
            dir.z,
        );
        let half = (self.length / 2.0, self.width / 2.0, self.height / 2.0);

        let mut t0 = 1e-6_f64;
        let mut t1 = f64::INFINITY;
        for ((o, d), h) in [(o.0, d.0), (o.1, d.1), (o.2, d.2)]
            .into_iter()
            .zip([half.0, half.1, half.2])
        {
            if d.abs() < 1e-12 {
                if o.abs() > h {
                    return None;
                }
                continue;
            }
            let (mut near, mut far) = ((-h - o) / d, (h - o) / d);
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub box3d: Box3D,
    pub class: SemanticClass,
    pub albedo: [f64; 3],
    pub reflectance: f64,
    /// 1-based; 0 means ground.
    pub id: u32,
}

/// Requested object counts for one range band.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BandCounts {
    pub vehicles: usize,
    pub pedestrians: usize,
    pub bicycles: usize,
    pub motorcycles: usize,
}

impl BandCounts {
    pub fn uniform(n: usize) -> Self {
        BandCounts {
            vehicles: n,
            pedestrians: n,
            bicycles: n,
            motorcycles: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// Counts for the 5-28 m, 31-48 m and 52-68 m bands.
    pub near: BandCounts,
    pub mid: BandCounts,
    pub far: BandCounts,
    pub background_objects: usize,
    pub road_half_width: f64,
    /// Standard deviation of optional Gaussian range noise in meters
    /// (0 disables it).
    pub range_noise_std: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            near: BandCounts::uniform(1),
            mid: BandCounts::uniform(1),
            far: BandCounts::uniform(1),
            background_objects: 6,
            road_half_width: 7.0,
            range_noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    /// Convex polygon on the ground plane (counter-clockwise).
    pub road_polygon: Vec<(f64, f64)>,
    pub road_albedo: [f64; 3],
    pub ground_albedo: [f64; 3],
    pub sky_albedo: [f64; 3],
    pub seed: u64,
}

impl Scene {
    pub fn road_contains(&self, x: f64, y: f64) -> bool {
        let poly = &self.road_polygon;
        for i in 0..poly.len() {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % poly.len()];
            if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0.0 {
                return false;
            }
        }
        true
    }
}

/// What a ray hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub class: SemanticClass,
    pub object_id: u32,
    pub albedo: [f64; 3],
    pub reflectance: f64,
}

/// Nearest intersection among the ground plane and all object boxes.
pub fn cast_ray(scene: &Scene, origin: &Point3, dir: &Point3, max_range: f64) -> Option<RayHit> {
    let mut best: Option<RayHit> = None;
    // Ground plane z = 0.
    if dir.z < -1e-12 {
        let t = -origin.z / dir.z;
        if t > 1e-6 && t <= max_range {
            let x = origin.x + t * dir.x;
            let y = origin.y + t * dir.y;
            let on_road = scene.road_contains(x, y);
            best = Some(RayHit {
                t,
                class: if on_road {
                    SemanticClass::Road
                } else {
                    SemanticClass::Background
                },
                object_id: 0,
                albedo: if on_road {
                    scene.road_albedo
                } else {
                    scene.ground_albedo
                },
                reflectance: mean3(if on_road {
                    scene.road_albedo
                } else {
                    scene.ground_albedo
                }),
            });
        }
    }
    for obj in &scene.objects {
        if let Some(t) = obj.box3d.intersect_ray(origin, dir) {
            if t <= max_range && best.map_or(true, |b| t < b.t) {
                best = Some(RayHit {
                    t,
                    class: obj.class,
                    object_id: obj.id,
                    albedo: obj.albedo,
                    reflectance: obj.reflectance,
                });
            }
        }
    }
    best
}

fn mean3(v: [f64; 3]) -> f64 {
    (v[0] + v[1] + v[2]) / 3.0
}

/// The simulated sensor pair: a multi-beam LiDAR and a pinhole camera with a
/// 90 degree horizontal FOV looking along the LiDAR +x axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRig {
    pub lidar_origin: Point3,
    /// Per-laser elevations, radians, descending (row order).
    pub elevation_table: Vec<f64>,
    /// Azimuth span swept by the sensor.
    pub sweep_azimuth: (f64, f64),
    /// Firings per laser per sweep, uniform over the span.
    pub sweep_columns: usize,
    pub max_range: f64,
    pub calibration: CameraCalibration,
}

/// Rotation mapping LiDAR frame (x fwd, y left, z up) to camera frame
/// (x right, y down, z forward).
pub fn forward_camera_rotation() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

impl SensorRig {
    /// 64 beams over a 30 degree vertical FOV (+5 to -25 degrees), full
    /// 360 degree sweep, and a camera mounted just below/ahead of the LiDAR.
    pub fn standard(camera_width: u32, camera_height: u32, sweep_columns: usize) -> Self {
        Self::with_beams(64, camera_width, camera_height, sweep_columns)
    }

    pub fn with_beams(
        beams: usize,
        camera_width: u32,
        camera_height: u32,
        sweep_columns: usize,
    ) -> Self {
        let elevation_table: Vec<f64> = (0..beams)
            .map(|i| (5.0 - 30.0 * i as f64 / (beams as f64 - 1.0)).to_radians())
            .collect();
        let lidar_origin = Point3::new(0.0, 0.0, 1.8);
        let r = forward_camera_rotation();
        // Camera center 0.1 m ahead and 0.3 m below the LiDAR, expressed in
        // the LiDAR frame (returns and projections live in that frame; the
        // world scene only enters through ray origins).
        let center_lidar = Vector3::new(0.1, 0.0, -0.3);
        let t = -(r * center_lidar);
        let w = camera_width as f64;
        let h = camera_height as f64;
        let fx = w / 2.0; // 90 degree horizontal FOV
        let fy = (h / 2.0) / (15.0f64).to_radians().tan(); // 30 degree vertical
        let calibration = CameraCalibration::from_pinhole(
            fx,
            fy,
            (w - 1.0) / 2.0,
            (h - 1.0) / 2.0,
            r,
            t,
            camera_width,
            camera_height,
        )
        .expect("rig calibration is valid");
        SensorRig {
            lidar_origin,
            elevation_table,
            sweep_azimuth: (-std::f64::consts::PI, std::f64::consts::PI),
            sweep_columns,
            max_range: 120.0,
            calibration,
        }
    }
}

/// Ground-truth class and source object for one LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLabel {
    pub class: SemanticClass,
    pub object_id: u32,
}

/// Casts one ray per (laser, azimuth step); misses produce no return. The
/// returned labels are parallel to `sweep.returns`.
pub fn raycast_lidar(scene: &Scene, rig: &SensorRig) -> (LidarSweep, Vec<PointLabel>) {
    let cols = rig.sweep_columns;
    let lasers = rig.elevation_table.len();
    let (az0, az1) = rig.sweep_azimuth;
    let daz = (az1 - az0) / cols as f64;

    let hits: Vec<Option<(LidarReturn, PointLabel)>> = map_indexed(lasers * cols, |idx| {
        let laser = idx / cols;
        let col = idx % cols;
        let phi = rig.elevation_table[laser];
        let theta = az0 + (col as f64 + 0.5) * daz;
        let dir = Point3::new(
            phi.cos() * theta.cos(),
            phi.cos() * theta.sin(),
            phi.sin(),
        );
        cast_ray(scene, &rig.lidar_origin, &dir, rig.max_range).map(|hit| {
            (
                LidarReturn {
                    r: hit.t as f32,
                    e: hit.reflectance.clamp(0.0, 1.0) as f32,
                    theta: theta as f32,
                    laser_id: laser as u16,
                },
                PointLabel {
                    class: hit.class,
                    object_id: hit.object_id,
                },
            )
        })
    });

    let mut returns = Vec::new();
    let mut labels = Vec::new();
    for h in hits.into_iter().flatten() {
        returns.push(h.0);
        labels.push(h.1);
    }
    (
        LidarSweep {
            returns,
            timestamp: 0.0,
        },
        labels,
    )
}

/// Adds Gaussian range noise (std in meters) in place, deterministically from
/// the seed. Disabled when `std <= 0`.
pub fn apply_range_noise(sweep: &mut LidarSweep, std: f64, seed: u64) {
    if std <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_6531u64);
    for ret in &mut sweep.returns {
        // Box-Muller from two uniforms.
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        let noisy = (ret.r as f64 + g * std).max(0.05);
        ret.r = noisy as f32;
    }
}

/// Flat-shaded per-pixel raycast of the same scene from the camera pose.
pub fn render_camera(scene: &Scene, rig: &SensorRig) -> Tensor<f32> {
    let cal = &rig.calibration;
    let (w, h) = (cal.image_width as usize, cal.image_height as usize);
    let c = cal.center_in_lidar();
    let origin = Point3::new(
        c.x + rig.lidar_origin.x,
        c.y + rig.lidar_origin.y,
        c.z + rig.lidar_origin.z,
    );
    let rt = cal.r.transpose();
    let (fx, fy, cx, cy) = (cal.fx(), cal.fy(), cal.cx(), cal.cy());
    let sky = scene.sky_albedo;

    let rows: Vec<Vec<f32>> = map_indexed(h, |v| {
        let mut row = Vec::with_capacity(w * 3);
        for u in 0..w {
            let dir_cam = Vector3::new((u as f64 - cx) / fx, (v as f64 - cy) / fy, 1.0);
            let d = rt * dir_cam;
            let dir = Point3::new(d.x, d.y, d.z);
            let color = match cast_ray(scene, &origin, &dir, rig.max_range) {
                Some(hit) => hit.albedo,
                None => sky,
            };
            row.extend_from_slice(&[color[0] as f32, color[1] as f32, color[2] as f32]);
        }
        row
    });
    let mut data = Vec::with_capacity(h * w * 3);
    for r in rows {
        data.extend_from_slice(&r);
    }
    Tensor::from_vec(&[h, w, 3], data)
}

/// Stable per-item seed derivation (splitmix64), used to give every frame of
/// a dataset its own stream from one master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Full frame assembly: raycast the LiDAR, apply optional range noise, crop
/// the range view to the camera FOV, build the range image, and render the
/// camera — the per-frame step behind dataset generation.
pub fn make_frame(scene: &Scene, rig: &SensorRig, noise_std: f64) -> Result<crate::io::Frame> {
    let (mut sweep, labels) = raycast_lidar(scene, rig);
    apply_range_noise(&mut sweep, noise_std, scene.seed);
    let full = crate::rangeimage::RangeImageConfig::new(
        rig.sweep_columns,
        rig.elevation_table.clone(),
        rig.sweep_azimuth.0,
        rig.sweep_azimuth.1,
    )?;
    let cfg = crate::rangeimage::crop_to_camera_fov(&full, &rig.calibration)?;
    let range_image = crate::rangeimage::build_range_image(&sweep, &cfg)?;
    let camera_image = render_camera(scene, rig);
    let boxes = scene
        .objects
        .iter()
        .map(|o| crate::io::LabeledBox {
            cx: o.box3d.cx as f32,
            cy: o.box3d.cy as f32,
            cz: o.box3d.cz as f32,
            length: o.box3d.length as f32,
            width: o.box3d.width as f32,
            height: o.box3d.height as f32,
            yaw: o.box3d.yaw as f32,
            class: o.class,
            object_id: o.id,
        })
        .collect();
    Ok(crate::io::Frame {
        calibration: rig.calibration.clone(),
        range_cfg: cfg,
        sweep,
        range_image,
        camera_image,
        point_labels: labels,
        boxes,
    })
}

const BAND_NEAR: (f64, f64) = (5.0, 28.0);
const BAND_MID: (f64, f64) = (31.0, 48.0);
const BAND_FAR: (f64, f64) = (52.0, 68.0);

fn class_dims(class: SemanticClass, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let j = |rng: &mut ChaCha8Rng, b: f64, s: f64| b + rng.gen_range(-s..s);
    match class {
        SemanticClass::Vehicle => (
            j(rng, 4.5, 0.4),
            j(rng, 1.9, 0.15),
            j(rng, 1.6, 0.1),
        ),
        SemanticClass::Pedestrian => (
            j(rng, 0.5, 0.08),
            j(rng, 0.5, 0.08),
            j(rng, 1.7, 0.15),
        ),
        SemanticClass::Bicycle => (
            j(rng, 1.8, 0.15),
            j(rng, 0.45, 0.05),
            j(rng, 1.25, 0.1),
        ),
        SemanticClass::Motorcycle => (
            j(rng, 2.2, 0.15),
            j(rng, 0.85, 0.1),
            j(rng, 1.35, 0.1),
        ),
        _ => unreachable!("only object classes are placed"),
    }
}

fn class_albedo(class: SemanticClass, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let base = match class {
        SemanticClass::Vehicle => [0.15, 0.25, 0.65],
        SemanticClass::Pedestrian => [0.65, 0.20, 0.20],
        SemanticClass::Bicycle => [0.20, 0.60, 0.25],
        SemanticClass::Motorcycle => [0.55, 0.45, 0.10],
        _ => [0.45, 0.45, 0.45],
    };
    let mut out = [0.0; 3];
    for (o, b) in out.iter_mut().zip(base) {
        *o = (b + rng.gen_range(-0.06..0.06f64)).clamp(0.02, 0.98);
    }
    out
}

/// Deterministic rejection-sampled scene. Objects are placed inside the
/// camera FOV wedge, never overlapping in BEV (with a 0.4 m margin).
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let road_jitter: f64 = rng.gen_range(-0.03..0.03);
    let road_albedo = [0.30 + road_jitter, 0.30 + road_jitter, 0.32 + road_jitter];
    let ground_albedo = [0.42, 0.40, 0.36];
    let sky_albedo = [0.65, 0.80, 0.95];
    let hw = config.road_half_width;
    let road_polygon = vec![(1.0, -hw), (95.0, -hw), (95.0, hw), (1.0, hw)];

    let mut objects: Vec<SceneObject> = Vec::new();
    let place = |rng: &mut ChaCha8Rng,
                     objects: &mut Vec<SceneObject>,
                     class: SemanticClass,
                     band: (f64, f64),
                     count: usize|
     -> Result<()> {
        for _ in 0..count {
            let mut placed = false;
            for _attempt in 0..10_000 {
                let range = rng.gen_range(band.0..band.1);
                let azimuth = rng.gen_range(-0.72..0.72f64); // inside the 90 deg wedge
                let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                let (l, w, h) = class_dims(class, rng);
                let cand = Box3D {
                    cx: range * azimuth.cos(),
                    cy: range * azimuth.sin(),
                    cz: h / 2.0,
                    length: l,
                    width: w,
                    height: h,
                    yaw,
                };
                let inflated = |b: &Box3D| {
                    BoxBEV::new(b.cx, b.cy, b.length + 0.8, b.width + 0.8, b.yaw).unwrap()
                };
                if objects
                    .iter()
                    .all(|o| rotated_iou(&inflated(&o.box3d), &inflated(&cand)) == 0.0)
                {
                    let albedo = class_albedo(class, rng);
                    objects.push(SceneObject {
                        box3d: cand,
                        class,
                        albedo,
                        reflectance: mean3(albedo),
                        id: objects.len() as u32 + 1,
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(CoreError::SceneConfig(format!(
                    "could not place a {} in band {:?} after 10000 attempts",
                    class.name(),
                    band
                )));
            }
        }
        Ok(())
    };

    for (band, counts) in [
        (BAND_NEAR, config.near),
        (BAND_MID, config.mid),
        (BAND_FAR, config.far),
    ] {
        place(&mut rng, &mut objects, SemanticClass::Vehicle, band, counts.vehicles)?;
        place(&mut rng, &mut objects, SemanticClass::Pedestrian, band, counts.pedestrians)?;
        place(&mut rng, &mut objects, SemanticClass::Bicycle, band, counts.bicycles)?;
        place(&mut rng, &mut objects, SemanticClass::Motorcycle, band, counts.motorcycles)?;
    }

    // Background clutter: boxes beside the road, any size, gray albedos.
    for _ in 0..config.background_objects {
        let mut placed = false;
        for _attempt in 0..10_000 {
            let range = rng.gen_range(8.0..75.0);
            let azimuth = rng.gen_range(-0.72..0.72f64);
            let (cx, cy) = (range * azimuth.cos(), range * azimuth.sin());
            if cy.abs() < hw + 1.5 {
                continue; // keep the road clear
            }
            let l = rng.gen_range(1.5..5.0);
            let w = rng.gen_range(1.5..5.0);
            let h = rng.gen_range(1.0..4.0);
            let cand = Box3D {
                cx,
                cy,
                cz: h / 2.0,
                length: l,
                width: w,
                height: h,
                yaw: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            };
            let inflated =
                |b: &Box3D| BoxBEV::new(b.cx, b.cy, b.length + 0.8, b.width + 0.8, b.yaw).unwrap();
            if objects
                .iter()
                .all(|o| rotated_iou(&inflated(&o.box3d), &inflated(&cand)) == 0.0)
            {
                let g = rng.gen_range(0.35..0.55);
                let albedo = [g, g, g];
                objects.push(SceneObject {
                    box3d: cand,
                    class: SemanticClass::Background,
                    albedo,
                    reflectance: g,
                    id: objects.len() as u32 + 1,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(CoreError::SceneConfig(
                "could not place a background object after 10000 attempts".into(),
            ));
        }
    }

    Ok(Scene {
        objects,
        road_polygon,
        road_albedo,
        ground_albedo,
        sky_albedo,
        seed,
    })
}
