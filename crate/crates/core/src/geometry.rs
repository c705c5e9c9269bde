//! Coordinate conversions and the pinhole camera model.
//!
//! Conventions (shared with the frame file format):
//! - LiDAR sensor frame: x forward, y left, z up. Azimuth `theta` is measured
//!   in the sensor frame from +x toward +y, `atan2` convention, in `(-pi, pi]`.
//! - Elevation `phi` is measured from the x/y plane toward +z, poles excluded.
//! - Camera frame: x right, y down, z along the optical axis.
//!
//! All geometry runs in `f64`; sensor payloads are converted up at call sites.

use crate::error::{CoreError, Result};
use nalgebra::{Matrix3, Vector3};

/// 3D point in meters (LiDAR sensor frame unless stated otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Point3::new(v.x, v.y, v.z)
    }
}

/// Spherical coordinate of a LiDAR return: range, azimuth, elevation.
///
/// Invariants: `r > 0`, `theta` in `(-pi, pi]`, `phi` strictly inside
/// `(-pi/2, pi/2)` (azimuth is undefined at the poles).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    r: f64,
    theta: f64,
    phi: f64,
}

impl SphericalCoord {
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(r.is_finite() && theta.is_finite() && phi.is_finite()) {
            return Err(CoreError::Geometry("non-finite spherical coordinate".into()));
        }
        if r <= 0.0 {
            return Err(CoreError::Geometry(format!("range must be positive, got {r}")));
        }
        if !(theta > -std::f64::consts::PI && theta <= std::f64::consts::PI) {
            return Err(CoreError::Geometry(format!(
                "azimuth {theta} outside (-pi, pi]"
            )));
        }
        if phi.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(CoreError::Geometry(format!(
                "elevation {phi} outside open interval (-pi/2, pi/2)"
            )));
        }
        Ok(SphericalCoord { r, theta, phi })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Continuous pixel coordinate (before any rounding).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

/// Pinhole camera: intrinsics `K`, extrinsics `R`, `t` mapping LiDAR-frame
/// points into the camera frame, and the image bounds used for the frustum
/// check.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
    pub image_width: u32,
    pub image_height: u32,
}

const ROTATION_TOL: f64 = 1e-9;

impl CameraCalibration {
    pub fn new(
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(CoreError::Geometry("image dimensions must be positive".into()));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(CoreError::Geometry(format!(
                "focal lengths must be positive, got fx={} fy={}",
                k[(0, 0)],
                k[(1, 1)]
            )));
        }
        let rtr = r.transpose() * r;
        let ortho_err = (rtr - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOL {
            return Err(CoreError::Geometry(format!(
                "rotation is not orthonormal (max |R'R - I| = {ortho_err:.3e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(CoreError::Geometry(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(CameraCalibration {
            k,
            r,
            t,
            image_width,
            image_height,
        })
    }

    /// Convenience constructor from pinhole parameters (zero skew).
    pub fn from_pinhole(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        let k = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
        CameraCalibration::new(k, r, t, image_width, image_height)
    }

    pub fn fx(&self) -> f64 {
        self.k[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.k[(1, 1)]
    }

    pub fn cx(&self) -> f64 {
        self.k[(0, 2)]
    }

    pub fn cy(&self) -> f64 {
        self.k[(1, 2)]
    }

    /// Camera center expressed in the LiDAR frame (`-R't`).
    pub fn center_in_lidar(&self) -> Point3 {
        Point3::from_vector(-(self.r.transpose() * self.t))
    }

    /// Horizontal field of view in LiDAR azimuth, derived from `K`, the image
    /// width and the rotation only (translation does not affect direction).
    /// Bounds are taken at the outer pixel edges so that `fx = w/2` yields an
    /// exact 90 degree span.
    pub fn horizontal_fov_azimuth(&self) -> (f64, f64) {
        let rt = self.r.transpose();
        let az = |u_edge: f64| -> f64 {
            let dir_cam = Vector3::new((u_edge - self.cx()) / self.fx(), 0.0, 1.0);
            let d = rt * dir_cam;
            d.y.atan2(d.x)
        };
        let a0 = az(-0.5);
        let a1 = az(self.image_width as f64 - 0.5);
        (a0.min(a1), a0.max(a1))
    }
}

/// Spherical to Cartesian: `(r cos(phi) cos(theta), r cos(phi) sin(theta), r sin(phi))`.
pub fn spherical_to_cartesian(s: SphericalCoord) -> Point3 {
    let (r, theta, phi) = (s.r(), s.theta(), s.phi());
    let cp = phi.cos();
    Point3::new(r * cp * theta.cos(), r * cp * theta.sin(), r * phi.sin())
}

/// Exact inverse of [`spherical_to_cartesian`]. Zero-norm and pole inputs are
/// domain errors.
pub fn cartesian_to_spherical(p: Point3) -> Result<SphericalCoord> {
    let r = p.norm();
    if r == 0.0 {
        return Err(CoreError::Geometry("zero-norm point has no direction".into()));
    }
    let phi = (p.z / r).clamp(-1.0, 1.0).asin();
    let mut theta = p.y.atan2(p.x);
    if theta == -std::f64::consts::PI {
        theta = std::f64::consts::PI;
    }
    SphericalCoord::new(r, theta, phi)
}

/// Projects a LiDAR-frame point through `alpha [u, v, 1]' = K (R p + t)`.
///
/// Returns the continuous pixel iff the point is in front of the camera
/// (`alpha > 0`) and inside `[0, w) x [0, h)`; out-of-frustum points yield
/// `None` rather than an error.
pub fn project_to_camera(p: Point3, cal: &CameraCalibration) -> Option<PixelCoord> {
    let cam = cal.r * p.to_vector() + cal.t;
    let uvw = cal.k * cam;
    let alpha = uvw.z;
    if alpha <= 0.0 {
        return None;
    }
    let u = uvw.x / alpha;
    let v = uvw.y / alpha;
    if u < 0.0 || u >= cal.image_width as f64 || v < 0.0 || v >= cal.image_height as f64 {
        return None;
    }
    Some(PixelCoord { u, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    #[test]
    fn unit_forward_ray() {
        let p = spherical_to_cartesian(SphericalCoord::new(1.0, 0.0, 0.0).unwrap());
        assert_eq!((p.x, p.y, p.z), (1.0, 0.0, 0.0));
    }

    #[test]
    fn oblique_ray_matches_trig() {
        // Independent evaluation: r=10, theta=pi/2, phi=pi/6.
        let p = spherical_to_cartesian(SphericalCoord::new(10.0, FRAC_PI_2, FRAC_PI_6).unwrap());
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 8.660254037844387, epsilon = 1e-9);
        assert_abs_diff_eq!(p.z, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn backward_ray_symmetry() {
        let p = spherical_to_cartesian(SphericalCoord::new(5.0, PI, 0.0).unwrap());
        assert_abs_diff_eq!(p.x, -5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-9);
        assert_eq!(p.z, 0.0);
    }

    #[test]
    fn inverse_of_simple_points() {
        let s = cartesian_to_spherical(Point3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!((s.r(), s.theta(), s.phi()), (1.0, 0.0, 0.0));

        // 3-4-5 triangle in the plane.
        let s = cartesian_to_spherical(Point3::new(3.0, 4.0, 0.0)).unwrap();
        assert_abs_diff_eq!(s.r(), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.theta(), 4.0_f64.atan2(3.0), epsilon = 1e-12);
        assert_eq!(s.phi(), 0.0);
        let back = spherical_to_cartesian(s);
        assert_abs_diff_eq!(back.x, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back.y, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn pole_is_a_domain_error() {
        assert!(cartesian_to_spherical(Point3::new(0.0, 0.0, 2.0)).is_err());
        assert!(cartesian_to_spherical(Point3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn identity_projection() {
        let cal = CameraCalibration::new(
            Matrix3::identity(),
            Matrix3::identity(),
            Vector3::zeros(),
            10,
            10,
        )
        .unwrap();
        let px = project_to_camera(Point3::new(0.0, 0.0, 1.0), &cal).unwrap();
        assert_eq!((px.u, px.v), (0.0, 0.0));
        assert!(project_to_camera(Point3::new(0.0, 0.0, -1.0), &cal).is_none());
    }

    #[test]
    fn hand_computed_projection() {
        // u = 100 * 0.5 / 2 + 50 = 75.
        let cal = CameraCalibration::from_pinhole(
            100.0,
            100.0,
            50.0,
            50.0,
            Matrix3::identity(),
            Vector3::zeros(),
            100,
            100,
        )
        .unwrap();
        let px = project_to_camera(Point3::new(0.5, 0.0, 2.0), &cal).unwrap();
        assert_abs_diff_eq!(px.u, 75.0, epsilon = 1e-12);
        assert_abs_diff_eq!(px.v, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn improper_rotation_rejected() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0; // determinant -1, still orthonormal
        let err = CameraCalibration::new(Matrix3::identity(), r, Vector3::zeros(), 4, 4);
        assert!(err.is_err());
    }

    #[test]
    fn projection_scale_invariance() {
        let cal = CameraCalibration::from_pinhole(
            120.0,
            110.0,
            63.5,
            31.5,
            Matrix3::identity(),
            Vector3::new(0.1, -0.2, 0.3),
            128,
            64,
        )
        .unwrap();
        let p = Point3::new(0.2, -0.1, 3.0);
        let base = project_to_camera(p, &cal).unwrap();
        for lambda in [0.5, 2.0, 7.25] {
            // Scale the camera-frame point, then pull it back to the LiDAR frame.
            let cam = cal.r * p.to_vector() + cal.t;
            let scaled = cal.r.transpose() * (cam * lambda - cal.t);
            let px = project_to_camera(Point3::from_vector(scaled), &cal).unwrap();
            assert_abs_diff_eq!(px.u, base.u, epsilon = 1e-9);
            assert_abs_diff_eq!(px.v, base.v, epsilon = 1e-9);
        }
    }

    #[test]
    fn fov_of_half_width_focal_is_90_degrees() {
        // Camera looking along LiDAR +x: x_cam = -y, y_cam = -z, z_cam = x.
        let r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        let cal = CameraCalibration::from_pinhole(
            256.0,
            256.0,
            255.5,
            127.5,
            r,
            Vector3::zeros(),
            512,
            256,
        )
        .unwrap();
        let (lo, hi) = cal.horizontal_fov_azimuth();
        assert_abs_diff_eq!(hi - lo, FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(lo, -std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
    }
}
