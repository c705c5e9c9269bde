//! Five-channel range-view image built from a raw LiDAR sweep.
//!
//! Rows are lasers ordered by descending elevation (row 0 looks up the most,
//! matching image convention), columns are azimuth bins over a half-open
//! interval `[azimuth_min, azimuth_max)`. When several returns land in one
//! cell the closest one wins; the loser points are the ones the evaluation
//! protocol later marks `unknown`.

use crate::error::{CoreError, Result};
use crate::geometry::CameraCalibration;

/// Channel indices of the range image grid.
pub const CH_RANGE: usize = 0;
pub const CH_HEIGHT: usize = 1;
pub const CH_AZIMUTH: usize = 2;
pub const CH_INTENSITY: usize = 3;
pub const CH_OCCUPANCY: usize = 4;
pub const NUM_CHANNELS: usize = 5;

/// One LiDAR measurement. Elevation is implied by `laser_id` through the
/// config's elevation table; fields are `f32` because that is the sensor and
/// file-format precision (all math happens in `f64`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarReturn {
    /// Range in meters, > 0.
    pub r: f32,
    /// Reflectance in [0, 1].
    pub e: f32,
    /// Azimuth in radians, sensor frame.
    pub theta: f32,
    /// Laser index in 0..L.
    pub laser_id: u16,
}

/// A full revolution (or crop) of returns plus a timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LidarSweep {
    pub returns: Vec<LidarReturn>,
    pub timestamp: f64,
}

/// Geometry of the range image: azimuth bounds and the per-laser elevation
/// table (radians, strictly monotonic).
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImageConfig {
    pub width: usize,
    pub elevation_table: Vec<f64>,
    pub azimuth_min: f64,
    pub azimuth_max: f64,
}

impl RangeImageConfig {
    pub fn new(
        width: usize,
        elevation_table: Vec<f64>,
        azimuth_min: f64,
        azimuth_max: f64,
    ) -> Result<Self> {
        if width == 0 {
            return Err(CoreError::Contract("range image width must be > 0".into()));
        }
        if !(azimuth_min < azimuth_max) {
            return Err(CoreError::Contract(format!(
                "azimuth bounds [{azimuth_min}, {azimuth_max}) are empty"
            )));
        }
        if elevation_table.is_empty() {
            return Err(CoreError::Contract("elevation table is empty".into()));
        }
        let ascending = elevation_table.windows(2).all(|w| w[0] < w[1]);
        let descending = elevation_table.windows(2).all(|w| w[0] > w[1]);
        if !(ascending || descending) {
            return Err(CoreError::Contract(
                "elevation table must be strictly monotonic".into(),
            ));
        }
        Ok(RangeImageConfig {
            width,
            elevation_table,
            azimuth_min,
            azimuth_max,
        })
    }

    pub fn num_lasers(&self) -> usize {
        self.elevation_table.len()
    }

    pub fn azimuth_bin_width(&self) -> f64 {
        (self.azimuth_max - self.azimuth_min) / self.width as f64
    }

    /// Image row of a laser: rank by descending elevation, so the
    /// highest-looking laser is row 0.
    pub fn row_of_laser(&self, laser_id: u16) -> usize {
        let phi = self.elevation_table[laser_id as usize];
        self.elevation_table.iter().filter(|&&e| e > phi).count()
    }

    /// Elevation of an image row (inverse of [`Self::row_of_laser`]).
    pub fn elevation_of_row(&self, row: usize) -> f64 {
        self.row_elevations()[row]
    }

    /// Elevations indexed by row, i.e. sorted descending.
    pub fn row_elevations(&self) -> Vec<f64> {
        let mut sorted = self.elevation_table.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sorted
    }

    /// Row of every laser, indexed by `laser_id`.
    pub fn laser_rows(&self) -> Vec<usize> {
        (0..self.elevation_table.len())
            .map(|i| self.row_of_laser(i as u16))
            .collect()
    }
}

/// W x L x 5 grid of `[range, height, azimuth, intensity, occupancy]` plus the
/// index of each cell's source return.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    width: usize,
    height: usize,
    grid: Vec<f64>,
    point_index: Vec<Option<u32>>,
}

impl RangeImage {
    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of rows (= lasers).
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    #[inline]
    pub fn channel(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.grid[(row * self.width + col) * NUM_CHANNELS + ch]
    }

    #[inline]
    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.channel(row, col, CH_OCCUPANCY) != 0.0
    }

    pub fn point_index(&self) -> &[Option<u32>] {
        &self.point_index
    }

    #[inline]
    pub fn point_index_at(&self, row: usize, col: usize) -> Option<u32> {
        self.point_index[row * self.width + col]
    }

    pub fn occupied_count(&self) -> usize {
        self.point_index.iter().filter(|p| p.is_some()).count()
    }

    /// Rebuild a range image from its source sweep and the per-cell winner
    /// indices. Channels are recomputed with exactly the arithmetic used by
    /// [`build_range_image`], so the result is bit-identical to the original.
    pub fn from_point_index(
        sweep: &LidarSweep,
        cfg: &RangeImageConfig,
        width: usize,
        height: usize,
        point_index: Vec<Option<u32>>,
    ) -> Result<Self> {
        if height != cfg.num_lasers() || width != cfg.width {
            return Err(CoreError::Contract(format!(
                "point index dims {width}x{height} do not match config {}x{}",
                cfg.width,
                cfg.num_lasers()
            )));
        }
        if point_index.len() != width * height {
            return Err(CoreError::Contract("point index length mismatch".into()));
        }
        let mut img = RangeImage {
            width,
            height,
            grid: vec![0.0; width * height * NUM_CHANNELS],
            point_index,
        };
        for cell in 0..width * height {
            if let Some(idx) = img.point_index[cell] {
                let ret = sweep
                    .returns
                    .get(idx as usize)
                    .ok_or_else(|| CoreError::Contract("point index out of sweep".into()))?;
                write_cell(&mut img.grid, cell, ret, cfg);
            }
        }
        Ok(img)
    }
}

fn write_cell(grid: &mut [f64], cell: usize, ret: &LidarReturn, cfg: &RangeImageConfig) {
    let phi = cfg.elevation_table[ret.laser_id as usize];
    let r = ret.r as f64;
    let base = cell * NUM_CHANNELS;
    grid[base + CH_RANGE] = r;
    grid[base + CH_HEIGHT] = r * phi.sin();
    grid[base + CH_AZIMUTH] = ret.theta as f64;
    grid[base + CH_INTENSITY] = ret.e as f64;
    grid[base + CH_OCCUPANCY] = 1.0;
}

/// Ordering used to resolve cell collisions: primarily smallest range, with a
/// total tie-break so the result is independent of input order.
#[inline]
fn wins(candidate: &LidarReturn, incumbent: &LidarReturn) -> bool {
    (candidate.r, candidate.theta, candidate.e) < (incumbent.r, incumbent.theta, incumbent.e)
}

/// Build the five-channel image. Returns outside the azimuth crop are
/// dropped (half-open on the right); a `laser_id` past the elevation table is
/// a malformed sweep.
pub fn build_range_image(sweep: &LidarSweep, cfg: &RangeImageConfig) -> Result<RangeImage> {
    let width = cfg.width;
    let height = cfg.num_lasers();
    let lasers = cfg.num_lasers() as u16;
    let bin = cfg.azimuth_bin_width();
    let laser_rows = cfg.laser_rows();

    let mut winner: Vec<Option<u32>> = vec![None; width * height];
    for (i, ret) in sweep.returns.iter().enumerate() {
        if ret.laser_id >= lasers {
            return Err(CoreError::MalformedSweep(format!(
                "return {i} has laser_id {} but the rig has {lasers} lasers",
                ret.laser_id
            )));
        }
        if !(ret.r > 0.0) || !(0.0..=1.0).contains(&ret.e) || !ret.theta.is_finite() {
            return Err(CoreError::MalformedSweep(format!(
                "return {i} violates invariants (r={}, e={}, theta={})",
                ret.r, ret.e, ret.theta
            )));
        }
        let theta = ret.theta as f64;
        if theta < cfg.azimuth_min || theta >= cfg.azimuth_max {
            continue;
        }
        let col = ((theta - cfg.azimuth_min) / bin).floor() as usize;
        if col >= width {
            continue; // float roundoff at the upper crop edge
        }
        let row = laser_rows[ret.laser_id as usize];
        let cell = row * width + col;
        match winner[cell] {
            None => winner[cell] = Some(i as u32),
            Some(j) => {
                if wins(ret, &sweep.returns[j as usize]) {
                    winner[cell] = Some(i as u32);
                }
            }
        }
    }

    let mut grid = vec![0.0; width * height * NUM_CHANNELS];
    for cell in 0..width * height {
        if let Some(idx) = winner[cell] {
            write_cell(&mut grid, cell, &sweep.returns[idx as usize], cfg);
        }
    }
    Ok(RangeImage {
        width,
        height,
        grid,
        point_index: winner,
    })
}

/// Intersect the config's azimuth bounds with the camera's horizontal FOV,
/// keeping the angular bin width (the column count scales with the crop).
pub fn crop_to_camera_fov(
    cfg: &RangeImageConfig,
    cal: &CameraCalibration,
) -> Result<RangeImageConfig> {
    let (cam_lo, cam_hi) = cal.horizontal_fov_azimuth();
    let lo = cfg.azimuth_min.max(cam_lo);
    let hi = cfg.azimuth_max.min(cam_hi);
    if !(lo < hi) {
        return Err(CoreError::NoFovOverlap(format!(
            "lidar [{:.4}, {:.4}) vs camera [{:.4}, {:.4}]",
            cfg.azimuth_min, cfg.azimuth_max, cam_lo, cam_hi
        )));
    }
    let bin = cfg.azimuth_bin_width();
    let width = ((hi - lo) / bin).round().max(1.0) as usize;
    RangeImageConfig::new(width, cfg.elevation_table.clone(), lo, hi)
}
