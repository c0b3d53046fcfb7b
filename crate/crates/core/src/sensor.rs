//! Spherical-projection range images and their point-cloud inverse.
//!
//! A range image is an `H x W` grid: rows are uniform elevation bins over
//! `[vfov_min, vfov_max]`, columns uniform azimuth bins over `[-pi, pi)`,
//! cell value is the range in meters or [`INVALID_RANGE`] for no return.
//! Ranges are stored as `f32` (the on-disk payload type) so round trips are
//! bit-exact; geometry is computed in `f64`.

use crate::geom::Vec3;
use crate::math;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Sentinel stored in cells with no return.
pub const INVALID_RANGE: f32 = -1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensorConfigError {
    #[error("image dimensions must be at least 1x1, got {0}x{1}")]
    EmptyImage(usize, usize),
    #[error("vertical field of view [{0}, {1}] is not a proper sub-interval of [-pi/2, pi/2]")]
    BadFov(f64, f64),
    #[error("max range {0} must be positive and finite")]
    BadMaxRange(f64),
}

/// Geometry of the scanning sensor; immutable after validated construction.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct SensorConfig {
    pub height: usize,
    pub width: usize,
    /// Lowest elevation angle (radians).
    pub vfov_min: f64,
    /// Highest elevation angle (radians).
    pub vfov_max: f64,
    /// Maximum measurable range (meters).
    pub r_max: f64,
}

impl SensorConfig {
    pub fn new(
        height: usize,
        width: usize,
        vfov_min: f64,
        vfov_max: f64,
        r_max: f64,
    ) -> Result<Self, SensorConfigError> {
        let cfg = Self {
            height,
            width,
            vfov_min,
            vfov_max,
            r_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SensorConfigError> {
        if self.height == 0 || self.width == 0 {
            return Err(SensorConfigError::EmptyImage(self.height, self.width));
        }
        let half_pi = PI / 2.0;
        if !self.vfov_min.is_finite()
            || !self.vfov_max.is_finite()
            || self.vfov_min >= self.vfov_max
            || self.vfov_min < -half_pi
            || self.vfov_max > half_pi
        {
            return Err(SensorConfigError::BadFov(self.vfov_min, self.vfov_max));
        }
        if !self.r_max.is_finite() || self.r_max <= 0.0 {
            return Err(SensorConfigError::BadMaxRange(self.r_max));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn elevation_step(&self) -> f64 {
        (self.vfov_max - self.vfov_min) / self.height as f64
    }

    pub fn azimuth_step(&self) -> f64 {
        2.0 * PI / self.width as f64
    }

    fn r_max_f32(&self) -> f32 {
        self.r_max as f32
    }

    /// Elevation bin for an angle, or `None` outside the field of view.
    /// The top edge `vfov_max` is inclusive and maps to the last row.
    pub fn elevation_bin(&self, theta: f64) -> Option<usize> {
        if !(self.vfov_min..=self.vfov_max).contains(&theta) {
            return None;
        }
        let t = (theta - self.vfov_min) / (self.vfov_max - self.vfov_min);
        let bin = math::floor(t * self.height as f64) as usize;
        Some(bin.min(self.height - 1))
    }

    /// Azimuth bin for an angle in `[-pi, pi]`; `+pi` wraps to bin 0.
    pub fn azimuth_bin(&self, phi: f64) -> usize {
        let t = (phi + PI) / (2.0 * PI);
        let bin = math::floor(t * self.width as f64) as i64;
        bin.rem_euclid(self.width as i64) as usize
    }

    /// Center angles `(theta, phi)` of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        debug_assert!(row < self.height && col < self.width);
        let theta = self.vfov_min + (row as f64 + 0.5) * self.elevation_step();
        let phi = -PI + (col as f64 + 0.5) * self.azimuth_step();
        (theta, phi)
    }

    /// Unit direction vector through the center of a cell.
    pub fn cell_direction(&self, row: usize, col: usize) -> Vec3 {
        let (theta, phi) = self.cell_center(row, col);
        Vec3::new(
            math::cos(theta) * math::cos(phi),
            math::cos(theta) * math::sin(phi),
            math::sin(theta),
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RangeImageError {
    #[error("expected {expected} cells, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cell {index} holds {value}, outside the valid payload domain")]
    BadValue { index: usize, value: f32 },
}

/// An `H x W` grid of ranges, row-major, row 0 at `vfov_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    config: SensorConfig,
    ranges: Vec<f32>,
}

impl RangeImage {
    /// An image with every cell marked invalid.
    pub fn new_invalid(config: SensorConfig) -> Self {
        let n = config.cells();
        Self {
            config,
            ranges: vec![INVALID_RANGE; n],
        }
    }

    /// Wraps a raw grid, validating that each cell is either the invalid
    /// sentinel or a range in `(0, r_max]`.
    pub fn from_ranges(config: SensorConfig, ranges: Vec<f32>) -> Result<Self, RangeImageError> {
        if ranges.len() != config.cells() {
            return Err(RangeImageError::LengthMismatch {
                expected: config.cells(),
                got: ranges.len(),
            });
        }
        let r_max = config.r_max_f32();
        for (index, &value) in ranges.iter().enumerate() {
            let valid = value == INVALID_RANGE || (value > 0.0 && value <= r_max);
            if !valid || !value.is_finite() {
                return Err(RangeImageError::BadValue { index, value });
            }
        }
        Ok(Self { config, ranges })
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn ranges(&self) -> &[f32] {
        &self.ranges
    }

    #[inline]
    fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.config.height && col < self.config.width);
        row * self.config.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.ranges[self.index(row, col)]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.get(row, col) != INVALID_RANGE
    }

    pub fn set_range(&mut self, row: usize, col: usize, range: f32) {
        debug_assert!(range > 0.0 && range <= self.config.r_max_f32());
        let i = self.index(row, col);
        self.ranges[i] = range;
    }

    pub fn set_invalid(&mut self, row: usize, col: usize) {
        let i = self.index(row, col);
        self.ranges[i] = INVALID_RANGE;
    }

    pub fn valid_count(&self) -> usize {
        self.ranges.iter().filter(|&&r| r != INVALID_RANGE).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.config.cells() as f64
    }
}

/// An unordered set of 3D points in the sensor frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn push(&mut self, p: Vec3) {
        self.points.push(p);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec3> {
        self.points.iter()
    }
}

/// Projects a cloud into a range image. Points at the origin, outside the
/// vertical field of view, or beyond `r_max` are discarded; when several
/// points fall into one cell the smallest range wins.
pub fn project(cloud: &PointCloud, config: &SensorConfig) -> RangeImage {
    let mut img = RangeImage::new_invalid(*config);
    let r_max = config.r_max_f32();
    for p in cloud.iter() {
        let r = p.norm();
        if !r.is_finite() || r <= 0.0 {
            continue;
        }
        let theta = math::asin((p.z / r).clamp(-1.0, 1.0));
        let Some(row) = config.elevation_bin(theta) else {
            continue;
        };
        let col = config.azimuth_bin(math::atan2(p.y, p.x));
        let r32 = r as f32;
        if r32 <= 0.0 || r32 > r_max {
            continue;
        }
        let idx = row * config.width + col;
        let current = img.ranges[idx];
        if current == INVALID_RANGE || r32 < current {
            img.ranges[idx] = r32;
        }
    }
    img
}

/// Reconstructs one point per valid cell, placed on the cell-center ray.
pub fn unproject(img: &RangeImage) -> PointCloud {
    let mut cloud = PointCloud::new();
    for row in 0..img.height() {
        for col in 0..img.width() {
            let r = img.get(row, col);
            if r == INVALID_RANGE {
                continue;
            }
            let dir = img.config().cell_direction(row, col);
            cloud.push(dir * r as f64);
        }
    }
    cloud
}

/// A boolean grid aligned with a range image (e.g. dynamic-cell masks).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new_empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, RangeImageError> {
        if bits.len() != height * width {
            return Err(RangeImageError::LengthMismatch {
                expected: height * width,
                got: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Intersection over union with another mask of the same shape.
    /// Two empty masks have IoU 1.
    pub fn iou(&self, other: &Mask) -> f64 {
        assert_eq!(
            (self.height, self.width),
            (other.height, other.width),
            "mask shapes must match"
        );
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.bits.iter().zip(other.bits.iter()) {
            if *a && *b {
                inter += 1;
            }
            if *a || *b {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(h: usize, w: usize, lo: f64, hi: f64, r_max: f64) -> SensorConfig {
        SensorConfig::new(h, w, lo, hi, r_max).unwrap()
    }

    #[test]
    fn config_validation_catches_bad_input() {
        assert!(matches!(
            SensorConfig::new(0, 4, -0.1, 0.1, 10.0),
            Err(SensorConfigError::EmptyImage(0, 4))
        ));
        assert!(matches!(
            SensorConfig::new(2, 4, 0.1, -0.1, 10.0),
            Err(SensorConfigError::BadFov(..))
        ));
        assert!(matches!(
            SensorConfig::new(2, 4, -0.1, 0.1, 0.0),
            Err(SensorConfigError::BadMaxRange(_))
        ));
    }

    #[test]
    fn unit_x_point_lands_in_front_facing_cell() {
        // single elevation row spanning zero, 360 one-degree azimuth bins
        let config = cfg(1, 360, -0.1, 0.1, 10.0);
        let cloud = PointCloud::from_points(vec![Vec3::new(1.0, 0.0, 0.0)]);
        let img = project(&cloud, &config);
        assert_eq!(img.get(0, 180), 1.0);
        assert_eq!(img.valid_count(), 1);
    }

    #[test]
    fn collision_keeps_smaller_range() {
        let config = cfg(1, 8, -0.1, 0.1, 10.0);
        let cloud = PointCloud::from_points(vec![
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(1.5, 0.0, 0.0),
            Vec3::new(2.5, 0.0, 0.0),
        ]);
        let img = project(&cloud, &config);
        assert_eq!(img.get(0, 4), 1.5);
    }

    #[test]
    fn out_of_domain_points_are_discarded() {
        let config = cfg(2, 8, -0.2, 0.2, 5.0);
        let cloud = PointCloud::from_points(vec![
            Vec3::new(0.0, 0.0, 0.0),   // origin: no direction
            Vec3::new(6.0, 0.0, 0.0),   // beyond r_max
            Vec3::new(0.0, 0.0, 1.0),   // elevation pi/2, outside fov
            Vec3::new(1.0, 0.0, -0.9),  // below fov
        ]);
        let img = project(&cloud, &config);
        assert_eq!(img.valid_count(), 0);
    }

    #[test]
    fn top_fov_edge_is_inclusive() {
        let config = cfg(4, 8, -0.4, 0.4, 10.0);
        assert_eq!(config.elevation_bin(0.4), Some(3));
        assert_eq!(config.elevation_bin(-0.4), Some(0));
        assert_eq!(config.elevation_bin(0.4000001), None);
    }

    #[test]
    fn azimuth_pi_wraps_to_bin_zero() {
        let config = cfg(1, 8, -0.1, 0.1, 10.0);
        assert_eq!(config.azimuth_bin(core::f64::consts::PI), 0);
        assert_eq!(config.azimuth_bin(-core::f64::consts::PI), 0);
    }

    #[test]
    fn empty_cloud_gives_all_invalid_image_and_back() {
        let config = cfg(3, 5, -0.3, 0.1, 8.0);
        let img = project(&PointCloud::new(), &config);
        assert_eq!(img.valid_count(), 0);
        assert!(unproject(&img).is_empty());
    }

    #[test]
    fn from_ranges_validates_domain() {
        let config = cfg(1, 3, -0.1, 0.1, 5.0);
        assert!(RangeImage::from_ranges(config, vec![1.0, -1.0, 5.0]).is_ok());
        assert!(matches!(
            RangeImage::from_ranges(config, vec![1.0, -1.0]),
            Err(RangeImageError::LengthMismatch { expected: 3, got: 2 })
        ));
        assert!(matches!(
            RangeImage::from_ranges(config, vec![1.0, 0.0, 2.0]),
            Err(RangeImageError::BadValue { index: 1, .. })
        ));
        assert!(matches!(
            RangeImage::from_ranges(config, vec![1.0, 5.5, 2.0]),
            Err(RangeImageError::BadValue { index: 1, .. })
        ));
    }

    #[test]
    fn mask_iou_basics() {
        let mut a = Mask::new_empty(2, 2);
        let mut b = Mask::new_empty(2, 2);
        assert_eq!(a.iou(&b), 1.0);
        a.set(0, 0, true);
        a.set(0, 1, true);
        b.set(0, 1, true);
        b.set(1, 0, true);
        assert_eq!(a.iou(&b), 1.0 / 3.0);
    }

    proptest! {
        /// project(unproject(img)) reproduces the image bit-for-bit.
        #[test]
        fn project_unproject_round_trip(
            h in 1usize..6,
            w in 2usize..9,
            seed_vals in proptest::collection::vec(0.01f32..1.0f32, 48),
            mask in proptest::collection::vec(proptest::bool::ANY, 48),
        ) {
            let config = cfg(h, w, -0.5, 0.3, 20.0);
            let mut img = RangeImage::new_invalid(config);
            let mut k = 0;
            for row in 0..h {
                for col in 0..w {
                    if mask[k % mask.len()] {
                        let r = 0.5f32 + seed_vals[k % seed_vals.len()] * 15.0;
                        img.set_range(row, col, r);
                    }
                    k += 1;
                }
            }
            let round = project(&unproject(&img), &config);
            prop_assert_eq!(round, img);
        }

        /// Every surviving projected point sits within range * max bin width
        /// of some input point.
        #[test]
        fn quantization_error_is_bounded(
            pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -3.0f64..3.0), 1..40),
        ) {
            let config = cfg(8, 24, -0.6, 0.4, 50.0);
            let cloud = PointCloud::from_points(
                pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect(),
            );
            let img = project(&cloud, &config);
            let bound_scale = config.elevation_step().max(config.azimuth_step());
            for q in unproject(&img).iter() {
                let r = q.norm();
                let nearest = cloud
                    .iter()
                    .map(|p| (p - q).norm())
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(nearest <= r * bound_scale + 1e-9,
                    "point {:?} has nearest input {} > bound {}", q, nearest, r * bound_scale);
            }
        }
    }
}
