//! Scan-matching odometry used as the navigation proxy: voxel-grid
//! downsampling, point-to-point ICP with nearest-neighbor gating, dead
//! reckoning over consecutive frames with a constant-velocity initial guess,
//! and a navigation evaluation that scores the dead-reckoned trajectory
//! against ground truth (ATE and RPE).

use crate::geom::{Pose, Trajectory, TrajectoryError, Vec3};
use crate::math;
use crate::metrics::{self, AteResult, GridIndex, MetricError, RpeResult};
use crate::sensor::PointCloud;
use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdomError {
    #[error("bad ICP config: {0}")]
    BadConfig(&'static str),
    #[error("need at least {need} points after downsampling, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("only {got} correspondences within {radius} m, need {need}")]
    NoOverlap { got: usize, need: usize, radius: f64 },
    #[error("diverged: residual rose for {patience} consecutive iterations (best {best})")]
    Diverged { patience: usize, best: f64 },
    #[error("need at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("got {clouds} clouds but {stamps} timestamps")]
    StampCountMismatch { clouds: usize, stamps: usize },
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        source: Box<OdomError>,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Point-to-point ICP parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct IcpConfig {
    /// Maximum alignment iterations per frame pair.
    pub max_iters: usize,
    /// Convergence threshold on the incremental update
    /// (translation norm plus rotation angle).
    pub tolerance: f64,
    /// Correspondences farther apart than this are rejected (meters).
    pub max_pair_dist: f64,
    /// Voxel edge for downsampling before matching (meters).
    pub voxel: f64,
    /// Minimum points per cloud and minimum surviving correspondences.
    pub min_points: usize,
    /// Consecutive iterations the residual may rise before the match is
    /// declared divergent.
    pub divergence_patience: usize,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tolerance: 1e-6,
            max_pair_dist: 1.0,
            voxel: 0.3,
            min_points: 10,
            divergence_patience: 5,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), OdomError> {
        if self.max_iters == 0 {
            return Err(OdomError::BadConfig("max_iters must be positive"));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(OdomError::BadConfig("tolerance must be positive and finite"));
        }
        if !(self.max_pair_dist > 0.0) || !self.max_pair_dist.is_finite() {
            return Err(OdomError::BadConfig(
                "max_pair_dist must be positive and finite",
            ));
        }
        if !(self.voxel > 0.0) || !self.voxel.is_finite() {
            return Err(OdomError::BadConfig("voxel must be positive and finite"));
        }
        if self.min_points < 3 {
            return Err(OdomError::BadConfig(
                "min_points must be at least 3 (rigid alignment needs 3 pairs)",
            ));
        }
        if self.divergence_patience == 0 {
            return Err(OdomError::BadConfig("divergence_patience must be positive"));
        }
        Ok(())
    }
}

/// Voxel-grid downsampling: one centroid per occupied cell of edge `voxel`.
/// Output order follows the lexicographic cell order, so the result is
/// deterministic. `voxel <= 0` returns the cloud unchanged.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> PointCloud {
    if voxel <= 0.0 || cloud.is_empty() {
        return cloud.clone();
    }
    let mut cells: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in cloud.iter() {
        let key = [
            math::floor(p.x / voxel) as i64,
            math::floor(p.y / voxel) as i64,
            math::floor(p.z / voxel) as i64,
        ];
        let entry = cells.entry(key).or_insert((Vec3::zeros(), 0));
        entry.0 += p;
        entry.1 += 1;
    }
    PointCloud::from_points(
        cells
            .into_values()
            .map(|(sum, count)| sum / count as f64)
            .collect(),
    )
}

/// Outcome of one ICP registration.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Rigid transform mapping source points into the target frame.
    pub pose: Pose,
    /// Iterations actually run.
    pub iterations: usize,
    /// RMS residual over the final correspondence set (meters).
    pub rmse: f64,
    /// Surviving correspondences in the final iteration.
    pub pairs: usize,
    /// Whether the incremental update fell below the tolerance.
    pub converged: bool,
}

/// Point-to-point ICP: estimates the rigid transform `T` minimizing
/// `sum ||T * src_i - dst_{match(i)}||^2` by alternating gated
/// nearest-neighbor association with closed-form alignment, starting
/// from `init`.
pub fn icp_match(
    src: &PointCloud,
    dst: &PointCloud,
    init: &Pose,
    cfg: &IcpConfig,
) -> Result<IcpResult, OdomError> {
    cfg.validate()?;
    let src_d = voxel_downsample(src, cfg.voxel);
    let dst_d = voxel_downsample(dst, cfg.voxel);
    if src_d.len() < cfg.min_points {
        return Err(OdomError::TooFewPoints {
            need: cfg.min_points,
            got: src_d.len(),
        });
    }
    if dst_d.len() < cfg.min_points {
        return Err(OdomError::TooFewPoints {
            need: cfg.min_points,
            got: dst_d.len(),
        });
    }

    let index = GridIndex::build(dst_d.points());
    let max_sq = cfg.max_pair_dist * cfg.max_pair_dist;
    let mut pose = *init;
    let mut iterations = 0;
    let mut rmse = f64::INFINITY;
    let mut pairs = 0;
    let mut converged = false;
    let mut best_rmse = f64::INFINITY;
    let mut rising = 0usize;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let mut moved: Vec<Vec3> = Vec::new();
        let mut matched: Vec<Vec3> = Vec::new();
        for p in src_d.iter() {
            let q = pose.transform_point(&nalgebra::Point3::from(*p)).coords;
            let (i, d2) = index.nearest(&q);
            if d2 <= max_sq {
                moved.push(q);
                matched.push(dst_d.points()[i]);
            }
        }
        if moved.len() < cfg.min_points {
            return Err(OdomError::NoOverlap {
                got: moved.len(),
                need: cfg.min_points,
                radius: cfg.max_pair_dist,
            });
        }

        let delta = metrics::horn_align(&moved, &matched)?;
        pose = delta * pose;

        let mut sq_sum = 0.0;
        for (m, d) in moved.iter().zip(matched.iter()) {
            let updated = delta.transform_point(&nalgebra::Point3::from(*m)).coords;
            sq_sum += (updated - d).norm_squared();
        }
        pairs = moved.len();
        rmse = math::sqrt(sq_sum / pairs as f64);

        if rmse <= best_rmse {
            best_rmse = rmse;
            rising = 0;
        } else {
            rising += 1;
            if rising >= cfg.divergence_patience {
                return Err(OdomError::Diverged {
                    patience: cfg.divergence_patience,
                    best: best_rmse,
                });
            }
        }

        let step = delta.translation.vector.norm() + delta.rotation.angle();
        if step < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        pose,
        iterations,
        rmse,
        pairs,
        converged,
    })
}

/// Dead-reckoned trajectory from consecutive scan matching. Frame 0 sits at
/// the identity, so the estimate lives in the first sensor frame; each later
/// frame is registered against its predecessor, seeded with the previous
/// relative motion (constant-velocity assumption).
pub fn odometry(
    clouds: &[PointCloud],
    stamps: &[f64],
    cfg: &IcpConfig,
) -> Result<Trajectory, OdomError> {
    if clouds.len() < 2 {
        return Err(OdomError::TooFewFrames(clouds.len()));
    }
    if clouds.len() != stamps.len() {
        return Err(OdomError::StampCountMismatch {
            clouds: clouds.len(),
            stamps: stamps.len(),
        });
    }
    let mut traj = Trajectory::new();
    let mut pose = Pose::identity();
    traj.push(stamps[0], pose)?;
    let mut rel = Pose::identity();
    for k in 1..clouds.len() {
        let result = icp_match(&clouds[k], &clouds[k - 1], &rel, cfg).map_err(|e| {
            OdomError::Frame {
                index: k,
                source: Box::new(e),
            }
        })?;
        rel = result.pose;
        pose *= rel;
        traj.push(stamps[k], pose)?;
    }
    Ok(traj)
}

/// Navigation evaluation outcome: trajectory error metrics plus the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NavResult {
    pub ate: AteResult,
    pub rpe: RpeResult,
    pub est: Trajectory,
}

/// Runs dead-reckoned odometry over the clouds and scores it against the
/// ground-truth trajectory. The estimate lives in the first sensor frame;
/// the rigid alignment inside ATE absorbs that gauge. RPE compares motion
/// increments over `rpe_delta` frames.
pub fn nav_eval(
    clouds: &[PointCloud],
    gt: &Trajectory,
    cfg: &IcpConfig,
    rpe_delta: usize,
) -> Result<NavResult, OdomError> {
    if clouds.len() != gt.len() {
        return Err(OdomError::StampCountMismatch {
            clouds: clouds.len(),
            stamps: gt.len(),
        });
    }
    let est = odometry(clouds, gt.stamps(), cfg)?;
    let ate = metrics::ate(gt, &est)?;
    let rpe = metrics::rpe(gt, &est, rpe_delta)?;
    Ok(NavResult { ate, rpe, est })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{unproject, SensorConfig};
    use crate::world::{gen_sequence, gen_world, EgoPath, SequenceSpec, WorldGenSpec};
    use alloc::vec;
    use nalgebra::{Translation3, UnitQuaternion};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sensor() -> SensorConfig {
        SensorConfig::new(24, 96, -0.5, 0.35, 25.0).expect("valid sensor")
    }

    /// Point-to-point ICP slides along smooth surfaces when consecutive
    /// scans resample them, so drift shrinks with angular resolution; the
    /// tracking oracle uses a dense head to keep that bias small.
    fn dense_sensor() -> SensorConfig {
        SensorConfig::new(48, 192, -0.5, 0.35, 25.0).expect("valid sensor")
    }

    fn small_world(seed: u64) -> crate::world::WorldSpec {
        let spec = WorldGenSpec {
            room_half: [3.0, 4.0],
            n_static: [2, 3],
            n_actors: [1, 2],
            ..WorldGenSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gen_world(&spec, &mut rng)
    }

    #[test]
    fn voxel_downsample_hand_case_and_determinism() {
        let cloud = PointCloud::from_points(vec![
            Vec3::new(0.1, 0.1, 0.1),
            Vec3::new(0.2, 0.2, 0.2),
            Vec3::new(0.6, 0.0, 0.0),
            Vec3::new(-0.1, 0.0, 0.0),
        ]);
        let down = voxel_downsample(&cloud, 0.5);
        // cells: [-1,0,0] -> (-0.1,0,0); [0,0,0] -> centroid of the first
        // two; [1,0,0] -> (0.6,0,0); ordered by cell key.
        assert_eq!(down.len(), 3);
        assert!((down.points()[0] - Vec3::new(-0.1, 0.0, 0.0)).norm() < 1e-12);
        assert!((down.points()[1] - Vec3::new(0.15, 0.15, 0.15)).norm() < 1e-12);
        assert!((down.points()[2] - Vec3::new(0.6, 0.0, 0.0)).norm() < 1e-12);
        // a non-positive voxel passes the cloud through unchanged
        assert_eq!(voxel_downsample(&cloud, 0.0), cloud);
        // repeated runs agree bit-for-bit
        assert_eq!(down, voxel_downsample(&cloud, 0.5));
    }

    #[test]
    fn icp_recovers_a_known_transform_exactly() {
        let world = small_world(17);
        let pose = Pose::identity();
        let pair = crate::world::gen_pair(&world, &pose, &sensor(), 0.0);
        let dst = unproject(&pair.static_img);
        assert!(dst.len() > 200, "structured scene expected");

        // voxel below the point spacing keeps every point (cell centroids
        // of singleton cells are the points themselves)
        let cfg = IcpConfig {
            voxel: 1e-3,
            tolerance: 1e-10,
            max_iters: 60,
            ..IcpConfig::default()
        };

        // identical clouds with identity init stay at the identity
        let same = icp_match(&dst, &dst, &Pose::identity(), &cfg).expect("icp");
        assert!(same.converged);
        assert!(same.pose.translation.vector.norm() < 1e-12);
        assert!(same.pose.rotation.angle() < 1e-12);
        assert!(same.rmse < 1e-12);

        let truth = Pose::from_parts(
            Translation3::new(0.05, -0.03, 0.02),
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 0.04),
        );
        let inv = truth.inverse();
        let src = PointCloud::from_points(
            dst.iter()
                .map(|p| inv.transform_point(&nalgebra::Point3::from(*p)).coords)
                .collect(),
        );

        let result = icp_match(&src, &dst, &Pose::identity(), &cfg).expect("icp");
        assert!(result.converged, "should converge: {result:?}");
        let err = truth.inverse() * result.pose;
        assert!(
            err.translation.vector.norm() < 1e-6,
            "translation error {}",
            err.translation.vector.norm()
        );
        assert!(err.rotation.angle() < 1e-6, "rotation error {}", err.rotation.angle());
        assert!(result.rmse < 1e-6, "rmse {}", result.rmse);
    }

    #[test]
    fn icp_rejects_degenerate_inputs() {
        let few = PointCloud::from_points(vec![Vec3::new(0.0, 0.0, 0.0); 4]);
        let cfg = IcpConfig::default();
        let err = icp_match(&few, &few, &Pose::identity(), &cfg).unwrap_err();
        assert!(matches!(err, OdomError::TooFewPoints { need: 10, .. }));

        // far-apart clouds share no gated correspondences
        let a = PointCloud::from_points(
            (0..20)
                .map(|i| Vec3::new(i as f64 * 0.5, 0.0, 0.0))
                .collect(),
        );
        let b = PointCloud::from_points(
            (0..20)
                .map(|i| Vec3::new(i as f64 * 0.5, 100.0, 0.0))
                .collect(),
        );
        let cfg = IcpConfig {
            voxel: 1e-3,
            ..IcpConfig::default()
        };
        let err = icp_match(&a, &b, &Pose::identity(), &cfg).unwrap_err();
        assert!(matches!(err, OdomError::NoOverlap { got: 0, .. }));

        for bad in [
            IcpConfig {
                min_points: 2,
                ..IcpConfig::default()
            },
            IcpConfig {
                voxel: 0.0,
                ..IcpConfig::default()
            },
            IcpConfig {
                divergence_patience: 0,
                ..IcpConfig::default()
            },
        ] {
            assert!(matches!(
                bad.validate().unwrap_err(),
                OdomError::BadConfig(_)
            ));
        }
    }

    #[test]
    fn odometry_tracks_a_static_sequence() {
        let world = small_world(23);
        let seq_spec = SequenceSpec {
            n_frames: 8,
            interval: 0.1,
            ego: EgoPath {
                waypoints: vec![[0.0, 0.0, 0.0], [0.6, 0.25, 0.0]],
                yaws: vec![0.0, 0.2],
            },
            yaw_jitter: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seq = gen_sequence(&world, &seq_spec, &dense_sensor(), &mut rng).expect("sequence");

        let clouds: Vec<PointCloud> = seq
            .frames
            .iter()
            .map(|f| unproject(&f.static_img))
            .collect();
        let cfg = IcpConfig {
            voxel: 0.06,
            max_pair_dist: 0.5,
            max_iters: 60,
            tolerance: 1e-8,
            ..IcpConfig::default()
        };
        let est = odometry(&clouds, seq.trajectory.stamps(), &cfg).expect("odometry");
        assert_eq!(est.len(), seq.trajectory.len());

        let ate = metrics::ate(&seq.trajectory, &est).expect("ate");
        assert!(
            ate.rmse < 0.05,
            "static-scene odometry should track closely, ATE rmse {}",
            ate.rmse
        );

        // the whole chain is bit-reproducible
        let again = odometry(&clouds, seq.trajectory.stamps(), &cfg).expect("odometry");
        assert_eq!(est, again);

        // a static sensor over identical scans stays at the identity
        let frozen = vec![clouds[0].clone(); 4];
        let still = odometry(&frozen, &[0.0, 0.1, 0.2, 0.3], &cfg).expect("odometry");
        for pose in still.poses() {
            assert!(pose.translation.vector.norm() < 1e-12);
            assert!(pose.rotation.angle() < 1e-12);
        }

        // a single frame is not a sequence
        assert!(matches!(
            odometry(&clouds[..1], &[0.0], &cfg).unwrap_err(),
            OdomError::TooFewFrames(1)
        ));
    }

    #[test]
    fn nav_eval_reports_finite_errors() {
        let world = small_world(29);
        let seq_spec = SequenceSpec {
            n_frames: 6,
            interval: 0.1,
            ego: EgoPath {
                waypoints: vec![[0.0, 0.0, 0.0], [0.4, 0.1, 0.0]],
                yaws: vec![0.0, 0.1],
            },
            yaw_jitter: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seq = gen_sequence(&world, &seq_spec, &sensor(), &mut rng).expect("sequence");
        let clouds: Vec<PointCloud> = seq
            .frames
            .iter()
            .map(|f| unproject(&f.dynamic_img))
            .collect();

        let cfg = IcpConfig {
            voxel: 0.12,
            max_pair_dist: 0.8,
            ..IcpConfig::default()
        };
        let nav = nav_eval(&clouds, &seq.trajectory, &cfg, 1).expect("nav eval");
        assert!(nav.ate.rmse.is_finite());
        assert!(nav.rpe.trans_rmse.is_finite());
        assert_eq!(nav.rpe.count, seq.frames.len() - 1);
        assert_eq!(nav.est.len(), seq.frames.len());

        // frame-count mismatch is rejected up front
        let err = nav_eval(&clouds[..4], &seq.trajectory, &cfg, 1).unwrap_err();
        assert!(matches!(err, OdomError::StampCountMismatch { .. }));
    }
}
