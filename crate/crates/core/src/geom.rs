//! Rigid-body poses and timestamped trajectories.
//!
//! Conventions: right-handed frames, `Pose` maps sensor-frame points into the
//! world frame, quaternions are stored `(x, y, z, w)` in flattened form.

use alloc::vec::Vec;
use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Pose = Isometry3<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("quaternion ({0}, {1}, {2}, {3}) is not normalizable")]
    InvalidQuaternion(f64, f64, f64, f64),
    #[error("non-finite translation component")]
    InvalidTranslation,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("timestamp {got} at index {index} does not exceed previous stamp {prev}")]
    NonMonotonicStamp { index: usize, prev: f64, got: f64 },
    #[error("non-finite timestamp at index {0}")]
    InvalidStamp(usize),
}

/// Builds a pose from a translation and an `(x, y, z, w)` quaternion,
/// normalizing the rotation. Rejects degenerate or non-finite input.
pub fn pose_from_parts(t: [f64; 3], q: [f64; 4]) -> Result<Pose, GeomError> {
    if t.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::InvalidTranslation);
    }
    let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
    let norm = quat.norm();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(GeomError::InvalidQuaternion(q[0], q[1], q[2], q[3]));
    }
    let rot = UnitQuaternion::from_quaternion(quat);
    Ok(Isometry3::from_parts(
        Translation3::new(t[0], t[1], t[2]),
        rot,
    ))
}

/// Decomposes a pose into translation and `(x, y, z, w)` quaternion parts.
pub fn pose_parts(pose: &Pose) -> ([f64; 3], [f64; 4]) {
    let t = pose.translation.vector;
    let q = pose.rotation.quaternion();
    ([t.x, t.y, t.z], [q.i, q.j, q.k, q.w])
}

/// A sequence of poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a stamped pose; the stamp must strictly exceed the last one.
    pub fn push(&mut self, stamp: f64, pose: Pose) -> Result<(), TrajectoryError> {
        if !stamp.is_finite() {
            return Err(TrajectoryError::InvalidStamp(self.stamps.len()));
        }
        if let Some(&prev) = self.stamps.last() {
            if stamp <= prev {
                return Err(TrajectoryError::NonMonotonicStamp {
                    index: self.stamps.len(),
                    prev,
                    got: stamp,
                });
            }
        }
        self.stamps.push(stamp);
        self.poses.push(pose);
        Ok(())
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = (f64, Pose)>,
    ) -> Result<Self, TrajectoryError> {
        let mut traj = Self::new();
        for (stamp, pose) in entries {
            traj.push(stamp, pose)?;
        }
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn stamp(&self, i: usize) -> f64 {
        self.stamps[i]
    }

    pub fn pose(&self, i: usize) -> &Pose {
        &self.poses[i]
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Pose)> {
        self.stamps.iter().copied().zip(self.poses.iter())
    }
}

/// Rotation angle of a pose's rotational part, in radians (in `[0, pi]`).
pub fn rotation_angle(pose: &Pose) -> f64 {
    pose.rotation.angle()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pose_parts_round_trip() {
        let pose = pose_from_parts([1.0, -2.0, 0.5], [0.0, 0.0, 0.3826834, 0.9238795]).unwrap();
        let (t, q) = pose_parts(&pose);
        assert_relative_eq!(t[0], 1.0, epsilon = 1e-12);
        let restored = pose_from_parts(t, q).unwrap();
        let p = Vec3::new(0.2, 0.4, -0.1);
        assert_relative_eq!(pose * p, restored * p, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_quaternion_rejected() {
        assert!(matches!(
            pose_from_parts([0.0; 3], [0.0, 0.0, 0.0, 0.0]),
            Err(GeomError::InvalidQuaternion(..))
        ));
        assert!(matches!(
            pose_from_parts([f64::NAN, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]),
            Err(GeomError::InvalidTranslation)
        ));
    }

    #[test]
    fn trajectory_rejects_non_increasing_stamps() {
        let mut traj = Trajectory::new();
        traj.push(0.0, Pose::identity()).unwrap();
        traj.push(0.5, Pose::identity()).unwrap();
        let err = traj.push(0.5, Pose::identity()).unwrap_err();
        assert!(matches!(err, TrajectoryError::NonMonotonicStamp { index: 2, .. }));
        assert_eq!(traj.len(), 2);
    }

    #[test]
    fn rotation_angle_of_known_yaw() {
        let pose = pose_from_parts([0.0; 3], [0.0, 0.0, (0.25f64).sin(), (0.25f64).cos()]).unwrap();
        assert_relative_eq!(rotation_angle(&pose), 0.5, epsilon = 1e-12);
    }
}
