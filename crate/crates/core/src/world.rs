//! Synthetic worlds: axis-aligned boxes and infinite axis-aligned walls for
//! static structure, box actors for dynamic content. A raycaster renders
//! static/dynamic range-image pairs from the same rays, which makes the two
//! images bit-identical outside actor influence by construction.
//!
//! Validated worlds keep every actor's whole travel region at least
//! `clearance` away from all static geometry, so along any ray the dynamic
//! return differs from the occluded static return by at least `clearance`.

use crate::geom::{Pose, Trajectory, TrajectoryError, Vec3};
use crate::math;
use crate::sensor::{Mask, RangeImage, SensorConfig};
use alloc::vec::Vec;
use rand::Rng;

const MIN_RAY_T: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("box has non-positive extent on some axis")]
    DegenerateBox,
    #[error("actor {0}: movable flag and capture velocity disagree")]
    MovableVelocityMismatch(usize),
    #[error("actor {0}: start center lies outside its travel bounds")]
    CenterOutsideBounds(usize),
    #[error("actor {0} violates the {1} m clearance to static geometry")]
    ClearanceViolated(usize, f64),
    #[error("non-finite value in world description")]
    NonFinite,
    #[error("ego path needs at least one waypoint")]
    EmptyEgoPath,
    #[error("sequence needs at least one frame and a positive interval")]
    BadSequence,
    #[error("could not place an ego pose in any generated layout")]
    PlacementFailed,
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Axis-aligned box given by opposite corners.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, WorldError> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn from_center(center: Vec3, half_extents: Vec3) -> Self {
        Self {
            min: [
                center.x - half_extents.x,
                center.y - half_extents.y,
                center.z - half_extents.z,
            ],
            max: [
                center.x + half_extents.x,
                center.y + half_extents.y,
                center.z + half_extents.z,
            ],
        }
    }

    fn validate(&self) -> Result<(), WorldError> {
        for i in 0..3 {
            if !self.min[i].is_finite() || !self.max[i].is_finite() {
                return Err(WorldError::NonFinite);
            }
            if self.min[i] >= self.max[i] {
                return Err(WorldError::DegenerateBox);
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        p.x >= self.min[0]
            && p.x <= self.max[0]
            && p.y >= self.min[1]
            && p.y <= self.max[1]
            && p.z >= self.min[2]
            && p.z <= self.max[2]
    }

    /// Minkowski expansion by `r` on every side.
    pub fn inflated(&self, r: f64) -> Self {
        Self {
            min: [self.min[0] - r, self.min[1] - r, self.min[2] - r],
            max: [self.max[0] + r, self.max[1] + r, self.max[2] + r],
        }
    }

    /// Euclidean distance between two boxes (0 when they touch or overlap).
    pub fn distance(&self, other: &Aabb) -> f64 {
        let mut sq = 0.0;
        for i in 0..3 {
            let gap = (self.min[i] - other.max[i]).max(other.min[i] - self.max[i]).max(0.0);
            sq += gap * gap;
        }
        math::sqrt(sq)
    }

    /// Slab-method ray intersection: smallest `t > 0` where the ray enters
    /// (or, starting inside, exits through) the box surface.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let o = [origin.x, origin.y, origin.z];
        let d = [dir.x, dir.y, dir.z];
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..3 {
            if d[i] == 0.0 {
                if o[i] < self.min[i] || o[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let mut t0 = (self.min[i] - o[i]) * inv;
            let mut t1 = (self.max[i] - o[i]) * inv;
            if t0 > t1 {
                core::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        if t_near > MIN_RAY_T {
            Some(t_near)
        } else if t_far > MIN_RAY_T {
            Some(t_far)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Infinite axis-aligned plane, hit from either side.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Wall {
    pub axis: Axis,
    pub offset: f64,
}

impl Wall {
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let (o, d) = match self.axis {
            Axis::X => (origin.x, dir.x),
            Axis::Y => (origin.y, dir.y),
            Axis::Z => (origin.z, dir.z),
        };
        if d == 0.0 {
            return None;
        }
        let t = (self.offset - o) / d;
        (t > MIN_RAY_T).then_some(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum StaticPrim {
    Box(Aabb),
    Wall(Wall),
}

impl StaticPrim {
    fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match self {
            StaticPrim::Box(b) => b.ray_hit(origin, dir),
            StaticPrim::Wall(w) => w.ray_hit(origin, dir),
        }
    }
}

/// A dynamic box. Its center travels from `center` with constant speed,
/// reflecting off the faces of `bounds` (a region for the center), so a
/// validated actor can never drift into static geometry no matter how long
/// a sequence runs. `movable` actors are stationary at capture time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Actor {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    pub velocity: [f64; 3],
    pub movable: bool,
    /// Travel bounds for the center; defaults to the start center (no travel).
    pub bounds: Option<Aabb>,
}

impl Actor {
    pub fn speed(&self) -> f64 {
        Vec3::from(self.velocity).norm()
    }

    fn travel_bounds(&self) -> Aabb {
        self.bounds.unwrap_or(Aabb {
            min: self.center,
            max: self.center,
        })
    }

    /// Center position at time `t`, reflecting inside the travel bounds.
    pub fn center_at(&self, t: f64) -> Vec3 {
        let b = self.travel_bounds();
        Vec3::new(
            reflect_coord(self.center[0], self.velocity[0], t, b.min[0], b.max[0]),
            reflect_coord(self.center[1], self.velocity[1], t, b.min[1], b.max[1]),
            reflect_coord(self.center[2], self.velocity[2], t, b.min[2], b.max[2]),
        )
    }

    pub fn shape_at(&self, t: f64) -> Aabb {
        Aabb::from_center(self.center_at(t), Vec3::from(self.half_extents))
    }

    /// Smallest box containing the actor at every reachable time.
    pub fn travel_region(&self) -> Aabb {
        let b = self.travel_bounds();
        Aabb {
            min: [
                b.min[0] - self.half_extents[0],
                b.min[1] - self.half_extents[1],
                b.min[2] - self.half_extents[2],
            ],
            max: [
                b.max[0] + self.half_extents[0],
                b.max[1] + self.half_extents[1],
                b.max[2] + self.half_extents[2],
            ],
        }
    }
}

/// Ping-pong motion of one coordinate inside `[lo, hi]`.
fn reflect_coord(x0: f64, v: f64, t: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if v == 0.0 || span <= 0.0 {
        return x0.clamp(lo, hi);
    }
    let raw = (x0 - lo) + v * t;
    let cycle = raw.rem_euclid(2.0 * span);
    if cycle <= span {
        lo + cycle
    } else {
        lo + 2.0 * span - cycle
    }
}

/// Static geometry plus dynamic actors.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct WorldSpec {
    pub statics: Vec<StaticPrim>,
    pub actors: Vec<Actor>,
}

impl WorldSpec {
    /// Checks box validity, the movable/velocity contract, travel bounds,
    /// and the actor clearance guarantee against all static geometry.
    pub fn validate(&self, clearance: f64) -> Result<(), WorldError> {
        for prim in &self.statics {
            match prim {
                StaticPrim::Box(b) => b.validate()?,
                StaticPrim::Wall(w) => {
                    if !w.offset.is_finite() {
                        return Err(WorldError::NonFinite);
                    }
                }
            }
        }
        for (i, actor) in self.actors.iter().enumerate() {
            if actor
                .center
                .iter()
                .chain(actor.half_extents.iter())
                .chain(actor.velocity.iter())
                .any(|v| !v.is_finite())
            {
                return Err(WorldError::NonFinite);
            }
            if actor.half_extents.iter().any(|&h| h <= 0.0) {
                return Err(WorldError::DegenerateBox);
            }
            let stationary = actor.speed() == 0.0;
            if actor.movable != stationary {
                return Err(WorldError::MovableVelocityMismatch(i));
            }
            let b = actor.travel_bounds();
            if b.min.iter().zip(b.max.iter()).any(|(lo, hi)| lo > hi) {
                return Err(WorldError::DegenerateBox);
            }
            if !b.contains(&Vec3::from(actor.center)) {
                return Err(WorldError::CenterOutsideBounds(i));
            }
            let region = actor.travel_region();
            for prim in &self.statics {
                let ok = match prim {
                    StaticPrim::Box(sb) => region.distance(sb) >= clearance,
                    StaticPrim::Wall(w) => {
                        let a = match w.axis {
                            Axis::X => 0,
                            Axis::Y => 1,
                            Axis::Z => 2,
                        };
                        region.max[a] <= w.offset - clearance
                            || region.min[a] >= w.offset + clearance
                    }
                };
                if !ok {
                    return Err(WorldError::ClearanceViolated(i, clearance));
                }
            }
        }
        Ok(())
    }

    fn static_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let mut best: Option<f64> = None;
        for prim in &self.statics {
            if let Some(t) = prim.ray_hit(origin, dir) {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }

    fn actor_hit(&self, origin: &Vec3, dir: &Vec3, time: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for actor in &self.actors {
            if let Some(t) = actor.shape_at(time).ray_hit(origin, dir) {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }
}

/// Raycast result: the image plus which cells returned off an actor.
#[derive(Debug, Clone, PartialEq)]
pub struct RaycastOutput {
    pub image: RangeImage,
    pub actor_hits: Mask,
}

/// Renders a scan from `pose` (sensor-to-world) at world time `time`.
/// With `with_actors = false` the actors are simply absent, so the only
/// cells that can differ from the actor-enabled render are those influenced
/// by an actor.
pub fn raycast(
    world: &WorldSpec,
    pose: &Pose,
    config: &SensorConfig,
    time: f64,
    with_actors: bool,
) -> RaycastOutput {
    let mut image = RangeImage::new_invalid(*config);
    let mut actor_hits = Mask::new_empty(config.height, config.width);
    let origin = Vec3::new(
        pose.translation.vector.x,
        pose.translation.vector.y,
        pose.translation.vector.z,
    );
    let r_max = config.r_max as f32;
    for row in 0..config.height {
        for col in 0..config.width {
            let dir = pose.rotation * config.cell_direction(row, col);
            let t_static = world.static_hit(&origin, &dir);
            let mut t = t_static;
            let mut off_actor = false;
            if with_actors {
                if let Some(ta) = world.actor_hit(&origin, &dir, time) {
                    if t.is_none_or(|ts| ta < ts) {
                        t = Some(ta);
                        off_actor = true;
                    }
                }
            }
            if let Some(t) = t {
                let r = t as f32;
                if r > 0.0 && r <= r_max {
                    image.set_range(row, col, r);
                    if off_actor {
                        actor_hits.set(row, col, true);
                    }
                }
            }
        }
    }
    RaycastOutput { image, actor_hits }
}

/// A static/dynamic scan pair captured from one pose, with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPair {
    pub static_img: RangeImage,
    pub dynamic_img: RangeImage,
    /// Cells whose ray hit an actor or whose return differs between the
    /// two scans (occlusion shadows included).
    pub gt_mask: Mask,
    pub pose: Pose,
}

impl ScanPair {
    /// Fraction of the dynamic scan's valid cells that are ground-truth dynamic.
    pub fn dynamism(&self) -> f64 {
        let valid = self.dynamic_img.valid_count();
        if valid == 0 {
            0.0
        } else {
            self.gt_mask.count() as f64 / valid as f64
        }
    }
}

/// Captures a static/dynamic pair at world time `time`.
pub fn gen_pair(world: &WorldSpec, pose: &Pose, config: &SensorConfig, time: f64) -> ScanPair {
    let st = raycast(world, pose, config, time, false);
    let dy = raycast(world, pose, config, time, true);
    let mut gt_mask = dy.actor_hits;
    for row in 0..config.height {
        for col in 0..config.width {
            if st.image.get(row, col) != dy.image.get(row, col) {
                gt_mask.set(row, col, true);
            }
        }
    }
    ScanPair {
        static_img: st.image,
        dynamic_img: dy.image,
        gt_mask,
        pose: *pose,
    }
}

/// Piecewise-linear ego path through waypoints with per-waypoint yaw.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct EgoPath {
    pub waypoints: Vec<[f64; 3]>,
    pub yaws: Vec<f64>,
}

impl EgoPath {
    /// Pose at phase `s` in `[0, 1]` along the whole path.
    pub fn pose_at(&self, s: f64) -> Pose {
        let n = self.waypoints.len();
        assert!(n >= 1 && self.yaws.len() == n, "validated on construction");
        if n == 1 {
            return yaw_pose(Vec3::from(self.waypoints[0]), self.yaws[0]);
        }
        let s = s.clamp(0.0, 1.0) * (n - 1) as f64;
        let seg = (s as usize).min(n - 2);
        let frac = s - seg as f64;
        let a = Vec3::from(self.waypoints[seg]);
        let b = Vec3::from(self.waypoints[seg + 1]);
        let pos = a + (b - a) * frac;
        let yaw = lerp_angle(self.yaws[seg], self.yaws[seg + 1], frac);
        yaw_pose(pos, yaw)
    }
}

fn yaw_pose(pos: Vec3, yaw: f64) -> Pose {
    Pose::from_parts(
        nalgebra::Translation3::new(pos.x, pos.y, pos.z),
        nalgebra::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw),
    )
}

/// Shortest-arc interpolation between two angles.
fn lerp_angle(a: f64, b: f64, t: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut d = (b - a).rem_euclid(two_pi);
    if d > core::f64::consts::PI {
        d -= two_pi;
    }
    a + d * t
}

/// How to capture a scan sequence.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct SequenceSpec {
    pub n_frames: usize,
    /// Seconds between frames.
    pub interval: f64,
    pub ego: EgoPath,
    /// Optional uniform yaw perturbation per frame (radians), seeded.
    #[cfg_attr(feature = "serde", serde(default))]
    pub yaw_jitter: f64,
}

/// A captured sequence: per-frame pairs plus the ground-truth trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<ScanPair>,
    pub trajectory: Trajectory,
    pub interval: f64,
}

/// Renders `spec.n_frames` pairs while the ego moves along the path and the
/// actors follow their reflected constant-speed motion. Deterministic for a
/// fixed seed.
pub fn gen_sequence<R: Rng>(
    world: &WorldSpec,
    spec: &SequenceSpec,
    config: &SensorConfig,
    rng: &mut R,
) -> Result<Sequence, WorldError> {
    if spec.n_frames == 0 || spec.interval <= 0.0 || !spec.interval.is_finite() {
        return Err(WorldError::BadSequence);
    }
    if spec.ego.waypoints.is_empty() || spec.ego.waypoints.len() != spec.ego.yaws.len() {
        return Err(WorldError::EmptyEgoPath);
    }
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut trajectory = Trajectory::new();
    let denom = (spec.n_frames.max(2) - 1) as f64;
    for k in 0..spec.n_frames {
        let time = k as f64 * spec.interval;
        let mut pose = spec.ego.pose_at(k as f64 / denom);
        if spec.yaw_jitter > 0.0 {
            let dyaw = rng.gen_range(-spec.yaw_jitter..=spec.yaw_jitter);
            pose.rotation = nalgebra::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), dyaw)
                * pose.rotation;
        }
        trajectory.push(time, pose)?;
        frames.push(gen_pair(world, &pose, config, time));
    }
    Ok(Sequence {
        frames,
        trajectory,
        interval: spec.interval,
    })
}

/// Parameter ranges for random room layouts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct WorldGenSpec {
    /// Half-width range of the room in x and y (meters).
    pub room_half: [f64; 2],
    /// Floor depth below the sensor plane (meters, positive).
    pub floor_depth: f64,
    /// Ceiling height above the sensor plane (meters, positive).
    pub ceiling_height: f64,
    /// Static box count range (inclusive).
    pub n_static: [usize; 2],
    /// Static box half-extent range (meters).
    pub static_half: [f64; 2],
    /// Actor count range (inclusive).
    pub n_actors: [usize; 2],
    /// Actor half-extent range (meters).
    pub actor_half: [f64; 2],
    /// Moving-actor speed range (m/s).
    pub actor_speed: [f64; 2],
    /// Fraction of actors that are movable (stationary at capture).
    pub movable_fraction: f64,
    /// Minimum distance between actors and static geometry.
    pub clearance: f64,
}

impl Default for WorldGenSpec {
    fn default() -> Self {
        Self {
            room_half: [4.0, 6.5],
            floor_depth: 1.0,
            ceiling_height: 1.6,
            n_static: [2, 5],
            static_half: [0.3, 0.9],
            n_actors: [1, 3],
            actor_half: [0.5, 1.1],
            actor_speed: [0.6, 1.6],
            movable_fraction: 0.4,
            clearance: 0.35,
        }
    }
}

fn gen_range_f(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Samples a closed-room world: 6 wall planes, a few static boxes, and
/// actors whose travel regions respect the clearance contract. Rejection
/// sampling is bounded, so generation always terminates.
pub fn gen_world<R: Rng>(spec: &WorldGenSpec, rng: &mut R) -> WorldSpec {
    let half_x = gen_range_f(rng, spec.room_half[0], spec.room_half[1]);
    let half_y = gen_range_f(rng, spec.room_half[0], spec.room_half[1]);
    let mut statics = alloc::vec![
        StaticPrim::Wall(Wall { axis: Axis::X, offset: -half_x }),
        StaticPrim::Wall(Wall { axis: Axis::X, offset: half_x }),
        StaticPrim::Wall(Wall { axis: Axis::Y, offset: -half_y }),
        StaticPrim::Wall(Wall { axis: Axis::Y, offset: half_y }),
        StaticPrim::Wall(Wall { axis: Axis::Z, offset: -spec.floor_depth }),
        StaticPrim::Wall(Wall { axis: Axis::Z, offset: spec.ceiling_height }),
    ];

    let mut boxes: Vec<Aabb> = Vec::new();
    let n_static = rng.gen_range(spec.n_static[0]..=spec.n_static[1]);
    for _ in 0..n_static {
        for _attempt in 0..40 {
            let h = Vec3::new(
                gen_range_f(rng, spec.static_half[0], spec.static_half[1]),
                gen_range_f(rng, spec.static_half[0], spec.static_half[1]),
                gen_range_f(rng, 0.2, spec.ceiling_height * 0.5),
            );
            let cx = gen_range_f(rng, -half_x + h.x + 0.2, half_x - h.x - 0.2);
            let cy = gen_range_f(rng, -half_y + h.y + 0.2, half_y - h.y - 0.2);
            let cz = gen_range_f(rng, -spec.floor_depth + h.z, 0.6);
            let candidate = Aabb::from_center(Vec3::new(cx, cy, cz), h);
            // keep the sensor column free and the boxes apart
            let near_origin = candidate.inflated(0.5).contains(&Vec3::zeros());
            let overlaps = boxes.iter().any(|b| candidate.distance(b) < 0.2);
            if !near_origin && !overlaps {
                boxes.push(candidate);
                break;
            }
        }
    }
    statics.extend(boxes.iter().copied().map(StaticPrim::Box));

    let world_statics = statics.clone();
    let static_boxes = boxes;
    let c = spec.clearance;
    let mut actors: Vec<Actor> = Vec::new();
    let n_actors = rng.gen_range(spec.n_actors[0]..=spec.n_actors[1]);
    for _ in 0..n_actors {
        for _attempt in 0..60 {
            let h = Vec3::new(
                gen_range_f(rng, spec.actor_half[0], spec.actor_half[1]),
                gen_range_f(rng, spec.actor_half[0], spec.actor_half[1]),
                gen_range_f(rng, spec.actor_half[0], spec.actor_half[1]),
            );
            let margin_x = half_x - h.x - c - 0.05;
            let margin_y = half_y - h.y - c - 0.05;
            if margin_x <= 0.0 || margin_y <= 0.0 {
                continue;
            }
            let cx = gen_range_f(rng, -margin_x, margin_x);
            let cy = gen_range_f(rng, -margin_y, margin_y);
            let z_lo = -spec.floor_depth + h.z + c + 0.05;
            let z_hi = (spec.ceiling_height - h.z - c - 0.05).min(0.8);
            if z_hi <= z_lo {
                continue;
            }
            let cz = gen_range_f(rng, z_lo, z_hi);
            let center = Vec3::new(cx, cy, cz);

            let movable = rng.gen_range(0.0..1.0) < spec.movable_fraction;
            let (velocity, bounds) = if movable {
                (Vec3::zeros(), None)
            } else {
                let speed = gen_range_f(rng, spec.actor_speed[0], spec.actor_speed[1]);
                let ang = rng.gen_range(0.0..core::f64::consts::TAU);
                let v = Vec3::new(speed * math::cos(ang), speed * math::sin(ang), 0.0);
                // travel box around the start center, clipped to the room margins
                let travel = 1.5;
                let b = Aabb {
                    min: [
                        (cx - travel).max(-margin_x),
                        (cy - travel).max(-margin_y),
                        cz,
                    ],
                    max: [(cx + travel).min(margin_x), (cy + travel).min(margin_y), cz],
                };
                (v, Some(b))
            };
            let candidate = Actor {
                center: [center.x, center.y, center.z],
                half_extents: [h.x, h.y, h.z],
                velocity: [velocity.x, velocity.y, velocity.z],
                movable,
                bounds,
            };
            let region = candidate.travel_region();
            let clear_statics = static_boxes.iter().all(|b| region.distance(b) >= c);
            let clear_actors = actors
                .iter()
                .all(|a| region.distance(&a.travel_region()) >= 0.3);
            let away_from_sensor = !region.inflated(0.4).contains(&Vec3::zeros());
            if clear_statics && clear_actors && away_from_sensor {
                actors.push(candidate);
                break;
            }
        }
    }

    let world = WorldSpec {
        statics: world_statics,
        actors,
    };
    debug_assert!(world.validate(c).is_ok());
    world
}

/// Samples an ego pose in free space (outside inflated boxes and actor
/// travel regions, inside the room margin). Returns `None` when rejection
/// sampling exhausts its attempts.
pub fn sample_free_pose<R: Rng>(
    world: &WorldSpec,
    half_x: f64,
    half_y: f64,
    margin: f64,
    rng: &mut R,
) -> Option<Pose> {
    for _ in 0..80 {
        let x = gen_range_f(rng, -(half_x - margin), half_x - margin);
        let y = gen_range_f(rng, -(half_y - margin), half_y - margin);
        let pos = Vec3::new(x, y, 0.0);
        let yaw = rng.gen_range(0.0..core::f64::consts::TAU);
        let blocked = world.statics.iter().any(|p| match p {
            StaticPrim::Box(b) => b.inflated(margin).contains(&pos),
            StaticPrim::Wall(_) => false,
        }) || world
            .actors
            .iter()
            .any(|a| a.travel_region().inflated(margin).contains(&pos));
        if !blocked {
            return Some(yaw_pose(pos, yaw));
        }
    }
    None
}

/// Generates `n_worlds` random layouts with `pairs_per_world` scan pairs
/// each, grouped by layout so callers can split by world rather than by
/// pair. Scan times are sampled uniformly in [0, 8) seconds.
pub fn gen_dataset<R: Rng>(
    spec: &WorldGenSpec,
    sensor: &SensorConfig,
    n_worlds: usize,
    pairs_per_world: usize,
    rng: &mut R,
) -> Result<Vec<Vec<ScanPair>>, WorldError> {
    let mut out = Vec::with_capacity(n_worlds);
    for _ in 0..n_worlds {
        let mut world_pairs = None;
        for _ in 0..20 {
            let world = gen_world(spec, rng);
            let (hx, hy) =
                room_half_extents(&world).unwrap_or((spec.room_half[0], spec.room_half[0]));
            let mut pairs = Vec::with_capacity(pairs_per_world);
            let mut ok = true;
            for _ in 0..pairs_per_world {
                match sample_free_pose(&world, hx, hy, 0.3, rng) {
                    Some(pose) => {
                        let t = gen_range_f(rng, 0.0, 8.0);
                        pairs.push(gen_pair(&world, &pose, sensor, t));
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                world_pairs = Some(pairs);
                break;
            }
        }
        out.push(world_pairs.ok_or(WorldError::PlacementFailed)?);
    }
    Ok(out)
}

/// Room half-extents recovered from the wall planes of a generated world.
pub fn room_half_extents(world: &WorldSpec) -> Option<(f64, f64)> {
    let mut hx: Option<f64> = None;
    let mut hy: Option<f64> = None;
    for p in &world.statics {
        if let StaticPrim::Wall(w) = p {
            match w.axis {
                Axis::X => hx = Some(hx.map_or(math::abs(w.offset), |v| v.max(math::abs(w.offset)))),
                Axis::Y => hy = Some(hy.map_or(math::abs(w.offset), |v| v.max(math::abs(w.offset)))),
                Axis::Z => {}
            }
        }
    }
    Some((hx?, hy?))
}
