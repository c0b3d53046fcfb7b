//! Segmentation by subtraction: a dynamic scan minus its translated static
//! counterpart yields the moving-object cells, which are clustered in world
//! space and classified as moving or movable from centroid tracks.

use crate::geom::{Pose, Vec3};
use crate::math;
use crate::sensor::{Mask, RangeImage};
use alloc::vec;
use alloc::vec::Vec;

/// Thresholds for subtraction, clustering, and motion classification.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct SegmentConfig {
    /// Range residual (meters) at or above which a cell counts as dynamic.
    pub tau: f64,
    /// Neighbor radius (meters) for world-space clustering.
    pub cluster_radius: f64,
    /// Minimum cells per cluster; smaller groups are dropped as noise.
    pub min_cluster: usize,
    /// Association gate (meters) between a track and a new centroid.
    pub gate: f64,
    /// Observations per motion-test window.
    pub window: usize,
    /// Displacement (meters) across a window above which a track is moving.
    pub move_eps: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            tau: 0.2,
            cluster_radius: 0.8,
            min_cluster: 3,
            gate: 2.0,
            window: 5,
            move_eps: 0.5,
        }
    }
}

/// Cells where the dynamic scan disagrees with the static reference: the
/// absolute range residual reaches `tau`, or validity flips.
pub fn diff_segment(dynamic: &RangeImage, reference: &RangeImage, tau: f64) -> Mask {
    debug_assert_eq!(dynamic.config(), reference.config());
    let (h, w) = (dynamic.height(), dynamic.width());
    let mut mask = Mask::new_empty(h, w);
    for y in 0..h {
        for x in 0..w {
            let dv = dynamic.is_valid(y, x);
            let rv = reference.is_valid(y, x);
            let hit = match (dv, rv) {
                (true, true) => {
                    math::abs(dynamic.get(y, x) as f64 - reference.get(y, x) as f64) >= tau
                }
                (false, false) => false,
                _ => true,
            };
            if hit {
                mask.set(y, x, true);
            }
        }
    }
    mask
}

/// A connected group of masked cells in world space.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// (row, col) of each member cell.
    pub cells: Vec<(usize, usize)>,
    /// World-frame points of the member cells.
    pub points: Vec<Vec3>,
    pub centroid: Vec3,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // deterministic: smaller index wins
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups masked, valid cells of the dynamic scan by world-space proximity
/// (single-linkage within `radius`), dropping groups smaller than
/// `min_cluster`. Clusters come out ordered by their first cell in row-major
/// order.
pub fn cluster_mask(
    dynamic: &RangeImage,
    mask: &Mask,
    pose: &Pose,
    radius: f64,
    min_cluster: usize,
) -> Vec<Cluster> {
    let cfg = dynamic.config();
    let mut cells = Vec::new();
    let mut points = Vec::new();
    for y in 0..dynamic.height() {
        for x in 0..dynamic.width() {
            if mask.get(y, x) && dynamic.is_valid(y, x) {
                let p = cfg.cell_direction(y, x) * dynamic.get(y, x) as f64;
                cells.push((y, x));
                points.push(pose * nalgebra::Point3::from(p));
            }
        }
    }
    let n = points.len();
    let mut uf = UnionFind::new(n);
    let r2 = radius * radius;
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm_squared() <= r2 {
                uf.union(i, j);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = uf.find(i);
        groups[r].push(i);
    }
    let mut out = Vec::new();
    for g in groups {
        if g.len() < min_cluster.max(1) {
            continue;
        }
        let mut centroid = Vec3::zeros();
        for &i in &g {
            centroid += points[i].coords;
        }
        centroid /= g.len() as f64;
        out.push(Cluster {
            cells: g.iter().map(|&i| cells[i]).collect(),
            points: g.iter().map(|&i| points[i].coords).collect(),
            centroid,
        });
    }
    out
}

/// Subtraction followed by clustering.
pub fn segment_scan(
    dynamic: &RangeImage,
    reference: &RangeImage,
    pose: &Pose,
    cfg: &SegmentConfig,
) -> (Mask, Vec<Cluster>) {
    let mask = diff_segment(dynamic, reference, cfg.tau);
    let clusters = cluster_mask(dynamic, &mask, pose, cfg.cluster_radius, cfg.min_cluster);
    (mask, clusters)
}

/// Verdict for a tracked object. An object is moving when any window of
/// `window` consecutive observations shows a first-to-last centroid
/// displacement above `move_eps`; otherwise it is merely movable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum MotionClass {
    Moving,
    Movable,
}

/// Centroid track across a sequence. `class` stays `None` until the track
/// has accumulated a full observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    /// (frame index, centroid) per observation.
    pub observations: Vec<(usize, Vec3)>,
    pub class: Option<MotionClass>,
}

impl Track {
    fn classify(&mut self, window: usize, move_eps: f64) {
        if self.observations.len() < window {
            return;
        }
        let moving = self
            .observations
            .windows(window)
            .any(|w| (w[window - 1].1 - w[0].1).norm() > move_eps);
        self.class = Some(if moving {
            MotionClass::Moving
        } else {
            MotionClass::Movable
        });
    }
}

/// Associates per-frame clusters into tracks (greedy nearest-centroid within
/// the gate) and classifies each track once it spans a full window.
pub fn track_and_classify(frames: &[Vec<Cluster>], cfg: &SegmentConfig) -> Vec<Track> {
    let mut tracks: Vec<Track> = Vec::new();
    for (f, clusters) in frames.iter().enumerate() {
        // candidate (distance, track, cluster) pairs inside the gate
        let mut cands = Vec::new();
        for (ti, t) in tracks.iter().enumerate() {
            let last = t.observations.last().expect("tracks are never empty").1;
            for (ci, c) in clusters.iter().enumerate() {
                let d = (c.centroid - last).norm();
                if d <= cfg.gate {
                    cands.push((d, ti, ci));
                }
            }
        }
        cands.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut track_used = vec![false; tracks.len()];
        let mut cluster_used = vec![false; clusters.len()];
        for (_, ti, ci) in cands {
            if track_used[ti] || cluster_used[ci] {
                continue;
            }
            track_used[ti] = true;
            cluster_used[ci] = true;
            tracks[ti].observations.push((f, clusters[ci].centroid));
            tracks[ti].classify(cfg.window, cfg.move_eps);
        }
        for (ci, c) in clusters.iter().enumerate() {
            if !cluster_used[ci] {
                tracks.push(Track {
                    id: tracks.len(),
                    observations: vec![(f, c.centroid)],
                    class: None,
                });
            }
        }
    }
    tracks
}
