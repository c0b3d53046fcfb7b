//! Evaluation metrics: Chamfer distance (sum of bidirectional squared
//! nearest-neighbor distances), exact Earth Mover's Distance via minimum-cost
//! assignment, trajectory error metrics (ATE after closed-form alignment,
//! RPE over pose deltas), and supporting pieces.

use crate::geom::{Pose, Trajectory, Vec3};
use crate::math;
use crate::sensor::PointCloud;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Matrix3, Translation3, UnitQuaternion};

pub mod lqi;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("clouds must have equal sizes, got {0} and {1}")]
    SizeMismatch(usize, usize),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("cost matrix must be square and finite")]
    BadCostMatrix,
    #[error("trajectories must have equal length, got {0} and {1}")]
    TrajectoryLengthMismatch(usize, usize),
    #[error("timestamps diverge at index {0}")]
    StampMismatch(usize),
    #[error("delta must satisfy 1 <= delta < trajectory length")]
    BadDelta,
}

// ---------------------------------------------------------------------------
// nearest-neighbor index

/// Uniform-grid spatial index with exact nearest-neighbor queries.
pub struct GridIndex<'a> {
    points: &'a [Vec3],
    cell: f64,
    origin: Vec3,
    key_max: [i64; 3],
    map: BTreeMap<[i64; 3], Vec<u32>>,
}

impl<'a> GridIndex<'a> {
    pub fn build(points: &'a [Vec3]) -> Self {
        assert!(!points.is_empty(), "index needs at least one point");
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).amax().max(0.0);
        let n = points.len() as f64;
        let mut cell = extent / n.powf(1.0 / 3.0);
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        let mut map: BTreeMap<[i64; 3], Vec<u32>> = BTreeMap::new();
        let key_of = |p: &Vec3| -> [i64; 3] {
            [
                math::floor((p.x - lo.x) / cell) as i64,
                math::floor((p.y - lo.y) / cell) as i64,
                math::floor((p.z - lo.z) / cell) as i64,
            ]
        };
        let mut key_max = [0i64; 3];
        for (i, p) in points.iter().enumerate() {
            let k = key_of(p);
            for a in 0..3 {
                key_max[a] = key_max[a].max(k[a]);
            }
            map.entry(k).or_default().push(i as u32);
        }
        Self {
            points,
            cell,
            origin: lo,
            key_max,
            map,
        }
    }

    fn key(&self, p: &Vec3) -> [i64; 3] {
        [
            math::floor((p.x - self.origin.x) / self.cell) as i64,
            math::floor((p.y - self.origin.y) / self.cell) as i64,
            math::floor((p.z - self.origin.z) / self.cell) as i64,
        ]
    }

    /// Exact nearest indexed point: (index, squared distance).
    ///
    /// Scans Chebyshev shells outward; any point in shell `k + 1` is at
    /// least `k * cell` away, so the scan stops as soon as the current best
    /// is at most that bound.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let qk = self.key(q);
        // `start`: first shell intersecting the occupied key range;
        // `end`: shell reaching its farthest corner (everything scanned).
        let mut start = 0i64;
        let mut end = 0i64;
        for a in 0..3 {
            start = start.max(-qk[a]).max(qk[a] - self.key_max[a]);
            end = end.max(qk[a].abs()).max((self.key_max[a] - qk[a]).abs());
        }
        let mut best = f64::INFINITY;
        let mut best_i = 0usize;
        for k in start.max(0)..=end {
            self.scan_shell(&qk, k, q, &mut best, &mut best_i);
            let lower = (k as f64) * self.cell;
            if best <= lower * lower {
                break;
            }
        }
        (best_i, best)
    }

    /// Exact squared distance to the nearest indexed point.
    pub fn nearest_sq(&self, q: &Vec3) -> f64 {
        self.nearest(q).1
    }

    /// Scans the Chebyshev shell at distance `k` (clipped to the occupied
    /// key range).
    fn scan_shell(&self, qk: &[i64; 3], k: i64, q: &Vec3, best: &mut f64, best_i: &mut usize) {
        let lo = [
            (qk[0] - k).max(0),
            (qk[1] - k).max(0),
            (qk[2] - k).max(0),
        ];
        let hi = [
            (qk[0] + k).min(self.key_max[0]),
            (qk[1] + k).min(self.key_max[1]),
            (qk[2] + k).min(self.key_max[2]),
        ];
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return;
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    let cheb = (x - qk[0]).abs().max((y - qk[1]).abs()).max((z - qk[2]).abs());
                    if cheb != k {
                        continue;
                    }
                    if let Some(bucket) = self.map.get(&[x, y, z]) {
                        for &i in bucket {
                            let d = (self.points[i as usize] - q).norm_squared();
                            if d < *best {
                                *best = d;
                                *best_i = i as usize;
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// chamfer

/// Chamfer distance: sum over both directions of squared nearest-neighbor
/// distances (unnormalized, matching the frozen hand values).
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let ia = GridIndex::build(a.points());
    let ib = GridIndex::build(b.points());
    let mut total = 0.0;
    for p in a.iter() {
        total += ib.nearest_sq(p);
    }
    for q in b.iter() {
        total += ia.nearest_sq(q);
    }
    Ok(total)
}

/// Quadratic-scan chamfer used as the oracle for the indexed version.
pub fn chamfer_naive(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let dir = |xs: &[Vec3], ys: &[Vec3]| -> f64 {
        xs.iter()
            .map(|x| {
                ys.iter()
                    .map(|y| (x - y).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
    };
    Ok(dir(a.points(), b.points()) + dir(b.points(), a.points()))
}

// ---------------------------------------------------------------------------
// assignment / EMD

/// Exact minimum-cost perfect assignment on a square cost matrix
/// (Kuhn-Munkres with potentials, O(n^3)). Returns (total cost, row -> col).
pub fn hungarian(cost: &[Vec<f64>]) -> Result<(f64, Vec<usize>), MetricError> {
    let n = cost.len();
    if n == 0 {
        return Err(MetricError::BadCostMatrix);
    }
    for row in cost {
        if row.len() != n || row.iter().any(|c| !c.is_finite()) {
            return Err(MetricError::BadCostMatrix);
        }
    }
    // 1-indexed potentials method
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
        total += cost[p[j] - 1][j - 1];
    }
    Ok((total, assignment))
}

/// Earth Mover's Distance between equal-size clouds: the minimum over
/// bijections of summed Euclidean distances, solved exactly.
pub fn emd(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    if a.len() != b.len() {
        return Err(MetricError::SizeMismatch(a.len(), b.len()));
    }
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| b.iter().map(|y| (x - y).norm()).collect())
        .collect();
    hungarian(&cost).map(|(total, _)| total)
}

// ---------------------------------------------------------------------------
// farthest point sampling

/// Deterministic farthest-point subsampling; the first index comes from the
/// seed, each next point maximizes distance to the chosen set. Returns all
/// indices when `k >= n`.
pub fn farthest_point_sample(points: &[Vec3], k: usize, seed: u64) -> Vec<usize> {
    use rand::{Rng, SeedableRng};
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..n);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(first);
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| (p - points[first]).norm_squared())
        .collect();
    while chosen.len() < k {
        let (mut best_i, mut best_d) = (0usize, f64::NEG_INFINITY);
        for (i, &d) in dist.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best_i = i;
            }
        }
        chosen.push(best_i);
        for (i, p) in points.iter().enumerate() {
            let d = (p - points[best_i]).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    chosen
}

// ---------------------------------------------------------------------------
// rigid alignment and trajectory metrics

/// Closed-form least-squares rigid alignment: returns the pose `T`
/// minimizing `sum ||T * src_i - dst_i||^2`, with reflection correction.
pub fn horn_align(src: &[Vec3], dst: &[Vec3]) -> Result<Pose, MetricError> {
    if src.len() != dst.len() {
        return Err(MetricError::SizeMismatch(src.len(), dst.len()));
    }
    if src.len() < 3 {
        return Err(MetricError::TooFewPoints {
            need: 3,
            got: src.len(),
        });
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst.iter()) {
        h += (s - cs) * (d - cd).transpose();
    }
    // R maps centered src onto centered dst: maximize trace(R * H)
    let svd = h.svd(true, true);
    let u = svd.u.ok_or(MetricError::BadCostMatrix)?;
    let v_t = svd.v_t.ok_or(MetricError::BadCostMatrix)?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let correction = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, if d < 0.0 { -1.0 } else { 1.0 }));
    let r = v * correction * u.transpose();
    let rot = UnitQuaternion::from_matrix(&r);
    let t = cd - r * cs;
    Ok(Pose::from_parts(Translation3::new(t.x, t.y, t.z), rot))
}

/// Absolute trajectory error statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct AteResult {
    /// RMSE of translational residual norms after rigid alignment.
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// Per-axis RMSE of the residuals (reported, not gated).
    pub per_axis_rmse: [f64; 3],
    /// The alignment applied to the estimate.
    pub alignment: Pose,
}

fn check_stamps(gt: &Trajectory, est: &Trajectory) -> Result<(), MetricError> {
    if gt.len() != est.len() {
        return Err(MetricError::TrajectoryLengthMismatch(gt.len(), est.len()));
    }
    for i in 0..gt.len() {
        if math::abs(gt.stamp(i) - est.stamp(i)) > 1e-9 {
            return Err(MetricError::StampMismatch(i));
        }
    }
    Ok(())
}

/// Absolute trajectory error: rigidly aligns the estimated positions to the
/// ground truth (Horn), then reports residual statistics.
pub fn ate(gt: &Trajectory, est: &Trajectory) -> Result<AteResult, MetricError> {
    check_stamps(gt, est)?;
    let gt_pos: Vec<Vec3> = gt.poses().iter().map(|p| p.translation.vector).collect();
    let est_pos: Vec<Vec3> = est.poses().iter().map(|p| p.translation.vector).collect();
    let alignment = horn_align(&est_pos, &gt_pos)?;
    let mut norms = Vec::with_capacity(gt_pos.len());
    let mut sq_sum = 0.0;
    let mut axis_sq = [0.0f64; 3];
    let mut max = 0.0f64;
    for (g, e) in gt_pos.iter().zip(est_pos.iter()) {
        let aligned = alignment.transform_point(&nalgebra::Point3::from(*e)).coords;
        let r = g - aligned;
        let norm = r.norm();
        norms.push(norm);
        sq_sum += r.norm_squared();
        axis_sq[0] += r.x * r.x;
        axis_sq[1] += r.y * r.y;
        axis_sq[2] += r.z * r.z;
        max = max.max(norm);
    }
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let median = math::median(&norms).unwrap_or(0.0);
    Ok(AteResult {
        rmse: math::sqrt(sq_sum / n),
        mean,
        median,
        max,
        per_axis_rmse: [
            math::sqrt(axis_sq[0] / n),
            math::sqrt(axis_sq[1] / n),
            math::sqrt(axis_sq[2] / n),
        ],
        alignment,
    })
}

/// Relative pose error statistics over a fixed index delta.
#[derive(Debug, Clone, PartialEq)]
pub struct RpeResult {
    /// RMSE of relative translation error norms (meters).
    pub trans_rmse: f64,
    /// RMSE of relative rotation error angles (radians).
    pub rot_rmse: f64,
    pub trans_mean: f64,
    pub rot_mean: f64,
    /// Number of evaluated pose deltas.
    pub count: usize,
}

/// Relative pose error: compares motion increments over `delta` steps,
/// `E_i = (gt_i^-1 gt_{i+delta})^-1 (est_i^-1 est_{i+delta})`.
pub fn rpe(gt: &Trajectory, est: &Trajectory, delta: usize) -> Result<RpeResult, MetricError> {
    check_stamps(gt, est)?;
    if delta == 0 || delta >= gt.len() {
        return Err(MetricError::BadDelta);
    }
    let n = gt.len() - delta;
    let mut trans_sq = 0.0;
    let mut rot_sq = 0.0;
    let mut trans_sum = 0.0;
    let mut rot_sum = 0.0;
    for i in 0..n {
        let motion_gt = gt.pose(i).inverse() * gt.pose(i + delta);
        let motion_est = est.pose(i).inverse() * est.pose(i + delta);
        let err = motion_gt.inverse() * motion_est;
        let t = err.translation.vector.norm();
        let a = err.rotation.angle();
        trans_sq += t * t;
        rot_sq += a * a;
        trans_sum += t;
        rot_sum += a;
    }
    let nf = n as f64;
    Ok(RpeResult {
        trans_rmse: math::sqrt(trans_sq / nf),
        rot_rmse: math::sqrt(rot_sq / nf),
        trans_mean: trans_sum / nf,
        rot_mean: rot_sum / nf,
        count: n,
    })
}

// ---------------------------------------------------------------------------
// rank correlation

/// Spearman rank correlation with average ranks for ties. `None` when fewer
/// than two samples or either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs)?;
    let ry = average_ranks(ys)?;
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(ry.iter()) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / math::sqrt(vx * vy))
}

fn average_ranks(xs: &[f64]) -> Option<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return None;
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("NaN filtered"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    Some(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_points(pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    #[test]
    fn chamfer_frozen_hand_values() {
        // single 3-4-5 pair: 25 in each direction
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[3.0, 4.0, 0.0]]);
        assert_relative_eq!(chamfer(&a, &b).unwrap(), 50.0, epsilon = 1e-12);
        // asymmetric counts
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0, 0.0]]);
        assert_relative_eq!(chamfer(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        // identical clouds
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert!(matches!(
            chamfer(&a, &PointCloud::new()),
            Err(MetricError::EmptyCloud)
        ));
    }

    #[test]
    fn emd_frozen_hand_values() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = cloud(&[[0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        assert_relative_eq!(emd(&a, &b).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(emd(&a, &a).unwrap(), 0.0);
        let c = cloud(&[[0.0, 0.0, 0.0]]);
        assert!(matches!(emd(&a, &c), Err(MetricError::SizeMismatch(2, 1))));
    }

    #[test]
    fn hungarian_frozen_case() {
        // classic 3x3: optimal is 1 + 2 + 2 = 5 via (0,1), (1,0), (2,2)
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let (total, asg) = hungarian(&cost).unwrap();
        assert_relative_eq!(total, 5.0, epsilon = 1e-12);
        let mut seen = [false; 3];
        for &c in &asg {
            seen[c] = true;
        }
        assert!(seen.iter().all(|&s| s), "assignment must be a permutation");
    }

    fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for col in 0..cost.len() {
                if !used[col] {
                    used[col] = true;
                    let v = cost[row][col] + rec(cost, row + 1, used);
                    used[col] = false;
                    best = best.min(v);
                }
            }
            best
        }
        let mut used = vec![false; cost.len()];
        rec(cost, 0, &mut used)
    }

    #[test]
    fn hungarian_matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in 1..=7usize {
            for _ in 0..8 {
                let cost: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.gen_range(0.0..10.0)).collect())
                    .collect();
                let (total, _) = hungarian(&cost).unwrap();
                assert_relative_eq!(total, brute_force_assignment(&cost), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fps_is_deterministic_and_spreads() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..50)
            .map(|_| Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0))
            .collect();
        let s1 = farthest_point_sample(&pts, 10, 3);
        let s2 = farthest_point_sample(&pts, 10, 3);
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 10);
        let mut sorted = s1.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 10, "samples must be distinct");
        assert_eq!(farthest_point_sample(&pts, 100, 3).len(), 50);
    }

    #[test]
    fn horn_recovers_known_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let src: Vec<Vec3> = (0..12)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                    )
                })
                .collect();
            let rot = UnitQuaternion::from_euler_angles(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let t = Vec3::new(rng.gen_range(-2.0..2.0), 0.3, -1.0);
            let dst: Vec<Vec3> = src.iter().map(|p| rot * p + t).collect();
            let pose = horn_align(&src, &dst).unwrap();
            for (s, d) in src.iter().zip(dst.iter()) {
                let mapped = pose.transform_point(&nalgebra::Point3::from(*s)).coords;
                assert!((mapped - d).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn horn_rejects_degenerate_input() {
        let p = Vec3::new(0.0, 0.0, 0.0);
        assert!(matches!(
            horn_align(&[p, p], &[p, p]),
            Err(MetricError::TooFewPoints { need: 3, got: 2 })
        ));
    }

    fn traj_from_positions(ps: &[Vec3]) -> Trajectory {
        Trajectory::from_entries(ps.iter().enumerate().map(|(i, p)| {
            (
                i as f64,
                Pose::from_parts(
                    Translation3::new(p.x, p.y, p.z),
                    UnitQuaternion::identity(),
                ),
            )
        }))
        .unwrap()
    }

    #[test]
    fn ate_zero_for_rigidly_transformed_estimate() {
        let gt_pos: Vec<Vec3> = (0..10)
            .map(|i| Vec3::new(i as f64 * 0.5, (i as f64 * 0.3).sin(), 0.1 * i as f64))
            .collect();
        let gt = traj_from_positions(&gt_pos);
        let rot = UnitQuaternion::from_euler_angles(0.1, -0.2, 0.7);
        let t = Vec3::new(4.0, -2.0, 1.0);
        let est = traj_from_positions(
            &gt_pos.iter().map(|p| rot * p + t).collect::<Vec<_>>(),
        );
        let res = ate(&gt, &est).unwrap();
        assert!(res.rmse < 1e-9, "rmse = {}", res.rmse);
        // constant offset only
        let est2 = traj_from_positions(
            &gt_pos
                .iter()
                .map(|p| p + Vec3::new(1.0, 0.0, 0.0))
                .collect::<Vec<_>>(),
        );
        assert!(ate(&gt, &est2).unwrap().rmse < 1e-9);
    }

    #[test]
    fn rpe_constant_drift_is_exact() {
        let n = 12;
        let gt = traj_from_positions(
            &(0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect::<Vec<_>>(),
        );
        let est = traj_from_positions(
            &(0..n)
                .map(|i| Vec3::new(i as f64 * 1.1, 0.0, 0.0))
                .collect::<Vec<_>>(),
        );
        let res = rpe(&gt, &est, 1).unwrap();
        assert!((res.trans_rmse - 0.1).abs() < 1e-12);
        assert!(res.rot_rmse < 1e-12);
        assert_eq!(res.count, n - 1);
        assert!(matches!(rpe(&gt, &est, 0), Err(MetricError::BadDelta)));
        assert!(matches!(rpe(&gt, &est, n), Err(MetricError::BadDelta)));
    }

    #[test]
    fn spearman_hand_values() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(
            spearman(&xs, &[2.0, 4.0, 6.0, 8.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            spearman(&xs, &[8.0, 6.0, 4.0, 2.0]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        // ties get average ranks; [1,1,2] vs [3,3,4] still perfectly concordant
        assert_relative_eq!(
            spearman(&[1.0, 1.0, 2.0], &[3.0, 3.0, 4.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(spearman(&[1.0, 1.0], &[2.0, 3.0]), None);
    }

    proptest! {
        #[test]
        fn chamfer_index_equals_naive(
            pa in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0, -4.0f64..4.0), 1..120),
            pb in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0, -4.0f64..4.0), 1..120),
        ) {
            let a = PointCloud::from_points(pa.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect());
            let b = PointCloud::from_points(pb.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect());
            let fast = chamfer(&a, &b).unwrap();
            let slow = chamfer_naive(&a, &b).unwrap();
            prop_assert!((fast - slow).abs() <= 1e-9 * (1.0 + slow.abs()),
                "fast {} != naive {}", fast, slow);
        }

        #[test]
        fn chamfer_is_symmetric_and_emd_permutation_invariant(
            pa in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 2..7),
        ) {
            let a = PointCloud::from_points(pa.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect());
            let mut shuffled = pa.clone();
            shuffled.rotate_left(1);
            let b = PointCloud::from_points(shuffled.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect());
            prop_assert!((chamfer(&a, &b).unwrap() - chamfer(&b, &a).unwrap()).abs() < 1e-12);
            // same multiset in different order: EMD must be exactly zero-ish
            prop_assert!(emd(&a, &b).unwrap() < 1e-9);
        }
    }
}
