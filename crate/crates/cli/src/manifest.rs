//! On-disk dataset and sequence layouts.
//!
//! A dataset directory holds `manifest.toml` plus a `pairs/` folder with
//! one dynamic scan, one static scan, and one ground-truth mask per pair:
//!
//! ```text
//! out/
//!   manifest.toml
//!   pairs/w000_p000_dyn.mvri
//!   pairs/w000_p000_stat.mvri
//!   pairs/w000_p000_mask.mvri
//! ```
//!
//! Pairs are split by world (70 / 15 / 15 train / val / test) so no room
//! layout leaks across splits. A sequence directory holds `seq.toml`, a
//! `frames/` folder in the same naming scheme, and the ground-truth ego
//! trajectory `gt_traj.txt` in TUM text form.

use std::fs;
use std::path::{Path, PathBuf};

use moves_core::geom::{pose_from_parts, pose_parts, Trajectory};
use moves_core::sensor::SensorConfig;
use moves_core::world::{ScanPair, Sequence};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, rfail, vfail, CliResult};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train/val/test)")),
        }
    }
}

/// Deterministic world-level split boundaries: every split is nonempty as
/// soon as there are enough worlds to populate it.
pub fn split_for_world(world: usize, n_worlds: usize) -> Split {
    let n_test = if n_worlds >= 3 {
        (n_worlds * 15).div_ceil(100).max(1)
    } else {
        0
    };
    let n_val = if n_worlds >= 2 {
        (n_worlds * 15).div_ceil(100).max(1)
    } else {
        0
    };
    let n_train = n_worlds - n_val - n_test;
    if world < n_train {
        Split::Train
    } else if world < n_train + n_val {
        Split::Val
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub id: String,
    pub world: usize,
    pub split: Split,
    pub dynamic: String,
    #[serde(rename = "static")]
    pub static_path: String,
    pub mask: String,
    /// Capture pose as translation + (x, y, z, w) quaternion.
    pub pose: [f64; 7],
    /// Fraction of valid dynamic-scan cells covered by the ground-truth mask.
    pub dynamism: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub seed: u64,
    pub worlds: usize,
    pub sensor: SensorConfig,
    pub pairs: Vec<PairEntry>,
}

pub fn pose_to_seven(pose: &moves_core::geom::Pose) -> [f64; 7] {
    let (t, q) = pose_parts(pose);
    [t[0], t[1], t[2], q[0], q[1], q[2], q[3]]
}

/// Writes one scan pair's three files and returns its manifest entry.
pub fn write_pair(
    dir: &Path,
    id: &str,
    world: usize,
    split: Split,
    pair: &ScanPair,
) -> CliResult<PairEntry> {
    let rel_dyn = format!("pairs/{id}_dyn.mvri");
    let rel_stat = format!("pairs/{id}_stat.mvri");
    let rel_mask = format!("pairs/{id}_mask.mvri");
    let sensor = pair.static_img.config();
    io::write_range_image(&dir.join(&rel_dyn), &pair.dynamic_img)
        .map_err(rfail("writing dynamic scan"))?;
    io::write_range_image(&dir.join(&rel_stat), &pair.static_img)
        .map_err(rfail("writing static scan"))?;
    io::write_mask(&dir.join(&rel_mask), &pair.gt_mask, sensor)
        .map_err(rfail("writing mask"))?;
    Ok(PairEntry {
        id: id.to_owned(),
        world,
        split,
        dynamic: rel_dyn,
        static_path: rel_stat,
        mask: rel_mask,
        pose: pose_to_seven(&pair.pose),
        dynamism: pair.dynamism(),
    })
}

pub fn write_dataset_manifest(dir: &Path, manifest: &DatasetManifest) -> CliResult<()> {
    let text = toml::to_string(manifest).map_err(rfail("encoding manifest"))?;
    fs::write(dir.join("manifest.toml"), text).map_err(rfail("writing manifest"))?;
    Ok(())
}

/// A dataset loaded back into memory, entries in manifest order.
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub pairs: Vec<ScanPair>,
}

impl Dataset {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let manifest_path = dir.join("manifest.toml");
        let text = fs::read_to_string(&manifest_path)
            .map_err(vfail(&format!("reading {}", manifest_path.display())))?;
        let manifest: DatasetManifest =
            toml::from_str(&text).map_err(vfail(&format!("parsing {}", manifest_path.display())))?;
        manifest.sensor.validate().map_err(vfail("manifest sensor"))?;
        let mut pairs = Vec::with_capacity(manifest.pairs.len());
        for entry in &manifest.pairs {
            pairs.push(load_pair(dir, entry, &manifest.sensor)?);
        }
        Ok(Self {
            dir: dir.to_owned(),
            manifest,
            pairs,
        })
    }

    /// Pairs belonging to one split, manifest order.
    pub fn split(&self, split: Split) -> Vec<&ScanPair> {
        self.manifest
            .pairs
            .iter()
            .zip(&self.pairs)
            .filter(|(e, _)| e.split == split)
            .map(|(_, p)| p)
            .collect()
    }

    /// Owned clones of one split's pairs (the trainer wants a slice).
    pub fn split_owned(&self, split: Split) -> Vec<ScanPair> {
        self.split(split).into_iter().cloned().collect()
    }

    pub fn entries_of(&self, split: Split) -> Vec<(&PairEntry, &ScanPair)> {
        self.manifest
            .pairs
            .iter()
            .zip(&self.pairs)
            .filter(|(e, _)| e.split == split)
            .collect()
    }
}

fn load_pair(dir: &Path, entry: &PairEntry, sensor: &SensorConfig) -> CliResult<ScanPair> {
    let dynamic_img = io::read_range_image(&dir.join(&entry.dynamic))
        .map_err(vfail(&format!("pair {}: dynamic scan", entry.id)))?;
    let static_img = io::read_range_image(&dir.join(&entry.static_path))
        .map_err(vfail(&format!("pair {}: static scan", entry.id)))?;
    let (gt_mask, mask_cfg) = io::read_mask(&dir.join(&entry.mask))
        .map_err(vfail(&format!("pair {}: mask", entry.id)))?;
    for (what, cfg) in [
        ("dynamic scan", dynamic_img.config()),
        ("static scan", static_img.config()),
        ("mask", &mask_cfg),
    ] {
        if cfg != sensor {
            return Err(invalid(format!(
                "pair {}: {what} header disagrees with the manifest sensor",
                entry.id
            )));
        }
    }
    let pose = pose_from_parts(
        [entry.pose[0], entry.pose[1], entry.pose[2]],
        [entry.pose[3], entry.pose[4], entry.pose[5], entry.pose[6]],
    )
    .map_err(vfail(&format!("pair {}: pose", entry.id)))?;
    Ok(ScanPair {
        static_img,
        dynamic_img,
        gt_mask,
        pose,
    })
}

// ---------------------------------------------------------------------------
// sequences

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub id: String,
    pub dynamic: String,
    #[serde(rename = "static")]
    pub static_path: String,
    pub mask: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub seed: u64,
    /// Seconds between frames.
    pub interval: f64,
    pub sensor: SensorConfig,
    pub frames: Vec<FrameEntry>,
}

/// Writes a captured sequence (frames, masks, ground-truth trajectory) under
/// `dir` and returns the manifest it stored.
pub fn write_sequence(dir: &Path, seq: &Sequence, seed: u64) -> CliResult<SequenceManifest> {
    fs::create_dir_all(dir.join("frames")).map_err(rfail("creating frames dir"))?;
    let sensor = *seq
        .frames
        .first()
        .ok_or_else(|| invalid("sequence has no frames"))?
        .static_img
        .config();
    let mut frames = Vec::with_capacity(seq.frames.len());
    for (k, pair) in seq.frames.iter().enumerate() {
        let id = format!("f{k:03}");
        let rel_dyn = format!("frames/{id}_dyn.mvri");
        let rel_stat = format!("frames/{id}_stat.mvri");
        let rel_mask = format!("frames/{id}_mask.mvri");
        io::write_range_image(&dir.join(&rel_dyn), &pair.dynamic_img)
            .map_err(rfail("writing dynamic frame"))?;
        io::write_range_image(&dir.join(&rel_stat), &pair.static_img)
            .map_err(rfail("writing static frame"))?;
        io::write_mask(&dir.join(&rel_mask), &pair.gt_mask, &sensor)
            .map_err(rfail("writing frame mask"))?;
        frames.push(FrameEntry {
            id,
            dynamic: rel_dyn,
            static_path: rel_stat,
            mask: rel_mask,
        });
    }
    io::write_trajectory(&dir.join("gt_traj.txt"), &seq.trajectory)
        .map_err(rfail("writing ground-truth trajectory"))?;
    let manifest = SequenceManifest {
        seed,
        interval: seq.interval,
        sensor,
        frames,
    };
    let text = toml::to_string(&manifest).map_err(rfail("encoding sequence manifest"))?;
    fs::write(dir.join("seq.toml"), text).map_err(rfail("writing sequence manifest"))?;
    Ok(manifest)
}

/// A sequence loaded back into memory.
pub struct LoadedSequence {
    pub manifest: SequenceManifest,
    pub frames: Vec<ScanPair>,
    pub gt: Trajectory,
}

impl LoadedSequence {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join("seq.toml");
        let text =
            fs::read_to_string(&path).map_err(vfail(&format!("reading {}", path.display())))?;
        let manifest: SequenceManifest =
            toml::from_str(&text).map_err(vfail(&format!("parsing {}", path.display())))?;
        manifest.sensor.validate().map_err(vfail("sequence sensor"))?;
        let gt = io::read_trajectory(&dir.join("gt_traj.txt"))
            .map_err(vfail("reading ground-truth trajectory"))?;
        if gt.len() != manifest.frames.len() {
            return Err(invalid(format!(
                "trajectory has {} poses but the sequence lists {} frames",
                gt.len(),
                manifest.frames.len()
            )));
        }
        let mut frames = Vec::with_capacity(manifest.frames.len());
        for (k, entry) in manifest.frames.iter().enumerate() {
            let pe = PairEntry {
                id: entry.id.clone(),
                world: 0,
                split: Split::Test,
                dynamic: entry.dynamic.clone(),
                static_path: entry.static_path.clone(),
                mask: entry.mask.clone(),
                pose: pose_to_seven(gt.pose(k)),
                dynamism: 0.0,
            };
            frames.push(load_pair(dir, &pe, &manifest.sensor)?);
        }
        Ok(Self {
            manifest,
            frames,
            gt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_splits_cover_and_are_deterministic() {
        assert_eq!(split_for_world(0, 1), Split::Train);
        assert_eq!(split_for_world(0, 2), Split::Train);
        assert_eq!(split_for_world(1, 2), Split::Val);
        assert_eq!(split_for_world(0, 3), Split::Train);
        assert_eq!(split_for_world(1, 3), Split::Val);
        assert_eq!(split_for_world(2, 3), Split::Test);
        for n in 3..60 {
            let mut counts = [0usize; 3];
            for w in 0..n {
                counts[split_for_world(w, n) as usize] += 1;
            }
            assert!(counts.iter().all(|&c| c > 0), "empty split at n={n}");
            assert!(counts[0] >= counts[1] && counts[0] >= counts[2]);
            // boundaries are ordered: train block, then val, then test
            let splits: Vec<Split> = (0..n).map(|w| split_for_world(w, n)).collect();
            let mut sorted = splits.clone();
            sorted.sort();
            assert_eq!(splits, sorted);
        }
    }
}
