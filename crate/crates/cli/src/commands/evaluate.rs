//! `evaluate`: score prediction scans against name-matched ground-truth
//! scans with nearest-neighbor transport cost, assignment transport cost on
//! subsampled clouds, and (optionally) the no-reference quality score.
//!
//! Both directories must hold the same `.mvri` file names (mask files are
//! ignored); each pair of same-named files becomes one CSV row. `--out`
//! names the report file; when `--lqi-train` fits a fresh scorer it is
//! saved next to the report as `<stem>_lqi.mvck`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use moves_core::metrics::lqi::{lqi_fit, LqiConfig, LqiModel};
use moves_core::metrics::{chamfer, emd, farthest_point_sample};
use moves_core::sensor::{unproject, PointCloud, RangeImage};

use crate::config::RunConfig;
use crate::error::{invalid, rfail, vfail, CliResult};
use crate::io;
use crate::manifest::{Dataset, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Cd,
    Emd,
    Lqi,
}

pub fn parse_metrics(list: &str) -> CliResult<Vec<Metric>> {
    let mut out = BTreeSet::new();
    for tok in list.split(',') {
        match tok.trim() {
            "cd" => out.insert(Metric::Cd),
            "emd" => out.insert(Metric::Emd),
            "lqi" => out.insert(Metric::Lqi),
            other => {
                return Err(invalid(format!(
                    "unknown metric '{other}' (expected a comma list of cd, emd, lqi)"
                )))
            }
        };
    }
    if out.is_empty() {
        return Err(invalid("--metrics must select at least one of cd, emd, lqi"));
    }
    Ok(out.into_iter().collect())
}

pub struct EvaluateArgs<'a> {
    pub config: Option<&'a Path>,
    pub pred: &'a Path,
    pub gt: &'a Path,
    pub metrics: &'a str,
    pub out: &'a Path,
    pub lqi_model: Option<&'a Path>,
    pub lqi_train: Option<&'a Path>,
    pub seed: u64,
}

/// Sorted `.mvri` file names directly inside `dir`, mask files excluded.
fn scan_names(dir: &Path) -> CliResult<Vec<String>> {
    let mut names = Vec::new();
    let entries = std::fs::read_dir(dir)
        .map_err(vfail(&format!("listing {}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(vfail("listing scans"))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".mvri") && !name.ends_with("_mask.mvri") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn subsample(cloud: &PointCloud, k: usize) -> PointCloud {
    let idx = farthest_point_sample(cloud.points(), k, 0xE4D);
    PointCloud::from_points(idx.into_iter().map(|i| cloud.points()[i]).collect())
}

fn fit_lqi_from_dataset(data_dir: &Path, cfg: &RunConfig, seed: u64) -> CliResult<LqiModel> {
    let data = Dataset::load(data_dir)?;
    let mut scans: Vec<(&RangeImage, f64)> = Vec::new();
    for (entry, pair) in data.entries_of(Split::Train) {
        scans.push((&pair.dynamic_img, entry.dynamism.clamp(0.0, 1.0)));
        scans.push((&pair.static_img, 0.0));
    }
    let lcfg = LqiConfig {
        seed,
        ..cfg.lqi.clone()
    };
    lqi_fit(&scans, data.manifest.sensor.r_max, &lcfg).map_err(vfail("fitting quality scorer"))
}

pub fn run(args: &EvaluateArgs<'_>) -> CliResult<()> {
    let cfg = RunConfig::load(args.config)?;
    let metrics = parse_metrics(args.metrics)?;
    let want = |m: Metric| metrics.contains(&m);

    let pred_names = scan_names(args.pred)?;
    let gt_names = scan_names(args.gt)?;
    if pred_names.is_empty() {
        return Err(invalid(format!(
            "{} holds no scan files",
            args.pred.display()
        )));
    }
    if pred_names != gt_names {
        let missing: Vec<_> = pred_names
            .iter()
            .filter(|n| !gt_names.contains(n))
            .take(3)
            .cloned()
            .collect();
        let extra: Vec<_> = gt_names
            .iter()
            .filter(|n| !pred_names.contains(n))
            .take(3)
            .cloned()
            .collect();
        return Err(invalid(format!(
            "prediction and ground-truth directories list different scans \
             (first only-in-pred: {missing:?}, first only-in-gt: {extra:?})"
        )));
    }

    let lqi_model: Option<LqiModel> = if want(Metric::Lqi) {
        match (args.lqi_model, args.lqi_train) {
            (Some(_), Some(_)) => {
                return Err(invalid("--lqi-model and --lqi-train are mutually exclusive"))
            }
            (Some(path), None) => Some(
                io::read_lqi(path).map_err(vfail(&format!("loading {}", path.display())))?,
            ),
            (None, Some(data_dir)) => {
                let model = fit_lqi_from_dataset(data_dir, &cfg, args.seed)?;
                let save = lqi_sidecar(args.out);
                if let Some(parent) = save.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent).map_err(rfail("creating report dir"))?;
                    }
                }
                io::write_lqi(&save, &model).map_err(rfail("saving quality scorer"))?;
                Some(model)
            }
            (None, None) => {
                return Err(invalid(
                    "metric 'lqi' needs --lqi-model CKPT or --lqi-train DATASET_DIR",
                ))
            }
        }
    } else {
        None
    };

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(rfail("creating report dir"))?;
        }
    }
    let mut w = csv::Writer::from_path(args.out).map_err(rfail("opening report"))?;
    w.write_record(["scan_id", "cd", "emd", "lqi"])
        .map_err(rfail("writing report"))?;

    for name in &pred_names {
        let scan_id = name.trim_end_matches(".mvri");
        let pred = io::read_range_image(&args.pred.join(name))
            .map_err(vfail(&format!("prediction {name}")))?;
        let gt = io::read_range_image(&args.gt.join(name))
            .map_err(vfail(&format!("ground truth {name}")))?;
        if pred.config() != gt.config() {
            return Err(invalid(format!(
                "{name}: prediction and ground-truth headers disagree"
            )));
        }
        let (pc, gc) = (unproject(&pred), unproject(&gt));
        let mut cd_cell = String::new();
        let mut emd_cell = String::new();
        let mut lqi_cell = String::new();
        if want(Metric::Cd) {
            let v = chamfer(&pc, &gc)
                .map_err(vfail(&format!("{scan_id}: nearest-neighbor cost")))?;
            cd_cell = v.to_string();
        }
        if want(Metric::Emd) {
            let k = cfg.evaluate.emd_points.min(pc.len()).min(gc.len());
            if k == 0 {
                return Err(invalid(format!("{scan_id}: a scan has no valid returns")));
            }
            let v = emd(&subsample(&pc, k), &subsample(&gc, k))
                .map_err(vfail(&format!("{scan_id}: assignment cost")))?;
            emd_cell = v.to_string();
        }
        if let Some(model) = &lqi_model {
            let v = model
                .score(&pred)
                .map_err(vfail(&format!("{scan_id}: quality score")))?;
            lqi_cell = v.to_string();
        }
        w.write_record([scan_id.to_string(), cd_cell, emd_cell, lqi_cell])
            .map_err(rfail("writing report"))?;
    }
    w.flush().map_err(rfail("flushing report"))?;

    println!(
        "evaluate: scored {} scans on {:?} -> {}",
        pred_names.len(),
        metrics.iter().map(metric_name).collect::<Vec<_>>(),
        args.out.display()
    );
    Ok(())
}

fn metric_name(m: &Metric) -> &'static str {
    match m {
        Metric::Cd => "cd",
        Metric::Emd => "emd",
        Metric::Lqi => "lqi",
    }
}

/// Where the fitted scorer lands for a given report path (shared with the
/// determinism harness).
pub fn lqi_sidecar(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    out.parent()
        .unwrap_or(Path::new("."))
        .join(format!("{stem}_lqi.mvck"))
}
