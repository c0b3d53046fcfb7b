//! `ablate`: train the named objective variants across several seeds on one
//! dataset and tabulate held-out metrics, one CSV row per
//! (mode, seed, metric).

use std::path::Path;

use moves_core::train::{train, TrainConfig, TrainMode};

use crate::config::RunConfig;
use crate::error::{invalid, rfail, CliResult};
use crate::manifest::{Dataset, Split};

use super::train::mode_name;

pub struct AblateArgs<'a> {
    pub config: Option<&'a Path>,
    pub data: &'a Path,
    pub out: &'a Path,
    pub modes: &'a str,
    pub seeds: usize,
    pub seed: u64,
}

pub fn parse_modes(list: &str) -> CliResult<Vec<TrainMode>> {
    let mut out = Vec::new();
    for tok in list.split(',') {
        let mode = match tok.trim() {
            "moves" => TrainMode::Moves,
            "cod" => TrainMode::Cod,
            "vanilla" => TrainMode::Vanilla,
            "ae" => TrainMode::Ae,
            other => {
                return Err(invalid(format!(
                    "unknown mode '{other}' (expected a comma list of moves, cod, vanilla, ae)"
                )))
            }
        };
        if !out.contains(&mode) {
            out.push(mode);
        }
    }
    if out.is_empty() {
        return Err(invalid("--modes must select at least one mode"));
    }
    Ok(out)
}

pub fn run(args: &AblateArgs<'_>) -> CliResult<()> {
    if args.seeds == 0 {
        return Err(invalid("--seeds must be at least 1"));
    }
    let modes = parse_modes(args.modes)?;
    let cfg = RunConfig::load(args.config)?;
    let data = Dataset::load(args.data)?;
    let model_cfg = cfg.model_for(&data.manifest.sensor)?;
    let train_pairs = data.split_owned(Split::Train);
    let val_pairs = data.split_owned(Split::Val);
    if val_pairs.is_empty() {
        return Err(invalid(
            "ablation needs a validation split (generate the dataset with at least 2 worlds)",
        ));
    }

    std::fs::create_dir_all(args.out.join("logs")).map_err(rfail("creating output dirs"))?;
    let mut w =
        csv::Writer::from_path(args.out.join("ablate.csv")).map_err(rfail("opening table"))?;
    w.write_record(["mode", "seed", "metric", "value"])
        .map_err(rfail("writing table"))?;

    for &mode in &modes {
        for k in 0..args.seeds {
            let seed = args.seed + k as u64;
            let tcfg = TrainConfig {
                mode,
                seed,
                ..cfg.train.clone()
            };
            let log_path = args
                .out
                .join(format!("logs/{}_s{seed}_log.csv", mode_name(mode)));
            let mut log = csv::Writer::from_path(&log_path).map_err(rfail("opening run log"))?;
            log.write_record([
                "epoch",
                "disc_adv",
                "triplet",
                "disc_obj",
                "gen_adv",
                "recon",
                "gen_obj",
                "val_chamfer",
                "val_emd",
            ])
            .map_err(rfail("writing run log"))?;
            let mut log_err = None;
            let report = train(&model_cfg, &tcfg, &train_pairs, &val_pairs, |e| {
                let row = [
                    e.epoch.to_string(),
                    e.disc_adv.to_string(),
                    e.triplet.to_string(),
                    e.disc_obj.to_string(),
                    e.gen_adv.to_string(),
                    e.recon.to_string(),
                    e.gen_obj.to_string(),
                    e.val_chamfer.map(|v| v.to_string()).unwrap_or_default(),
                    e.val_emd.map(|v| v.to_string()).unwrap_or_default(),
                ];
                if let Err(err) = log.write_record(row) {
                    log_err.get_or_insert(err);
                }
            })
            .map_err(rfail(&format!(
                "training mode {} seed {seed}",
                mode_name(mode)
            )))?;
            log.flush().map_err(rfail("flushing run log"))?;
            if let Some(err) = log_err {
                return Err(rfail("writing run log")(err));
            }

            let best = report
                .history
                .iter()
                .find(|e| e.epoch == report.best_epoch)
                .unwrap_or_else(|| report.history.last().expect("at least one epoch"));
            let mut rows: Vec<(&str, f64)> = vec![("best_epoch", report.best_epoch as f64)];
            if let Some(v) = best.val_chamfer {
                rows.push(("val_chamfer", v));
            }
            if let Some(v) = best.val_emd {
                rows.push(("val_emd", v));
            }
            for (metric, value) in rows {
                w.write_record([
                    mode_name(mode).to_string(),
                    seed.to_string(),
                    metric.to_string(),
                    value.to_string(),
                ])
                .map_err(rfail("writing table"))?;
            }
            println!(
                "ablate: mode {} seed {seed}: best epoch {}, val chamfer {}",
                mode_name(mode),
                report.best_epoch,
                best.val_chamfer
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "n/a".into()),
            );
        }
    }
    w.flush().map_err(rfail("flushing table"))?;
    println!(
        "ablate: {} modes x {} seeds -> {}",
        modes.len(),
        args.seeds,
        args.out.join("ablate.csv").display()
    );
    Ok(())
}
