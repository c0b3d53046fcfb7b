//! `train`: fit the translation model on a dataset directory, logging one
//! CSV row per epoch and checkpointing the best and last parameters.
//! `train-mmd`: adapt a trained model to an unpaired target-domain dataset.

use std::path::Path;

use moves_core::train::{adapt, train, AdaptConfig, TrainConfig, TrainMode};

use crate::config::RunConfig;
use crate::error::{invalid, rfail, vfail, CliResult};
use crate::io;
use crate::manifest::{Dataset, Split};

pub struct TrainArgs<'a> {
    pub config: Option<&'a Path>,
    pub data: &'a Path,
    pub out: &'a Path,
    pub seed: u64,
    pub mode: Option<TrainMode>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run(args: &TrainArgs<'_>) -> CliResult<()> {
    let cfg = RunConfig::load(args.config)?;
    let data = Dataset::load(args.data)?;
    let sensor = data.manifest.sensor;
    let model_cfg = cfg.model_for(&sensor)?;

    let tcfg = TrainConfig {
        seed: args.seed,
        mode: args.mode.unwrap_or(cfg.train.mode),
        ..cfg.train.clone()
    };

    let train_pairs = data.split_owned(Split::Train);
    let val_pairs = data.split_owned(Split::Val);
    if train_pairs.len() < 2 {
        return Err(invalid(format!(
            "dataset {} has {} training pairs; need at least 2",
            args.data.display(),
            train_pairs.len()
        )));
    }

    std::fs::create_dir_all(args.out).map_err(rfail("creating output dir"))?;
    let log_path = args.out.join("train_log.csv");
    let mut log = csv::Writer::from_path(&log_path).map_err(rfail("opening train log"))?;
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
    .map_err(rfail("writing train log"))?;

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
            opt_cell(e.val_chamfer),
            opt_cell(e.val_emd),
        ];
        if let Err(err) = log.write_record(row) {
            log_err.get_or_insert(err);
        }
    })
    .map_err(rfail("training"))?;
    log.flush().map_err(rfail("flushing train log"))?;
    if let Some(err) = log_err {
        return Err(rfail("writing train log")(err));
    }

    io::write_model(&args.out.join("model_best.mvck"), &report.best)
        .map_err(rfail("writing best checkpoint"))?;
    io::write_model(&args.out.join("model_last.mvck"), &report.last)
        .map_err(rfail("writing last checkpoint"))?;

    let last = report.history.last().expect("at least one epoch ran");
    let best_log = report
        .history
        .iter()
        .find(|e| e.epoch == report.best_epoch)
        .unwrap_or(last);
    let mut summary = String::new();
    summary.push_str(&format!("mode = \"{}\"\n", mode_name(tcfg.mode)));
    summary.push_str(&format!("seed = {}\n", tcfg.seed));
    summary.push_str(&format!("epochs_run = {}\n", report.history.len()));
    summary.push_str(&format!("best_epoch = {}\n", report.best_epoch));
    if let Some(v) = best_log.val_chamfer.filter(|v| v.is_finite()) {
        summary.push_str(&format!("best_val_chamfer = {v}\n"));
    }
    if let Some(v) = best_log.val_emd.filter(|v| v.is_finite()) {
        summary.push_str(&format!("best_val_emd = {v}\n"));
    }
    std::fs::write(args.out.join("train_summary.toml"), summary)
        .map_err(rfail("writing train summary"))?;

    println!(
        "train: {} epochs (best at {}), checkpoints in {}",
        report.history.len(),
        report.best_epoch,
        args.out.display()
    );
    Ok(())
}

pub fn mode_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::Moves => "moves",
        TrainMode::Cod => "cod",
        TrainMode::Vanilla => "vanilla",
        TrainMode::Ae => "ae",
    }
}

// ---------------------------------------------------------------------------

pub struct TrainMmdArgs<'a> {
    pub config: Option<&'a Path>,
    pub data: &'a Path,
    pub target: &'a Path,
    pub model: &'a Path,
    pub out: &'a Path,
    pub seed: u64,
}

pub fn run_mmd(args: &TrainMmdArgs<'_>) -> CliResult<()> {
    let cfg = RunConfig::load(args.config)?;
    let source = Dataset::load(args.data)?;
    let target = Dataset::load(args.target)?;
    let base = io::read_model(args.model)
        .map_err(vfail(&format!("loading model {}", args.model.display())))?;

    let source_pairs = source.split_owned(Split::Train);
    let target_train: Vec<_> = target
        .split(Split::Train)
        .into_iter()
        .map(|p| p.dynamic_img.clone())
        .collect();
    let target_val: Vec<_> = target
        .split(Split::Val)
        .into_iter()
        .map(|p| p.dynamic_img.clone())
        .collect();
    if target_train.is_empty() {
        return Err(invalid("target dataset has no training-split scans"));
    }
    if target_val.is_empty() {
        return Err(invalid(
            "target dataset has no validation-split scans (generate it with at least 2 worlds)",
        ));
    }

    let acfg = AdaptConfig {
        seed: args.seed,
        ..cfg.adapt.clone()
    };

    std::fs::create_dir_all(args.out).map_err(rfail("creating output dir"))?;
    let report = adapt(&acfg, &base, &source_pairs, &target_train, &target_val)
        .map_err(rfail("adaptation"))?;

    let log_path = args.out.join("adapt_log.csv");
    let mut log = csv::Writer::from_path(&log_path).map_err(rfail("opening adapt log"))?;
    log.write_record([
        "epoch",
        "disc_adv",
        "gen_adv",
        "self_recon",
        "mmd",
        "val_mmd",
        "val_self_recon",
        "val_obj",
    ])
    .map_err(rfail("writing adapt log"))?;
    for e in &report.history {
        log.write_record([
            e.epoch.to_string(),
            e.disc_adv.to_string(),
            e.gen_adv.to_string(),
            e.self_recon.to_string(),
            e.mmd.to_string(),
            e.val_mmd.to_string(),
            e.val_self_recon.to_string(),
            e.val_obj.to_string(),
        ])
        .map_err(rfail("writing adapt log"))?;
    }
    log.flush().map_err(rfail("flushing adapt log"))?;

    io::write_model(&args.out.join("model_adapted.mvck"), &report.best)
        .map_err(rfail("writing adapted checkpoint"))?;

    let summary = format!(
        "seed = {}\nbest_epoch = {}\nmmd_before = {}\nmmd_after = {}\nsigma = {}\n",
        args.seed, report.best_epoch, report.mmd_before, report.mmd_after, report.sigma
    );
    std::fs::write(args.out.join("adapt_summary.toml"), summary)
        .map_err(rfail("writing adapt summary"))?;

    println!(
        "train-mmd: {} epochs (best at {}), latent discrepancy {} -> {}, checkpoint in {}",
        report.history.len(),
        report.best_epoch,
        report.mmd_before,
        report.mmd_after,
        args.out.display()
    );
    Ok(())
}
