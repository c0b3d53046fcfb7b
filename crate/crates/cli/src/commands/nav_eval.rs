//! `nav-eval`: run scan-matching odometry over a sequence three times —
//! on the raw dynamic scans, on their translations through a trained model,
//! and on the ground-truth static scans — and score each trajectory against
//! ground truth. `--out` names the report CSV; the estimated trajectories
//! land next to it in TUM text form.

use std::path::Path;

use moves_core::odom::nav_eval;
use moves_core::sensor::{unproject, PointCloud};

use crate::config::RunConfig;
use crate::error::{invalid, rfail, vfail, CliResult};
use crate::io;
use crate::manifest::LoadedSequence;

pub struct NavEvalArgs<'a> {
    pub config: Option<&'a Path>,
    pub seq: &'a Path,
    pub model: &'a Path,
    pub out: &'a Path,
}

const VARIANTS: [&str; 3] = ["dynamic", "recon", "static"];

pub fn run(args: &NavEvalArgs<'_>) -> CliResult<()> {
    let cfg = RunConfig::load(args.config)?;
    let model = io::read_model(args.model)
        .map_err(vfail(&format!("loading model {}", args.model.display())))?;
    let seq = LoadedSequence::load(args.seq)?;
    let sensor = seq.manifest.sensor;
    if (model.config.height, model.config.width) != (sensor.height, sensor.width) {
        return Err(invalid(format!(
            "model grid {}x{} does not match sequence grid {}x{}",
            model.config.height, model.config.width, sensor.height, sensor.width
        )));
    }

    let cloud_sets: [Vec<PointCloud>; 3] = [
        seq.frames.iter().map(|f| unproject(&f.dynamic_img)).collect(),
        seq.frames
            .iter()
            .map(|f| unproject(&model.reconstruct(&f.dynamic_img)))
            .collect(),
        seq.frames.iter().map(|f| unproject(&f.static_img)).collect(),
    ];

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(rfail("creating report dir"))?;
        }
    }
    let stem = args
        .out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    let side = |suffix: &str| {
        args.out
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("{stem}_{suffix}.txt"))
    };

    let mut w = csv::Writer::from_path(args.out).map_err(rfail("opening report"))?;
    w.write_record([
        "variant",
        "ate_rmse",
        "ate_mean",
        "ate_median",
        "ate_max",
        "ate_rmse_x",
        "ate_rmse_y",
        "ate_rmse_z",
        "rpe_trans_rmse",
        "rpe_rot_rmse",
        "rpe_trans_mean",
        "rpe_rot_mean",
        "frames",
    ])
    .map_err(rfail("writing report"))?;

    let mut ate_summary = Vec::new();
    for (variant, clouds) in VARIANTS.iter().zip(&cloud_sets) {
        let result = nav_eval(clouds, &seq.gt, &cfg.icp, cfg.nav.rpe_delta)
            .map_err(rfail(&format!("odometry on {variant} scans")))?;
        w.write_record([
            (*variant).to_string(),
            result.ate.rmse.to_string(),
            result.ate.mean.to_string(),
            result.ate.median.to_string(),
            result.ate.max.to_string(),
            result.ate.per_axis_rmse[0].to_string(),
            result.ate.per_axis_rmse[1].to_string(),
            result.ate.per_axis_rmse[2].to_string(),
            result.rpe.trans_rmse.to_string(),
            result.rpe.rot_rmse.to_string(),
            result.rpe.trans_mean.to_string(),
            result.rpe.rot_mean.to_string(),
            seq.frames.len().to_string(),
        ])
        .map_err(rfail("writing report"))?;
        io::write_trajectory(&side(&format!("traj_{variant}")), &result.est)
            .map_err(rfail("writing estimated trajectory"))?;
        ate_summary.push((*variant, result.ate.rmse));
    }
    w.flush().map_err(rfail("flushing report"))?;
    io::write_trajectory(&side("traj_gt"), &seq.gt)
        .map_err(rfail("writing ground-truth trajectory"))?;

    println!(
        "nav-eval: {} frames; ATE rmse {} -> {}",
        seq.frames.len(),
        ate_summary
            .iter()
            .map(|(v, a)| format!("{v}={a:.4}"))
            .collect::<Vec<_>>()
            .join(" "),
        args.out.display()
    );
    Ok(())
}
