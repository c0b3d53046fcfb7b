//! `segment`: subtract model reconstructions from the dynamic frames of a
//! sequence, emit per-frame masks and a centroid track table with
//! moving / movable verdicts.

use std::fs;
use std::path::Path;

use moves_core::segment::{segment_scan, MotionClass, SegmentConfig};

use crate::config::RunConfig;
use crate::error::{invalid, rfail, vfail, CliResult};
use crate::io;
use crate::manifest::LoadedSequence;

pub struct SegmentArgs<'a> {
    pub config: Option<&'a Path>,
    pub model: &'a Path,
    pub seq: &'a Path,
    pub tau: Option<f64>,
    pub out: &'a Path,
}

pub fn run(args: &SegmentArgs<'_>) -> CliResult<()> {
    let cfg = RunConfig::load(args.config)?;
    let scfg = SegmentConfig {
        tau: args.tau.unwrap_or(cfg.segment.tau),
        ..cfg.segment.clone()
    };
    if !scfg.tau.is_finite() || scfg.tau <= 0.0 {
        return Err(invalid(format!("--tau {} must be positive", scfg.tau)));
    }
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

    fs::create_dir_all(args.out.join("masks")).map_err(rfail("creating output dirs"))?;

    let mut per_frame_clusters = Vec::with_capacity(seq.frames.len());
    for (k, frame) in seq.frames.iter().enumerate() {
        let recon = model.reconstruct(&frame.dynamic_img);
        let (mask, clusters) = segment_scan(&frame.dynamic_img, &recon, seq.gt.pose(k), &scfg);
        io::write_mask(
            &args.out.join(format!("masks/f{k:03}_mask.mvri")),
            &mask,
            &sensor,
        )
        .map_err(rfail("writing mask"))?;
        per_frame_clusters.push(clusters);
    }

    let tracks = moves_core::segment::track_and_classify(&per_frame_clusters, &scfg);

    let mut rows: Vec<(usize, usize, [f64; 3], &'static str)> = Vec::new();
    for t in &tracks {
        let label = match t.class {
            Some(MotionClass::Moving) => "moving",
            Some(MotionClass::Movable) => "movable",
            None => "unknown",
        };
        for (frame, c) in &t.observations {
            rows.push((*frame, t.id, [c.x, c.y, c.z], label));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut w = csv::Writer::from_path(args.out.join("tracks.csv"))
        .map_err(rfail("opening track table"))?;
    w.write_record(["frame", "id", "cx", "cy", "cz", "label"])
        .map_err(rfail("writing track table"))?;
    for (frame, id, c, label) in &rows {
        w.write_record([
            frame.to_string(),
            id.to_string(),
            c[0].to_string(),
            c[1].to_string(),
            c[2].to_string(),
            (*label).to_string(),
        ])
        .map_err(rfail("writing track table"))?;
    }
    w.flush().map_err(rfail("flushing track table"))?;

    println!(
        "segment: {} frames, {} tracks ({} observations) -> {}",
        seq.frames.len(),
        tracks.len(),
        rows.len(),
        args.out.display()
    );
    Ok(())
}
