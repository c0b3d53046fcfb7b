//! `report`: sweep a directory of pipeline artifacts (training logs,
//! ablation tables, evaluation and navigation reports, trajectories) and
//! regenerate summary CSVs plus vector plots. Running it twice on the same
//! inputs yields byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{rfail, vfail, CliResult};
use crate::io;
use crate::plot::{line_chart, Series};

pub struct ReportArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
}

const TRAIN_HEADER: [&str; 9] = [
    "epoch",
    "disc_adv",
    "triplet",
    "disc_obj",
    "gen_adv",
    "recon",
    "gen_obj",
    "val_chamfer",
    "val_emd",
];
const ADAPT_HEADER: [&str; 8] = [
    "epoch",
    "disc_adv",
    "gen_adv",
    "self_recon",
    "mmd",
    "val_mmd",
    "val_self_recon",
    "val_obj",
];
const ABLATE_HEADER: [&str; 4] = ["mode", "seed", "metric", "value"];
const EVAL_HEADER: [&str; 4] = ["scan_id", "cd", "emd", "lqi"];

fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(vfail(&format!("reading {}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(vfail(&format!("reading {}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(vfail(&format!("reading {}", path.display())))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

fn column(rows: &[Vec<String>], idx: usize) -> Vec<(f64, f64)> {
    rows.iter()
        .enumerate()
        .filter_map(|(i, r)| {
            r.get(idx)
                .and_then(|c| c.parse::<f64>().ok())
                .map(|v| (i as f64, v))
        })
        .collect()
}

pub fn run(args: &ReportArgs<'_>) -> CliResult<()> {
    std::fs::create_dir_all(args.out).map_err(rfail("creating output dir"))?;
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(args.input)
        .map_err(vfail(&format!("listing {}", args.input.display())))?
    {
        let entry = entry.map_err(vfail("listing inputs"))?;
        if entry.path().is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();

    let mut summary: Vec<[String; 3]> = Vec::new();
    let mut push = |source: &str, key: &str, value: String| {
        summary.push([source.to_owned(), key.to_owned(), value]);
    };
    let mut trajectories: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut recognized = 0usize;

    for name in &names {
        let path = args.input.join(name);
        let stem = name.trim_end_matches(".csv").trim_end_matches(".txt");
        if name.ends_with(".csv") {
            let (header, rows) = read_csv(&path)?;
            if header == TRAIN_HEADER {
                recognized += 1;
                line_chart(
                    &args.out.join(format!("{stem}_curves.svg")),
                    stem,
                    "epoch",
                    "objective",
                    &[
                        Series { label: "disc_obj", points: column(&rows, 3) },
                        Series { label: "gen_obj", points: column(&rows, 6) },
                        Series { label: "val_chamfer", points: column(&rows, 7) },
                    ],
                )?;
                push(stem, "epochs", rows.len().to_string());
                if let Some((_, v)) = column(&rows, 6).last() {
                    push(stem, "final_gen_obj", v.to_string());
                }
                if let Some((_, v)) = column(&rows, 3).last() {
                    push(stem, "final_disc_obj", v.to_string());
                }
                let val = column(&rows, 7);
                if let Some((e, v)) = val
                    .iter()
                    .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite metrics"))
                {
                    push(stem, "best_val_chamfer", v.to_string());
                    push(stem, "best_val_chamfer_epoch", (*e as usize).to_string());
                }
            } else if header == ADAPT_HEADER {
                recognized += 1;
                line_chart(
                    &args.out.join(format!("{stem}_curves.svg")),
                    stem,
                    "epoch",
                    "value",
                    &[
                        Series { label: "mmd", points: column(&rows, 4) },
                        Series { label: "val_mmd", points: column(&rows, 5) },
                        Series { label: "val_self_recon", points: column(&rows, 6) },
                    ],
                )?;
                for (idx, key) in [(4usize, "mmd"), (5, "val_mmd"), (6, "val_self_recon")] {
                    let vals = column(&rows, idx);
                    if let (Some((_, first)), Some((_, last))) = (vals.first(), vals.last()) {
                        push(stem, &format!("{key}_first"), first.to_string());
                        push(stem, &format!("{key}_last"), last.to_string());
                    }
                }
            } else if header == ABLATE_HEADER {
                recognized += 1;
                // (mode, metric) -> values
                let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
                for r in &rows {
                    if r.len() == 4 {
                        if let Ok(v) = r[3].parse::<f64>() {
                            groups
                                .entry((r[0].clone(), r[2].clone()))
                                .or_default()
                                .push(v);
                        }
                    }
                }
                let mut w = csv::Writer::from_path(args.out.join(format!("{stem}_summary.csv")))
                    .map_err(rfail("opening ablation summary"))?;
                w.write_record(["mode", "metric", "n", "mean", "min", "max"])
                    .map_err(rfail("writing ablation summary"))?;
                for ((mode, metric), vals) in &groups {
                    let n = vals.len();
                    let mean = vals.iter().sum::<f64>() / n as f64;
                    let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
                    let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
                    w.write_record([
                        mode.clone(),
                        metric.clone(),
                        n.to_string(),
                        mean.to_string(),
                        lo.to_string(),
                        hi.to_string(),
                    ])
                    .map_err(rfail("writing ablation summary"))?;
                    if metric == "val_chamfer" {
                        push(stem, &format!("{mode}_mean_val_chamfer"), mean.to_string());
                    }
                }
                w.flush().map_err(rfail("flushing ablation summary"))?;
            } else if header == EVAL_HEADER {
                recognized += 1;
                for (idx, key) in [(1usize, "cd"), (2, "emd"), (3, "lqi")] {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter_map(|r| r.get(idx).and_then(|c| c.parse::<f64>().ok()))
                        .collect();
                    if !vals.is_empty() {
                        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                        push(stem, &format!("mean_{key}"), mean.to_string());
                    }
                }
                push(stem, "scans", rows.len().to_string());
            } else if header.first().map(String::as_str) == Some("variant")
                && header.get(1).map(String::as_str) == Some("ate_rmse")
            {
                recognized += 1;
                for r in &rows {
                    if r.len() >= 2 {
                        push(stem, &format!("{}_ate_rmse", r[0]), r[1].clone());
                    }
                    if r.len() >= 9 {
                        push(stem, &format!("{}_rpe_trans_rmse", r[0]), r[8].clone());
                    }
                }
            }
        } else if name.ends_with(".txt") && stem.contains("traj") {
            if let Ok(traj) = io::read_trajectory(&path) {
                recognized += 1;
                let xy: Vec<(f64, f64)> = traj
                    .poses()
                    .iter()
                    .map(|p| (p.translation.vector.x, p.translation.vector.y))
                    .collect();
                trajectories.push((stem.to_owned(), xy));
            }
        }
    }

    if !trajectories.is_empty() {
        let series: Vec<Series<'_>> = trajectories
            .iter()
            .map(|(label, pts)| Series {
                label,
                points: pts.clone(),
            })
            .collect();
        line_chart(
            &args.out.join("traj_overlay.svg"),
            "trajectories (x/y)",
            "x [m]",
            "y [m]",
            &series,
        )?;
    }

    summary.sort();
    let mut w = csv::Writer::from_path(args.out.join("summary.csv"))
        .map_err(rfail("opening summary"))?;
    w.write_record(["source", "key", "value"])
        .map_err(rfail("writing summary"))?;
    for row in &summary {
        w.write_record(row).map_err(rfail("writing summary"))?;
    }
    w.flush().map_err(rfail("flushing summary"))?;

    println!(
        "report: {recognized} artifacts recognized, {} summary rows -> {}",
        summary.len(),
        args.out.display()
    );
    Ok(())
}
