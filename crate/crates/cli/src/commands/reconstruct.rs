//! `reconstruct`: translate the dynamic scans of a dataset split through a
//! trained model. Writes three name-aligned folders so the scorer can pair
//! files positionally by file name:
//!
//! ```text
//! out/recon/<id>.mvri    translated scans
//! out/input/<id>.mvri    the dynamic inputs (baseline)
//! out/static/<id>.mvri   ground-truth statics (reference)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{invalid, rfail, vfail, CliResult};
use crate::io;
use crate::manifest::{Dataset, Split};

pub struct ReconstructArgs<'a> {
    pub model: &'a Path,
    pub data: &'a Path,
    pub out: &'a Path,
    /// `None` translates every split.
    pub split: Option<Split>,
    /// Route scans through the adapted target-domain generator.
    pub use_target: bool,
}

pub fn run(args: &ReconstructArgs<'_>) -> CliResult<()> {
    let model = io::read_model(args.model)
        .map_err(vfail(&format!("loading model {}", args.model.display())))?;
    if args.use_target && model.target.is_none() {
        return Err(invalid(
            "--target-gen requested but the checkpoint has no adapted generator",
        ));
    }
    let data = Dataset::load(args.data)?;
    let sensor = data.manifest.sensor;
    if (model.config.height, model.config.width) != (sensor.height, sensor.width) {
        return Err(invalid(format!(
            "model grid {}x{} does not match dataset grid {}x{}",
            model.config.height, model.config.width, sensor.height, sensor.width
        )));
    }

    for sub in ["recon", "input", "static"] {
        fs::create_dir_all(args.out.join(sub)).map_err(rfail("creating output dirs"))?;
    }

    let mut n = 0usize;
    for (entry, pair) in data.manifest.pairs.iter().zip(&data.pairs) {
        if let Some(s) = args.split {
            if entry.split != s {
                continue;
            }
        }
        let recon = if args.use_target {
            model.reconstruct_target(&pair.dynamic_img)
        } else {
            model.reconstruct(&pair.dynamic_img)
        };
        let name = format!("{}.mvri", entry.id);
        io::write_range_image(&args.out.join("recon").join(&name), &recon)
            .map_err(rfail("writing reconstruction"))?;
        io::write_range_image(&args.out.join("input").join(&name), &pair.dynamic_img)
            .map_err(rfail("writing input copy"))?;
        io::write_range_image(&args.out.join("static").join(&name), &pair.static_img)
            .map_err(rfail("writing static reference"))?;
        n += 1;
    }
    if n == 0 {
        return Err(invalid(format!(
            "no pairs in split '{}'",
            args.split.map(|s| s.as_str()).unwrap_or("all")
        )));
    }
    println!(
        "reconstruct: translated {n} scans ({}) -> {}",
        args.split.map(|s| s.as_str()).unwrap_or("all splits"),
        args.out.display()
    );
    Ok(())
}
