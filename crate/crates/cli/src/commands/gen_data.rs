//! `gen-data`: sample random rooms, capture corresponding static/dynamic
//! scan pairs (and optional scan sequences), and write a dataset directory.

use std::fs;
use std::path::Path;

use moves_core::train::{rng_stream, STREAM_WORLDGEN};
use moves_core::world::{gen_dataset, gen_sequence, gen_world};

use crate::config::RunConfig;
use crate::error::{invalid, rfail, CliResult};
use crate::manifest::{self, DatasetManifest};

pub struct GenDataArgs<'a> {
    pub world_file: Option<&'a Path>,
    pub worlds: usize,
    pub pairs: usize,
    pub sequences: usize,
    pub seed: u64,
    pub out: &'a Path,
}

pub fn run(args: &GenDataArgs<'_>) -> CliResult<()> {
    if args.worlds == 0 {
        return Err(invalid("--worlds must be at least 1"));
    }
    if args.pairs == 0 {
        return Err(invalid("--pairs must be at least 1"));
    }
    let cfg = RunConfig::load(args.world_file)?;
    let sensor = cfg.sensor()?;
    let wspec = cfg.world();
    let seqspec = cfg.sequence_spec();

    fs::create_dir_all(args.out.join("pairs")).map_err(rfail("creating output dir"))?;

    let mut rng = rng_stream(args.seed, STREAM_WORLDGEN);
    let worlds = gen_dataset(&wspec, &sensor, args.worlds, args.pairs, &mut rng)
        .map_err(rfail("sampling worlds"))?;

    let mut entries = Vec::with_capacity(args.worlds * args.pairs);
    for (w, pairs) in worlds.iter().enumerate() {
        let split = manifest::split_for_world(w, args.worlds);
        for (p, pair) in pairs.iter().enumerate() {
            let id = format!("w{w:03}_p{p:03}");
            entries.push(manifest::write_pair(args.out, &id, w, split, pair)?);
        }
    }
    manifest::write_dataset_manifest(
        args.out,
        &DatasetManifest {
            seed: args.seed,
            worlds: args.worlds,
            sensor,
            pairs: entries,
        },
    )?;

    for s in 0..args.sequences {
        let seq_dir = args.out.join(format!("seqs/s{s:02}"));
        let mut written = false;
        for _attempt in 0..20 {
            let world = gen_world(&wspec, &mut rng);
            match gen_sequence(&world, &seqspec, &sensor, &mut rng) {
                Ok(seq) => {
                    fs::create_dir_all(&seq_dir).map_err(rfail("creating sequence dir"))?;
                    manifest::write_sequence(&seq_dir, &seq, args.seed)?;
                    written = true;
                    break;
                }
                Err(_) => continue,
            }
        }
        if !written {
            return Err(crate::error::CliError::Runtime(format!(
                "could not capture sequence {s}: the ego path repeatedly left the sampled rooms"
            )));
        }
    }

    println!(
        "gen-data: wrote {} pairs across {} worlds{} -> {}",
        args.worlds * args.pairs,
        args.worlds,
        if args.sequences > 0 {
            format!(" and {} sequences", args.sequences)
        } else {
            String::new()
        },
        args.out.display()
    );
    Ok(())
}
