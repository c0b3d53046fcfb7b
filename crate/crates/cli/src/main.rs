use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use moves_core::train::TrainMode;

use moves_cli::commands::{ablate, evaluate, gen_data, nav_eval, reconstruct, report, segment, train};
use moves_cli::manifest::Split;

/// Dynamic-to-static LiDAR scan translation pipeline.
#[derive(Parser)]
#[command(name = "moves", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Moves,
    Cod,
    Vanilla,
    Ae,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Moves => TrainMode::Moves,
            ModeArg::Cod => TrainMode::Cod,
            ModeArg::Vanilla => TrainMode::Vanilla,
            ModeArg::Ae => TrainMode::Ae,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn to_split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample worlds and write a dataset of static/dynamic scan pairs.
    GenData {
        /// World/sensor/sequence spec file (TOML); defaults apply when omitted.
        #[arg(long, visible_alias = "config")]
        world: Option<PathBuf>,
        /// Number of distinct room layouts.
        #[arg(long, default_value_t = 10)]
        worlds: usize,
        /// Scan pairs captured per world.
        #[arg(long, default_value_t = 10)]
        pairs: usize,
        /// Scan sequences to capture in addition to the pairs.
        #[arg(long, default_value_t = 0)]
        sequences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the translation model on a dataset.
    Train {
        /// Run configuration file (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory from gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoints and logs.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Objective variant; overrides the config file.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Adapt a trained model to an unpaired target-domain dataset.
    TrainMmd {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Source dataset directory (paired).
        #[arg(long)]
        data: PathBuf,
        /// Target dataset directory (its dynamic scans are used unpaired).
        #[arg(long)]
        target: PathBuf,
        /// Source model checkpoint.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Translate dynamic scans through a trained model.
    Reconstruct {
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Which split to translate.
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        /// Use the adapted target-domain generator.
        #[arg(long = "target-gen", default_value_t = false)]
        target_gen: bool,
    },
    /// Segment moving/movable objects in a scan sequence by subtraction.
    Segment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Sequence directory from gen-data --sequences.
        #[arg(long)]
        seq: PathBuf,
        /// Range-residual threshold in meters; overrides the config file.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted scans against ground-truth scans.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory of predicted scans.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth scans (same file names).
        #[arg(long)]
        gt: PathBuf,
        /// Comma list drawn from cd, emd, lqi.
        #[arg(long, default_value = "cd,emd")]
        metrics: String,
        /// Report CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint of a fitted quality scorer (for metric lqi).
        #[arg(long = "lqi-model")]
        lqi_model: Option<PathBuf>,
        /// Dataset directory to fit a quality scorer on (for metric lqi).
        #[arg(long = "lqi-train")]
        lqi_train: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare odometry on dynamic, reconstructed, and static scans.
    NavEval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sequence directory.
        #[arg(long)]
        seq: PathBuf,
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Report CSV path; trajectories are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train several objective variants across seeds and tabulate metrics.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma list drawn from moves, cod, vanilla, ae.
        #[arg(long, default_value = "moves,cod,vanilla")]
        modes: String,
        /// Seeds per mode (seed, seed+1, ...).
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Regenerate summary CSVs and plots from a directory of artifacts.
    Report {
        /// Directory holding logs, tables, reports, and trajectories.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), moves_cli::error::CliError> {
    match cli.command {
        Command::GenData {
            world,
            worlds,
            pairs,
            sequences,
            seed,
            out,
        } => gen_data::run(&gen_data::GenDataArgs {
            world_file: world.as_deref(),
            worlds,
            pairs,
            sequences,
            seed,
            out: &out,
        }),
        Command::Train {
            config,
            data,
            out,
            seed,
            mode,
        } => train::run(&train::TrainArgs {
            config: config.as_deref(),
            data: &data,
            out: &out,
            seed,
            mode: mode.map(TrainMode::from),
        }),
        Command::TrainMmd {
            config,
            data,
            target,
            model,
            out,
            seed,
        } => train::run_mmd(&train::TrainMmdArgs {
            config: config.as_deref(),
            data: &data,
            target: &target,
            model: &model,
            out: &out,
            seed,
        }),
        Command::Reconstruct {
            model,
            data,
            out,
            split,
            target_gen,
        } => reconstruct::run(&reconstruct::ReconstructArgs {
            model: &model,
            data: &data,
            out: &out,
            split: split.to_split(),
            use_target: target_gen,
        }),
        Command::Segment {
            config,
            model,
            seq,
            tau,
            out,
        } => segment::run(&segment::SegmentArgs {
            config: config.as_deref(),
            model: &model,
            seq: &seq,
            tau,
            out: &out,
        }),
        Command::Evaluate {
            config,
            pred,
            gt,
            metrics,
            out,
            lqi_model,
            lqi_train,
            seed,
        } => evaluate::run(&evaluate::EvaluateArgs {
            config: config.as_deref(),
            pred: &pred,
            gt: &gt,
            metrics: &metrics,
            out: &out,
            lqi_model: lqi_model.as_deref(),
            lqi_train: lqi_train.as_deref(),
            seed,
        }),
        Command::NavEval {
            config,
            seq,
            model,
            out,
        } => nav_eval::run(&nav_eval::NavEvalArgs {
            config: config.as_deref(),
            seq: &seq,
            model: &model,
            out: &out,
        }),
        Command::Ablate {
            config,
            data,
            out,
            modes,
            seeds,
            seed,
        } => ablate::run(&ablate::AblateArgs {
            config: config.as_deref(),
            data: &data,
            out: &out,
            modes: &modes,
            seeds,
            seed,
        }),
        Command::Report { input, out } => report::run(&report::ReportArgs {
            input: &input,
            out: &out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // usage problems are validation errors: exit 1, usage on stderr
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
