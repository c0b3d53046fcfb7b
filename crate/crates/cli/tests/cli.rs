//! End-to-end smoke tests for the `moves` binary: exit-code contract,
//! determinism, output hygiene, and the documented subcommand examples.

use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn moves(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moves"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = moves(args, cwd);
    assert!(
        out.status.success(),
        "moves {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Sorted (relative path, sha256) listing of every file under `root`.
fn tree_hash(root: &Path) -> Vec<(String, String)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                let digest = Sha256::digest(fs::read(&path).unwrap());
                out.push((rel, hex::encode(digest)));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

struct Fixture {
    #[allow(dead_code)]
    tmp: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
}

/// A small dataset plus a 2-epoch checkpoint, shared by the pipeline tests.
fn small_fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let data = root.join("data");
    ok(
        &[
            "gen-data",
            "--worlds",
            "4",
            "--pairs",
            "6",
            "--sequences",
            "1",
            "--seed",
            "5",
            "--out",
            data.to_str().unwrap(),
        ],
        &root,
    );
    fs::write(
        root.join("train.toml"),
        "[train]\nepochs = 2\nbatch_size = 8\n",
    )
    .unwrap();
    ok(
        &[
            "train",
            "--data",
            "data",
            "--config",
            "train.toml",
            "--seed",
            "5",
            "--out",
            "run",
        ],
        &root,
    );
    Fixture { tmp, root, data }
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();

    let usage = moves(&["train", "--bogus-flag"], cwd);
    assert_eq!(code(&usage), 1, "unknown flag must exit 1");
    assert!(
        String::from_utf8_lossy(&usage.stderr).contains("Usage"),
        "usage text goes to stderr"
    );

    assert_eq!(code(&moves(&["not-a-subcommand"], cwd)), 1);
    assert_eq!(code(&moves(&["train"], cwd)), 1, "missing required args");
    assert_eq!(code(&moves(&["--help"], cwd)), 0);
    assert_eq!(code(&moves(&["gen-data", "--help"], cwd)), 0);

    // validation failure: a config value outside its domain
    fs::write(tmp.path().join("bad.toml"), "[train]\nepochs = 0\n").unwrap();
    let bad = moves(
        &[
            "gen-data", "--worlds", "1", "--pairs", "1", "--config", "bad.toml", "--out", "d",
        ],
        cwd,
    );
    assert_eq!(code(&bad), 1, "config validation exits 1");

    // unknown config key
    fs::write(tmp.path().join("junk.toml"), "mystery_key = 3\n").unwrap();
    let junk = moves(
        &[
            "gen-data", "--worlds", "1", "--pairs", "1", "--config", "junk.toml", "--out", "d",
        ],
        cwd,
    );
    assert_eq!(code(&junk), 1, "unknown config keys are rejected");

    // bad inputs are validation errors
    let gone = moves(
        &["train", "--data", "no-such-dir", "--out", "run"],
        cwd,
    );
    assert_eq!(code(&gone), 1, "missing inputs exit 1");

    // runtime failure: the output directory cannot be created
    ok(
        &["gen-data", "--worlds", "1", "--pairs", "2", "--seed", "1", "--out", "tiny"],
        cwd,
    );
    fs::write(tmp.path().join("blocked"), b"file in the way").unwrap();
    let blocked = moves(
        &["reconstruct", "--data", "tiny", "--model", "nope.mvck", "--out", "blocked"],
        cwd,
    );
    assert_eq!(code(&blocked), 1, "missing model is a validation error");
    fs::write(
        tmp.path().join("t1.toml"),
        "[train]\nepochs = 1\nbatch_size = 2\n",
    )
    .unwrap();
    let out_is_file = moves(
        &[
            "train", "--data", "tiny", "--config", "t1.toml", "--out", "blocked",
        ],
        cwd,
    );
    assert_eq!(code(&out_is_file), 2, "unwritable --out exits 2");
}

#[test]
fn gen_data_is_byte_identical_under_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    for out in ["a", "b"] {
        ok(
            &[
                "gen-data", "--worlds", "2", "--pairs", "3", "--sequences", "1", "--seed", "9",
                "--out", out,
            ],
            cwd,
        );
    }
    assert_eq!(tree_hash(&cwd.join("a")), tree_hash(&cwd.join("b")));

    ok(
        &[
            "gen-data", "--worlds", "2", "--pairs", "3", "--sequences", "1", "--seed", "10",
            "--out", "c",
        ],
        cwd,
    );
    assert_ne!(
        tree_hash(&cwd.join("a")),
        tree_hash(&cwd.join("c")),
        "different seeds must change the data"
    );
}

#[test]
fn subcommands_write_only_under_out() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let before = listing(cwd);
    ok(
        &[
            "gen-data", "--worlds", "1", "--pairs", "2", "--seed", "3", "--out",
            "nested/deep/data",
        ],
        cwd,
    );
    let mut expect = before;
    expect.push("nested".to_string());
    expect.sort();
    assert_eq!(listing(cwd), expect, "only the --out subtree may appear");
}

#[test]
fn pipeline_runs_and_reports_are_reproducible() {
    let fx = small_fixture();
    let cwd = &fx.root;

    assert!(cwd.join("run/model_best.mvck").is_file());
    assert!(cwd.join("run/model_last.mvck").is_file());
    let log = fs::read_to_string(cwd.join("run/train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,disc_adv,triplet,disc_obj,gen_adv,recon,gen_obj,val_chamfer,val_emd"));

    // reconstruct: three name-aligned folders
    ok(
        &[
            "reconstruct", "--data", "data", "--model", "run/model_best.mvck", "--split",
            "test", "--out", "recon",
        ],
        cwd,
    );
    let names = listing(&cwd.join("recon/recon"));
    assert!(!names.is_empty());
    assert_eq!(names, listing(&cwd.join("recon/input")));
    assert_eq!(names, listing(&cwd.join("recon/static")));

    // documented example: evaluating a prediction dir against itself is all-zero
    ok(
        &[
            "evaluate", "--pred", "recon/static", "--gt", "recon/static", "--metrics",
            "cd,emd", "--out", "self.csv",
        ],
        cwd,
    );
    let mut rdr = csv::Reader::from_path(cwd.join("self.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["scan_id", "cd", "emd", "lqi"]
    );
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[1].parse::<f64>().unwrap(), 0.0, "cd of identical dirs");
        assert_eq!(rec[2].parse::<f64>().unwrap(), 0.0, "emd of identical dirs");
        assert_eq!(&rec[3], "", "lqi not requested");
        rows += 1;
    }
    assert_eq!(rows, names.len());

    // evaluate twice -> identical bytes
    ok(
        &[
            "evaluate", "--pred", "recon/recon", "--gt", "recon/static", "--out", "e1.csv",
        ],
        cwd,
    );
    ok(
        &[
            "evaluate", "--pred", "recon/recon", "--gt", "recon/static", "--out", "e2.csv",
        ],
        cwd,
    );
    assert_eq!(
        fs::read(cwd.join("e1.csv")).unwrap(),
        fs::read(cwd.join("e2.csv")).unwrap()
    );

    // mismatched prediction/gt names are a validation error
    let missing = moves(
        &["evaluate", "--pred", "recon/recon", "--gt", "data/pairs", "--out", "x.csv"],
        cwd,
    );
    assert_eq!(code(&missing), 1);

    // segment and nav-eval on the generated sequence
    ok(
        &[
            "segment", "--model", "run/model_best.mvck", "--seq", "data/seqs/s00", "--out",
            "seg",
        ],
        cwd,
    );
    assert!(cwd.join("seg/tracks.csv").is_file());
    let tracks = fs::read_to_string(cwd.join("seg/tracks.csv")).unwrap();
    assert!(tracks.starts_with("frame,id,cx,cy,cz,label"));
    let masks = listing(&cwd.join("seg/masks"));
    assert_eq!(masks.len(), 12, "one mask per frame");

    ok(
        &[
            "nav-eval", "--seq", "data/seqs/s00", "--model", "run/model_best.mvck", "--out",
            "nav.csv",
        ],
        cwd,
    );
    let nav = fs::read_to_string(cwd.join("nav.csv")).unwrap();
    assert!(nav.starts_with("variant,ate_rmse,"));
    assert_eq!(nav.lines().count(), 4, "header plus three variants");
    for v in ["dynamic", "recon", "static", "gt"] {
        assert!(
            cwd.join(format!("nav_traj_{v}.txt")).is_file(),
            "trajectory side file for {v}"
        );
    }

    // report consumes the artifacts and regenerates byte-identically
    fs::create_dir(cwd.join("art")).unwrap();
    for f in ["run/train_log.csv", "nav.csv", "e1.csv", "nav_traj_recon.txt", "nav_traj_gt.txt"] {
        let name = Path::new(f).file_name().unwrap();
        fs::copy(cwd.join(f), cwd.join("art").join(name)).unwrap();
    }
    ok(&["report", "--in", "art", "--out", "rep1"], cwd);
    ok(&["report", "--in", "art", "--out", "rep2"], cwd);
    assert_eq!(tree_hash(&cwd.join("rep1")), tree_hash(&cwd.join("rep2")));
    assert!(cwd.join("rep1/summary.csv").is_file());
    assert!(cwd.join("rep1/train_log_curves.svg").is_file());
    assert!(cwd.join("rep1/traj_overlay.svg").is_file());
}

#[test]
fn ablate_emits_the_fixed_schema() {
    let fx = small_fixture();
    let cwd = &fx.root;
    fs::write(
        cwd.join("ab.toml"),
        "[train]\nepochs = 1\nbatch_size = 8\n",
    )
    .unwrap();
    ok(
        &[
            "ablate", "--data", "data", "--modes", "moves,cod,vanilla", "--seeds", "2",
            "--config", "ab.toml", "--seed", "1", "--out", "abl",
        ],
        cwd,
    );
    let mut rdr = csv::Reader::from_path(cwd.join("abl/ablate.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["mode", "seed", "metric", "value"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    // one row per (mode, seed, metric)
    assert_eq!(rows.len(), 3 * 2 * 3);
    for mode in ["moves", "cod", "vanilla"] {
        for seed in ["1", "2"] {
            for metric in ["best_epoch", "val_chamfer", "val_emd"] {
                assert!(
                    rows.iter().any(|r| &r[0] == mode && &r[1] == seed && &r[2] == metric),
                    "missing row {mode}/{seed}/{metric}"
                );
            }
        }
    }

    // unknown mode is a validation error
    let bad = moves(
        &[
            "ablate", "--data", "data", "--modes", "moves,warp", "--seeds", "1", "--out", "x",
        ],
        cwd,
    );
    assert_eq!(code(&bad), 1);
}

#[test]
fn train_mmd_adapts_and_round_trips_the_checkpoint() {
    let fx = small_fixture();
    let cwd = &fx.root;
    ok(
        &[
            "gen-data", "--worlds", "2", "--pairs", "4", "--seed", "77", "--out", "tgt",
        ],
        cwd,
    );
    fs::write(cwd.join("ad.toml"), "[adapt]\nepochs = 2\n").unwrap();
    ok(
        &[
            "train-mmd", "--data", "data", "--target", "tgt", "--model", "run/model_best.mvck",
            "--config", "ad.toml", "--seed", "2", "--out", "mmd",
        ],
        cwd,
    );
    assert!(cwd.join("mmd/model_adapted.mvck").is_file());
    let log = fs::read_to_string(cwd.join("mmd/adapt_log.csv")).unwrap();
    assert!(log.starts_with("epoch,disc_adv,gen_adv,self_recon,mmd,val_mmd,val_self_recon,val_obj"));

    // the adapted checkpoint carries the target generator
    ok(
        &[
            "reconstruct", "--data", "tgt", "--model", "mmd/model_adapted.mvck",
            "--target-gen", "--split", "all", "--out", "tr",
        ],
        cwd,
    );
    assert_eq!(listing(&cwd.join("tr/recon")).len(), 8);

    // a source-only checkpoint cannot reconstruct with --target-gen
    let plain = moves(
        &[
            "reconstruct", "--data", "tgt", "--model", "run/model_best.mvck", "--target-gen",
            "--out", "tr2",
        ],
        cwd,
    );
    assert_eq!(code(&plain), 1);
}
