//! Determinism criterion: every subcommand, run twice with identical inputs
//! and seeds, must produce byte-identical output files.

use std::path::Path;
use std::process::Command;

use tempfile::tempdir;

const BIN: &str = env!("CARGO_BIN_EXE_labelmodel");

fn run(dir: &Path, args: &[&str]) {
    let status = Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .status()
        .expect("binary should launch");
    assert!(status.success(), "command failed: {args:?}");
}

fn assert_identical(dir: &Path, a: &str, b: &str) {
    let left = std::fs::read(dir.join(a)).unwrap_or_else(|_| panic!("missing {a}"));
    let right = std::fs::read(dir.join(b)).unwrap_or_else(|_| panic!("missing {b}"));
    assert!(left == right, "outputs differ: {a} vs {b}");
}

#[test]
fn criterion_10_cli_runs_are_byte_identical() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();

    std::fs::write(
        dir.join("model.json"),
        r#"{"m": 4, "mu1": [0.9, 0.6, 0.7, 0.5], "deps": [{"j": 0, "k": 1, "kind": "fixing"}], "mu2": [0.6]}"#,
    )
    .unwrap();
    std::fs::write(dir.join("deps.json"), r#"[{"j": 0, "k": 1, "kind": "fixing"}]"#).unwrap();
    std::fs::write(
        dir.join("lfs.json"),
        r#"[{"name": "pos", "pattern": "good", "emit": 1}, {"name": "neg", "pattern": "bad", "emit": -1}]"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("corpus.json"),
        r#"{"documents": ["good stuff", "bad news", "nothing here", "good and bad"], "truth": [1, -1, 1, -1]}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("sweep.json"),
        r#"{
            "source": {"type": "synthetic", "params": {"m": 4, "mu1": [0.8, 0.6, 0.7, 0.5], "deps": [], "mu2": []}, "n": 300, "seed": 5},
            "d_values": [0, 2],
            "runs": 3,
            "fit": {"max_iters": 150},
            "train": {"epochs": 6},
            "cofire_floor": 5
        }"#,
    )
    .unwrap();

    for tag in ["a", "b"] {
        run(dir, &["generate", "--model", "model.json", "--n", "400", "--seed", "11", "--out", &format!("data_{tag}")]);
    }
    for name in ["votes.csv", "truth.csv", "provenance.json"] {
        assert_identical(dir, &format!("data_a/{name}"), &format!("data_b/{name}"));
    }

    for tag in ["a", "b"] {
        run(dir, &["apply-lfs", "--corpus", "corpus.json", "--lfs", "lfs.json", "--out", &format!("app_{tag}")]);
    }
    assert_identical(dir, "app_a/votes.csv", "app_b/votes.csv");
    assert_identical(dir, "app_a/truth.csv", "app_b/truth.csv");

    for tag in ["a", "b"] {
        run(dir, &["fit", "--votes", "data_a/votes.csv", "--max-iters", "200", "--out", &format!("ind_{tag}")]);
        run(dir, &["fit", "--votes", "data_a/votes.csv", "--deps", "deps.json", "--max-iters", "200", "--out", &format!("dep_{tag}")]);
    }
    for name in ["model.json", "fit_report.json"] {
        assert_identical(dir, &format!("ind_a/{name}"), &format!("ind_b/{name}"));
        assert_identical(dir, &format!("dep_a/{name}"), &format!("dep_b/{name}"));
    }

    for tag in ["a", "b"] {
        run(dir, &["posterior", "--model", "dep_a/model.json", "--votes", "data_a/votes.csv", "--out", &format!("post_{tag}.csv")]);
    }
    assert_identical(dir, "post_a.csv", "post_b.csv");

    for tag in ["a", "b"] {
        run(dir, &["bounds", "--model", "dep_a/model.json", "--baseline", "ind_a/model.json", "--gamma", "0.05", "--out", &format!("rep_{tag}.json")]);
    }
    assert_identical(dir, "rep_a.json", "rep_b.json");

    for tag in ["a", "b"] {
        run(dir, &["discover-deps", "--votes", "data_a/votes.csv", "--truth", "data_a/truth.csv", "--floor", "5", "--top-d", "2", "--out", &format!("disc_{tag}")]);
    }
    assert_identical(dir, "disc_a/ranked.csv", "disc_b/ranked.csv");
    assert_identical(dir, "disc_a/selected.json", "disc_b/selected.json");

    for tag in ["a", "b"] {
        run(dir, &["train", "--votes", "data_a/votes.csv", "--model", "dep_a/model.json", "--truth", "data_a/truth.csv", "--epochs", "8", "--out", &format!("metrics_{tag}.json")]);
    }
    assert_identical(dir, "metrics_a.json", "metrics_b.json");

    for tag in ["a", "b"] {
        run(dir, &["sweep", "--config", "sweep.json", "--out", &format!("sweep_{tag}.csv")]);
    }
    assert_identical(dir, "sweep_a.csv", "sweep_b.csv");

    for tag in ["a", "b"] {
        run(dir, &["verify-bounds", "--trials", "25", "--out", &format!("camp_{tag}.json")]);
    }
    assert_identical(dir, "camp_a.json", "camp_b.json");

    println!("criterion 10 (CLI determinism): PASS, all 9 subcommands byte-identical across reruns");
}
