use std::path::Path;
use std::process::{Command, Output};

use rtpmatch::cost::CostWeights;
use rtpmatch::harness::{compare_matchers, CompareConfig};
use rtpmatch::scenes::{generate_scene, SceneConfig};
use rtpmatch::solvers::adaptive_epsilon;

fn rtpmatch(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtpmatch"))
        .args(args)
        .env("RTPMATCH_OUT_DIR", out_dir)
        .output()
        .unwrap()
}

fn gen_scene(dir: &Path, seed: &str) -> String {
    let path = dir.join(format!("scene{seed}.json"));
    let out = rtpmatch(&["gen", "--seed", seed, "-o", path.to_str().unwrap()], dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path.to_str().unwrap().to_string()
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["gen", "match", "sweep", "compare", "ablate", "bench"] {
        let out = rtpmatch(&[sub, "--help"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{sub} --help");
        assert!(!out.stdout.is_empty());
    }
    assert_eq!(rtpmatch(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen_scene(dir.path(), "1");
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["match"],
        vec!["match", &scene, "--kappa2", "2"],
        vec!["match", &scene, "--eps", "-1"],
        vec!["match", &scene, "--eps", "0.1", "--eps0", "0.2"],
        vec!["match", &scene, "--generate"],
        vec!["sweep", &scene, "--eps", "0.5:0.1:3"],
        vec!["match", &scene, "--solver", "simplex"],
    ];
    for args in cases {
        let out = rtpmatch(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen_scene(dir.path(), "1");
    let out = rtpmatch(
        &["match", &scene, "--solver", "sinkhorn", "--eps", "1e-6"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("underflow"));
    let missing = dir.path().join("missing.json");
    let out = rtpmatch(&["match", missing.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_eps() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen_scene(dir.path(), "4");
    let out_dir = dir.path().join("sweep");
    let out = rtpmatch(&["sweep", &scene, "--eps", "0.01:1.0:10"], &out_dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("eps,"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn gen_then_compare_writes_tables_and_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen_scene(dir.path(), "7");
    let out_dir = dir.path().join("cmp");
    let out = rtpmatch(&["compare", &scene], &out_dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "comparison.csv",
        "cost.csv",
        "heatmap_cost.svg",
        "plan_hungarian.csv",
        "heatmap_hungarian.svg",
        "plan_rtp.csv",
        "heatmap_rtp.svg",
        "plan_exact_ot.csv",
    ] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let table = std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    let hashes: Vec<&str> = table
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert!(hashes.len() >= 3);
    assert!(hashes.iter().all(|h| *h == hashes[0]));
}

#[test]
fn rtp_recall_not_below_hungarian_on_duplicate_heavy_scenes() {
    let weights = CostWeights::default();
    let mut wins = 0;
    let mut ties = 0;
    let mut losses = 0;
    for seed in 0..50 {
        let scene = generate_scene(&SceneConfig::duplicate_heavy(), seed).unwrap();
        let eps = adaptive_epsilon(0.2, scene.m()).unwrap();
        let cmp = compare_matchers(&scene, &weights, &CompareConfig::new(eps, 0.01)).unwrap();
        let rtp = cmp.record("rtp").unwrap().threshold_quality.recall;
        let hun = cmp.record("hungarian").unwrap().argmax_quality.recall;
        match rtp.partial_cmp(&hun).unwrap() {
            std::cmp::Ordering::Greater => wins += 1,
            std::cmp::Ordering::Equal => ties += 1,
            std::cmp::Ordering::Less => losses += 1,
        }
    }
    println!("rtp threshold recall vs hungarian: {wins} higher, {ties} equal, {losses} lower");
    assert!(
        losses * 20 < 50,
        "recall below hungarian on {losses} of 50 scenes"
    );
}
