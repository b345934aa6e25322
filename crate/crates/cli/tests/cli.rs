use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use d2color_cli::experiment::{Algorithm, ExperimentConfig};
use d2color_cli::gen::GenSpec;
use d2color_cli::runner::read_rows;

fn d2color(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d2color")).args(args).env_remove("D2COLOR_OUT_DIR").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_prints_an_edge_list() {
    let o = d2color(&["generate", "--graph", "ring(5)"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("5 5"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn log_on_c5_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c5");
    let o = d2color(&["run", "--graph", "ring(5)", "--algorithm", "log", "--seeds", "0..10", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert!(r.valid);
        assert!(r.colors_used <= 5);
        assert!(r.max_edge_bits <= 32);
        assert!(out.join(format!("seed-{}/transcript.jsonl", r.seed)).exists());
    }
    let rep = d2color(&["report", p(&out)]);
    assert_eq!(code(&rep), 0);
    let text = stdout(&rep);
    assert!(text.contains("safety: PASS"), "{text}");
    assert!(text.contains("bandwidth: PASS"), "{text}");
}

#[test]
fn injected_bad_coloring_fails_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("greedy");
    let o = d2color(&["run", "--graph", "grid(4,4)", "--algorithm", "oracle-greedy", "--seeds", "0,1", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let bad: String = (0..16).map(|v| format!("{v} 0\n")).collect();
    fs::write(out.join("seed-1/coloring.txt"), bad).unwrap();
    let rep = d2color(&["report", p(&out)]);
    assert_eq!(code(&rep), 2);
    let text = stdout(&rep);
    assert!(text.contains("safety: FAIL"), "{text}");
    assert!(text.contains("seed 1") && text.contains("share color 0"), "{text}");
    assert!(text.contains("summary mismatches"), "{text}");
}

#[test]
fn large_epsilon_needs_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = d2color(&["run", "--graph", "polarity(13)", "--epsilon", "1/6", "--seeds", "0", "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
    let o = d2color(&["run", "--graph", "polarity(13)", "--epsilon", "1/6", "--allow-large-epsilon", "--seeds", "0", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_arguments_exit_three() {
    assert_eq!(code(&d2color(&["run", "--graph", "polarity(12)"])), 3);
    assert_eq!(code(&d2color(&["run", "--graph", "ring(5)", "--seeds", "bank:nope"])), 3);
    assert_eq!(code(&d2color(&["frobnicate"])), 3);
    assert_eq!(code(&d2color(&["run", "--graph", "ring(5)", "--c-b", "many"])), 3);
    assert_eq!(code(&d2color(&["--help"])), 0);
}

#[test]
fn out_dir_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (flag, env) = (dir.path().join("flag"), dir.path().join("env"));
    let o = Command::new(env!("CARGO_BIN_EXE_d2color"))
        .args(["run", "--graph", "ring(6)", "--algorithm", "oracle-greedy", "--seeds", "0", "--out", p(&flag)])
        .env("D2COLOR_OUT_DIR", &env)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env.join("summary.csv").exists());
    assert!(!flag.exists());
}

#[test]
fn oracle_greedy_is_always_valid() {
    for g in ["grid(6,6)", "star(9)", "cliqueUnion(3,4,2)", "hamming(4)"] {
        let o = d2color(&["run", "--graph", g, "--algorithm", "oracle-greedy", "--seeds", "0..5"]);
        assert_eq!(code(&o), 0, "{g}");
        assert_eq!(stdout(&o).lines().filter(|l| l.contains(",oracle-greedy,")).count(), 5);
    }
}

#[test]
fn config_file_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(GenSpec::Ring { n: 9 }, Algorithm::Sublog, vec![4, 5]);
    cfg.graph_seed = 3;
    let path = dir.path().join("cfg.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let out = dir.path().join("run");
    let o = d2color(&["run", "--config", p(&path), "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let saved = ExperimentConfig::from_json(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    cfg.out_dir = Some(out.clone());
    assert_eq!(saved, cfg);
    assert_eq!(read_rows(&out.join("summary.csv")).unwrap().iter().map(|r| r.seed).collect::<Vec<_>>(), [4, 5]);
}

#[test]
fn brute_seeds_and_verify_acd() {
    let o = d2color(&["brute-seeds", "--p", "11", "--d", "1", "--lists", "0,1;2,3"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("derandomized seed"));
    let o = d2color(&["verify-acd", "--graph", "ring(12)", "--mode", "exact"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn report_fits_rounds_across_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for n in [64, 128] {
        let out = dir.path().join(format!("gnp{n}"));
        let o = d2color(&["run", "--graph", &format!("gnp({n},{})", 8.0 / n as f64), "--seeds", "0..3", "--out", p(&out)]);
        assert_eq!(code(&o), 0);
        dirs.push(out);
    }
    let o = d2color(&["report", "--json", p(&dirs[0]), p(&dirs[1])]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let ids: Vec<u64> = v["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [1, 2, 3]);
}
