use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtga_cli::RunConfigFile;

fn mtga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtga")).args(args).output().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

const CONFIG: &str = "[evo]
population_size = 12
generations = 4

[synth]
task_count = 2
residues = 200
feature_dim = 6
positive_rate = 0.05
signal_strength = 6.0
";

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("run.toml");
    fs::write(&config, CONFIG).unwrap();
    let data = root.join("data");
    let out = mtga(&["gen", "--config", &s(&config), "--out", &s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Fixture {
        _dir: dir,
        root,
        config,
        data,
    }
}

fn evolve(f: &Fixture, out: &str, extra: &[&str]) -> (PathBuf, Output) {
    let dir = f.root.join(out);
    let (data, config, target) = (s(&f.data), s(&f.config), s(&dir));
    let mut args = vec!["evolve", "--data", &data, "--config", &config, "--out", &target];
    args.extend_from_slice(extra);
    let o = mtga(&args);
    (dir, o)
}

#[test]
fn defaults_follow_published_hyperparameters() {
    let cfg = RunConfigFile::parse("", Path::new("empty.toml")).unwrap();
    assert_eq!(cfg.evo.population_size, 50);
    assert_eq!(cfg.evo.max_feature_length, 25);
    assert_eq!(cfg.evo.crossover_prob, 0.9);
    assert_eq!(cfg.evo.mutation_prob, 0.6);
    assert_eq!(cfg.proxy.gamma, 1.5);
    assert_eq!((cfg.proxy.alpha_pos, cfg.proxy.alpha_neg), (0.85, 0.15));
    assert_eq!(cfg.proxy.ridge_lambda, 0.5);
    assert_eq!(cfg.proxy.max_iter, 300);
    assert_eq!(cfg.synth.positive_rate, 0.025);
    assert_eq!(cfg.synth.feature_dim, 128);
}

#[test]
fn unknown_key_is_rejected_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[evo]\npopsize = 10\n").unwrap();
    let out = mtga(&["gen", "--config", &s(&cfg), "--out", &s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("popsize") && err.contains("line 2"), "{err}");
}

#[test]
fn gen_is_deterministic_and_writes_manifest() {
    let (a, b) = (fixture(), fixture());
    assert!(a.data.join("manifest").exists());
    for entry in ["manifest", "task0/labels.txt", "task0/pool_0.fmat", "task1/pool_2.fmat"] {
        assert_eq!(fs::read(a.data.join(entry)).unwrap(), fs::read(b.data.join(entry)).unwrap());
    }
}

#[test]
fn evolve_outputs_and_round_trip_through_predict_and_eval() {
    let f = fixture();
    let (out, o) = evolve(&f, "run", &["--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let history = fs::read_to_string(out.join("history.task0.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "generation,task,best_g1,best_g2,mean_g1,transfers_from_task0,transfers_from_task1");
    assert_eq!(lines.len(), 1 + 4);

    let summary = fs::read_to_string(out.join("summary.out")).unwrap();
    for task in ["task0", "task1"] {
        let pred = f.root.join(format!("{task}.pred"));
        let o = mtga(&[
            "predict",
            "--strategy",
            &s(&out.join(format!("strategy.{task}.out"))),
            "--pool",
            &s(&f.data.join(task)),
            "--out",
            &s(&pred),
            "--rows",
            "150:200",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(fs::read_to_string(&pred).unwrap().lines().count(), 50);
        let o = mtga(&[
            "eval",
            "--pred",
            &s(&pred),
            "--labels",
            &s(&f.data.join(task).join("labels.txt")),
            "--rows",
            "150:200",
        ]);
        assert!(o.status.success());
        let printed = String::from_utf8_lossy(&o.stdout);
        let expected: String = summary
            .lines()
            .filter_map(|l| l.strip_prefix(&format!("{task}.")))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(printed, expected);
    }
}

#[test]
fn naive_mean_with_no_enm_warns() {
    let f = fixture();
    let (out, o) = evolve(&f, "naive", &["--naive-mean", "--no-enm"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let pareto = fs::read_to_string(out.join("pareto.task1.out")).unwrap();
    assert_eq!(pareto.lines().count(), 2);
    assert!(pareto.contains("0:add:1:1 1:add:1:1 2:add:1:1"));
}

#[test]
fn seeded_runs_match() {
    let f = fixture();
    let (a, _) = evolve(&f, "a", &["--seed", "7"]);
    let (b, _) = evolve(&f, "b", &["--seed", "7"]);
    assert_eq!(fs::read(a.join("summary.out")).unwrap(), fs::read(b.join("summary.out")).unwrap());
}

#[test]
fn eval_threshold_convention_and_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.txt");
    fs::write(&labels, "0\n1\n0\n0\n").unwrap();
    let pred = dir.path().join("p.txt");
    fs::write(&pred, "0.5\n0.5\n0.5\n0.5\n").unwrap();
    let o = mtga(&["eval", "--pred", &s(&pred), "--labels", &s(&labels)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("fpr: 1\n"));
    fs::write(&pred, "").unwrap();
    let o = mtga(&["eval", "--pred", &s(&pred), "--labels", &s(&labels)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_rejects_dimension_mismatch() {
    let f = fixture();
    let (out, _) = evolve(&f, "run", &[]);
    let other = f.root.join("other");
    let cfg = f.root.join("wide.toml");
    fs::write(&cfg, CONFIG.replace("feature_dim = 6", "feature_dim = 7")).unwrap();
    assert!(mtga(&["gen", "--config", &s(&cfg), "--out", &s(&other)]).status.success());
    let o = mtga(&[
        "predict",
        "--strategy",
        &s(&out.join("strategy.task0.out")),
        "--pool",
        &s(&other.join("task0")),
        "--out",
        &s(&f.root.join("p")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("columns"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(mtga(&["evolve", "--bogus"]).status.code(), Some(1));
    assert_eq!(mtga(&[]).status.code(), Some(1));
    assert_eq!(mtga(&["eval", "--pred", "x", "--labels", "y", "--rows", "5:2"]).status.code(), Some(1));
    assert_eq!(mtga(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtga(&["evolve", "--data", &s(&dir.path().join("nope")), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}
