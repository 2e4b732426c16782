use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn contradice(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contradice"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, "name = \"small\"\nlayout = \"checker\"\nseeds = 2\nsteps_main = 500\nsteps_disc = 500\n").unwrap();
    path.display().to_string()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(contradice(&["bogus"], dir.path()).status.code(), Some(1));
}

#[test]
fn unknown_config_keys_are_all_listed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "alpa = 0.5\nbetta = 3\n").unwrap();
    let out = contradice(&["train", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("alpa") && stderr.contains("betta"), "{stderr}");
}

#[test]
fn unknown_sweep_axis_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = contradice(&["sweep", "--axis", "gamma"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_data_writes_mdp_and_three_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = contradice(&["gen-data", "--out", "data"], dir.path());
    assert!(out.status.success());
    for task in ["checker", "corridor", "diagonal"] {
        let task_dir = dir.path().join("data").join(task);
        assert!(task_dir.join("mdp.json").exists());
        let good = fs::read_to_string(task_dir.join("good.jsonl")).unwrap();
        let bad = fs::read_to_string(task_dir.join("bad.jsonl")).unwrap();
        let mix = fs::read_to_string(task_dir.join("mix.jsonl")).unwrap();
        assert!(good.lines().next().unwrap().contains("\"n_trajectories\":1"));
        assert!(bad.lines().next().unwrap().contains("\"n_trajectories\":10"));
        assert!(mix.lines().next().unwrap().contains("\"n_trajectories\":105"));
        assert_eq!(good.lines().count(), 2);
    }
}

#[test]
fn train_then_eval_reproduces_scores() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = contradice(&["train", "--config", &config, "--out", "runs", "--save-disc"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("runs/small");
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["scores"].as_array().unwrap().len(), 2);
    assert!(run_dir.join("checker/0/metrics.csv").exists());
    assert!(run_dir.join("checker/1/disc_good.json").exists());

    let out = contradice(&["eval", "--config", &config, "--out", "runs"], dir.path());
    assert!(out.status.success());
    let evals: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("eval.json")).unwrap()).unwrap();
    for (a, b) in result["scores"].as_array().unwrap().iter().zip(evals.as_array().unwrap()) {
        assert_eq!(a["normalized_score"], b["normalized_score"]);
    }
}

#[test]
fn training_is_deterministic_and_loaded_discriminators_match() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let scores = |out: &str, extra: &[&str]| {
        let mut args = vec!["train", "--config", config.as_str(), "--out", out];
        args.extend_from_slice(extra);
        assert!(contradice(&args, dir.path()).status.success());
        let text = fs::read_to_string(dir.path().join(out).join("small/result.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["scores"].clone()
    };
    let first = scores("a", &["--save-disc"]);
    assert_eq!(first, scores("b", &[]));
    assert_eq!(first, scores("c", &["--load-disc", "a"]));
    let metrics = |out: &str| fs::read(dir.path().join(out).join("small/checker/0/metrics.csv")).unwrap();
    assert_eq!(metrics("a"), metrics("b"));
}

#[test]
fn bc_mix_mode_trails_contradice() {
    let dir = tempfile::tempdir().unwrap();
    let mean = |mode: &str| {
        let out_dir = format!("runs_{mode}");
        let out = contradice(&["train", "--mode", mode, "--seeds", "2", "--out", &out_dir], dir.path());
        assert!(out.status.success());
        let text = fs::read_to_string(dir.path().join(out_dir).join("gridworld/result.json")).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap()["mean"].as_f64().unwrap()
    };
    assert!(mean("bc_mix") < mean("contradice"));
}

#[test]
fn verify_passes_clean_and_fails_under_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let out = contradice(&["verify", "--out", "clean"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("clean/verify.json")).unwrap()).unwrap();
    assert!(report.as_array().unwrap().iter().all(|r| r["passed"] == true));

    let out = contradice(&["verify", "--out", "mutated", "--mutation", "psi-sign-flip"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn beta_sweep_has_seven_rows_per_task_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = contradice(&["sweep", "--config", &config, "--axis", "beta", "--out", "runs"], dir.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("runs/small/sweep_beta.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("axis,value,task,seed,score"));
    assert_eq!(lines.count(), 7 * 2);
}
