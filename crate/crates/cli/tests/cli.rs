use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn seqseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqseg"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SEQSEG_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = seqseg(args, cwd);
    assert!(
        out.status.success(),
        "seqseg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = seqseg(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("experiment"));
    assert_eq!(seqseg(&["--version"], dir.path()).status.code(), Some(0));
    assert_eq!(seqseg(&["policy", "eval", "--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = seqseg(&["frobnicate"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));
    assert!(!unknown.stderr.is_empty());
    assert_eq!(seqseg(&["synth", "gen", "--bogus-flag"], dir.path()).status.code(), Some(1));
    // --seed is mandatory for stochastic subcommands
    assert_eq!(seqseg(&["synth", "gen", "--out", "c"], dir.path()).status.code(), Some(1));
    assert_eq!(seqseg(&[], dir.path()).status.code(), Some(1));
}

#[test]
fn bad_input_exits_one_and_missing_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = seqseg(&["synth", "gen", "--seed", "1", "--res", "8x8", "--out", "c"], dir.path());
    assert_eq!(tiny.status.code(), Some(1));
    let missing = seqseg(&["policy", "dump", "--policy", "nope.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    let broken = seqseg(&["policy", "dump", "--policy", "broken.json"], dir.path());
    assert_eq!(broken.status.code(), Some(1));
}

#[test]
fn dump_flags_lists_every_subcommand_with_env_names() {
    let dir = tempfile::tempdir().unwrap();
    let schema: Value = serde_json::from_str(&ok(&["--dump-flags"], dir.path())).unwrap();
    let mut leaves = Vec::new();
    fn walk(node: &Value, path: String, leaves: &mut Vec<String>) {
        for arg in node["args"].as_array().unwrap() {
            let env = arg["env"].as_str().unwrap_or_else(|| panic!("{path} {} has no env", arg["id"]));
            assert!(env.starts_with("SEQSEG_"), "{env}");
        }
        let subs = node["subcommands"].as_array().unwrap();
        if subs.is_empty() {
            leaves.push(path.clone());
        }
        for s in subs {
            walk(s, format!("{path} {}", s["name"].as_str().unwrap()), leaves);
        }
    }
    walk(&schema, "seqseg".into(), &mut leaves);
    for cmd in [
        "seqseg synth gen",
        "seqseg classifier train",
        "seqseg crf fit",
        "seqseg crf infer",
        "seqseg combine",
        "seqseg metrics fwji",
        "seqseg policy train",
        "seqseg policy eval",
        "seqseg policy dump",
        "seqseg experiment run",
    ] {
        assert!(leaves.iter().any(|l| l == cmd), "{cmd} missing from {leaves:?}");
    }
}

#[test]
fn env_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_seqseg"))
        .args(["synth", "gen", "--per-category", "2", "--res", "32x32", "--out", "c"])
        .env("SEQSEG_SEED", "9")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("c/manifest.json").exists());
}

fn scene_of(manifest: &Path, category: &str) -> (String, String) {
    let m: Value = serde_json::from_slice(&std::fs::read(manifest).unwrap()).unwrap();
    let s = m["scenes"].as_array().unwrap().iter().rfind(|s| s["category"] == category).unwrap();
    (s["id"].as_str().unwrap().to_string(), s["labelmap"].as_str().unwrap().to_string())
}

#[test]
fn full_pipeline_produces_all_five_policies() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "gen", "--per-category", "12", "--res", "32x32", "--seed", "5", "--out", "corpus"], d);
    let data = "corpus/manifest.json";
    let trained = ok(
        &["classifier", "train", "--data", data, "--all", "--rounds", "12", "--presence-rounds", "12", "--seed", "1", "--out", "models.json"],
        d,
    );
    assert!(trained.lines().any(|l| l.starts_with("bed,")));
    let fit = ok(
        &["crf", "fit", "--data", data, "--models", "models.json", "--class", "bed", "--grid", "w1=1;w2=0,1;w3=0,1"],
        d,
    );
    assert_eq!(fit.lines().count(), 5);
    assert_eq!(fit.lines().filter(|l| l.ends_with(",true")).count(), 1);
    ok(&["crf", "infer", "--data", data, "--models", "models.json", "--class", "bed", "--out", "masks"], d);
    let (id, labelmap) = scene_of(&d.join(data), "bedroom");
    let mask = std::fs::read(d.join(format!("masks/{id}_bed.pgm"))).unwrap();
    assert!(mask.starts_with(b"P5"));

    ok(&["combine", "--data", data, "--models", "models.json", "--scene", &id, "--order", "bed,pillow", "--out", "canvas.pgm"], d);
    let gt = format!("corpus/{labelmap}");
    let fwji = ok(&["metrics", "fwji", "--canvas", "canvas.pgm", "--gt", &gt, "--taken", "bed,pillow", "--data", data], d);
    let lines: Vec<&str> = fwji.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("total,r_bg"));
    let total: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&total));

    ok(
        &["policy", "train", "--data", data, "--models", "models.json", "--category", "bedroom", "--seed", "2", "--iterations", "3", "--out", "policy.json", "--diagnostics", "diag.csv"],
        d,
    );
    let diag = std::fs::read_to_string(d.join("diag.csv")).unwrap();
    assert_eq!(diag.lines().next().unwrap(), "iteration,epsilon,mean_reward,samples");
    assert_eq!(diag.lines().count(), 4);
    let policy: Value = serde_json::from_slice(&std::fs::read(d.join("policy.json")).unwrap()).unwrap();
    let (a, k) = (policy["catalog"].as_array().unwrap().len(), policy["k"].as_u64().unwrap() as usize);
    assert_eq!(policy["weights"].as_array().unwrap().len(), a * (1 + 2 * k));
    let dump = ok(&["policy", "dump", "--policy", "policy.json", "--reshape"], d);
    assert_eq!(dump.lines().count(), 1 + a);
    assert!(dump.lines().skip(1).all(|l| l.split(',').count() == 2 + 2 * k));

    ok(
        &["policy", "eval", "--data", data, "--models", "models.json", "--category", "bedroom", "--policy", "policy.json", "--actions", "5", "--seed", "1", "--out", "eval.csv"],
        d,
    );
    let eval = std::fs::read_to_string(d.join("eval.csv")).unwrap();
    assert_eq!(eval.lines().next().unwrap(), "scene_id,category,policy,seed,k,reward");

    std::fs::write(
        d.join("exp.json"),
        r#"{"categories": ["bedroom"], "seeds": [1], "folds": 3, "control_sets": [],
            "policies": ["lspi", "fixed", "random", "oracle", "optimal"], "lspi": {"iterations": 3}}"#,
    )
    .unwrap();
    let args = ["experiment", "run", "--config", "exp.json", "--data", data, "--models", "models.json", "--deterministic"];
    ok(&[&args[..], &["--out", "run1"]].concat(), d);
    ok(&[&args[..], &["--out", "run2", "--jobs", "2"]].concat(), d);
    let curves = std::fs::read_to_string(d.join("run1/curves.csv")).unwrap();
    for p in ["lspi", "fixed", "random", "oracle", "optimal"] {
        assert!(curves.lines().any(|l| l.split(',').nth(2) == Some(p)), "{p} missing");
    }
    assert_eq!(curves, std::fs::read_to_string(d.join("run2/curves.csv")).unwrap());
    assert!(d.join("run1/summary.json").exists());
    assert!(d.join("run1/config.json").exists());
}
