use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use attn_steer::cli::ComparisonTable;
use attn_steer::eval::{Method, RunRecord};
use attn_steer::profiling::ProfilingReport;
use attn_steer::steering::HeadSet;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attn-steer")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn base<'a>(dataset: &'a str, out: &'a str) -> Vec<&'a str> {
    vec!["--dataset", dataset, "--profiling-count", "0", "--output-dir", out, "--max-new-tokens", "6"]
}

#[test]
fn run_direct_writes_one_record_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture("qa4.jsonl");
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["run"];
    args.extend(base(ds.to_str().unwrap(), out));
    args.extend(["--method", "direct"]);
    let stdout = ok(&args);
    assert!(stdout.contains("EM") && stdout.contains("token-F1"));
    let path = dir.path().join("run-direct.json");
    let rec = RunRecord::load(&path).unwrap();
    assert_eq!(rec.method, Method::Direct);
    assert_eq!(rec.instances.len(), 4);
    let first = std::fs::read(&path).unwrap();
    ok(&args);
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn autopasta_with_empty_head_set_matches_direct() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture("qa4.jsonl");
    let empty = fixture("heads_empty.json");
    let out = dir.path().to_str().unwrap();
    for m in ["direct", "autopasta"] {
        let mut args = vec!["run"];
        args.extend(base(ds.to_str().unwrap(), out));
        args.extend(["--method", m, "--head-set", empty.to_str().unwrap()]);
        ok(&args);
    }
    let d = RunRecord::load(&dir.path().join("run-direct.json")).unwrap();
    let a = RunRecord::load(&dir.path().join("run-autopasta.json")).unwrap();
    assert_eq!((d.em, d.token_f1), (a.em, a.token_f1));
    for (x, y) in d.instances.iter().zip(&a.instances) {
        assert_eq!(x.prediction, y.prediction);
        assert!(!y.steering_applied);
    }
    assert_ne!(d.config_hash, a.config_hash);
}

#[test]
fn autopasta_without_head_set_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture("qa4.jsonl");
    let mut args = vec!["run"];
    args.extend(base(ds.to_str().unwrap(), dir.path().to_str().unwrap()));
    args.extend(["--method", "autopasta"]);
    let out = cli(&args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("head-set"));
}

#[test]
fn invalid_inputs_exit_nonzero_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture("qa4.jsonl");
    let out = dir.path().to_str().unwrap();
    for extra in [
        vec!["--delta", "0"],
        vec!["--delta", "-2"],
        vec!["--model-dim", "30"],
        vec!["--method", "nope"],
        vec!["--profiling-count", "4"],
    ] {
        let mut args = vec!["run"];
        args.extend(base(ds.to_str().unwrap(), out));
        args.extend(extra.iter().copied());
        assert!(!cli(&args).status.success(), "{extra:?}");
    }
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let out2 = cli(&["run", "--dataset", bad.to_str().unwrap(), "--output-dir", out]);
    assert!(!out2.status.success());
    assert!(String::from_utf8_lossy(&out2.stderr).contains("line 1"));
    assert!(!dir.path().join("run-direct.json").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("run.toml");
    std::fs::write(
        &toml,
        format!(
            "dataset = {:?}\nprofiling_count = 0\nmax_new_tokens = 3\nmethod = \"iterative\"\noutput_dir = {:?}\n",
            fixture("qa4.jsonl"),
            dir.path().join("from-file")
        ),
    )
    .unwrap();
    let over = dir.path().join("from-flag");
    ok(&["run", "--config", toml.to_str().unwrap(), "--output-dir", over.to_str().unwrap()]);
    let rec = RunRecord::load(&over.join("run-iterative.json")).unwrap();
    assert_eq!(rec.instances.len(), 4);
    assert!(!dir.path().join("from-file").exists());
}

#[test]
fn profile_budgets_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture("qa4.jsonl");
    let out = dir.path().to_str().unwrap();
    let common = ["--dataset", ds.to_str().unwrap(), "--profiling-count", "2", "--output-dir", out, "--max-new-tokens", "3"];

    let mut args = vec!["profile"];
    args.extend(common);
    args.extend(["--strategy", "coarse-to-fine", "--l", "2", "--top-i", "2", "--top-j", "3"]);
    ok(&args);
    let report: ProfilingReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("profile-report.json")).unwrap()).unwrap();
    assert_eq!(report.grid.len(), 2);
    for p in &report.grid {
        assert_eq!(p.budget.evaluations_used, 12);
        assert_eq!(p.budget.evaluations_predicted, 12);
    }
    let chosen = HeadSet::load(dir.path().join("head_set.json")).unwrap();
    assert_eq!(chosen, report.chosen);
    let first = std::fs::read(dir.path().join("profile-report.json")).unwrap();
    ok(&args);
    assert_eq!(std::fs::read(dir.path().join("profile-report.json")).unwrap(), first);

    let mut args = vec!["profile"];
    args.extend(common);
    args.extend(["--strategy", "greedy", "--k", "2"]);
    ok(&args);
    let report: ProfilingReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("profile-report.json")).unwrap()).unwrap();
    assert_eq!(report.budget.evaluations_used, 16);

    // A later steered run picks up the profiled head set.
    let mut args = vec!["run", "--method", "autopasta"];
    args.extend(common);
    ok(&args);
    assert!(dir.path().join("run-autopasta.json").exists());
}

#[test]
fn compare_table_shape_and_caption() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture("qa4.jsonl");
    let heads = fixture("heads_in_domain.json");
    let mut args = vec!["compare"];
    args.extend(base(ds.to_str().unwrap(), dir.path().to_str().unwrap()));
    args.extend(["--head-set", heads.to_str().unwrap(), "--provenance", "out-of-domain"]);
    let stdout = ok(&args);
    let table: ComparisonTable =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("compare.json")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 3);
    let methods: Vec<Method> = table.rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, Method::ALL);
    for r in &table.rows {
        assert_eq!(r.average, (r.em + r.token_f1) / 2.0);
        assert!(stdout.contains(&r.label));
    }
    assert!(table.caption.contains("heads_in_domain.json"));
    assert!(table.caption.contains("out-of-domain"));
    assert_eq!(table.num_instances, 4);
}

#[test]
fn help_lists_commands() {
    let out = ok(&["--help"]);
    for c in ["run", "profile", "compare"] {
        assert!(out.contains(c));
    }
    let out = ok(&["run", "--help"]);
    for f in ["--delta", "--head-set", "--workers", "--top-j", "--capture-snapshots", "--embedding-file"] {
        assert!(out.contains(f), "{f}");
    }
}

#[test]
fn snapshot_capture_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture("qa4.jsonl");
    let mut args = vec!["run", "--capture-snapshots", "--max-new-tokens", "2"];
    args.extend(["--dataset", ds.to_str().unwrap(), "--profiling-count", "0", "--output-dir", dir.path().to_str().unwrap()]);
    ok(&args);
    let text = std::fs::read_to_string(dir.path().join("snapshots-direct.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 4 * 2);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["weights"].as_array().unwrap().len(), 4);
}
