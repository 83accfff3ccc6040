use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn relkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relkit")).args(args).env_remove("RELKIT_SEED").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = relkit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn manifest(path: impl Into<PathBuf>) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path.into()).unwrap()).unwrap()
}

#[test]
fn gen_data_writes_fifty_relations() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "math.json");
    ok(&["gen-data", "--kind", "math", "--out", &out]);
    let ds = relkit::dataset::load_dataset_json(&out).unwrap();
    assert_eq!(ds.len(), 50);
    let m = manifest(format!("{out}.manifest.json"));
    assert_eq!(m["subcommand"], "gen-data");
    assert_eq!(m["outputs"][0]["sha256"].as_str().unwrap().len(), 64);

    ok(&["gen-data", "--number-max", "100", "--out", &out]);
    let ds = relkit::dataset::load_dataset_json(&out).unwrap();
    assert_eq!(ds.iter().find(|r| r.name == "number plus 100").unwrap().samples.len(), 1);
}

#[test]
fn usage_errors_exit_with_two() {
    let out = relkit(&["gen-data", "--kind", "math"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
    assert_eq!(relkit(&["gen-store", "--kind", "bogus", "--out", "x"]).status.code(), Some(2));
    assert_eq!(relkit(&["gen-store", "--kind", "shared", "--groups", "2y3", "--out", "x"]).status.code(), Some(2));
    assert_eq!(relkit(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = relkit(&["ablate", "--store", &p(dir.path(), "missing.lrec"), "--randomize", "relations", "--out", &p(dir.path(), "o")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.lrec"));
}

#[test]
fn gen_store_round_trips_and_groups() {
    let dir = tempfile::tempdir().unwrap();
    let store = p(dir.path(), "m.lrec");
    ok(&["gen-store", "--kind", "mathramp", "--d", "16", "--sigma", "0", "--seed", "1", "--out", &store]);
    let s = relkit::store::load_store(&store).unwrap();
    assert_eq!(s.d(), 16);
    assert_eq!(relkit::dataset::load_dataset_json(p(dir.path(), "m.json")).unwrap().len(), 50);

    let shared = p(dir.path(), "s.lrec");
    let data = p(dir.path(), "s-data.json");
    ok(&["gen-store", "--kind", "shared", "--groups", "2x3", "--d", "16", "--out", &shared, "--data-out", &data]);
    assert_eq!(relkit::dataset::load_dataset_json(&data).unwrap().len(), 6);
    assert_eq!(relkit::store::load_store(&shared).unwrap().relations().len(), 6);
}

#[test]
fn seed_comes_from_environment_when_no_flag() {
    let dir = tempfile::tempdir().unwrap();
    let a = p(dir.path(), "a.lrec");
    let b = p(dir.path(), "b.lrec");
    let run = |out: &str, env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_relkit"));
        c.args(["gen-store", "--kind", "orthogonal", "--d", "8", "--relations", "2", "--samples", "3", "--out", out]);
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        match env {
            Some(v) => c.env("RELKIT_SEED", v),
            None => c.env_remove("RELKIT_SEED"),
        };
        assert!(c.output().unwrap().status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run(&a, Some("5"), None), run(&b, None, Some("5")));
    assert_ne!(run(&a, Some("5"), None), run(&b, None, None));
    assert_eq!(run(&a, Some("5"), Some("6")), run(&b, None, Some("6")));
}

#[test]
fn train_eval_and_rerun_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let store = p(dir.path(), "o.lrec");
    let data = p(dir.path(), "o.json");
    ok(&["gen-store", "--kind", "orthogonal", "--d", "12", "--relations", "4", "--samples", "6", "--seed", "2", "--out", &store]);
    let cfg = p(dir.path(), "cfg.toml");
    std::fs::write(&cfg, "seed = 3\n[train]\noptimizer = \"adam\"\nlearning_rate = 0.01\niterations = 50\n").unwrap();
    let model = p(dir.path(), "model.lrec");
    let before = std::fs::read(&store).unwrap();
    let args = [
        "train", "--store", &store, "--data", &data, "--split", "relation", "--ratio", "0.5", "--ds", "4", "--dr", "2", "--do", "4",
        "--config", &cfg, "--iters", "200", "--out", &model, "--loss-csv", &p(dir.path(), "loss.csv"), "--report",
        &p(dir.path(), "report.csv"),
    ];
    let summary: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(summary["train_relations"], 2);
    assert_eq!(summary["heldout_relations"], 2);
    assert_eq!(std::fs::read(&store).unwrap(), before);

    let m = manifest(format!("{model}.manifest.json"));
    assert_eq!(m["config"]["train"]["iterations"], 200);
    assert_eq!(m["config"]["train"]["optimizer"], "adam");
    assert_eq!(m["config"]["train"]["learning_rate"], 0.01);
    assert_eq!(m["seeds"]["seed"], 3);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);

    let first = std::fs::read(&model).unwrap();
    ok(&args);
    assert_eq!(std::fs::read(&model).unwrap(), first);
    let report = std::fs::read_to_string(p(dir.path(), "report.csv")).unwrap();
    assert!(report.starts_with("relation,split,n_samples,n_correct,faithfulness,majority_object,majority_faithfulness"));
    assert_eq!(report.lines().count(), 5);

    let eval_out = p(dir.path(), "eval.csv");
    let text = ok(&["eval", "--store", &store, "--data", &data, "--model", &model, "--out", &eval_out]);
    assert!(text.contains("over 4 relations"));
}

#[test]
fn dimension_mismatch_names_both_dims() {
    let dir = tempfile::tempdir().unwrap();
    let small = p(dir.path(), "small.lrec");
    let big = p(dir.path(), "big.lrec");
    ok(&["gen-store", "--kind", "orthogonal", "--d", "6", "--relations", "2", "--samples", "3", "--out", &small]);
    ok(&["gen-store", "--kind", "orthogonal", "--d", "8", "--relations", "2", "--samples", "3", "--out", &big]);
    let model = p(dir.path(), "m.lrec");
    ok(&["train", "--store", &small, "--data", &p(dir.path(), "small.json"), "--ds", "2", "--dr", "2", "--do", "2", "--iters", "5", "--out", &model]);
    let out = relkit(&["eval", "--store", &big, "--data", &p(dir.path(), "big.json"), "--model", &model, "--out", &p(dir.path(), "e.csv")]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("d=6") && err.contains("d=8"), "{err}");
}

#[test]
fn cross_eval_emits_square_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let store = p(dir.path(), "s.lrec");
    let data = p(dir.path(), "s.json");
    ok(&["gen-store", "--kind", "shared", "--groups", "2x3", "--d", "16", "--classes", "3", "--per-class", "2", "--seed", "1", "--out", &store]);
    let csv = p(dir.path(), "x.csv");
    let svg = p(dir.path(), "x.svg");
    ok(&[
        "cross-eval", "--store", &store, "--data", &data, "--fit", "full", "--optimizer", "adam", "--lr", "0.01", "--iters", "300",
        "--csv", &csv, "--svg", &svg, "--cluster",
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines.iter().all(|l| l.split(',').count() == 7));
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(svg_text.matches("<rect x=").count(), 36);
    let again = p(dir.path(), "y.csv");
    ok(&[
        "cross-eval", "--store", &store, "--data", &data, "--fit", "full", "--optimizer", "adam", "--lr", "0.01", "--iters", "300",
        "--csv", &again,
    ]);
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(relkit(&["cross-eval", "--store", &store, "--data", &data, "--csv", &csv]).status.code(), Some(2));
}

#[test]
fn jacobian_on_exact_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "j.csv");
    let text = ok(&["jacobian", "--kind", "orthogonal", "--d", "12", "--relations", "3", "--samples", "10", "--n-examples", "8", "--out", &out]);
    assert!(text.contains("faithfulness 1.0000"), "{text}");
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 4);
}

#[test]
fn ablate_keeps_input_and_changes_relations() {
    let dir = tempfile::tempdir().unwrap();
    let store = p(dir.path(), "m.lrec");
    ok(&["gen-store", "--kind", "mathramp", "--d", "8", "--out", &store]);
    let before = std::fs::read(&store).unwrap();
    let out = p(dir.path(), "r.lrec");
    ok(&["ablate", "--store", &store, "--randomize", "relations", "--seed", "7", "--out", &out]);
    assert_eq!(std::fs::read(&store).unwrap(), before);
    let (a, b) = (relkit::store::load_store(&store).unwrap(), relkit::store::load_store(&out).unwrap());
    assert_eq!(a.entities(), b.entities());
    assert_ne!(a.relations(), b.relations());
    assert_eq!(relkit(&["ablate", "--store", &store, "--randomize", "relations", "--out", &store]).status.code(), Some(1));
}

#[test]
fn grid_writes_rows_sorted_by_size() {
    let dir = tempfile::tempdir().unwrap();
    let store = p(dir.path(), "o.lrec");
    ok(&["gen-store", "--kind", "orthogonal", "--d", "8", "--relations", "2", "--samples", "4", "--out", &store]);
    let out = p(dir.path(), "grid.csv");
    ok(&[
        "grid", "--store", &store, "--data", &p(dir.path(), "o.json"), "--kinds", "simple,triangle", "--dr", "2", "--dso", "2,3",
        "--embedder", "off", "--xyz", "2,2,2", "--iters", "20", "--jobs", "2", "--out", &out, "--low-rank", "1,2",
    ]);
    let mut rdr = csv_rows(&out);
    let header = rdr.remove(0);
    assert_eq!(&header[..4], ["arch", "d_r'", "d_s'", "d_o'"]);
    assert_eq!(rdr.len(), 4);
    let col = header.iter().position(|h| h == "param_count_actual").unwrap();
    let counts: Vec<usize> = rdr.iter().map(|r| r[col].parse().unwrap()).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(csv_rows(&p(dir.path(), "grid.low_rank.csv")).len(), 3);
}

fn csv_rows(path: &str) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}
