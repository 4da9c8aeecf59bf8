use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sbrtune::dataset::{load_matrix_csv, Features, LabeledMatrix, SBR};
use sbrtune_cli::run::{RunRecord, FAILURES_FILE, RECORD_FILE, RESULTS_FILE};

fn sbrtune(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbrtune"))
        .args(args)
        .env("SBRTUNE_OUTPUT_ROOT", root)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SBR_WORDS: &[&str] = &["overflow", "exploit", "injection", "xss", "privilege", "crash"];
const NSBR_WORDS: &[&str] = &["button", "layout", "typo", "crash", "slow", "menu", "color", "font"];

/// Raw reports: every `every`-th one is an SBR.
fn raw_csv(path: &Path, n: usize, every: usize, offset: usize) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["id", "summary", "description", "label"]).unwrap();
    for i in 0..n {
        let sbr = every > 0 && i % every == 0;
        let words = if sbr { SBR_WORDS } else { NSBR_WORDS };
        let summary = format!("{} {}", words[i % words.len()], words[(i * 7 + 3) % words.len()]);
        let description = format!("{} in build {} {}", words[(i * 3 + offset) % words.len()], i, NSBR_WORDS[i % 5]);
        w.write_record([format!("R{}", i + offset), summary, description, u8::from(sbr).to_string()])
            .unwrap();
    }
    w.flush().unwrap();
}

fn prep_raw(root: &Path, project: &str, extra: &[&str]) -> Output {
    let train = root.join("raw-train.csv");
    let test = root.join("raw-test.csv");
    raw_csv(&train, 120, 6, 0);
    raw_csv(&test, 60, 6, 1000);
    let mut args = vec![
        "prep",
        "--project",
        project,
        "--train",
        train.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    sbrtune(root, &args)
}

#[test]
fn prep_raw_is_deterministic_and_writes_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&prep_raw(root, "toy", &["--out", "a"]));
    ok(&prep_raw(root, "toy", &["--out", "b"]));
    for f in ["toy-train.csv", "toy-test.csv", "toy-vocabulary.csv"] {
        let a = fs::read(root.join("a").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, fs::read(root.join("b").join(f)).unwrap(), "{f}");
    }
    let train = load_matrix_csv(root.join("a/toy-train.csv")).unwrap();
    let test = load_matrix_csv(root.join("a/toy-test.csv")).unwrap();
    assert_eq!(train.n_rows(), 120);
    assert_eq!(test.n_rows(), 60);
    assert_eq!(train.count(SBR), 20);
    assert_eq!(train.column_names(), test.column_names());
    assert!(train.column_names().iter().any(|c| c == "overflow"));
}

#[test]
fn prep_matrix_passes_through_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&prep_raw(root, "toy", &["--out", "first"]));
    let train = root.join("first/toy-train.csv");
    let test = root.join("first/toy-test.csv");
    ok(&sbrtune(
        root,
        &["prep", "--project", "again", "--train", train.to_str().unwrap(), "--test", test.to_str().unwrap(), "--out", "second"],
    ));
    assert_eq!(fs::read(&train).unwrap(), fs::read(root.join("second/again-train.csv")).unwrap());
    assert_eq!(fs::read(&test).unwrap(), fs::read(root.join("second/again-test.csv")).unwrap());
}

#[test]
fn prep_without_sbrs_fails_when_filters_are_requested() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let train = root.join("train.csv");
    raw_csv(&train, 40, 0, 0);
    let args = ["prep", "--project", "p", "--train", train.to_str().unwrap(), "--test", train.to_str().unwrap()];
    ok(&sbrtune(root, &args));
    let mut with_filter = args.to_vec();
    with_filter.extend(["--filter", "all"]);
    let out = sbrtune(root, &with_filter);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn filter_all_emits_eight_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&prep_raw(root, "toy", &["--out", "prep"]));
    let train = root.join("prep/toy-train.csv");
    let out = sbrtune(root, &["filter", "--train", train.to_str().unwrap(), "--out", "filtered"]);
    ok(&out);
    let mut files: Vec<PathBuf> = fs::read_dir(root.join("filtered")).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 8);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 8);

    let load = |f: &str| load_matrix_csv(root.join("filtered").join(format!("toy-{f}.csv"))).unwrap();
    let original = load_matrix_csv(&train).unwrap();
    assert_eq!(load("train"), original);
    assert!(load("clnifarsecsq").n_rows() <= load("farsecsq").n_rows());
    for f in ["farsec", "farsecsq", "farsectwo", "clni"] {
        let m = load(f);
        assert!(m.n_rows() <= original.n_rows());
        assert_eq!(m.count(SBR), original.count(SBR), "{f} dropped an SBR");
    }
}

#[test]
fn filter_single_name_emits_one_file() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&prep_raw(root, "toy", &["--out", "prep"]));
    let train = root.join("prep/toy-train.csv");
    ok(&sbrtune(root, &["filter", "--train", train.to_str().unwrap(), "--filter", "farsec", "--out", "f"]));
    assert_eq!(fs::read_dir(root.join("f")).unwrap().count(), 1);
    assert!(root.join("f/toy-farsec.csv").exists());
}

fn write_config(root: &Path, name: &str, body: &str) -> PathBuf {
    let p = root.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn toy_config(mode: &str, output: &str) -> String {
    format!(
        r#"# toy experiment
project = "toy"
seed = 3
mode = "{mode}"
filter = "train"
learners = ["NB", "LR", "KNN"]
output_dir = "{output}"
test_runs = 3

[data]
train = "prep/toy-train.csv"
test = "prep/toy-test.csv"

[cv]
folds = 3
repeats = 2
"#
    )
}

/// Results CSV without the wall-clock column.
fn stable_columns(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let wall = headers.iter().position(|h| h == "wall_minutes").unwrap();
    let keep = |rec: &csv::StringRecord| -> Vec<String> {
        rec.iter().enumerate().filter(|&(i, _)| i != wall).map(|(_, v)| v.to_string()).collect()
    };
    let mut rows = vec![keep(&headers)];
    for rec in rdr.records() {
        rows.push(keep(&rec.unwrap()));
    }
    rows
}

#[test]
fn run_is_reproducible_and_traceable() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&prep_raw(root, "toy", &["--out", "prep"]));
    let body = toy_config("default", "run-a");
    let cfg = write_config(root, "exp.toml", &body);
    let started = std::time::Instant::now();
    ok(&sbrtune(root, &["run", "--config", cfg.to_str().unwrap(), "--jobs", "2"]));
    assert!(started.elapsed().as_secs() < 10);
    let cfg_b = write_config(root, "exp-b.toml", &body.replace("run-a", "run-b"));
    ok(&sbrtune(root, &["run", "--config", cfg_b.to_str().unwrap(), "--jobs", "1"]));

    let a = root.join("run-a");
    assert_eq!(fs::read_to_string(a.join("config.toml")).unwrap(), body);
    let rows_a = stable_columns(&a.join(RESULTS_FILE));
    let mut rows_b = stable_columns(&root.join("run-b").join(RESULTS_FILE));
    assert_eq!(rows_a.len(), 4);
    // The output directory is part of the config, so only the hash differs.
    let hash_col = rows_a[0].iter().position(|h| h == "config_hash").unwrap();
    for (ra, rb) in rows_a.iter().zip(rows_b.iter_mut()).skip(1) {
        assert_ne!(ra[hash_col], rb[hash_col]);
        rb[hash_col] = ra[hash_col].clone();
    }
    assert_eq!(rows_a, rows_b);

    let record: RunRecord = serde_json::from_str(&fs::read_to_string(a.join(RECORD_FILE)).unwrap()).unwrap();
    assert!(record.complete());
    assert_eq!(record.seed, 3);
    assert_eq!(record.config.seed, 3);
    assert_eq!(record.config_hash, record.config.hash());
    assert_eq!(fs::read_to_string(a.join(FAILURES_FILE)).unwrap().trim(), "[]");
    let seed_col = rows_a[0].iter().position(|h| h == "seed").unwrap();
    for row in &rows_a[1..] {
        assert_eq!(row[seed_col], "3");
        assert_eq!(row[hash_col], record.config_hash);
    }
    assert_eq!(rows_a[1..].iter().filter(|r| r[rows_a[0].iter().position(|h| h == "winner").unwrap()] == "true").count(), 1);
}

#[test]
fn command_line_overrides_reach_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&prep_raw(root, "toy", &["--out", "prep"]));
    let cfg = write_config(root, "exp.toml", &toy_config("default", "out"));
    ok(&sbrtune(
        root,
        &["run", "--config", cfg.to_str().unwrap(), "--seed", "11", "--mode", "smote", "--learner", "NB", "--filter", "clni"],
    ));
    let record: RunRecord = serde_json::from_str(&fs::read_to_string(root.join("out").join(RECORD_FILE)).unwrap()).unwrap();
    assert_eq!(record.seed, 11);
    assert_eq!(record.datasets.len(), 1);
    assert_eq!(record.datasets[0].filter.as_str(), "clni");
    let l = &record.datasets[0].learners;
    assert_eq!(l.len(), 1);
    assert_eq!(l[0].mode.as_str(), "smote");
    assert_eq!(l[0].smote.unwrap().seed, 11);
    // The verbatim file keeps the original settings; the effective one has the overrides.
    assert!(fs::read_to_string(root.join("out/config.toml")).unwrap().contains("seed = 3"));
    assert!(fs::read_to_string(root.join("out/effective-config.toml")).unwrap().contains("seed = 11"));
}

#[test]
fn de_run_writes_history() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&prep_raw(root, "toy", &["--out", "prep"]));
    let cfg = write_config(root, "exp.toml", &toy_config("de3", "de").replace(r#"["NB", "LR", "KNN"]"#, r#"["NB"]"#));
    ok(&sbrtune(root, &["run", "--config", cfg.to_str().unwrap()]));
    let hist = fs::read_to_string(root.join("de/history/toy-train-NB-de3.csv")).unwrap();
    assert!(hist.starts_with("generation,best_fitness,evaluations_so_far"));
    let record: RunRecord = serde_json::from_str(&fs::read_to_string(root.join("de").join(RECORD_FILE)).unwrap()).unwrap();
    let de = record.datasets[0].learners[0].de.unwrap();
    assert_eq!(hist.lines().count(), de.generations + 2);
    assert_eq!(de.evaluations, 10 * (1 + de.generations));
}

/// Rows 0 and 1 are SBRs; one NSBR shares their keyword.
fn tiny_pair(root: &Path) {
    let names: Vec<String> = ["attack", "button"].iter().map(|s| s.to_string()).collect();
    let rows: [[f64; 2]; 6] = [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]];
    let m = LabeledMatrix::new(Features::from_rows(2, &rows).unwrap(), vec![1, 1, 0, 0, 0, 0], names).unwrap();
    fs::create_dir_all(root.join("prep")).unwrap();
    sbrtune::dataset::write_matrix_csv(&m, root.join("prep/tiny-train.csv")).unwrap();
    sbrtune::dataset::write_matrix_csv(&m, root.join("prep/tiny-test.csv")).unwrap();
}

#[test]
fn partial_failure_exits_nonzero_with_failure_list() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    tiny_pair(root);
    let body = r#"
project = "tiny"
seed = 0
mode = "default"
learners = ["NB"]
output_dir = "out"
test_runs = 1

[data]
train = "prep/tiny-train.csv"
test = "prep/tiny-test.csv"

[cv]
folds = 2
repeats = 1
"#;
    let cfg = write_config(root, "exp.toml", body);
    let out = sbrtune(root, &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(sbrtune_cli::EXIT_PARTIAL as i32), "{}", String::from_utf8_lossy(&out.stderr));
    let failures: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(root.join("out").join(FAILURES_FILE)).unwrap()).unwrap();
    let record: RunRecord = serde_json::from_str(&fs::read_to_string(root.join("out").join(RECORD_FILE)).unwrap()).unwrap();
    assert!(!failures.is_empty());
    assert!(!record.datasets.is_empty());
    assert_eq!(failures.len() + record.datasets.len(), 8);
    for f in &failures {
        assert_eq!(f["project"], "tiny");
        assert!(f["error"].as_str().unwrap().len() > 3);
    }
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbrtune(dir.path(), &["run", "--config", "does-not-exist.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_renders_percent_table() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&prep_raw(root, "toy", &["--out", "prep"]));
    let one = toy_config("default", "r1").replace(r#"["NB", "LR", "KNN"]"#, r#"["NB"]"#);
    let cfg = write_config(root, "one.toml", &one);
    ok(&sbrtune(root, &["run", "--config", cfg.to_str().unwrap()]));
    let rec = root.join("r1").join(RECORD_FILE);
    let out = sbrtune(root, &["report", rec.to_str().unwrap(), "--out", "table.txt"]);
    ok(&out);
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[0].starts_with("project"));
    assert!(lines[2].contains("toy") && lines[2].contains(" / ") && lines[2].ends_with('*'));
    assert_eq!(fs::read_to_string(root.join("table.txt")).unwrap(), table);
}
