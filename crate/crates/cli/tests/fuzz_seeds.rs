//! Replays the checked-in fuzz corpus through the same entry points and
//! assertions as the cargo-fuzz targets.

use std::fs;
use std::path::PathBuf;

use sbrtune::dataset::{read_matrix_csv, read_raw_csv, write_matrix, RawSchema};
use sbrtune::learners::FittedModel;
use sbrtune::textprep::{parse_stopwords, read_vocabulary_csv, tokenize_with, write_vocabulary_csv, TokenizeOptions};
use sbrtune_cli::config::ExperimentConfig;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn matrix_csv() {
    for (_, data) in seeds("matrix_csv") {
        if let Ok(m) = read_matrix_csv(data.as_slice(), "label") {
            let mut out = Vec::new();
            write_matrix(&m, &mut out).unwrap();
            let again = read_matrix_csv(out.as_slice(), "label").unwrap();
            assert_eq!(again.labels(), m.labels());
            assert_eq!(again.column_names(), m.column_names());
        }
    }
}

#[test]
fn raw_csv() {
    let mut parsed = 0;
    for (_, data) in seeds("raw_csv") {
        if let Ok(reports) = read_raw_csv(data.as_slice(), &RawSchema::default()) {
            parsed += 1;
            assert!(reports.iter().all(|r| r.label <= 1));
        }
    }
    assert!(parsed >= 1);
}

#[test]
fn stopwords() {
    for (_, data) in seeds("stopwords") {
        if let Ok(s) = std::str::from_utf8(&data) {
            assert!(parse_stopwords(s).iter().all(|w| !w.is_empty()));
        }
    }
}

#[test]
fn vocabulary_csv() {
    for (_, data) in seeds("vocabulary_csv") {
        let Some((&n, rest)) = data.split_first() else { continue };
        if let Ok(v) = read_vocabulary_csv(rest, n as usize) {
            let mut out = Vec::new();
            write_vocabulary_csv(&v, &mut out).unwrap();
            assert_eq!(read_vocabulary_csv(out.as_slice(), n as usize).unwrap(), v);
        }
    }
}

#[test]
fn tokenize() {
    for (_, data) in seeds("tokenize") {
        if let Ok(s) = std::str::from_utf8(&data) {
            for keep_alphanumeric in [false, true] {
                for tok in tokenize_with(s, TokenizeOptions { keep_alphanumeric }) {
                    assert!(tok.chars().count() >= 2);
                    assert!(tok.chars().all(char::is_alphanumeric));
                }
            }
        }
    }
}

#[test]
fn model_json() {
    let mut parsed = 0;
    for (path, data) in seeds("model_json") {
        if let Ok(s) = std::str::from_utf8(&data) {
            if let Ok(model) = FittedModel::from_json(s) {
                parsed += 1;
                let text = model.to_json().unwrap();
                assert_eq!(FittedModel::from_json(&text).unwrap().to_json().unwrap(), text, "{}", path.display());
            }
        }
    }
    assert!(parsed >= 5, "every learner kind should have a valid seed");
}

#[test]
fn experiment_config() {
    let mut parsed = 0;
    for (_, data) in seeds("experiment_config") {
        if let Ok(s) = std::str::from_utf8(&data) {
            if let Ok(cfg) = ExperimentConfig::from_toml_str(s) {
                parsed += 1;
                let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
                assert_eq!(again.hash(), cfg.hash());
            }
        }
    }
    assert!(parsed >= 2);
}
