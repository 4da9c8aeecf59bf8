//! The standalone pipeline steps: prep, filter, tune and balance.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sbrtune::balance::{smote, smotuned, ChosenSmote, SmoteConfig, SmotunedConfig};
use sbrtune::dataset::{load_matrix_csv, load_raw_csv, write_matrix, DatasetPair, LabelMap, LabeledMatrix, RawSchema};
use sbrtune::evaluation::{cross_validate, CvPlan};
use sbrtune::filters::{apply_filter, FilterConfig};
use sbrtune::learners::{param_space, LearnerKind, LearnerParams};
use sbrtune::optimizer::{default_de_config, run_de, DeConfig};
use sbrtune::space::ParamVector;
use sbrtune::textprep::{
    build_vocabulary, bundled_stopwords, load_stopwords, tokenize_with, vectorize_reports, write_vocabulary_csv,
    TfIdfConfig, TokenizeOptions,
};

use crate::config::{FilterChoice, Mode};
use crate::io::{write_atomic, write_json, write_with};
use crate::run::DeSummary;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    /// Raw when the header has the id and text columns, matrix otherwise.
    Auto,
    Raw,
    Matrix,
}

#[derive(Debug, Clone)]
pub struct PrepOptions {
    pub project: String,
    pub train: PathBuf,
    pub test: PathBuf,
    pub format: InputFormat,
    pub schema: RawSchema,
    pub stopwords: Option<PathBuf>,
    pub min_doc_freq: usize,
    pub max_terms: Option<usize>,
    pub tokenize: TokenizeOptions,
    /// Also write filtered training sets.
    pub filter: Option<FilterChoice>,
    pub filter_cfg: FilterConfig,
    pub out_dir: PathBuf,
}

impl PrepOptions {
    pub fn new(project: impl Into<String>, train: PathBuf, test: PathBuf, out_dir: PathBuf) -> Self {
        PrepOptions {
            project: project.into(),
            train,
            test,
            format: InputFormat::Auto,
            schema: RawSchema::default(),
            stopwords: None,
            min_doc_freq: 1,
            max_terms: None,
            tokenize: TokenizeOptions::default(),
            filter: None,
            filter_cfg: FilterConfig::default(),
            out_dir,
        }
    }
}

pub fn train_file(project: &str) -> String {
    format!("{project}-train.csv")
}

pub fn test_file(project: &str) -> String {
    format!("{project}-test.csv")
}

pub fn vocabulary_file(project: &str) -> String {
    format!("{project}-vocabulary.csv")
}

pub fn filtered_file(project: &str, filter: &str) -> String {
    format!("{project}-{filter}.csv")
}

fn looks_raw(path: &Path, schema: &RawSchema) -> Result<bool, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: BTreeSet<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    Ok(headers.contains(&schema.id) && schema.text.iter().all(|t| headers.contains(t)))
}

fn matrix_bytes(m: &LabeledMatrix) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_matrix(m, &mut buf)?;
    Ok(buf)
}

/// Turns a train/test pair into matrix CSVs. Raw reports are tokenized and
/// weighted by tf-idf against a vocabulary built from the training reports
/// only; matrix input is validated and copied byte for byte.
pub fn cmd_prep(opts: &PrepOptions) -> Result<Vec<PathBuf>, CliError> {
    let raw = match opts.format {
        InputFormat::Raw => true,
        InputFormat::Matrix => false,
        InputFormat::Auto => looks_raw(&opts.train, &opts.schema)?,
    };
    let train_out = opts.out_dir.join(train_file(&opts.project));
    let test_out = opts.out_dir.join(test_file(&opts.project));
    let mut written = Vec::new();

    let train = if raw {
        let train_reports = load_raw_csv(&opts.train, &opts.schema)?;
        let test_reports = load_raw_csv(&opts.test, &opts.schema)?;
        let stopwords = match &opts.stopwords {
            Some(p) => load_stopwords(p)?,
            None => bundled_stopwords(),
        };
        let cfg = TfIdfConfig {
            stopwords,
            min_doc_freq: opts.min_doc_freq,
            max_terms: opts.max_terms,
        };
        cfg.validate()?;
        let docs: Vec<Vec<String>> = train_reports.iter().map(|r| tokenize_with(&r.text, opts.tokenize)).collect();
        let vocab = build_vocabulary(&docs, &cfg);
        let train = vectorize_reports(&train_reports, &vocab, opts.tokenize);
        let test = vectorize_reports(&test_reports, &vocab, opts.tokenize);
        write_atomic(&train_out, &matrix_bytes(&train)?)?;
        write_atomic(&test_out, &matrix_bytes(&test)?)?;
        let vocab_out = opts.out_dir.join(vocabulary_file(&opts.project));
        write_with(&vocab_out, |buf| Ok(write_vocabulary_csv(&vocab, buf)?))?;
        written.extend([train_out, test_out, vocab_out]);
        train
    } else {
        let train = load_matrix_csv(&opts.train)?;
        let test = load_matrix_csv(&opts.test)?;
        DatasetPair::new(train.clone(), test, opts.project.clone(), "train")?;
        write_atomic(&train_out, &fs::read(&opts.train)?)?;
        write_atomic(&test_out, &fs::read(&opts.test)?)?;
        written.extend([train_out, test_out]);
        train
    };

    if let Some(choice) = opts.filter {
        written.extend(write_filtered(&train, &opts.project, choice, &opts.filter_cfg, &opts.out_dir)?);
    }
    Ok(written)
}

fn write_filtered(
    train: &LabeledMatrix,
    project: &str,
    choice: FilterChoice,
    cfg: &FilterConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for name in choice.names() {
        let filtered = apply_filter(train, name, cfg)?;
        let path = out_dir.join(filtered_file(project, name.as_str()));
        write_atomic(&path, &matrix_bytes(&filtered)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `<project>-<filter>.csv` for the chosen filters of a training
/// matrix.
pub fn cmd_filter(
    train: &Path,
    project: &str,
    choice: FilterChoice,
    cfg: &FilterConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    write_filtered(&load_matrix_csv(train)?, project, choice, cfg, out_dir)
}

/// Output of `tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub learner: LearnerKind,
    pub mode: Mode,
    pub de_config: DeConfig,
    pub params: LearnerParams,
    pub de: DeSummary,
}

/// DE-tunes one learner on a training matrix, with the median g-measure
/// of `plan` as fitness. Writes the tuned parameters and the per
/// generation history.
pub fn cmd_tune(
    train: &Path,
    kind: LearnerKind,
    mode: Mode,
    plan: &CvPlan,
    out_dir: &Path,
) -> Result<TuneResult, CliError> {
    let iter = mode
        .de_generations()
        .ok_or_else(|| CliError::Usage(format!("tune needs --mode de3 or de10, got {mode}")))?;
    let m = load_matrix_csv(train)?;
    let de_config = DeConfig {
        seed: plan.seed,
        ..default_de_config(kind, iter)
    };
    let fitness = |v: &ParamVector| -> sbrtune::Result<f64> {
        Ok(cross_validate(&LearnerParams::from_vector(kind, v)?, &m, plan, None)?.median_g)
    };
    let out = run_de(&param_space(kind), &de_config, fitness)?;
    let result = TuneResult {
        learner: kind,
        mode,
        de_config,
        params: LearnerParams::from_vector(kind, &out.best.vector)?,
        de: DeSummary::from(&out),
    };
    let stem = format!("{}-{}-{}", file_stem(train), kind.short_name(), mode);
    write_json(&out_dir.join(format!("{stem}-params.json")), &result)?;
    write_with(&out_dir.join(format!("{stem}-history.csv")), |buf| Ok(out.write_history_csv(buf)?))?;
    Ok(result)
}

/// Output of `balance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResult {
    pub mode: Mode,
    pub config: SmoteConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<ChosenSmote>,
    pub n_rows_in: usize,
    pub n_rows_out: usize,
}

/// Rebalances a training matrix with default SMOTE, or with SMOTUNED
/// scored by `learner`.
pub fn cmd_balance(
    train: &Path,
    mode: Mode,
    learner: LearnerKind,
    seed: u64,
    out_dir: &Path,
) -> Result<BalanceResult, CliError> {
    let m = load_matrix_csv(train)?;
    let (balanced, config, chosen) = match mode {
        Mode::Smote => {
            let cfg = SmoteConfig {
                seed,
                ..SmoteConfig::default()
            };
            (smote(&m, &cfg)?, cfg, None)
        }
        Mode::Smotuned => {
            let base = SmotunedConfig::default();
            let cfg = SmotunedConfig {
                de: DeConfig { seed, ..base.de },
                ..base
            };
            let out = smotuned(&m, &LearnerParams::untuned(learner), &cfg, seed)?;
            (out.rebalanced, out.config, Some(out.chosen))
        }
        other => return Err(CliError::Usage(format!("balance needs --mode smote or smotuned, got {other}"))),
    };
    let stem = format!("{}-{}", file_stem(train), mode);
    write_atomic(&out_dir.join(format!("{stem}.csv")), &matrix_bytes(&balanced)?)?;
    let result = BalanceResult {
        mode,
        config,
        chosen,
        n_rows_in: m.n_rows(),
        n_rows_out: balanced.n_rows(),
    };
    write_json(&out_dir.join(format!("{stem}.json")), &result)?;
    Ok(result)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
}

/// Label mapping from a comma-separated list of positive label values.
pub fn positive_labels(list: &str) -> LabelMap {
    LabelMap::positive_only(list.split(',').map(str::trim).filter(|s| !s.is_empty()))
}
