//! The `run` pipeline: filter, treat, cross-validate and test every
//! learner of an experiment, one job per (project, filter) dataset.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sbrtune::balance::{smote, smotuned, ChosenSmote, SmoteConfig, SmotunedConfig};
use sbrtune::dataset::{class_summary, load_matrix_csv, ClassSummary, DatasetPair, LabeledMatrix};
use sbrtune::evaluation::{
    cross_validate, evaluate_on_test, leaderboard_winner, test_median, CvPlan, LeaderboardEntry,
    MetricsReport, PretrainHook,
};
use sbrtune::filters::{apply_filter, FilterConfig, FilterName};
use sbrtune::learners::{fit, param_space, LearnerKind, LearnerParams};
use sbrtune::optimizer::{default_de_config, run_de, DeOutcome};
use sbrtune::space::ParamVector;

use crate::config::{ExperimentConfig, Mode, SmotunedSection};
use crate::io::{write_atomic, write_json, write_with};
use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Minutes rounded to two decimals.
pub fn minutes(d: Duration) -> f64 {
    (d.as_secs_f64() / 60.0 * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeSummary {
    pub generations: usize,
    pub evaluations: usize,
    pub lives_exhausted: bool,
    pub best_fitness: f64,
}

impl From<&DeOutcome> for DeSummary {
    fn from(o: &DeOutcome) -> Self {
        DeSummary {
            generations: o.generations,
            evaluations: o.evaluations,
            lives_exhausted: o.lives_exhausted,
            best_fitness: o.best.fitness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerRecord {
    pub learner: LearnerKind,
    pub mode: Mode,
    pub params: LearnerParams,
    /// Median g-measure of repeated cross-validation on the training data.
    pub cv_median_g: f64,
    /// One fit on the whole training data.
    pub test_single: MetricsReport,
    /// Per-metric medians over `test_runs` fits with consecutive seeds.
    pub test_median10: MetricsReport,
    /// Wall-clock minutes for tuning, treatment and evaluation.
    pub tuning_minutes: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub de: Option<DeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smote: Option<SmoteConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smotuned: Option<ChosenSmote>,
}

/// A learner's record plus the DE trace, when there was one.
#[derive(Debug, Clone)]
pub struct LearnerRun {
    pub record: LearnerRecord,
    pub de: Option<DeOutcome>,
}

/// Knobs shared by every learner of a job.
#[derive(Debug, Clone, Copy)]
pub struct LearnerSettings {
    pub mode: Mode,
    pub plan: CvPlan,
    pub seed: u64,
    pub test_runs: usize,
    pub smotuned: SmotunedSection,
}

fn smote_hook(base: SmoteConfig) -> impl Fn(&LabeledMatrix, u64) -> sbrtune::Result<LabeledMatrix> + Sync {
    move |fold: &LabeledMatrix, seed: u64| smote(fold, &SmoteConfig { seed, ..base })
}

/// Tunes or treats one learner on `pair.train` as `s.mode` says, then
/// scores it by cross-validation and on the test partition.
pub fn evaluate_learner(kind: LearnerKind, pair: &DatasetPair, s: &LearnerSettings) -> Result<LearnerRun, CliError> {
    let start = Instant::now();
    let train = &pair.train;
    let mut params = LearnerParams::untuned(kind);
    let mut de_outcome = None;
    let mut smote_cfg = None;
    let mut chosen = None;
    let mut fit_train = train.clone();
    let mut cv_g = None;

    match s.mode {
        Mode::Default => {}
        Mode::De3 | Mode::De10 => {
            let iter = s.mode.de_generations().expect("DE mode");
            let de_cfg = sbrtune::optimizer::DeConfig {
                seed: s.seed,
                ..default_de_config(kind, iter)
            };
            let fitness = |v: &ParamVector| -> sbrtune::Result<f64> {
                let p = LearnerParams::from_vector(kind, v)?;
                Ok(cross_validate(&p, train, &s.plan, None)?.median_g)
            };
            let out = run_de(&param_space(kind), &de_cfg, fitness)?;
            params = LearnerParams::from_vector(kind, &out.best.vector)?;
            cv_g = Some(out.best.fitness);
            de_outcome = Some(out);
        }
        Mode::Smote => {
            let cfg = SmoteConfig {
                seed: s.seed,
                ..SmoteConfig::default()
            };
            fit_train = smote(train, &cfg)?;
            smote_cfg = Some(cfg);
        }
        Mode::Smotuned => {
            let base = SmotunedConfig::default();
            let cfg = SmotunedConfig {
                de: sbrtune::optimizer::DeConfig { seed: s.seed, ..base.de },
                inner_folds: s.smotuned.inner_folds,
                inner_repeats: s.smotuned.inner_repeats,
            };
            let out = smotuned(train, &params, &cfg, s.seed)?;
            fit_train = out.rebalanced;
            smote_cfg = Some(out.config);
            chosen = Some(out.chosen);
            de_outcome = Some(out.de);
        }
    }

    let cv_median_g = match cv_g {
        Some(g) => g,
        None => {
            let hook = smote_cfg.map(smote_hook);
            let hook_ref = hook.as_ref().map(|h| h as &PretrainHook<'_>);
            cross_validate(&params, train, &s.plan, hook_ref)?.median_g
        }
    };
    let test_single = evaluate_on_test(&fit(&params, &fit_train, s.seed)?, pair)?;
    let seeds: Vec<u64> = (0..s.test_runs as u64).map(|i| s.seed.wrapping_add(i)).collect();
    let test_median10 = test_median(&params, &fit_train, pair, &seeds)?;

    let record = LearnerRecord {
        learner: kind,
        mode: s.mode,
        params,
        cv_median_g,
        test_single,
        test_median10,
        tuning_minutes: minutes(start.elapsed()),
        de: de_outcome.as_ref().map(DeSummary::from),
        smote: smote_cfg,
        smotuned: chosen,
    };
    Ok(LearnerRun {
        record,
        de: de_outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub project: String,
    pub filter: FilterName,
    pub train_summary: ClassSummary,
    pub test_summary: ClassSummary,
    pub learners: Vec<LearnerRecord>,
    /// Learner with the best cross-validated g-measure.
    pub winner: LearnerKind,
}

#[derive(Debug, Clone)]
pub struct JobOutput {
    pub record: DatasetRecord,
    pub de_traces: Vec<(LearnerKind, DeOutcome)>,
}

/// One dataset job: filter the training data, then run every learner.
pub fn run_job(
    base: &DatasetPair,
    filter: FilterName,
    filter_cfg: &FilterConfig,
    learners: &[LearnerKind],
    s: &LearnerSettings,
) -> Result<JobOutput, CliError> {
    let train = apply_filter(&base.train, filter, filter_cfg)?;
    let pair = base.with_train(train, filter.as_str())?;
    let mut records = Vec::new();
    let mut de_traces = Vec::new();
    for &kind in learners {
        let run = evaluate_learner(kind, &pair, s)?;
        log::info!(
            "{}/{} {} {}: cv g {:.3}, test {}",
            pair.project,
            filter,
            kind,
            s.mode,
            run.record.cv_median_g,
            run.record.test_single.pd_pf_display()
        );
        if let Some(de) = run.de {
            de_traces.push((kind, de));
        }
        records.push(run.record);
    }
    let board: Vec<LeaderboardEntry> = records
        .iter()
        .map(|r| LeaderboardEntry {
            params: r.params.clone(),
            median_g: r.cv_median_g,
        })
        .collect();
    let winner = records[leaderboard_winner(&board).ok_or(CliError::Config("no learners".into()))?].learner;
    Ok(JobOutput {
        record: DatasetRecord {
            project: pair.project.clone(),
            filter,
            train_summary: class_summary(&pair.train),
            test_summary: class_summary(pair.test()),
            learners: records,
            winner,
        },
        de_traces,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobFailure {
    pub project: String,
    pub filter: FilterName,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub datasets: Vec<DatasetRecord>,
    pub failures: Vec<JobFailure>,
    pub wall_minutes: f64,
}

impl RunRecord {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub project: String,
    pub filter: String,
    pub learner: String,
    pub mode: String,
    pub cv_g: f64,
    pub pd: f64,
    pub pf: f64,
    pub prec: f64,
    pub f: f64,
    pub g: f64,
    pub pd_median10: f64,
    pub pf_median10: f64,
    pub prec_median10: f64,
    pub f_median10: f64,
    pub g_median10: f64,
    pub winner: bool,
    pub wall_minutes: f64,
    pub seed: u64,
    pub config_hash: String,
}

pub fn result_rows(record: &RunRecord) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for d in &record.datasets {
        for l in &d.learners {
            rows.push(ResultRow {
                project: d.project.clone(),
                filter: d.filter.to_string(),
                learner: l.learner.short_name().to_string(),
                mode: l.mode.to_string(),
                cv_g: l.cv_median_g,
                pd: l.test_single.pd,
                pf: l.test_single.pf,
                prec: l.test_single.prec,
                f: l.test_single.f_measure,
                g: l.test_single.g_measure,
                pd_median10: l.test_median10.pd,
                pf_median10: l.test_median10.pf,
                prec_median10: l.test_median10.prec,
                f_median10: l.test_median10.f_measure,
                g_median10: l.test_median10.g_measure,
                winner: l.learner == d.winner,
                wall_minutes: l.tuning_minutes,
                seed: record.seed,
                config_hash: record.config_hash.clone(),
            });
        }
    }
    rows
}

pub fn write_results_csv(rows: &[ResultRow], out: &mut Vec<u8>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const CONFIG_FILE: &str = "config.toml";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective-config.toml";
pub const RESULTS_FILE: &str = "results.csv";
pub const RECORD_FILE: &str = "run-record.json";
pub const FAILURES_FILE: &str = "failures.json";

/// Runs every dataset job of `cfg` with at most `jobs` in flight and writes
/// the outputs into `out_dir`. `raw_config` is the config file as given,
/// copied verbatim next to the canonical form that the hash covers.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    raw_config: Option<&str>,
    out_dir: &Path,
    jobs: usize,
) -> Result<RunRecord, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    let learners = cfg.learner_kinds()?;
    let base = DatasetPair::new(
        load_matrix_csv(&cfg.data.train)?,
        load_matrix_csv(&cfg.data.test)?,
        cfg.project.clone(),
        FilterName::Train.as_str(),
    )?;
    let settings = LearnerSettings {
        mode: cfg.mode,
        plan: cfg.cv_plan(),
        seed: cfg.seed,
        test_runs: cfg.test_runs,
        smotuned: cfg.smotuned,
    };
    let filter_cfg = cfg.filter_config();
    let filters = cfg.filter.names();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outputs: Vec<Result<JobOutput, CliError>> = pool.install(|| {
        filters
            .par_iter()
            .map(|&f| run_job(&base, f, &filter_cfg, &learners, &settings))
            .collect()
    });

    let mut datasets = Vec::new();
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    for (&filter, out) in filters.iter().zip(outputs) {
        match out {
            Ok(o) => {
                traces.push((filter, o.de_traces));
                datasets.push(o.record);
            }
            Err(e) => {
                log::error!("{}/{} failed: {e}", cfg.project, filter);
                failures.push(JobFailure {
                    project: cfg.project.clone(),
                    filter,
                    error: e.to_string(),
                });
            }
        }
    }

    let canonical = cfg.to_toml_string();
    let record = RunRecord {
        tool_version: TOOL_VERSION.to_string(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        datasets,
        failures,
        wall_minutes: minutes(start.elapsed()),
    };
    write_atomic(&out_dir.join(CONFIG_FILE), raw_config.unwrap_or(&canonical).as_bytes())?;
    write_atomic(&out_dir.join(EFFECTIVE_CONFIG_FILE), canonical.as_bytes())?;
    let rows = result_rows(&record);
    write_with(&out_dir.join(RESULTS_FILE), |buf| write_results_csv(&rows, buf))?;
    for (filter, per_learner) in traces {
        for (kind, de) in per_learner {
            let name = format!("{}-{}-{}-{}.csv", cfg.project, filter, kind.short_name(), cfg.mode);
            write_with(&history_dir(out_dir).join(name), |buf| Ok(de.write_history_csv(buf)?))?;
        }
    }
    write_json(&out_dir.join(FAILURES_FILE), &record.failures)?;
    write_json(&out_dir.join(RECORD_FILE), &record)?;
    Ok(record)
}

pub fn history_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("history")
}
