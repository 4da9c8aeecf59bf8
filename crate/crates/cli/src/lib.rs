//! Experiment runner for `sbrtune`: prepares bug report data, filters,
//! tunes, rebalances and evaluates, and writes reproducible CSV/JSON
//! results.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbrtune::evaluation::CvPlan;
use sbrtune::filters::FilterConfig;
use sbrtune::learners::LearnerKind;
use sbrtune::textprep::TokenizeOptions;

use crate::commands::{InputFormat, PrepOptions};
use crate::config::{ExperimentConfig, FilterChoice, Mode, Overrides};
use crate::io::under_root;
use crate::report::Metric;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sbrtune::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

/// Exit status when some dataset jobs of a run failed.
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "sbrtune", version, about = "Tune and rebalance security bug report classifiers")]
pub struct Cli {
    /// Root for relative output directories.
    #[arg(long, global = true, env = "SBRTUNE_OUTPUT_ROOT", default_value = ".")]
    pub output_root: PathBuf,
    /// Worker threads; for `run`, the number of dataset jobs in flight.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, default_value_t = 10)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 10)]
    pub cv_repeats: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw report CSVs (or matrix CSVs) into train/test matrices.
    Prep {
        #[arg(long)]
        project: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        format: InputFormat,
        #[arg(long, default_value = "id")]
        id_column: String,
        /// Comma-separated text columns, concatenated in order.
        #[arg(long, default_value = "summary,description")]
        text_columns: String,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Comma-separated label values meaning SBR; anything else is NSBR.
        #[arg(long, default_value = "1")]
        positive: String,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_doc_freq: usize,
        #[arg(long)]
        max_terms: Option<usize>,
        #[arg(long)]
        keep_alphanumeric: bool,
        /// Also write filtered training sets ("all" or a filter name).
        #[arg(long)]
        filter: Option<FilterChoice>,
        #[arg(long)]
        top_n_keywords: Option<usize>,
        /// Accepted for uniformity; preparation draws no random numbers.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "prepared")]
        out: PathBuf,
    },
    /// Write filtered variants of a training matrix.
    Filter {
        #[arg(long)]
        train: PathBuf,
        /// Defaults to the file name without a trailing "-train".
        #[arg(long)]
        project: Option<String>,
        #[arg(long, default_value = "all")]
        filter: FilterChoice,
        #[arg(long)]
        top_n_keywords: Option<usize>,
        #[arg(long, default_value = "filtered")]
        out: PathBuf,
    },
    /// DE-tune one learner's hyperparameters on a training matrix.
    Tune {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        learner: LearnerKind,
        #[arg(long, value_enum, default_value = "de3")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cv: CvArgs,
        #[arg(long, default_value = "tuned")]
        out: PathBuf,
    },
    /// Rebalance a training matrix with SMOTE or SMOTUNED.
    Balance {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_enum, default_value = "smote")]
        mode: Mode,
        /// Learner that scores SMOTUNED candidates.
        #[arg(long, default_value = "NB")]
        learner: LearnerKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "balanced")]
        out: PathBuf,
    },
    /// Run a full experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        filter: Option<FilterChoice>,
        /// Repeat to run several learners.
        #[arg(long)]
        learner: Vec<String>,
        #[arg(long)]
        top_n_keywords: Option<usize>,
    },
    /// Print a pd / pf comparison table from run records.
    Report {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "single")]
        metric: Metric,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn filter_cfg(top_n: Option<usize>) -> FilterConfig {
    let mut cfg = FilterConfig::default();
    if let Some(n) = top_n {
        cfg.top_n = n;
    }
    cfg
}

fn default_project(train: &Path) -> String {
    let stem = train.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_suffix("-train").unwrap_or(&stem).to_string()
}

fn install_threads(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // Fails only if a global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs one parsed command. The exit code is 0 on full success and
/// [`EXIT_PARTIAL`] when a run finished with failed jobs.
pub fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    let root = cli.output_root.as_path();
    match cli.command {
        Command::Prep {
            project,
            train,
            test,
            format,
            id_column,
            text_columns,
            label_column,
            positive,
            stopwords,
            min_doc_freq,
            max_terms,
            keep_alphanumeric,
            filter,
            top_n_keywords,
            seed: _,
            out,
        } => {
            install_threads(cli.jobs);
            let mut opts = PrepOptions::new(project, train, test, under_root(root, &out));
            opts.format = format;
            opts.schema.id = id_column;
            opts.schema.text = text_columns.split(',').map(|s| s.trim().to_string()).collect();
            opts.schema.label = label_column;
            opts.schema.labels = commands::positive_labels(&positive);
            opts.stopwords = stopwords;
            opts.min_doc_freq = min_doc_freq;
            opts.max_terms = max_terms;
            opts.tokenize = TokenizeOptions { keep_alphanumeric };
            opts.filter = filter;
            opts.filter_cfg = filter_cfg(top_n_keywords);
            for p in commands::cmd_prep(&opts)? {
                println!("{}", p.display());
            }
        }
        Command::Filter {
            train,
            project,
            filter,
            top_n_keywords,
            out,
        } => {
            install_threads(cli.jobs);
            let project = project.unwrap_or_else(|| default_project(&train));
            let written =
                commands::cmd_filter(&train, &project, filter, &filter_cfg(top_n_keywords), &under_root(root, &out))?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Tune {
            train,
            learner,
            mode,
            seed,
            cv,
            out,
        } => {
            install_threads(cli.jobs);
            let plan = CvPlan {
                n_folds: cv.cv_folds,
                n_repeats: cv.cv_repeats,
                stratified: true,
                seed,
            };
            let r = commands::cmd_tune(&train, learner, mode, &plan, &under_root(root, &out))?;
            println!("{}", serde_json::to_string(&r)?);
        }
        Command::Balance {
            train,
            mode,
            learner,
            seed,
            out,
        } => {
            install_threads(cli.jobs);
            let r = commands::cmd_balance(&train, mode, learner, seed, &under_root(root, &out))?;
            println!("{}", serde_json::to_string(&r)?);
        }
        Command::Run {
            config,
            seed,
            mode,
            filter,
            learner,
            top_n_keywords,
        } => {
            let raw = std::fs::read_to_string(&config)?;
            let mut cfg = ExperimentConfig::from_toml_str(&raw)?;
            Overrides {
                seed,
                mode,
                filter,
                learners: learner,
                top_n_keywords,
            }
            .apply(&mut cfg);
            cfg.validate()?;
            cfg.resolve_data_paths(config.parent().unwrap_or(Path::new(".")));
            let out_dir = under_root(root, &cfg.output_dir);
            let jobs = cli
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let record = run::run_experiment(&cfg, Some(&raw), &out_dir, jobs)?;
            println!("{}", out_dir.join(run::RESULTS_FILE).display());
            if !record.complete() {
                eprintln!(
                    "{} of {} dataset jobs failed, see {}",
                    record.failures.len(),
                    record.failures.len() + record.datasets.len(),
                    out_dir.join(run::FAILURES_FILE).display()
                );
                return Ok(ExitCode::from(EXIT_PARTIAL));
            }
        }
        Command::Report { records, metric, out } => {
            let loaded = records
                .iter()
                .map(|p| report::load_record(p))
                .collect::<Result<Vec<_>, _>>()?;
            let table = report::render_table(&loaded, metric);
            print!("{table}");
            if let Some(p) = out {
                io::write_atomic(&under_root(root, &p), table.as_bytes())?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
