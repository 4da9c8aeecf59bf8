//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sbrtune::evaluation::CvPlan;
use sbrtune::filters::{FilterConfig, FilterName, DEFAULT_THRESHOLD, DEFAULT_TOP_N};
use sbrtune::learners::LearnerKind;

use crate::CliError;

/// Treatment applied to every learner of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Library defaults, no tuning.
    Default,
    /// DE tuning capped at 3 generations.
    De3,
    /// DE tuning capped at 10 generations.
    De10,
    /// Default SMOTE on every training fold.
    Smote,
    /// SMOTE with DE-tuned (k, m, r).
    Smotuned,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Default, Mode::De3, Mode::De10, Mode::Smote, Mode::Smotuned];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Default => "default",
            Mode::De3 => "de3",
            Mode::De10 => "de10",
            Mode::Smote => "smote",
            Mode::Smotuned => "smotuned",
        }
    }

    /// Generation cap for learner tuning.
    pub fn de_generations(self) -> Option<usize> {
        match self {
            Mode::De3 => Some(3),
            Mode::De10 => Some(10),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| CliError::Config(format!("unknown mode {s:?}")))
    }
}

/// One filter, or all eight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FilterChoice {
    All,
    One(FilterName),
}

impl FilterChoice {
    pub fn names(self) -> Vec<FilterName> {
        match self {
            FilterChoice::All => FilterName::ALL.to_vec(),
            FilterChoice::One(f) => vec![f],
        }
    }
}

impl FromStr for FilterChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(FilterChoice::All);
        }
        s.parse::<FilterName>()
            .map(FilterChoice::One)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

impl TryFrom<String> for FilterChoice {
    type Error = CliError;

    fn try_from(s: String) -> Result<Self, CliError> {
        s.parse()
    }
}

impl From<FilterChoice> for String {
    fn from(f: FilterChoice) -> String {
        f.to_string()
    }
}

impl fmt::Display for FilterChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterChoice::All => f.write_str("all"),
            FilterChoice::One(name) => f.write_str(name.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Prepared training matrix.
    pub train: PathBuf,
    /// Prepared test matrix.
    pub test: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSection {
    pub folds: usize,
    pub repeats: usize,
    pub stratified: bool,
}

impl Default for CvSection {
    fn default() -> Self {
        let plan = CvPlan::default();
        CvSection {
            folds: plan.n_folds,
            repeats: plan.n_repeats,
            stratified: plan.stratified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub top_n_keywords: usize,
    pub threshold: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            top_n_keywords: DEFAULT_TOP_N,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmotunedSection {
    pub inner_folds: usize,
    pub inner_repeats: usize,
}

impl Default for SmotunedSection {
    fn default() -> Self {
        SmotunedSection {
            inner_folds: 5,
            inner_repeats: 1,
        }
    }
}

fn all_learners() -> Vec<String> {
    LearnerKind::ALL.iter().map(|k| k.short_name().to_string()).collect()
}

fn default_test_runs() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// A single experiment: one project, one treatment, one or all filters.
///
/// Relative data paths resolve against the directory holding the config
/// file; a relative `output_dir` resolves against the output root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub project: String,
    pub seed: u64,
    pub mode: Mode,
    #[serde(default = "FilterChoice::default_all")]
    pub filter: FilterChoice,
    #[serde(default = "all_learners")]
    pub learners: Vec<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Fits per learner behind the `*_median10` test columns.
    #[serde(default = "default_test_runs")]
    pub test_runs: usize,
    pub data: DataPaths,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub filters: FilterSection,
    #[serde(default)]
    pub smotuned: SmotunedSection,
}

impl FilterChoice {
    fn default_all() -> Self {
        FilterChoice::All
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.project.trim().is_empty() {
            return Err(CliError::Config("project must not be empty".into()));
        }
        if self.learners.is_empty() {
            return Err(CliError::Config("at least one learner is required".into()));
        }
        self.learner_kinds()?;
        if self.test_runs == 0 {
            return Err(CliError::Config("test_runs must be at least 1".into()));
        }
        self.cv_plan().validate()?;
        if self.smotuned.inner_folds < 2 || self.smotuned.inner_repeats == 0 {
            return Err(CliError::Config("smotuned needs inner_folds >= 2 and inner_repeats >= 1".into()));
        }
        if !(self.filters.threshold > 0.0 && self.filters.threshold <= 1.0) {
            return Err(CliError::Config(format!("threshold {} outside (0, 1]", self.filters.threshold)));
        }
        Ok(())
    }

    /// Learners in config order, duplicates dropped.
    pub fn learner_kinds(&self) -> Result<Vec<LearnerKind>, CliError> {
        let mut out = Vec::new();
        for name in &self.learners {
            let kind: LearnerKind = name.parse()?;
            if !out.contains(&kind) {
                out.push(kind);
            }
        }
        Ok(out)
    }

    pub fn cv_plan(&self) -> CvPlan {
        CvPlan {
            n_folds: self.cv.folds,
            n_repeats: self.cv.repeats,
            stratified: self.cv.stratified,
            seed: self.seed,
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            top_n: self.filters.top_n_keywords,
            threshold: self.filters.threshold,
            ..FilterConfig::default()
        }
    }

    /// Makes relative data paths absolute with respect to `base`.
    pub fn resolve_data_paths(&mut self, base: &Path) {
        for p in [&mut self.data.train, &mut self.data.test] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub filter: Option<FilterChoice>,
    pub learners: Vec<String>,
    pub top_n_keywords: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(f) = self.filter {
            cfg.filter = f;
        }
        if !self.learners.is_empty() {
            cfg.learners = self.learners.clone();
        }
        if let Some(n) = self.top_n_keywords {
            cfg.filters.top_n_keywords = n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
project = "ambari"
seed = 7
mode = "de3"

[data]
train = "ambari-train.csv"
test = "ambari-test.csv"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.filter, FilterChoice::All);
        assert_eq!(cfg.learners.len(), 5);
        assert_eq!(cfg.cv, CvSection::default());
        assert_eq!(cfg.cv_plan().seed, 7);
        assert_eq!(cfg.mode.de_generations(), Some(3));
    }

    #[test]
    fn canonical_form_round_trips_and_hash_is_stable() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            MINIMAL.replace("de3", "de5"),
            MINIMAL.replace("seed = 7", "seed = 7\nfilter = \"nope\""),
            MINIMAL.replace("seed = 7", "seed = 7\nlearners = [\"svm\"]"),
            MINIMAL.replace("seed = 7", "seed = 7\nlearners = []"),
            MINIMAL.replace("seed = 7", "seed = 7\nbogus = 1"),
            format!("{MINIMAL}\n[cv]\nfolds = 1\n"),
        ] {
            assert!(ExperimentConfig::from_toml_str(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn overrides_win() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        Overrides {
            seed: Some(1),
            mode: Some(Mode::Smote),
            filter: Some("clni".parse().unwrap()),
            learners: vec!["nb".into()],
            top_n_keywords: Some(10),
        }
        .apply(&mut cfg);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.mode, Mode::Smote);
        assert_eq!(cfg.filter, FilterChoice::One(FilterName::Clni));
        assert_eq!(cfg.learner_kinds().unwrap(), vec![LearnerKind::NaiveBayes]);
        assert_eq!(cfg.filters.top_n_keywords, 10);
    }
}
