//! Training-set filters that drop suspicious non-security reports.
//!
//! The keyword filters score each report with a Graham-style Bayesian
//! combination of per-keyword probabilities and remove NSBRs scoring at or
//! above a threshold. CLNI removes NSBRs whose nearest neighbours are mostly
//! SBRs. SBR rows are never removed by any filter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetPair, LabeledMatrix, NSBR, SBR};
use crate::error::{Error, Result};

pub const MIN_KEYWORD_SCORE: f64 = 0.01;
pub const MAX_KEYWORD_SCORE: f64 = 0.99;
pub const DEFAULT_THRESHOLD: f64 = 0.75;
pub const DEFAULT_TOP_N: usize = 100;

/// How the SBR (or NSBR) keyword frequency is adjusted before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    /// farsec: frequencies used as-is.
    None,
    /// farsecsq: SBR frequency squared.
    Square,
    /// farsectwo: NSBR frequency doubled.
    Double,
}

impl Support {
    pub fn name(self) -> &'static str {
        match self {
            Support::None => "none",
            Support::Square => "square",
            Support::Double => "double",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterName {
    Train,
    Farsec,
    Farsecsq,
    Farsectwo,
    Clni,
    Clnifarsec,
    Clnifarsecsq,
    Clnifarsectwo,
}

impl FilterName {
    pub const ALL: [FilterName; 8] = [
        FilterName::Train,
        FilterName::Farsec,
        FilterName::Farsecsq,
        FilterName::Farsectwo,
        FilterName::Clni,
        FilterName::Clnifarsec,
        FilterName::Clnifarsecsq,
        FilterName::Clnifarsectwo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterName::Train => "train",
            FilterName::Farsec => "farsec",
            FilterName::Farsecsq => "farsecsq",
            FilterName::Farsectwo => "farsectwo",
            FilterName::Clni => "clni",
            FilterName::Clnifarsec => "clnifarsec",
            FilterName::Clnifarsecsq => "clnifarsecsq",
            FilterName::Clnifarsectwo => "clnifarsectwo",
        }
    }

    /// Keyword support function, if this filter includes a keyword stage.
    pub fn support(self) -> Option<Support> {
        match self {
            FilterName::Farsec | FilterName::Clnifarsec => Some(Support::None),
            FilterName::Farsecsq | FilterName::Clnifarsecsq => Some(Support::Square),
            FilterName::Farsectwo | FilterName::Clnifarsectwo => Some(Support::Double),
            FilterName::Train | FilterName::Clni => None,
        }
    }

    pub fn uses_clni(self) -> bool {
        matches!(
            self,
            FilterName::Clni
                | FilterName::Clnifarsec
                | FilterName::Clnifarsecsq
                | FilterName::Clnifarsectwo
        )
    }
}

impl fmt::Display for FilterName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterName::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown filter {s:?}")))
    }
}

/// How the per-keyword probabilities of a report are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Every keyword present in the report contributes.
    #[default]
    AllPresent,
    /// Only the `n` present keywords whose scores lie farthest from 0.5.
    MostExtreme(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordScoreTable {
    pub keywords: Vec<String>,
    /// Column of each keyword in the matrix the table was built from.
    pub columns: Vec<usize>,
    pub scores: Vec<f64>,
    pub support: Support,
    pub scoring: ScoringMode,
}

impl KeywordScoreTable {
    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    /// CSV with columns `term,score,support`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["term", "score", "support"])?;
        for (k, s) in self.keywords.iter().zip(&self.scores) {
            w.write_record([k.as_str(), &s.to_string(), self.support.name()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Combined security probability of one report, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct ReportScore(f64);

impl ReportScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClniConfig {
    pub n_neighbors: usize,
    pub removal_threshold: f64,
    pub max_iterations: usize,
    pub convergence_epsilon: f64,
}

impl Default for ClniConfig {
    fn default() -> Self {
        ClniConfig {
            n_neighbors: 5,
            removal_threshold: DEFAULT_THRESHOLD,
            max_iterations: 10,
            convergence_epsilon: 0.01,
        }
    }
}

impl ClniConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors == 0 {
            return Err(Error::InvalidConfig("CLNI needs at least one neighbour".into()));
        }
        check_threshold(self.removal_threshold)?;
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("CLNI max_iterations must be at least 1".into()));
        }
        if !(self.convergence_epsilon >= 0.0) {
            return Err(Error::InvalidConfig("CLNI convergence_epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub top_n: usize,
    pub threshold: f64,
    pub scoring: ScoringMode,
    pub clni: ClniConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            top_n: DEFAULT_TOP_N,
            threshold: DEFAULT_THRESHOLD,
            scoring: ScoringMode::AllPresent,
            clni: ClniConfig::default(),
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("threshold {t} outside (0, 1]")))
    }
}

/// The `top_n` terms carrying the most tf-idf mass over SBR rows. Terms
/// absent from every SBR are never returned.
pub fn extract_security_keywords(train: &LabeledMatrix, top_n: usize) -> Result<Vec<String>> {
    let sbr = train.indices_of(SBR);
    if sbr.is_empty() {
        return Err(Error::Empty(
            "cannot build keyword table: training data has no SBR rows".into(),
        ));
    }
    let mut mass = vec![0.0; train.n_cols()];
    for &i in &sbr {
        for (m, v) in mass.iter_mut().zip(train.row(i)) {
            *m += v;
        }
    }
    let names = train.column_names();
    let mut ranked: Vec<usize> = (0..mass.len()).filter(|&j| mass[j] > 0.0).collect();
    ranked.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then_with(|| names[a].cmp(&names[b])));
    ranked.truncate(top_n);
    Ok(ranked.into_iter().map(|j| names[j].clone()).collect())
}

fn keyword_probability(b: f64, n_b: f64, g: f64, n_g: f64, support: Support) -> f64 {
    let (b, g) = match support {
        Support::None => (b, g),
        Support::Square => (b * b, g),
        Support::Double => (b, 2.0 * g),
    };
    let bad = b / n_b;
    let good = if n_g > 0.0 { g / n_g } else { 0.0 };
    let denom = bad + good;
    let p = if denom > 0.0 { bad / denom } else { MIN_KEYWORD_SCORE };
    p.clamp(MIN_KEYWORD_SCORE, MAX_KEYWORD_SCORE)
}

/// Per-keyword spam-style probabilities from document frequencies in the
/// SBR and NSBR rows of `train`.
pub fn keyword_scores(
    train: &LabeledMatrix,
    keywords: &[String],
    support: Support,
    scoring: ScoringMode,
) -> Result<KeywordScoreTable> {
    if keywords.is_empty() {
        return Err(Error::Empty("cannot build keyword table: no keywords".into()));
    }
    let n_b = train.count(SBR);
    if n_b == 0 {
        return Err(Error::Empty(
            "cannot build keyword table: training data has no SBR rows".into(),
        ));
    }
    let n_g = train.count(NSBR);
    let columns = keywords
        .iter()
        .map(|k| {
            train
                .column_names()
                .iter()
                .position(|c| c == k)
                .ok_or_else(|| Error::Schema(format!("keyword {k:?} is not a matrix column")))
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = columns
        .iter()
        .map(|&j| {
            let (mut b, mut g) = (0usize, 0usize);
            for (i, &l) in train.labels().iter().enumerate() {
                if train.row(i)[j] > 0.0 {
                    if l == SBR {
                        b += 1;
                    } else {
                        g += 1;
                    }
                }
            }
            keyword_probability(b as f64, n_b as f64, g as f64, n_g as f64, support)
        })
        .collect();
    Ok(KeywordScoreTable {
        keywords: keywords.to_vec(),
        columns,
        scores,
        support,
        scoring,
    })
}

/// `P / (P + Q)` with `P` the product of present keyword scores and `Q` the
/// product of their complements; zero when no keyword is present.
pub fn score_report(row: &[f64], table: &KeywordScoreTable) -> ReportScore {
    let mut present: Vec<f64> = table
        .columns
        .iter()
        .zip(&table.scores)
        .filter(|&(&j, _)| row.get(j).is_some_and(|&v| v > 0.0))
        .map(|(_, &s)| s)
        .collect();
    if present.is_empty() {
        return ReportScore(0.0);
    }
    if let ScoringMode::MostExtreme(n) = table.scoring {
        present.sort_by(|a, b| (b - 0.5).abs().total_cmp(&(a - 0.5).abs()));
        present.truncate(n.max(1));
    }
    // Sum of log-odds keeps long products away from underflow.
    let log_odds: f64 = present.iter().map(|s| (s / (1.0 - s)).ln()).sum();
    ReportScore(1.0 / (1.0 + (-log_odds).exp()))
}

/// Indices of rows kept by the keyword filter.
pub fn farsec_retained_rows(
    train: &LabeledMatrix,
    table: &KeywordScoreTable,
    threshold: f64,
) -> Result<Vec<usize>> {
    check_threshold(threshold)?;
    let keep: Vec<bool> = (0..train.n_rows())
        .into_par_iter()
        .map(|i| train.labels()[i] == SBR || score_report(train.row(i), table).value() < threshold)
        .collect();
    Ok(keep
        .iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect())
}

pub fn apply_farsec_filter(
    train: &LabeledMatrix,
    table: &KeywordScoreTable,
    threshold: f64,
) -> Result<LabeledMatrix> {
    Ok(train.select_rows(&farsec_retained_rows(train, table, threshold)?))
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// NSBRs whose neighbourhood (drawn from rows outside `excluded`) is
/// dominated by SBRs.
fn clni_noise_set(train: &LabeledMatrix, cfg: &ClniConfig, excluded: &BTreeSet<usize>) -> BTreeSet<usize> {
    let pool: Vec<usize> = (0..train.n_rows()).filter(|i| !excluded.contains(i)).collect();
    let nsbr = train.indices_of(NSBR);
    let flagged: Vec<Option<usize>> = nsbr
        .par_iter()
        .map(|&i| {
            let mut dists: Vec<(f64, usize)> = pool
                .iter()
                .filter(|&&p| p != i)
                .map(|&p| (squared_euclidean(train.row(i), train.row(p)), p))
                .collect();
            let k = cfg.n_neighbors.min(dists.len());
            if k == 0 {
                return None;
            }
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < dists.len() {
                dists.select_nth_unstable_by(k - 1, by_dist);
            }
            let opposite = dists[..k]
                .iter()
                .filter(|&&(_, p)| train.labels()[p] == SBR)
                .count();
            (opposite as f64 / k as f64 >= cfg.removal_threshold).then_some(i)
        })
        .collect();
    flagged.into_iter().flatten().collect()
}

/// Indices of rows kept by CLNI.
pub fn clni_retained_rows(train: &LabeledMatrix, cfg: &ClniConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = train.n_rows();
    if n <= cfg.n_neighbors {
        return Err(Error::Empty(format!(
            "CLNI needs more than {} rows, got {n}",
            cfg.n_neighbors
        )));
    }
    let mut noise = BTreeSet::new();
    for iteration in 0..cfg.max_iterations {
        let next = clni_noise_set(train, cfg, &noise);
        let changed = next.symmetric_difference(&noise).count();
        log::debug!("clni iteration {iteration}: {} marked, {changed} changed", next.len());
        noise = next;
        if (changed as f64) / (n as f64) < cfg.convergence_epsilon || changed == 0 {
            break;
        }
    }
    Ok((0..n).filter(|i| !noise.contains(i)).collect())
}

pub fn apply_clni(train: &LabeledMatrix, cfg: &ClniConfig) -> Result<LabeledMatrix> {
    Ok(train.select_rows(&clni_retained_rows(train, cfg)?))
}

/// Keyword tables for the three support variants, built once from `train`.
pub fn keyword_tables(
    train: &LabeledMatrix,
    cfg: &FilterConfig,
) -> Result<BTreeMap<Support, KeywordScoreTable>> {
    let keywords = extract_security_keywords(train, cfg.top_n)?;
    [Support::None, Support::Square, Support::Double]
        .into_iter()
        .map(|s| Ok((s, keyword_scores(train, &keywords, s, cfg.scoring)?)))
        .collect()
}

/// Applies one named filter to `train`.
pub fn apply_filter(train: &LabeledMatrix, name: FilterName, cfg: &FilterConfig) -> Result<LabeledMatrix> {
    let after_keywords = match name.support() {
        Some(support) => {
            let keywords = extract_security_keywords(train, cfg.top_n)?;
            let table = keyword_scores(train, &keywords, support, cfg.scoring)?;
            apply_farsec_filter(train, &table, cfg.threshold)?
        }
        None => train.clone(),
    };
    if name.uses_clni() {
        apply_clni(&after_keywords, &cfg.clni)
    } else {
        Ok(after_keywords)
    }
}

/// All eight training variants of `pair`; the test partition is untouched.
pub fn build_all_filtered_sets(
    pair: &DatasetPair,
    cfg: &FilterConfig,
) -> Result<BTreeMap<FilterName, LabeledMatrix>> {
    let tables = keyword_tables(&pair.train, cfg)?;
    let mut out = BTreeMap::new();
    out.insert(FilterName::Train, pair.train.clone());
    out.insert(FilterName::Clni, apply_clni(&pair.train, &cfg.clni)?);
    for (plain, composed, support) in [
        (FilterName::Farsec, FilterName::Clnifarsec, Support::None),
        (FilterName::Farsecsq, FilterName::Clnifarsecsq, Support::Square),
        (FilterName::Farsectwo, FilterName::Clnifarsectwo, Support::Double),
    ] {
        let filtered = apply_farsec_filter(&pair.train, &tables[&support], cfg.threshold)?;
        out.insert(composed, apply_clni(&filtered, &cfg.clni)?);
        out.insert(plain, filtered);
    }
    Ok(out)
}
