//! Confusion-matrix metrics, stratified k-fold cross-validation and
//! learner selection.
//!
//! SBR (label 1) is always the positive class, and every ratio with a zero
//! denominator is reported as 0.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetPair, LabeledMatrix, NSBR, SBR};
use crate::error::{Error, Result};
use crate::learners::{fit, FittedModel, LearnerParams};
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, o: &ConfusionMatrix) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

pub fn confusion(predicted: &[u8], actual: &[u8]) -> Result<ConfusionMatrix> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape {
            what: "prediction count",
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p == SBR, a == SBR) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pd: f64,
    pub pf: f64,
    pub prec: f64,
    pub f_measure: f64,
    pub g_measure: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let pd = ratio(tp, tp + fn_);
    let pf = ratio(fp, fp + tn);
    let prec = ratio(tp, tp + fp);
    MetricsReport {
        pd,
        pf,
        prec,
        f_measure: ratio(2.0 * pd * prec, pd + prec),
        g_measure: ratio(2.0 * pd * (1.0 - pf), pd + (1.0 - pf)),
    }
}

impl MetricsReport {
    /// `"pd / pf"` as percentages with one decimal, e.g. `"15.7 / 0.2"`.
    pub fn pd_pf_display(&self) -> String {
        format!("{:.1} / {:.1}", 100.0 * self.pd, 100.0 * self.pf)
    }
}

/// Median, averaging the two middle values for even lengths. `None` when
/// empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n_folds: usize,
    pub n_repeats: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan {
            n_folds: 10,
            n_repeats: 10,
            stratified: true,
            seed: 0,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::InvalidConfig(format!("n_folds must be at least 2, got {}", self.n_folds)));
        }
        if self.n_repeats == 0 {
            return Err(Error::InvalidConfig("n_repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed of repeat `r`.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Splits the rows of `m` into `plan.n_folds` folds using `seed`. Stratified
/// splits shuffle each class and deal SBR rows first, then NSBR rows, round
/// robin over the folds, so class counts per fold differ by at most one.
/// Index lists are sorted.
pub fn kfold_split(m: &LabeledMatrix, plan: &CvPlan, seed: u64) -> Result<Vec<Fold>> {
    plan.validate()?;
    let n = m.n_rows();
    if n < plan.n_folds {
        return Err(Error::InvalidConfig(format!(
            "{} rows cannot fill {} folds",
            n, plan.n_folds
        )));
    }
    let mut r = rng::stream(seed, &[0x6376]);
    let minority = m.count(SBR).min(m.count(NSBR));
    let order: Vec<usize> = if plan.stratified && minority >= plan.n_folds {
        let mut pos = m.indices_of(SBR);
        let mut neg = m.indices_of(NSBR);
        pos.shuffle(&mut r);
        neg.shuffle(&mut r);
        pos.into_iter().chain(neg).collect()
    } else {
        if plan.stratified {
            log::warn!(
                "minority class has {} rows, fewer than {} folds; splitting without stratification",
                minority,
                plan.n_folds
            );
        }
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut r);
        all
    };
    let mut assignment = vec![0; n];
    for (p, &i) in order.iter().enumerate() {
        assignment[i] = p % plan.n_folds;
    }
    Ok((0..plan.n_folds)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            Fold { train, valid }
        })
        .collect())
}

/// Order-sensitive hash of a matrix's rows and labels.
pub fn fingerprint(m: &LabeledMatrix) -> u64 {
    let mut h = DefaultHasher::new();
    m.n_cols().hash(&mut h);
    for (i, row) in m.features().rows().enumerate() {
        for v in row {
            v.to_bits().hash(&mut h);
        }
        m.labels()[i].hash(&mut h);
    }
    h.finish()
}

/// Transformation applied to each training fold before fitting (SMOTE, for
/// instance). Receives the fold and a seed derived from (repeat, fold).
pub type PretrainHook<'a> = dyn Fn(&LabeledMatrix, u64) -> Result<LabeledMatrix> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub repeat: usize,
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    /// Rows the model was fitted on, after the hook.
    pub n_train: usize,
    pub valid_rows: Vec<usize>,
    /// Fingerprint of the validation rows that were scored.
    pub valid_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldReport>,
    /// Per repeat, the g-measure of the confusion matrix pooled over folds.
    pub repeat_g: Vec<f64>,
    pub median_g: f64,
}

/// Repeated k-fold cross-validation of `params` on `m`. The hook, if any,
/// only ever sees a fold's training rows; validation rows are taken from
/// `m` untouched and their fingerprint is checked after the hook ran.
pub fn cross_validate(
    params: &LearnerParams,
    m: &LabeledMatrix,
    plan: &CvPlan,
    hook: Option<&PretrainHook<'_>>,
) -> Result<CvResult> {
    plan.validate()?;
    let splits = (0..plan.n_repeats)
        .map(|r| kfold_split(m, plan, plan.repeat_seed(r)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..plan.n_repeats)
        .flat_map(|r| (0..plan.n_folds).map(move |f| (r, f)))
        .collect();
    let folds = jobs
        .into_par_iter()
        .map(|(r, f)| {
            let fold = &splits[r][f];
            let seed = rng::derive_seed(plan.repeat_seed(r), &[f as u64]);
            let valid = m.select_rows(&fold.valid);
            let before = fingerprint(&valid);
            let mut train = m.select_rows(&fold.train);
            if let Some(h) = hook {
                train = h(&train, seed)?;
            }
            let model = fit(params, &train, seed)?;
            let predicted = model.predict(valid.features())?;
            let valid_fingerprint = fingerprint(&valid);
            assert_eq!(before, valid_fingerprint, "validation fold changed during training");
            let cm = confusion(&predicted, valid.labels())?;
            Ok(FoldReport {
                repeat: r,
                fold: f,
                confusion: cm,
                metrics: metrics(&cm),
                n_train: train.n_rows(),
                valid_rows: fold.valid.clone(),
                valid_fingerprint,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let repeat_g: Vec<f64> = (0..plan.n_repeats)
        .map(|r| {
            let mut pooled = ConfusionMatrix::default();
            for f in folds.iter().filter(|f| f.repeat == r) {
                pooled.add(&f.confusion);
            }
            metrics(&pooled).g_measure
        })
        .collect();
    let median_g = median(&repeat_g).expect("at least one repeat");
    Ok(CvResult {
        folds,
        repeat_g,
        median_g,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub params: LearnerParams,
    pub median_g: f64,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub winner: LearnerParams,
    /// The winner refitted on all of `m`.
    pub model: FittedModel,
    /// Candidates in input order.
    pub leaderboard: Vec<LeaderboardEntry>,
}

/// Index of the highest median g-measure, ties going to the preferred
/// learner kind and then to the earlier entry.
pub fn leaderboard_winner(leaderboard: &[LeaderboardEntry]) -> Option<usize> {
    let mut best = None::<usize>;
    for (i, e) in leaderboard.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let b = &leaderboard[b];
                e.median_g > b.median_g
                    || (e.median_g == b.median_g
                        && e.params.kind().preference_rank() < b.params.kind().preference_rank())
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Cross-validates every candidate, picks the highest median g-measure
/// (ties broken by the learner preference order NB, RF, LR, MLP, KNN, then
/// input order) and refits it on the whole of `m` with `fit_seed`.
pub fn select_best_learner(
    candidates: &[LearnerParams],
    m: &LabeledMatrix,
    plan: &CvPlan,
    hook: Option<&PretrainHook<'_>>,
    fit_seed: u64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Empty("no candidate learners".into()));
    }
    let leaderboard = candidates
        .iter()
        .map(|p| {
            Ok(LeaderboardEntry {
                params: p.clone(),
                median_g: cross_validate(p, m, plan, hook)?.median_g,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = leaderboard_winner(&leaderboard).expect("leaderboard is non-empty");
    let winner = leaderboard[best].params.clone();
    let train = match hook {
        Some(h) => h(m, fit_seed)?,
        None => m.clone(),
    };
    let model = fit(&winner, &train, fit_seed)?;
    Ok(Selection {
        winner,
        model,
        leaderboard,
    })
}

pub fn evaluate_on_test(model: &FittedModel, pair: &DatasetPair) -> Result<MetricsReport> {
    let test = pair.test();
    if test.n_rows() == 0 {
        return Err(Error::Empty("empty test partition".into()));
    }
    let before = fingerprint(test);
    let predicted = model.predict(test.features())?;
    debug_assert_eq!(before, fingerprint(test));
    Ok(metrics(&confusion(&predicted, test.labels())?))
}

/// Fits `params` on `train` once per seed and scores each fit on the test
/// partition. Every metric of the result is the median over the runs.
pub fn test_median(
    params: &LearnerParams,
    train: &LabeledMatrix,
    pair: &DatasetPair,
    seeds: &[u64],
) -> Result<MetricsReport> {
    let runs = seeds
        .par_iter()
        .map(|&s| evaluate_on_test(&fit(params, train, s)?, pair))
        .collect::<Result<Vec<_>>>()?;
    let med = |f: fn(&MetricsReport) -> f64| {
        median(&runs.iter().map(f).collect::<Vec<_>>()).unwrap_or(0.0)
    };
    Ok(MetricsReport {
        pd: med(|r| r.pd),
        pf: med(|r| r.pf),
        prec: med(|r| r.prec),
        f_measure: med(|r| r.f_measure),
        g_measure: med(|r| r.g_measure),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Features;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 5e-5
    }

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (1, 1, 1, 1));
        let cm = confusion(&[1, 1, 1], &[1, 1, 1]).unwrap();
        assert_eq!((cm.tp, cm.total()), (3, 3));
        let cm = confusion(&[0, 1], &[1, 0]).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn metric_values() {
        let m = metrics(&ConfusionMatrix { tp: 10, fp: 0, tn: 90, fn_: 0 });
        assert_eq!((m.pd, m.pf, m.g_measure), (1.0, 0.0, 1.0));
        let m = metrics(&ConfusionMatrix { tp: 0, fp: 3, tn: 7, fn_: 4 });
        assert_eq!((m.pd, m.f_measure, m.g_measure), (0.0, 0.0, 0.0));
        let m = metrics(&ConfusionMatrix { tp: 5, fp: 10, tn: 80, fn_: 5 });
        assert!(close(m.pd, 0.5) && close(m.pf, 0.1111) && close(m.prec, 0.3333));
        assert!(close(m.f_measure, 0.4) && close(m.g_measure, 0.64));
        assert_eq!(metrics(&ConfusionMatrix::default()), MetricsReport::default());
    }

    #[test]
    fn percent_display() {
        let r = MetricsReport { pd: 0.157, pf: 0.002, ..Default::default() };
        assert_eq!(r.pd_pf_display(), "15.7 / 0.2");
        let r = MetricsReport { pd: 1.0, pf: 0.0, ..Default::default() };
        assert_eq!(r.pd_pf_display(), "100.0 / 0.0");
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    fn matrix(labels: Vec<u8>) -> LabeledMatrix {
        let rows: Vec<[f64; 1]> = (0..labels.len()).map(|i| [i as f64]).collect();
        LabeledMatrix::unnamed(Features::from_rows(1, &rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn even_folds() {
        let m = matrix((0..100).map(|i| u8::from(i % 5 == 0)).collect());
        let plan = CvPlan { n_folds: 10, ..CvPlan::default() };
        for f in kfold_split(&m, &plan, 3).unwrap() {
            assert_eq!(f.valid.len(), 10);
            assert_eq!(f.train.len(), 90);
        }
    }

    #[test]
    fn stratified_two_folds() {
        let mut labels = vec![0; 10];
        labels[2] = 1;
        labels[7] = 1;
        let m = matrix(labels);
        let plan = CvPlan { n_folds: 2, ..CvPlan::default() };
        for f in kfold_split(&m, &plan, 0).unwrap() {
            assert_eq!(f.valid.iter().filter(|&&i| m.labels()[i] == 1).count(), 1);
        }
    }

    #[test]
    fn too_few_rows() {
        let m = matrix(vec![0, 1, 0]);
        assert!(kfold_split(&m, &CvPlan::default(), 0).is_err());
    }

    #[test]
    fn empty_test_partition() {
        let train = matrix(vec![0, 1, 0, 1]);
        let test = LabeledMatrix::unnamed(Features::with_columns(1), vec![]).unwrap();
        let pair = DatasetPair::new(train.clone(), test, "p", "none").unwrap();
        let model = fit(&LearnerParams::untuned(crate::learners::LearnerKind::NaiveBayes), &train, 0).unwrap();
        match evaluate_on_test(&model, &pair) {
            Err(Error::Empty(msg)) => assert_eq!(msg, "empty test partition"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
