//! SMOTE rebalancing and its self-tuning variant SMOTUNED.
//!
//! The minority class is always SBR (label 1) and the majority NSBR
//! (label 0), whatever their actual counts. In count mode `m` is the target
//! size of each class: the majority is randomly thinned down to `m` and the
//! minority grown to `m` with synthetic rows. A class already on the other
//! side of `m` is left alone.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Features, LabeledMatrix, NSBR, SBR};
use crate::error::{Error, Result};
use crate::evaluation::{cross_validate, CvPlan};
use crate::learners::LearnerParams;
use crate::optimizer::{run_de, DeConfig, DeOutcome, DEFAULT_CR, DEFAULT_F};
use crate::rng::{self, Rng};
use crate::space::{ParamSpace, ParamSpec, ParamVector};

/// Neighbour searches never look further than this many rows.
pub const MAX_NEIGHBOR_SEARCH: usize = 20;

pub fn minkowski_distance(a: &[f64], b: &[f64], r: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            what: "row length",
            expected: a.len(),
            found: b.len(),
        });
    }
    if r == 1.0 {
        return Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum());
    }
    if r == 2.0 {
        return Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(r)).sum();
    Ok(s.powf(1.0 / r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoteMode {
    /// `m` is the number of rows each class should end with.
    Count,
    /// `m` is a percentage of the input size, turned into a count.
    Percent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k: usize,
    pub m: f64,
    pub r: f64,
    pub mode: SmoteMode,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k: 5,
            m: 50.0,
            r: 2.0,
            mode: SmoteMode::Percent,
            seed: 0,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_NEIGHBOR_SEARCH).contains(&self.k) {
            return Err(Error::InvalidConfig(format!("k must lie in [1, 20], got {}", self.k)));
        }
        if !(1.0..=6.0).contains(&self.r) {
            return Err(Error::InvalidConfig(format!("r must lie in [1, 6], got {}", self.r)));
        }
        let m_ok = match self.mode {
            SmoteMode::Count => self.m >= 1.0 && self.m.fract() == 0.0,
            SmoteMode::Percent => self.m > 0.0 && self.m <= 100.0,
        };
        if !m_ok {
            return Err(Error::InvalidConfig(format!(
                "m = {} is not valid in {:?} mode",
                self.m, self.mode
            )));
        }
        Ok(())
    }

    /// Per-class target for an input of `n_rows` rows.
    pub fn target_count(&self, n_rows: usize) -> usize {
        match self.mode {
            SmoteMode::Count => self.m as usize,
            SmoteMode::Percent => ((self.m / 100.0 * n_rows as f64).round() as usize).max(1),
        }
    }
}

/// Indices of up to `k` nearest rows of `pool` to `x0` (excluding `self_index`),
/// closest first, ties by index. The search widens one row at a time and
/// stops at [`MAX_NEIGHBOR_SEARCH`].
fn nearest(x0: &[f64], pool: &Features, self_index: Option<usize>, k: usize, r: f64) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..pool.n_rows())
        .filter(|&i| Some(i) != self_index)
        .map(|i| (minkowski_distance(x0, pool.row(i), r).expect("equal widths"), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k.min(MAX_NEIGHBOR_SEARCH));
    d.into_iter().map(|(_, i)| i).collect()
}

/// One synthetic row near `minority.row(x0)`: a random point on the segment
/// towards one of its `k` nearest minority neighbours. With no neighbour the
/// row is duplicated.
pub fn synthesize(x0: usize, minority: &Features, k: usize, r: f64, rng: &mut Rng) -> Vec<f64> {
    let base = minority.row(x0);
    let found = nearest(base, minority, Some(x0), k, r);
    if found.len() < k {
        log::debug!("smote: only {} of {} neighbours available", found.len(), k);
    }
    if found.is_empty() {
        return base.to_vec();
    }
    let z = minority.row(found[rng.random_range(0..found.len())]);
    let u: f64 = rng.random();
    base.iter().zip(z).map(|(&a, &b)| a + u * (b - a)).collect()
}

/// Rebalances `train`. Kept rows stay in their original order; synthetic
/// minority rows are appended at the end.
pub fn smote(train: &LabeledMatrix, cfg: &SmoteConfig) -> Result<LabeledMatrix> {
    cfg.validate()?;
    if !train.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let m = cfg.target_count(train.n_rows());
    let mut r = rng::stream(cfg.seed, &[0x736d]);

    let majority = train.indices_of(NSBR);
    let minority = train.indices_of(SBR);
    let mut keep_majority = vec![true; majority.len()];
    if majority.len() > m {
        keep_majority.fill(false);
        for i in sample(&mut r, majority.len(), m) {
            keep_majority[i] = true;
        }
    }
    let mut keep = vec![true; train.n_rows()];
    for (&i, &k) in majority.iter().zip(&keep_majority) {
        keep[i] = k;
    }
    let kept: Vec<usize> = (0..train.n_rows()).filter(|&i| keep[i]).collect();

    let mut out = train.features().select(&kept);
    let mut labels: Vec<u8> = kept.iter().map(|&i| train.labels()[i]).collect();
    if minority.len() < m {
        let pool = train.features().select(&minority);
        for _ in minority.len()..m {
            let x0 = r.random_range(0..pool.n_rows());
            out.push_row(&synthesize(x0, &pool, cfg.k, cfg.r, &mut r))?;
            labels.push(SBR);
        }
    }
    LabeledMatrix::new(out, labels, train.column_names().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmotunedConfig {
    pub de: DeConfig,
    /// Folds of the internal cross-validation that scores each candidate.
    pub inner_folds: usize,
    pub inner_repeats: usize,
}

impl Default for SmotunedConfig {
    fn default() -> Self {
        SmotunedConfig {
            de: DeConfig {
                np: 30,
                f: DEFAULT_F,
                cr: DEFAULT_CR,
                iter_cap: 10,
                seed: 0,
                early_exit: true,
            },
            inner_folds: 5,
            inner_repeats: 1,
        }
    }
}

/// `k` in [1, 20], `m` in [50, 400] and `r` in [1, 6].
pub fn smote_space() -> ParamSpace {
    ParamSpace::new(vec![
        ParamSpec::integer("k", 1.0, 20.0, 5.0),
        ParamSpec::integer("m", 50.0, 400.0, 50.0),
        ParamSpec::real("r", 1.0, 6.0, 2.0),
    ])
    .expect("static space")
}

fn config_from_vector(v: &ParamVector, seed: u64) -> SmoteConfig {
    let get = |n: &str| v.get(n).expect("smote parameter");
    SmoteConfig {
        k: get("k") as usize,
        m: get("m"),
        r: get("r"),
        mode: SmoteMode::Count,
        seed,
    }
}

/// The configuration SMOTUNED settled on, as logged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChosenSmote {
    pub k: usize,
    pub m: usize,
    pub r: f64,
    pub fitness: f64,
}

#[derive(Debug, Clone)]
pub struct SmotunedOutcome {
    pub config: SmoteConfig,
    pub chosen: ChosenSmote,
    pub rebalanced: LabeledMatrix,
    pub de: DeOutcome,
}

/// Searches SMOTE's `(k, m, r)` for the setting that maximizes the median
/// g-measure of `learner` under internal cross-validation, with SMOTE
/// applied to training folds only. `seed` drives the folds, the SMOTE
/// draws and the learner fits.
pub fn smotuned(
    train: &LabeledMatrix,
    learner: &LearnerParams,
    cfg: &SmotunedConfig,
    seed: u64,
) -> Result<SmotunedOutcome> {
    if !train.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let space = smote_space();
    let plan = CvPlan {
        n_folds: cfg.inner_folds,
        n_repeats: cfg.inner_repeats,
        stratified: true,
        seed,
    };
    plan.validate()?;
    let fitness = |v: &ParamVector| -> Result<f64> {
        let smote_cfg = config_from_vector(v, seed);
        let hook = move |fold: &LabeledMatrix, fold_seed: u64| {
            smote(fold, &SmoteConfig { seed: fold_seed, ..smote_cfg })
        };
        Ok(cross_validate(learner, train, &plan, Some(&hook))?.median_g)
    };
    let de = run_de(&space, &DeConfig { seed, ..cfg.de }, fitness)?;
    let best = space.materialize(&de.best.vector);
    let config = config_from_vector(&best, seed);
    let rebalanced = smote(train, &config)?;
    let chosen = ChosenSmote {
        k: config.k,
        m: config.m as usize,
        r: config.r,
        fitness: de.best.fitness,
    };
    log::info!("smotuned chose {}", serde_json::to_string(&chosen)?);
    Ok(SmotunedOutcome {
        config,
        chosen,
        rebalanced,
        de,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(minority: usize, majority: usize) -> LabeledMatrix {
        let rows: Vec<[f64; 2]> = (0..minority + majority)
            .map(|i| [i as f64, (i % 7) as f64])
            .collect();
        let labels = (0..minority + majority).map(|i| u8::from(i < minority)).collect();
        LabeledMatrix::unnamed(Features::from_rows(2, &rows).unwrap(), labels).unwrap()
    }

    fn count_cfg(m: usize) -> SmoteConfig {
        SmoteConfig {
            m: m as f64,
            mode: SmoteMode::Count,
            ..SmoteConfig::default()
        }
    }

    #[test]
    fn distances() {
        assert_eq!(minkowski_distance(&[0.0, 0.0], &[3.0, 4.0], 2.0).unwrap(), 5.0);
        assert_eq!(minkowski_distance(&[1.5, 2.0], &[1.5, 2.0], 3.0).unwrap(), 0.0);
        assert_eq!(minkowski_distance(&[0.0, 0.0], &[1.0, 1.0], 1.0).unwrap(), 2.0);
        assert!(minkowski_distance(&[0.0], &[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn lone_minority_row_is_duplicated() {
        let f = Features::from_rows(2, &[[0.5, 0.25]]).unwrap();
        let y = synthesize(0, &f, 5, 2.0, &mut rng::seeded(1));
        assert_eq!(y, vec![0.5, 0.25]);
    }

    #[test]
    fn synthetic_point_on_segment() {
        let f = Features::from_rows(2, &[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        let mut r = rng::seeded(4);
        for _ in 0..100 {
            let y = synthesize(0, &f, 1, 2.0, &mut r);
            assert!(y.iter().all(|&v| (0.0..=2.0).contains(&v)));
            assert_eq!(y[0], y[1]);
        }
    }

    #[test]
    fn class_size_rules() {
        let out = smote(&counts(5, 200), &count_cfg(50)).unwrap();
        assert_eq!((out.count(SBR), out.count(NSBR)), (50, 50));
        let out = smote(&counts(60, 40), &count_cfg(50)).unwrap();
        assert_eq!((out.count(SBR), out.count(NSBR)), (60, 40));
    }

    #[test]
    fn original_minority_rows_survive() {
        let input = counts(5, 200);
        let out = smote(&input, &count_cfg(50)).unwrap();
        for i in input.indices_of(SBR) {
            assert_eq!(out.row(i), input.row(i));
            assert_eq!(out.labels()[i], SBR);
        }
    }

    #[test]
    fn percent_mode_target() {
        let c = SmoteConfig::default();
        assert_eq!(c.target_count(205), 103);
        let out = smote(&counts(5, 200), &c).unwrap();
        assert_eq!((out.count(SBR), out.count(NSBR)), (103, 103));
    }

    #[test]
    fn rejects_single_class_and_bad_config() {
        assert!(matches!(smote(&counts(0, 10), &count_cfg(5)), Err(Error::SingleClass)));
        assert!(smote(&counts(3, 10), &SmoteConfig { k: 0, ..count_cfg(5) }).is_err());
        assert!(smote(&counts(3, 10), &SmoteConfig { k: 21, ..count_cfg(5) }).is_err());
        assert!(smote(&counts(3, 10), &SmoteConfig { r: 0.5, ..count_cfg(5) }).is_err());
        assert!(smote(&counts(3, 10), &count_cfg(0)).is_err());
    }

    #[test]
    fn seeded_runs_repeat() {
        let input = counts(5, 100);
        assert_eq!(smote(&input, &count_cfg(30)).unwrap(), smote(&input, &count_cfg(30)).unwrap());
    }

    #[test]
    fn default_tuner_settings() {
        let c = SmotunedConfig::default();
        assert_eq!((c.de.np, c.de.iter_cap, c.inner_folds), (30, 10, 5));
        assert_eq!(c.de.np, 10 * smote_space().dims());
    }
}
