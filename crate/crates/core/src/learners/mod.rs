//! The five classifiers and their tunable hyperparameter boxes.
//!
//! Every learner is fitted through [`fit`] and queried through
//! [`FittedModel::predict`]. Hyperparameters come either from a
//! [`ParamVector`] drawn from [`param_space`] (tuning mode, every value
//! bounded) or from [`LearnerParams::untuned`] (library defaults, where
//! "None" means unconstrained).

mod forest;
mod knn;
mod logistic;
mod mlp;
mod naive_bayes;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use forest::{ForestModel, ForestParams, Tree};
pub use knn::{KdTree, KnnModel, KnnParams};
pub use logistic::{LogisticModel, LogisticParams};
pub use mlp::{MlpModel, MlpParams, MLP_HIDDEN_UNITS, MLP_TOL};
pub use naive_bayes::{NaiveBayesModel, NaiveBayesParams, VARIANCE_FLOOR};

use crate::dataset::{Features, LabeledMatrix, SBR};
use crate::error::{Error, Result};
use crate::space::{ParamSpace, ParamSpec, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearnerKind {
    RandomForest,
    LogisticRegression,
    MultilayerPerceptron,
    KNearestNeighbor,
    NaiveBayes,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] = [
        LearnerKind::RandomForest,
        LearnerKind::LogisticRegression,
        LearnerKind::MultilayerPerceptron,
        LearnerKind::KNearestNeighbor,
        LearnerKind::NaiveBayes,
    ];

    /// Tie-break order used when two learners score the same.
    pub const PREFERENCE: [LearnerKind; 5] = [
        LearnerKind::NaiveBayes,
        LearnerKind::RandomForest,
        LearnerKind::LogisticRegression,
        LearnerKind::MultilayerPerceptron,
        LearnerKind::KNearestNeighbor,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            LearnerKind::RandomForest => "RF",
            LearnerKind::LogisticRegression => "LR",
            LearnerKind::MultilayerPerceptron => "MP",
            LearnerKind::KNearestNeighbor => "KNN",
            LearnerKind::NaiveBayes => "NB",
        }
    }

    pub fn preference_rank(self) -> usize {
        LearnerKind::PREFERENCE
            .iter()
            .position(|&k| k == self)
            .expect("every kind is ranked")
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rf" | "randomforest" | "random_forest" => Ok(LearnerKind::RandomForest),
            "lr" | "logisticregression" | "logistic_regression" => Ok(LearnerKind::LogisticRegression),
            "mp" | "mlp" | "multilayerperceptron" | "multilayer_perceptron" => {
                Ok(LearnerKind::MultilayerPerceptron)
            }
            "knn" | "knearestneighbor" | "k_nearest_neighbor" => Ok(LearnerKind::KNearestNeighbor),
            "nb" | "naivebayes" | "naive_bayes" => Ok(LearnerKind::NaiveBayes),
            _ => Err(Error::InvalidConfig(format!("unknown learner {s:?}"))),
        }
    }
}

/// Tunable hyperparameters with their ranges and defaults.
pub fn param_space(kind: LearnerKind) -> ParamSpace {
    use ParamSpec as P;
    let specs = match kind {
        LearnerKind::RandomForest => vec![
            P::integer("n_estimators", 10.0, 150.0, 10.0),
            P::integer("min_samples_leaf", 1.0, 20.0, 1.0),
            P::integer("min_samples_split", 2.0, 20.0, 2.0),
            P::integer("max_leaf_nodes", 2.0, 50.0, 50.0).unbounded(),
            P::real("max_features", 0.01, 1.0, 1.0),
            P::integer("max_depth", 1.0, 10.0, 10.0).unbounded(),
        ],
        LearnerKind::LogisticRegression => vec![
            P::real("C", 1.0, 10.0, 1.0),
            P::integer("max_iter", 50.0, 200.0, 100.0),
            P::integer("verbose", 0.0, 10.0, 0.0),
        ],
        LearnerKind::MultilayerPerceptron => vec![
            P::real("alpha", 1e-4, 1e-3, 1e-4),
            P::real("learning_rate_init", 1e-3, 1e-2, 1e-3),
            P::real("power_t", 0.1, 1.0, 0.5),
            P::integer("max_iter", 50.0, 300.0, 200.0),
            P::real("momentum", 0.1, 1.0, 0.9),
            P::integer("n_iter_no_change", 1.0, 100.0, 10.0),
        ],
        LearnerKind::KNearestNeighbor => vec![
            P::integer("leaf_size", 10.0, 100.0, 30.0),
            P::integer("n_neighbors", 1.0, 10.0, 5.0),
        ],
        LearnerKind::NaiveBayes => vec![P::real("var_smoothing", 0.0, 1.0, 1e-9)],
    };
    ParamSpace::new(specs).expect("built-in spaces are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum LearnerParams {
    RandomForest(ForestParams),
    LogisticRegression(LogisticParams),
    MultilayerPerceptron(MlpParams),
    KNearestNeighbor(KnnParams),
    NaiveBayes(NaiveBayesParams),
}

fn int_param(v: &ParamVector, name: &str) -> Result<usize> {
    v.get(name)
        .map(|x| x.round().max(0.0) as usize)
        .ok_or_else(|| Error::InvalidConfig(format!("missing parameter {name:?}")))
}

fn real_param(v: &ParamVector, name: &str) -> Result<f64> {
    v.get(name)
        .ok_or_else(|| Error::InvalidConfig(format!("missing parameter {name:?}")))
}

impl LearnerParams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerParams::RandomForest(_) => LearnerKind::RandomForest,
            LearnerParams::LogisticRegression(_) => LearnerKind::LogisticRegression,
            LearnerParams::MultilayerPerceptron(_) => LearnerKind::MultilayerPerceptron,
            LearnerParams::KNearestNeighbor(_) => LearnerKind::KNearestNeighbor,
            LearnerParams::NaiveBayes(_) => LearnerKind::NaiveBayes,
        }
    }

    /// Library defaults; "None" defaults stay unconstrained.
    pub fn untuned(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::RandomForest => LearnerParams::RandomForest(ForestParams::default()),
            LearnerKind::LogisticRegression => {
                LearnerParams::LogisticRegression(LogisticParams::default())
            }
            LearnerKind::MultilayerPerceptron => {
                LearnerParams::MultilayerPerceptron(MlpParams::default())
            }
            LearnerKind::KNearestNeighbor => LearnerParams::KNearestNeighbor(KnnParams::default()),
            LearnerKind::NaiveBayes => LearnerParams::NaiveBayes(NaiveBayesParams::default()),
        }
    }

    /// Materializes a point of `param_space(kind)`: values are clipped to
    /// the box and integer dimensions rounded.
    pub fn from_vector(kind: LearnerKind, v: &ParamVector) -> Result<Self> {
        let v = &param_space(kind).materialize(v);
        Ok(match kind {
            LearnerKind::RandomForest => LearnerParams::RandomForest(ForestParams {
                n_estimators: int_param(v, "n_estimators")?,
                min_samples_leaf: int_param(v, "min_samples_leaf")?,
                min_samples_split: int_param(v, "min_samples_split")?,
                max_leaf_nodes: Some(int_param(v, "max_leaf_nodes")?),
                max_features: real_param(v, "max_features")?,
                max_depth: Some(int_param(v, "max_depth")?),
                bootstrap: true,
            }),
            LearnerKind::LogisticRegression => LearnerParams::LogisticRegression(LogisticParams {
                c: real_param(v, "C")?,
                max_iter: int_param(v, "max_iter")?,
                verbose: int_param(v, "verbose")?,
            }),
            LearnerKind::MultilayerPerceptron => LearnerParams::MultilayerPerceptron(MlpParams {
                alpha: real_param(v, "alpha")?,
                learning_rate_init: real_param(v, "learning_rate_init")?,
                power_t: real_param(v, "power_t")?,
                max_iter: int_param(v, "max_iter")?,
                momentum: real_param(v, "momentum")?,
                n_iter_no_change: int_param(v, "n_iter_no_change")?,
            }),
            LearnerKind::KNearestNeighbor => LearnerParams::KNearestNeighbor(KnnParams {
                leaf_size: int_param(v, "leaf_size")?,
                n_neighbors: int_param(v, "n_neighbors")?,
            }),
            LearnerKind::NaiveBayes => LearnerParams::NaiveBayes(NaiveBayesParams {
                var_smoothing: real_param(v, "var_smoothing")?,
            }),
        })
    }

    /// In-box defaults, i.e. `from_vector(kind, param_space(kind).defaults())`.
    pub fn tuning_defaults(kind: LearnerKind) -> Self {
        LearnerParams::from_vector(kind, &param_space(kind).defaults())
            .expect("defaults lie in the box")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelState {
    /// Training data had a single class.
    Constant(u8),
    NaiveBayes(NaiveBayesModel),
    LogisticRegression(LogisticModel),
    MultilayerPerceptron(MlpModel),
    KNearestNeighbor(KnnModel),
    RandomForest(ForestModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: LearnerKind,
    pub params: LearnerParams,
    pub seed: u64,
    pub n_cols: usize,
    pub state: ModelState,
}

pub fn fit(params: &LearnerParams, train: &LabeledMatrix, seed: u64) -> Result<FittedModel> {
    if train.n_rows() == 0 {
        return Err(Error::Empty("cannot fit on zero training rows".into()));
    }
    let x = train.features();
    let y = train.labels();
    let state = if !train.has_both_classes() {
        ModelState::Constant(y[0])
    } else {
        match params {
            LearnerParams::NaiveBayes(p) => ModelState::NaiveBayes(naive_bayes::fit(p, x, y)?),
            LearnerParams::LogisticRegression(p) => {
                ModelState::LogisticRegression(logistic::fit(p, x, y)?)
            }
            LearnerParams::MultilayerPerceptron(p) => {
                ModelState::MultilayerPerceptron(mlp::fit(p, x, y, seed)?)
            }
            LearnerParams::KNearestNeighbor(p) => ModelState::KNearestNeighbor(knn::fit(p, x, y)?),
            LearnerParams::RandomForest(p) => ModelState::RandomForest(forest::fit(p, x, y, seed)?),
        }
    };
    Ok(FittedModel {
        kind: params.kind(),
        params: params.clone(),
        seed,
        n_cols: train.n_cols(),
        state,
    })
}

impl FittedModel {
    pub fn predict(&self, rows: &Features) -> Result<Vec<u8>> {
        if rows.n_rows() > 0 && rows.n_cols() != self.n_cols {
            return Err(Error::Shape {
                what: "feature columns",
                expected: self.n_cols,
                found: rows.n_cols(),
            });
        }
        Ok(rows.rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        match &self.state {
            ModelState::Constant(c) => *c,
            ModelState::NaiveBayes(m) => m.predict_row(row),
            ModelState::LogisticRegression(m) => m.predict_row(row),
            ModelState::MultilayerPerceptron(m) => m.predict_row(row),
            ModelState::KNearestNeighbor(m) => m.predict_row(row),
            ModelState::RandomForest(m) => m.predict_row(row),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(text)?;
        if m.params.kind() != m.kind {
            return Err(Error::InvalidConfig("model kind and parameters disagree".into()));
        }
        Ok(m)
    }
}

/// Majority vote with exact ties going to the SBR class.
pub(crate) fn vote(positive: usize, total: usize) -> u8 {
    if 2 * positive >= total {
        SBR
    } else {
        crate::dataset::NSBR
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_dimensions() {
        assert_eq!(param_space(LearnerKind::NaiveBayes).dims(), 1);
        assert_eq!(param_space(LearnerKind::RandomForest).dims(), 6);
        assert_eq!(param_space(LearnerKind::LogisticRegression).dims(), 3);
        assert_eq!(param_space(LearnerKind::MultilayerPerceptron).dims(), 6);
        assert_eq!(param_space(LearnerKind::KNearestNeighbor).dims(), 2);
    }

    #[test]
    fn defaults_inside_ranges() {
        for k in LearnerKind::ALL {
            let space = param_space(k);
            assert!(space.contains(&space.defaults()), "{k}");
            assert_eq!(LearnerParams::tuning_defaults(k).kind(), k);
        }
    }

    #[test]
    fn table_values() {
        let rf = param_space(LearnerKind::RandomForest);
        let ne = &rf.specs()[0];
        assert_eq!((ne.name.as_str(), ne.low, ne.high, ne.default), ("n_estimators", 10.0, 150.0, 10.0));
        let nb_space = param_space(LearnerKind::NaiveBayes);
        let nb = &nb_space.specs()[0];
        assert_eq!((nb.low, nb.high, nb.default), (0.0, 1.0, 1e-9));
        let mlp = param_space(LearnerKind::MultilayerPerceptron);
        assert_eq!(mlp.defaults().get("n_iter_no_change"), Some(10.0));
    }

    #[test]
    fn from_vector_rounds_and_clips() {
        let space = param_space(LearnerKind::KNearestNeighbor);
        let p = LearnerParams::from_vector(LearnerKind::KNearestNeighbor, &space.vector(vec![54.6, 11.0]))
            .unwrap();
        assert_eq!(
            p,
            LearnerParams::KNearestNeighbor(KnnParams {
                leaf_size: 55,
                n_neighbors: 10
            })
        );
    }

    #[test]
    fn untuned_forest_is_unconstrained() {
        match LearnerParams::untuned(LearnerKind::RandomForest) {
            LearnerParams::RandomForest(p) => {
                assert_eq!(p.max_depth, None);
                assert_eq!(p.max_leaf_nodes, None);
                assert_eq!(p.n_estimators, 10);
            }
            _ => unreachable!(),
        }
        match LearnerParams::tuning_defaults(LearnerKind::RandomForest) {
            LearnerParams::RandomForest(p) => {
                assert_eq!(p.max_depth, Some(10));
                assert_eq!(p.max_leaf_nodes, Some(50));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn learner_names_parse() {
        for k in LearnerKind::ALL {
            assert_eq!(k.short_name().parse::<LearnerKind>().unwrap(), k);
        }
    }

    #[test]
    fn single_class_is_constant() {
        let m = LabeledMatrix::unnamed(Features::zeros(3, 2), vec![1, 1, 1]).unwrap();
        for k in LearnerKind::ALL {
            let model = fit(&LearnerParams::untuned(k), &m, 0).unwrap();
            assert_eq!(model.state, ModelState::Constant(1));
            assert_eq!(model.predict(&Features::zeros(2, 2)).unwrap(), vec![1, 1]);
        }
    }

    #[test]
    fn zero_rows_and_column_mismatch() {
        let empty = LabeledMatrix::unnamed(Features::zeros(0, 2), vec![]).unwrap();
        assert!(fit(&LearnerParams::untuned(LearnerKind::NaiveBayes), &empty, 0).is_err());
        let m = LabeledMatrix::unnamed(
            Features::from_rows(2, &[[0.0, 0.0], [1.0, 1.0]]).unwrap(),
            vec![0, 1],
        )
        .unwrap();
        let model = fit(&LearnerParams::untuned(LearnerKind::NaiveBayes), &m, 0).unwrap();
        assert!(model.predict(&Features::zeros(1, 3)).is_err());
        assert!(model.predict(&Features::zeros(0, 2)).unwrap().is_empty());
    }
}
