//! Decision makers turning a vector of per-model loglikelihoods into a
//! binary label vector.

pub mod linear;
pub mod tree;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabelVector;
use crate::error::{Error, Result};
use crate::math::argmax;

pub use linear::{fit_linear_svm, fit_logistic, predict_linear, LinearModel, Loss, Penalty};
pub use tree::{fit_forest, fit_tree, predict_forest, predict_tree, Criterion, Forest, TreeConfig, TreeNode};

/// N samples × M models of loglikelihoods.
pub type LikelihoodMatrix = Array2<f64>;

/// One-hot at the largest likelihood, lowest index on ties.
pub fn max_decision(likelihoods: &[f64]) -> Result<LabelVector> {
    if likelihoods.iter().all(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
        return Err(Error::InvalidArgument("every model assigned zero likelihood".into()));
    }
    let best = argmax(likelihoods).expect("non-empty");
    Ok(LabelVector::one_hot(likelihoods.len(), best))
}

/// Bit m set iff `likelihoods[m] >= boundaries[m]`.
pub fn threshold_decision(likelihoods: &[f64], boundaries: &[f64]) -> Result<LabelVector> {
    if likelihoods.len() != boundaries.len() {
        return Err(Error::DimensionMismatch {
            expected: boundaries.len(),
            found: likelihoods.len(),
        });
    }
    Ok(LabelVector::new(
        likelihoods.iter().zip(boundaries).map(|(l, b)| l >= b).collect(),
    ))
}

/// Replaces non-finite inputs with the smallest finite training value of
/// the same column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub fill: Vec<f64>,
}

impl Imputer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Imputer {
        let fill = x
            .columns()
            .into_iter()
            .map(|c| {
                let min = c
                    .iter()
                    .copied()
                    .filter(|v| v.is_finite())
                    .fold(f64::INFINITY, f64::min);
                if min.is_finite() {
                    min
                } else {
                    0.0
                }
            })
            .collect();
        Imputer { fill }
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.fill)
            .map(|(&v, &f)| if v.is_finite() { v } else { f })
            .collect()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (v, &f) in row.iter_mut().zip(&self.fill) {
                if !v.is_finite() {
                    *v = f;
                }
            }
        }
        out
    }
}

/// One binary linear model per label, each seeing the full likelihood vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryRelevance {
    pub imputer: Imputer,
    pub models: Vec<LinearModel>,
}

impl BinaryRelevance {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[LabelVector], loss: Loss, penalty: Penalty, c: f64) -> Result<Self> {
        let labels = label_width(x, y)?;
        let imputer = Imputer::fit(x);
        let clean = imputer.apply(x);
        let models = (0..labels)
            .into_par_iter()
            .map(|j| {
                let col: Vec<bool> = y.iter().map(|v| v.get(j)).collect();
                match loss {
                    Loss::Logistic => fit_logistic(clean.view(), &col, penalty, c),
                    Loss::SquaredHinge => fit_linear_svm(clean.view(), &col, penalty, c),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BinaryRelevance { imputer, models })
    }

    pub fn predict(&self, x: &[f64]) -> Result<LabelVector> {
        let clean = self.imputer.apply_row(x);
        self.models
            .iter()
            .map(|m| predict_linear(m, &clean))
            .collect::<Result<Vec<_>>>()
            .map(LabelVector::new)
    }
}

fn label_width(x: ArrayView2<'_, f64>, y: &[LabelVector]) -> Result<usize> {
    if y.len() != x.nrows() || y.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let l = y[0].len();
    if y.iter().any(|v| v.len() != l) {
        return Err(Error::Validation("label rows differ in width".into()));
    }
    Ok(l)
}

/// Hyperparameters of a decision maker, before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionConfig {
    Max,
    Threshold {
        boundary: f64,
    },
    Logistic {
        penalty: Penalty,
        #[serde(rename = "C")]
        c: f64,
    },
    LinearSvm {
        penalty: Penalty,
        #[serde(rename = "C")]
        c: f64,
    },
    Tree {
        criterion: Criterion,
        max_depth: usize,
    },
    Forest {
        criterion: Criterion,
        max_depth: usize,
        trees: usize,
    },
}

impl DecisionConfig {
    /// Logistic regression, L1, C = 1e-3.
    pub fn sparse_logistic() -> Self {
        DecisionConfig::Logistic {
            penalty: Penalty::L1,
            c: 1e-3,
        }
    }

    pub fn name(&self) -> String {
        match self {
            DecisionConfig::Max => "max".into(),
            DecisionConfig::Threshold { boundary } => format!("threshold({boundary})"),
            DecisionConfig::Logistic { penalty, c } => format!("logistic({penalty:?},C={c:e})"),
            DecisionConfig::LinearSvm { penalty, c } => format!("linear_svm({penalty:?},C={c:e})"),
            DecisionConfig::Tree { criterion, max_depth } => format!("tree({criterion:?},depth={max_depth})"),
            DecisionConfig::Forest {
                criterion,
                max_depth,
                trees,
            } => format!("forest({criterion:?},depth={max_depth},trees={trees})"),
        }
    }
}

/// A fitted decision maker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionMaker {
    Max,
    Threshold { boundaries: Vec<f64> },
    BinaryRelevance(BinaryRelevance),
    Tree { imputer: Imputer, tree: TreeNode },
    Forest { imputer: Imputer, forest: Forest },
}

impl DecisionMaker {
    pub fn fit(config: &DecisionConfig, x: ArrayView2<'_, f64>, y: &[LabelVector], seed: u64) -> Result<Self> {
        let labels = label_width(x, y)?;
        Ok(match *config {
            DecisionConfig::Max => {
                if labels != x.ncols() {
                    return Err(Error::DimensionMismatch {
                        expected: labels,
                        found: x.ncols(),
                    });
                }
                DecisionMaker::Max
            }
            DecisionConfig::Threshold { boundary } => DecisionMaker::Threshold {
                boundaries: vec![boundary; x.ncols()],
            },
            DecisionConfig::Logistic { penalty, c } => {
                DecisionMaker::BinaryRelevance(BinaryRelevance::fit(x, y, Loss::Logistic, penalty, c)?)
            }
            DecisionConfig::LinearSvm { penalty, c } => {
                DecisionMaker::BinaryRelevance(BinaryRelevance::fit(x, y, Loss::SquaredHinge, penalty, c)?)
            }
            DecisionConfig::Tree { criterion, max_depth } => {
                let imputer = Imputer::fit(x);
                let config = TreeConfig {
                    criterion,
                    max_depth,
                    feature_subset: None,
                };
                let tree = fit_tree(imputer.apply(x).view(), y, config, seed)?;
                DecisionMaker::Tree { imputer, tree }
            }
            DecisionConfig::Forest {
                criterion,
                max_depth,
                trees,
            } => {
                let imputer = Imputer::fit(x);
                let forest = fit_forest(imputer.apply(x).view(), y, trees, criterion, max_depth, seed)?;
                DecisionMaker::Forest { imputer, forest }
            }
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<LabelVector> {
        let check = |n: usize| {
            if x.len() == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: n,
                    found: x.len(),
                })
            }
        };
        match self {
            DecisionMaker::Max => max_decision(x),
            DecisionMaker::Threshold { boundaries } => threshold_decision(x, boundaries),
            DecisionMaker::BinaryRelevance(br) => br.predict(x),
            DecisionMaker::Tree { imputer, tree } => {
                check(imputer.fill.len())?;
                Ok(predict_tree(tree, &imputer.apply_row(x)))
            }
            DecisionMaker::Forest { imputer, forest } => {
                check(imputer.fill.len())?;
                Ok(predict_forest(forest, &imputer.apply_row(x)))
            }
        }
    }
}
