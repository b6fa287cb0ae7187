//! Backward-elimination feature selection scored by the median per-class
//! Wasserstein separation between positive and negative loglikelihoods.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MotionRecord};
use crate::error::{Error, Result};
use crate::evaluation::{stratified_kfold, FoldAssignment};
use crate::features::FeatureSpec;
use crate::math::median;
use crate::rng::derive_seed;
use crate::systems::{FeaturePipeline, ModelConfig};

/// `sqrt(|μp − μn| + σp² + σn² − 2·sqrt(σp²σn²))`. Note the mean term is not squared.
pub fn wasserstein(mu_p: f64, sigma_p: f64, mu_n: f64, sigma_n: f64) -> f64 {
    let (vp, vn) = (sigma_p * sigma_p, sigma_n * sigma_n);
    ((mu_p - mu_n).abs() + (vp + vn - 2.0 * (vp * vn).sqrt()).max(0.0)).sqrt()
}

/// Moments of one class's pooled positive and negative loglikelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: String,
    pub n_pos: usize,
    pub mean_pos: f64,
    pub std_pos: f64,
    pub n_neg: usize,
    pub mean_neg: f64,
    pub std_neg: f64,
}

fn moments(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ClassStats {
    pub fn from_samples(label: impl Into<String>, positives: &[f64], negatives: &[f64]) -> Self {
        let (mean_pos, std_pos) = moments(positives);
        let (mean_neg, std_neg) = moments(negatives);
        ClassStats {
            label: label.into(),
            n_pos: positives.len(),
            mean_pos,
            std_pos,
            n_neg: negatives.len(),
            mean_neg,
            std_neg,
        }
    }

    pub fn distance(&self) -> f64 {
        wasserstein(self.mean_pos, self.std_pos, self.mean_neg, self.std_neg)
    }
}

/// Median per-class distance divided by the feature dimension. Classes whose
/// distance is undefined are skipped; NaN when none remain.
pub fn score_feature_set(stats: &[ClassStats], dimension: usize) -> Result<f64> {
    if dimension == 0 {
        return Err(Error::InvalidArgument("feature dimension must be positive".into()));
    }
    if stats.is_empty() {
        return Err(Error::InvalidArgument("no classes to score".into()));
    }
    let distances: Vec<f64> = stats
        .iter()
        .map(ClassStats::distance)
        .filter(|d| d.is_finite())
        .collect();
    Ok(median(&distances).map_or(f64::NAN, |m| m / dimension as f64))
}

/// Trains one model per label on each training fold and pools the test-fold
/// loglikelihoods of every label into positives and negatives.
pub fn class_likelihood_stats(
    dataset: &Dataset,
    features: &FeatureSpec,
    model: &ModelConfig,
    folds: &FoldAssignment,
    seed: u64,
) -> Result<Vec<ClassStats>> {
    let labels = dataset.vocabulary.labels();
    let mut pos = vec![Vec::new(); labels.len()];
    let mut neg = vec![Vec::new(); labels.len()];
    for fold in 0..folds.k {
        let train_idx = folds.train_indices(fold);
        let test_idx = folds.test_indices(fold);
        let train_records: Vec<&MotionRecord> = train_idx.iter().map(|&i| &dataset.samples[i].record).collect();
        let (pipeline, obs) = FeaturePipeline::fit(features, &train_records)?;
        let fold_seed = derive_seed(seed, "fold", fold as u64);
        let models = (0..labels.len())
            .into_par_iter()
            .map(|l| {
                let training: Vec<_> = train_idx
                    .iter()
                    .zip(&obs)
                    .filter(|(&i, _)| dataset.samples[i].labels.get(l))
                    .map(|(_, o)| o.clone())
                    .collect();
                if training.is_empty() {
                    return Ok(None);
                }
                model
                    .fit(&training, derive_seed(fold_seed, "label", l as u64))
                    .map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = test_idx
            .par_iter()
            .map(|&i| {
                let o = pipeline.transform(&dataset.samples[i].record)?;
                models
                    .iter()
                    .map(|m| m.as_ref().map(|m| m.log_likelihood(&o)).transpose())
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (&i, row) in test_idx.iter().zip(rows) {
            for (l, ll) in row.into_iter().enumerate() {
                if let Some(ll) = ll {
                    if dataset.samples[i].labels.get(l) {
                        pos[l].push(ll);
                    } else {
                        neg[l].push(ll);
                    }
                }
            }
        }
    }
    Ok(labels
        .iter()
        .zip(pos.iter().zip(&neg))
        .map(|(name, (p, n))| ClassStats::from_samples(name.clone(), p, n))
        .collect())
}

/// Score of one feature set; numerical failures are reported as NaN.
pub fn evaluate_feature_set(
    dataset: &Dataset,
    features: &FeatureSpec,
    model: &ModelConfig,
    folds: &FoldAssignment,
    seed: u64,
) -> Result<(f64, usize)> {
    let record = &dataset
        .samples
        .first()
        .ok_or_else(|| Error::Validation("empty dataset".into()))?
        .record;
    let dimension = features.dimension(record)?;
    let score = match class_likelihood_stats(dataset, features, model, folds, seed) {
        Ok(stats) => score_feature_set(&stats, dimension)?,
        Err(e) if is_numerical(&e) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok((score, dimension))
}

fn is_numerical(e: &Error) -> bool {
    match e {
        Error::Training { .. } | Error::Validation(_) => true,
        Error::Context { source, .. } => is_numerical(source),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub feature: String,
    pub score: f64,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationRound {
    pub round: usize,
    pub score: f64,
    pub dimension: usize,
    /// `None` for the baseline round on the full set.
    pub dropped: Option<String>,
    pub remaining: Vec<String>,
    pub candidates: Vec<CandidateScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationTrace {
    pub rounds: Vec<EliminationRound>,
}

impl EliminationTrace {
    /// Rounds that removed a feature.
    pub fn drops(&self) -> impl Iterator<Item = &EliminationRound> {
        self.rounds.iter().filter(|r| r.dropped.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,score,dimension,dropped_feature\n");
        for r in &self.rounds {
            out.push_str(&format!(
                "{},{:?},{},{}\n",
                r.round,
                r.score,
                r.dimension,
                r.dropped.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

impl fmt::Display for EliminationTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:>14} {:>10}  Deleted Feature", "Round", "Score", "Dimension")?;
        for r in &self.rounds {
            writeln!(
                f,
                "{:<6} {:>14.3} {:>10}  {}",
                r.round,
                r.score,
                r.dimension,
                r.dropped.as_deref().unwrap_or("-")
            )?;
        }
        if let Some(last) = self.rounds.last() {
            writeln!(f, "Remaining: {}", last.remaining.join(", "))?;
        }
        Ok(())
    }
}

/// Removes one feature per round until `min_features` remain, each time the
/// one whose removal gives the highest score.
pub fn backward_eliminate(
    dataset: &Dataset,
    base: &FeatureSpec,
    model: &ModelConfig,
    k: usize,
    seed: u64,
    min_features: usize,
) -> Result<EliminationTrace> {
    if base.features.len() < 2 {
        return Err(Error::InvalidArgument(
            "backward elimination needs at least two features".into(),
        ));
    }
    base.resolve()?;
    let folds = stratified_kfold(&dataset.label_matrix(), k, derive_seed(seed, "folds", 0))?;
    let (score, dimension) = evaluate_feature_set(dataset, base, model, &folds, seed)?;
    let mut current = base.clone();
    let mut rounds = vec![EliminationRound {
        round: 1,
        score,
        dimension,
        dropped: None,
        remaining: current.features.clone(),
        candidates: Vec::new(),
    }];
    let stop = min_features.max(1);
    while current.features.len() > stop {
        let candidates = current
            .features
            .par_iter()
            .map(|f| {
                let (score, dimension) = evaluate_feature_set(dataset, &current.without(f), model, &folds, seed)?;
                Ok(CandidateScore {
                    feature: f.clone(),
                    score,
                    dimension,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let best = candidates
            .iter()
            .filter(|c| !c.score.is_nan())
            .max_by(|a, b| a.score.total_cmp(&b.score).then_with(|| b.feature.cmp(&a.feature)))
            .ok_or_else(|| Error::Validation(format!("every candidate failed in round {}", rounds.len() + 1)))?
            .clone();
        current = current.without(&best.feature);
        rounds.push(EliminationRound {
            round: rounds.len() + 1,
            score: best.score,
            dimension: best.dimension,
            dropped: Some(best.feature),
            remaining: current.features.clone(),
            candidates,
        });
    }
    Ok(EliminationTrace { rounds })
}
