use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::inference::{log_params, posteriors};
use super::{HmmParams, TrainConfig};
use crate::error::{Error, Result};
use crate::features::ObservationSequence;

/// What one Baum-Welch iteration saw and produced.
#[derive(Debug)]
pub struct IterationReport<'a> {
    pub iteration: usize,
    /// Total log-likelihood of the training data under the parameters that
    /// entered this iteration.
    pub log_likelihood: f64,
    /// Parameters after this iteration's M-step.
    pub model: &'a HmmParams,
}

struct SequenceStats {
    log_likelihood: f64,
    gamma: Array2<f64>,
    transitions: Array2<f64>,
}

fn expectations(model: &HmmParams, log_a: &Array2<f64>, obs: &ObservationSequence) -> Result<SequenceStats> {
    let post = posteriors(model, obs)?;
    let k = model.states();
    let ll = post.log_likelihood;
    let mut xi = Array2::zeros((k, k));
    if ll.is_finite() {
        for t in 0..obs.len().saturating_sub(1) {
            for i in 0..k {
                let a = post.log_alpha[[t, i]];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                for j in 0..k {
                    let v = a + log_a[[i, j]] + post.log_b[[t + 1, j]] + post.log_beta[[t + 1, j]] - ll;
                    xi[[i, j]] += v.exp();
                }
            }
        }
    }
    Ok(SequenceStats {
        log_likelihood: ll,
        gamma: post.gamma,
        transitions: xi,
    })
}

/// Baum-Welch over all sequences, accumulating statistics across sequences
/// before each M-step.
pub fn train(model: &HmmParams, training: &[ObservationSequence], config: &TrainConfig) -> Result<HmmParams> {
    train_traced(model, training, config, |_| {})
}

/// [`train`] with a callback after every iteration.
pub fn train_traced(
    model: &HmmParams,
    training: &[ObservationSequence],
    config: &TrainConfig,
    mut observer: impl FnMut(&IterationReport<'_>),
) -> Result<HmmParams> {
    config.validate()?;
    if training.is_empty() {
        return Err(Error::InvalidArgument("no training sequences".into()));
    }
    for obs in training {
        model.check_dim(obs)?;
    }
    let k = model.states();
    let d = model.dim();
    let mut current = model.clone();
    for iteration in 1..=config.iterations {
        let fail = |message: String| Error::Training { iteration, message };
        let (_, log_a) = log_params(&current);
        let stats: Vec<SequenceStats> = training
            .par_iter()
            .map(|obs| expectations(&current, &log_a, obs))
            .collect::<Result<_>>()?;

        let mut total_ll = 0.0;
        let mut pi_acc = Array1::<f64>::zeros(k);
        let mut trans_acc = Array2::<f64>::zeros((k, k));
        let mut occupancy = Array1::<f64>::zeros(k);
        let mut weighted_sum = Array2::<f64>::zeros((k, d));
        for (s, obs) in stats.iter().zip(training) {
            total_ll += s.log_likelihood;
            if !s.log_likelihood.is_finite() {
                return Err(fail(format!("sequence log-likelihood is {}", s.log_likelihood)));
            }
            pi_acc += &s.gamma.row(0);
            trans_acc += &s.transitions;
            for (t, frame) in obs.data.rows().into_iter().enumerate() {
                for j in 0..k {
                    let g = s.gamma[[t, j]];
                    occupancy[j] += g;
                    weighted_sum.row_mut(j).scaled_add(g, &frame);
                }
            }
        }
        if trans_acc.iter().chain(weighted_sum.iter()).any(|v| !v.is_finite()) {
            return Err(fail("non-finite sufficient statistic".into()));
        }

        let mut next = current.clone();
        let pi_total = pi_acc.sum();
        if pi_total > 0.0 {
            next.pi = pi_acc / pi_total;
        }
        for i in 0..k {
            let row_total = trans_acc.row(i).sum();
            if row_total > 0.0 {
                for j in 0..k {
                    next.transitions[[i, j]] = if current.mask[[i, j]] {
                        trans_acc[[i, j]] / row_total
                    } else {
                        0.0
                    };
                }
            }
        }
        let mut sq = Array2::<f64>::zeros((k, d));
        let mut means = current.means.clone();
        for j in 0..k {
            if occupancy[j] > 0.0 {
                let m = &weighted_sum.row(j) / occupancy[j];
                means.row_mut(j).assign(&m);
            }
        }
        for (s, obs) in stats.iter().zip(training) {
            for (t, frame) in obs.data.rows().into_iter().enumerate() {
                for j in 0..k {
                    let g = s.gamma[[t, j]];
                    if g == 0.0 {
                        continue;
                    }
                    for c in 0..d {
                        let diff = frame[c] - means[[j, c]];
                        sq[[j, c]] += g * diff * diff;
                    }
                }
            }
        }
        for j in 0..k {
            if occupancy[j] > 0.0 {
                for c in 0..d {
                    next.covariances[[j, c]] = (sq[[j, c]] / occupancy[j]).max(config.variance_floor);
                }
            }
        }
        next.means = means;
        if next.means.iter().chain(next.covariances.iter()).any(|v| !v.is_finite()) {
            return Err(fail("non-finite emission parameter".into()));
        }
        observer(&IterationReport {
            iteration,
            log_likelihood: total_ll,
            model: &next,
        });
        current = next;
    }
    Ok(current)
}
