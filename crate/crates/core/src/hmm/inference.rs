use ndarray::{Array1, Array2};

use super::HmmParams;
use crate::error::Result;
use crate::features::ObservationSequence;
use crate::math::{diag_gaussian_log_pdf, ln_or_log_zero, log_sum_exp, LOG_ZERO};

/// T×K matrix of per-frame, per-state emission log densities.
pub fn log_emissions(model: &HmmParams, obs: &ObservationSequence) -> Result<Array2<f64>> {
    model.check_dim(obs)?;
    let k = model.states();
    let mut out = Array2::zeros((obs.len(), k));
    for (t, frame) in obs.data.rows().into_iter().enumerate() {
        let x = frame.to_vec();
        for s in 0..k {
            out[[t, s]] = diag_gaussian_log_pdf(
                &x,
                model.means.row(s).as_slice().expect("standard layout"),
                model.covariances.row(s).as_slice().expect("standard layout"),
            );
        }
    }
    Ok(out)
}

pub(crate) fn log_params(model: &HmmParams) -> (Array1<f64>, Array2<f64>) {
    (model.pi.mapv(ln_or_log_zero), model.transitions.mapv(ln_or_log_zero))
}

/// Log-domain forward pass; returns `log α` and `log p(O | λ)`.
pub fn forward(log_pi: &Array1<f64>, log_a: &Array2<f64>, log_b: &Array2<f64>) -> (Array2<f64>, f64) {
    let (t_len, k) = log_b.dim();
    let mut alpha = Array2::from_elem((t_len, k), LOG_ZERO);
    if t_len == 0 {
        return (alpha, 0.0);
    }
    for s in 0..k {
        alpha[[0, s]] = log_pi[s] + log_b[[0, s]];
    }
    let mut buf = vec![0.0; k];
    for t in 1..t_len {
        for j in 0..k {
            for i in 0..k {
                buf[i] = alpha[[t - 1, i]] + log_a[[i, j]];
            }
            alpha[[t, j]] = log_sum_exp(&buf) + log_b[[t, j]];
        }
    }
    let ll = log_sum_exp(alpha.row(t_len - 1).as_slice().expect("standard layout"));
    (alpha, ll)
}

/// Log-domain backward pass (`log β`, with `β_T = 1`).
pub fn backward(log_a: &Array2<f64>, log_b: &Array2<f64>) -> Array2<f64> {
    let (t_len, k) = log_b.dim();
    let mut beta = Array2::from_elem((t_len, k), LOG_ZERO);
    if t_len == 0 {
        return beta;
    }
    beta.row_mut(t_len - 1).fill(0.0);
    let mut buf = vec![0.0; k];
    for t in (0..t_len - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = log_a[[i, j]] + log_b[[t + 1, j]] + beta[[t + 1, j]];
            }
            beta[[t, i]] = log_sum_exp(&buf);
        }
    }
    beta
}

/// Forward-backward quantities for one sequence.
#[derive(Debug, Clone)]
pub struct Posteriors {
    pub log_likelihood: f64,
    /// T×K state posteriors `γ`.
    pub gamma: Array2<f64>,
    pub log_alpha: Array2<f64>,
    pub log_beta: Array2<f64>,
    pub log_b: Array2<f64>,
}

/// State posteriors `γ_{t,k}` via forward-backward. For an impossible
/// sequence the log-likelihood is `-inf` and `γ` is all zeros.
pub fn posteriors(model: &HmmParams, obs: &ObservationSequence) -> Result<Posteriors> {
    let log_b = log_emissions(model, obs)?;
    let (log_pi, log_a) = log_params(model);
    let (log_alpha, ll) = forward(&log_pi, &log_a, &log_b);
    let log_beta = backward(&log_a, &log_b);
    let mut gamma = Array2::zeros(log_b.raw_dim());
    if ll.is_finite() {
        for ((g, a), b) in gamma.iter_mut().zip(log_alpha.iter()).zip(log_beta.iter()) {
            *g = (a + b - ll).exp();
        }
    }
    Ok(Posteriors {
        log_likelihood: ll,
        gamma,
        log_alpha,
        log_beta,
        log_b,
    })
}

/// `log p(O | λ)`; may be positive since emissions are densities.
pub fn log_likelihood(model: &HmmParams, obs: &ObservationSequence) -> Result<f64> {
    let log_b = log_emissions(model, obs)?;
    let (log_pi, log_a) = log_params(model);
    Ok(forward(&log_pi, &log_a, &log_b).1)
}

/// Most likely state path and its joint log-probability. Ties go to the
/// lower state index; an impossible sequence yields an empty path and `-inf`.
pub fn viterbi(model: &HmmParams, obs: &ObservationSequence) -> Result<(Vec<usize>, f64)> {
    let log_b = log_emissions(model, obs)?;
    let (log_pi, log_a) = log_params(model);
    let (t_len, k) = log_b.dim();
    if t_len == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut delta = Array2::from_elem((t_len, k), LOG_ZERO);
    let mut back = Array2::<usize>::zeros((t_len, k));
    for s in 0..k {
        delta[[0, s]] = log_pi[s] + log_b[[0, s]];
    }
    for t in 1..t_len {
        for j in 0..k {
            let mut best = LOG_ZERO;
            let mut arg = 0;
            for i in 0..k {
                let v = delta[[t - 1, i]] + log_a[[i, j]];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            delta[[t, j]] = best + log_b[[t, j]];
            back[[t, j]] = arg;
        }
    }
    let mut last = 0;
    let mut best = LOG_ZERO;
    for s in 0..k {
        if delta[[t_len - 1, s]] > best {
            best = delta[[t_len - 1, s]];
            last = s;
        }
    }
    if best == LOG_ZERO {
        return Ok((Vec::new(), LOG_ZERO));
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[[t, path[t]]];
    }
    Ok((path, best))
}
