//! Factorial HMMs: `M` independent chains whose state means are combined with
//! weight `W = 1/M`. Training is sequential, each new chain fitting the
//! residual left by the chains before it; likelihoods are exact over the
//! joint state space.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ObservationSequence;
use crate::hmm::{self, HmmParams, HmmSpec, TrainConfig};
use crate::math::{diag_gaussian_log_pdf, ln_or_log_zero, log_sum_exp};
use crate::rng::derive_seed;

/// Largest joint state space evaluated exactly.
pub const MAX_JOINT_STATES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FhmmParams {
    pub chains: Vec<HmmParams>,
}

impl FhmmParams {
    pub fn new(chains: Vec<HmmParams>) -> Result<Self> {
        let first = chains
            .first()
            .ok_or_else(|| Error::InvalidArgument("an FHMM needs at least one chain".into()))?;
        for c in &chains[1..] {
            if c.states() != first.states() || c.dim() != first.dim() || c.topology != first.topology {
                return Err(Error::Validation(
                    "all chains must share state count, dimension and topology".into(),
                ));
            }
        }
        Ok(FhmmParams { chains })
    }

    pub fn chain_count(&self) -> usize {
        self.chains.len()
    }

    pub fn states_per_chain(&self) -> usize {
        self.chains[0].states()
    }

    pub fn dim(&self) -> usize {
        self.chains[0].dim()
    }

    /// The chain weight `W = 1/M`.
    pub fn weight(&self) -> f64 {
        1.0 / self.chains.len() as f64
    }

    /// `K^M`, or an error if it exceeds [`MAX_JOINT_STATES`].
    pub fn joint_states(&self) -> Result<usize> {
        let k = self.states_per_chain() as u128;
        let total = (0..self.chain_count()).try_fold(1u128, |acc, _| acc.checked_mul(k));
        match total {
            Some(n) if n <= MAX_JOINT_STATES as u128 => Ok(n as usize),
            other => Err(Error::StateSpaceTooLarge {
                states: other.unwrap_or(u128::MAX),
                limit: MAX_JOINT_STATES,
            }),
        }
    }

    /// Mixed-radix index of a joint state, chain 1 most significant.
    pub fn encode_joint(&self, joint: &[usize]) -> usize {
        let k = self.states_per_chain();
        joint.iter().fold(0, |acc, s| acc * k + s)
    }

    pub fn decode_joint(&self, mut index: usize) -> Vec<usize> {
        let k = self.states_per_chain();
        let mut out = vec![0; self.chain_count()];
        for slot in out.iter_mut().rev() {
            *slot = index % k;
            index /= k;
        }
        out
    }
}

/// Posterior-weighted chain mean `c_t = Σ_k μ_k γ_{t,k}` from a fresh
/// forward-backward pass.
pub fn chain_contribution(chain: &HmmParams, obs: &ObservationSequence) -> Result<Array2<f64>> {
    let post = hmm::posteriors(chain, obs)?;
    Ok(post.gamma.dot(&chain.means))
}

/// Residual `e_t = (1/W)·(o_t − Σ_i W·c_t^(i))` against the chains trained so far.
pub fn residual(obs: &ObservationSequence, contributions: &[Array2<f64>], weight: f64) -> Result<Array2<f64>> {
    let mut acc = obs.data.clone();
    for c in contributions {
        if c.dim() != obs.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: obs.dim(),
                found: c.ncols(),
            });
        }
        acc.scaled_add(-weight, c);
    }
    Ok(acc / weight)
}

/// Trains `chains` chains one after another; chain 1 sees the raw data,
/// every later chain the residual of its predecessors.
pub fn sequential_train(
    training: &[ObservationSequence],
    chains: usize,
    spec: &HmmSpec,
    config: &TrainConfig,
) -> Result<FhmmParams> {
    if chains == 0 {
        return Err(Error::InvalidArgument("chain count must be at least 1".into()));
    }
    let weight = 1.0 / chains as f64;
    let mut trained: Vec<HmmParams> = Vec::with_capacity(chains);
    let mut contributions: Vec<Vec<Array2<f64>>> = vec![Vec::new(); training.len()];
    for m in 0..chains {
        let chain_config = TrainConfig {
            seed: if m == 0 {
                config.seed
            } else {
                derive_seed(config.seed, "fhmm-chain", m as u64)
            },
            ..*config
        };
        let data: Vec<ObservationSequence> = if m == 0 {
            training.to_vec()
        } else {
            training
                .iter()
                .zip(&contributions)
                .map(|(obs, contrib)| Ok(ObservationSequence::new(residual(obs, contrib, weight)?, obs.dt)))
                .collect::<Result<_>>()?
        };
        let chain = hmm::fit(&data, spec, &chain_config)?;
        if m + 1 < chains {
            for (obs, contrib) in training.iter().zip(contributions.iter_mut()) {
                contrib.push(chain_contribution(&chain, obs)?);
            }
        }
        trained.push(chain);
    }
    FhmmParams::new(trained)
}

/// Emission of a joint state: `μ = W·Σ_m μ^(m)`, `Σ = W²·Σ_m Σ^(m)`.
pub fn combined_emission(model: &FhmmParams, joint: &[usize]) -> Result<(Array1<f64>, Array1<f64>)> {
    if joint.len() != model.chain_count() {
        return Err(Error::DimensionMismatch {
            expected: model.chain_count(),
            found: joint.len(),
        });
    }
    let w = model.weight();
    let d = model.dim();
    let mut mean = Array1::zeros(d);
    let mut var = Array1::zeros(d);
    for (chain, &s) in model.chains.iter().zip(joint) {
        if s >= chain.states() {
            return Err(Error::InvalidArgument(format!(
                "state {s} out of range for {} states",
                chain.states()
            )));
        }
        mean += &chain.means.row(s);
        var += &chain.covariances.row(s);
    }
    Ok((mean * w, var * (w * w)))
}

fn joint_emissions(model: &FhmmParams, n: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = model.dim();
    let mut means = Array2::zeros((n, d));
    let mut vars = Array2::zeros((n, d));
    for idx in 0..n {
        let (m, v) = combined_emission(model, &model.decode_joint(idx))?;
        means.row_mut(idx).assign(&m);
        vars.row_mut(idx).assign(&v);
    }
    Ok((means, vars))
}

/// The equivalent ordinary HMM over all `K^M` joint states.
pub fn flatten(model: &FhmmParams) -> Result<HmmParams> {
    let n = model.joint_states()?;
    let joints: Vec<Vec<usize>> = (0..n).map(|i| model.decode_joint(i)).collect();
    let pi = Array1::from_shape_fn(n, |i| {
        model.chains.iter().zip(&joints[i]).map(|(c, &s)| c.pi[s]).product()
    });
    let mut transitions = Array2::zeros((n, n));
    let mut mask = Array2::from_elem((n, n), false);
    for i in 0..n {
        for j in 0..n {
            let mut p = 1.0;
            let mut allowed = true;
            for (c, (&a, &b)) in model.chains.iter().zip(joints[i].iter().zip(&joints[j])) {
                p *= c.transitions[[a, b]];
                allowed &= c.mask[[a, b]];
            }
            transitions[[i, j]] = p;
            mask[[i, j]] = allowed;
        }
    }
    let (means, covariances) = joint_emissions(model, n)?;
    HmmParams::new(None, pi, transitions, means, covariances, mask)
}

/// Exact `log p(O | FHMM)` by a forward pass over joint states that applies
/// each chain's transition matrix separately.
pub fn log_likelihood(model: &FhmmParams, obs: &ObservationSequence) -> Result<f64> {
    if obs.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: obs.dim(),
        });
    }
    let n = model.joint_states()?;
    let t_len = obs.len();
    if t_len == 0 {
        return Ok(0.0);
    }
    let k = model.states_per_chain();
    let m = model.chain_count();
    let (means, vars) = joint_emissions(model, n)?;
    let log_a: Vec<Array2<f64>> = model
        .chains
        .iter()
        .map(|c| c.transitions.mapv(ln_or_log_zero))
        .collect();
    let log_pi: Vec<Array1<f64>> = model.chains.iter().map(|c| c.pi.mapv(ln_or_log_zero)).collect();
    let emit = |t: usize, idx: usize| {
        diag_gaussian_log_pdf(
            obs.data.row(t).as_slice().expect("standard layout"),
            means.row(idx).as_slice().expect("standard layout"),
            vars.row(idx).as_slice().expect("standard layout"),
        )
    };
    let mut alpha: Vec<f64> = (0..n)
        .map(|idx| {
            let start: f64 = model
                .decode_joint(idx)
                .iter()
                .enumerate()
                .map(|(c, &s)| log_pi[c][s])
                .sum();
            start + emit(0, idx)
        })
        .collect();
    let mut scratch = vec![0.0; n];
    let mut buf = vec![0.0; k];
    for t in 1..t_len {
        for (c, la) in log_a.iter().enumerate() {
            let stride = k.pow((m - 1 - c) as u32);
            let block = stride * k;
            for base in (0..n).step_by(block) {
                for inner in 0..stride {
                    for j in 0..k {
                        for (i, b) in buf.iter_mut().enumerate() {
                            *b = alpha[base + i * stride + inner] + la[[i, j]];
                        }
                        scratch[base + j * stride + inner] = log_sum_exp(&buf);
                    }
                }
            }
            std::mem::swap(&mut alpha, &mut scratch);
        }
        for (idx, a) in alpha.iter_mut().enumerate() {
            *a += emit(t, idx);
        }
    }
    Ok(log_sum_exp(&alpha))
}

#[derive(Serialize, Deserialize)]
struct FhmmJson {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "W")]
    w: f64,
    chains: Vec<HmmParams>,
}

impl Serialize for FhmmParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FhmmJson {
            m: self.chain_count(),
            w: self.weight(),
            chains: self.chains.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FhmmParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = FhmmJson::deserialize(d)?;
        if j.m != j.chains.len() {
            return Err(D::Error::custom(format!("M = {} but {} chains", j.m, j.chains.len())));
        }
        FhmmParams::new(j.chains).map_err(D::Error::custom)
    }
}
