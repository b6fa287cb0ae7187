//! Gaussian-emission hidden Markov models with diagonal covariances.
//!
//! All probability arithmetic happens in the natural-log domain; `A` and `π`
//! are stored as plain probabilities so that forbidden transitions are exact
//! zeros.

mod inference;
mod init;
mod sample;
mod train;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ObservationSequence;
use crate::rng::derive_seed;

pub use inference::{backward, forward, log_emissions, log_likelihood, posteriors, viterbi, Posteriors};
pub use init::{init_emission_kmeans, init_emission_random, init_transition, kmeans, KMeans, RandomEmission};
pub use sample::{sample, sample_with_states};
pub use train::{train, train_traced, IterationReport};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Ergodic,
    /// Forward-only transitions; `delta` caps the number of states skipped.
    LeftToRight {
        delta: Option<usize>,
    },
}

impl Topology {
    pub fn left_to_right(delta: usize) -> Self {
        Topology::LeftToRight { delta: Some(delta) }
    }

    /// Allowed-transition mask for `k` states.
    pub fn mask(self, k: usize) -> Array2<bool> {
        Array2::from_shape_fn((k, k), |(i, j)| match self {
            Topology::Ergodic => true,
            Topology::LeftToRight { delta } => j >= i && delta.is_none_or(|d| j <= i + d),
        })
    }

    pub fn start_mask(self, k: usize) -> Array1<bool> {
        Array1::from_shape_fn(k, |i| match self {
            Topology::Ergodic => true,
            Topology::LeftToRight { .. } => i == 0,
        })
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Topology::LeftToRight { delta: Some(0) } => {
                Err(Error::InvalidArgument("left-to-right delta must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Topology::Ergodic => f.write_str("ergodic"),
            Topology::LeftToRight { delta: None } => f.write_str("left-to-right"),
            Topology::LeftToRight { delta: Some(d) } => write!(f, "left-to-right(delta={d})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionInit {
    Uniform,
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionInit {
    KMeans,
    Random { diagonal: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::InvalidArgument("variance floor must be positive".into()));
        }
        Ok(())
    }
}

/// How to build an untrained model: state count, topology and init strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HmmSpec {
    pub states: usize,
    pub topology: Topology,
    pub transition_init: TransitionInit,
    pub emission_init: EmissionInit,
}

impl HmmSpec {
    pub fn new(states: usize, topology: Topology) -> Self {
        HmmSpec {
            states,
            topology,
            transition_init: TransitionInit::Uniform,
            emission_init: EmissionInit::KMeans,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    pub topology: Option<Topology>,
    pub pi: Array1<f64>,
    pub transitions: Array2<f64>,
    /// K×D state means.
    pub means: Array2<f64>,
    /// K×D diagonal covariance entries.
    pub covariances: Array2<f64>,
    pub mask: Array2<bool>,
}

impl HmmParams {
    pub fn new(
        topology: Option<Topology>,
        pi: Array1<f64>,
        transitions: Array2<f64>,
        means: Array2<f64>,
        covariances: Array2<f64>,
        mask: Array2<bool>,
    ) -> Result<Self> {
        let model = HmmParams {
            topology,
            pi,
            transitions,
            means,
            covariances,
            mask,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn states(&self) -> usize {
        self.pi.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Checks shapes, stochasticity (1e-9) and the topology mask.
    pub fn validate(&self) -> Result<()> {
        let k = self.states();
        let d = self.dim();
        let bad = |m: String| Err(Error::Validation(m));
        if k == 0 {
            return bad("model has no states".into());
        }
        if self.transitions.dim() != (k, k) || self.mask.dim() != (k, k) {
            return bad(format!("transition matrix must be {k}x{k}"));
        }
        if self.means.nrows() != k || self.covariances.dim() != (k, d) {
            return bad(format!("emission parameters must be {k}x{d}"));
        }
        if (self.pi.sum() - 1.0).abs() > 1e-9 || self.pi.iter().any(|p| !(*p >= 0.0)) {
            return bad("start probabilities do not form a distribution".into());
        }
        for (i, row) in self.transitions.rows().into_iter().enumerate() {
            if (row.sum() - 1.0).abs() > 1e-9 || row.iter().any(|p| !(*p >= 0.0)) {
                return bad(format!("transition row {i} does not form a distribution"));
            }
        }
        if self
            .transitions
            .iter()
            .zip(self.mask.iter())
            .any(|(a, allowed)| !allowed && *a != 0.0)
        {
            return bad("transition matrix violates the topology mask".into());
        }
        if let Some(t) = self.topology {
            if self
                .pi
                .iter()
                .zip(t.start_mask(k).iter())
                .any(|(p, allowed)| !allowed && *p != 0.0)
            {
                return bad("start probabilities violate the topology".into());
            }
        }
        if self.means.iter().any(|v| !v.is_finite()) {
            return bad("non-finite mean".into());
        }
        if self.covariances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("covariances must be positive".into());
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, obs: &ObservationSequence) -> Result<()> {
        if obs.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: obs.dim(),
            });
        }
        Ok(())
    }
}

/// Builds an untrained model for `training` according to `spec`.
pub fn initialize(training: &[ObservationSequence], spec: &HmmSpec, config: &TrainConfig) -> Result<HmmParams> {
    spec.topology.validate()?;
    config.validate()?;
    let d = training
        .first()
        .map(ObservationSequence::dim)
        .ok_or_else(|| Error::InvalidArgument("no training sequences".into()))?;
    let (pi, transitions, mask) = init_transition(
        spec.states,
        spec.topology,
        spec.transition_init,
        derive_seed(config.seed, "transitions", 0),
    )?;
    let emission_seed = derive_seed(config.seed, "emissions", 0);
    let (means, covariances) = match spec.emission_init {
        EmissionInit::KMeans => init_emission_kmeans(training, spec.states, emission_seed, config.variance_floor)?,
        EmissionInit::Random { diagonal } => {
            let r = init_emission_random(spec.states, d, emission_seed, diagonal)?;
            let covs = r.diagonals().mapv(|v| v.max(config.variance_floor));
            (r.means, covs)
        }
    };
    HmmParams::new(Some(spec.topology), pi, transitions, means, covariances, mask)
}

/// Initializes and trains a model with Baum-Welch.
pub fn fit(training: &[ObservationSequence], spec: &HmmSpec, config: &TrainConfig) -> Result<HmmParams> {
    let model = initialize(training, spec, config)?;
    train(&model, training, config)
}

#[derive(Serialize, Deserialize)]
struct HmmJson {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: usize,
    topology: Option<Topology>,
    pi: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
}

pub(crate) fn rows<T: Clone>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn from_rows<T: Clone>(rows: Vec<Vec<T>>, ncols: usize) -> Result<Array2<T>> {
    let nrows = rows.len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation(format!("ragged matrix, expected {ncols} columns")));
    }
    Ok(Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect()).expect("checked"))
}

impl Serialize for HmmParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HmmJson {
            k: self.states(),
            d: self.dim(),
            topology: self.topology,
            pi: self.pi.to_vec(),
            a: rows(&self.transitions),
            means: rows(&self.means),
            covariances: rows(&self.covariances),
            mask: rows(&self.mask),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HmmParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = HmmJson::deserialize(d)?;
        let build = || -> Result<HmmParams> {
            if j.pi.len() != j.k {
                return Err(Error::Validation(format!("pi has {} entries, K = {}", j.pi.len(), j.k)));
            }
            HmmParams::new(
                j.topology,
                Array1::from(j.pi),
                from_rows(j.a, j.k)?,
                from_rows(j.means, j.d)?,
                from_rows(j.covariances, j.d)?,
                from_rows(j.mask, j.k)?,
            )
        };
        build().map_err(D::Error::custom)
    }
}
