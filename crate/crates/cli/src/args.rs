//! Shared option groups and the small string formats they accept.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use motionhmm::classifiers::{Criterion, DecisionConfig, Penalty};
use motionhmm::hmm::{EmissionInit, HmmSpec, Topology, TrainConfig, TransitionInit};
use motionhmm::systems::{ModelConfig, SystemConfig};
use motionhmm::FeatureSpec;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Hmm,
    Fhmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopologyArg {
    Ergodic,
    LeftToRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransitionInitArg {
    Uniform,
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmissionInitArg {
    Kmeans,
    Random,
    RandomDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemKind {
    Powerset,
    Multilabel,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "hmm")]
    pub model: ModelKind,
    #[arg(long, default_value_t = 5)]
    pub states: usize,
    #[arg(long, value_enum, default_value = "left-to-right")]
    pub topology: TopologyArg,
    /// Largest forward jump for left-to-right models; unconstrained if absent.
    #[arg(long)]
    pub delta: Option<usize>,
    /// FHMM chain count (default 2).
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    #[arg(long, default_value_t = motionhmm::hmm::DEFAULT_VARIANCE_FLOOR)]
    pub variance_floor: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    pub transition_init: TransitionInitArg,
    #[arg(long, value_enum, default_value = "kmeans")]
    pub emission_init: EmissionInitArg,
}

impl ModelArgs {
    pub fn topology(&self) -> Result<Topology> {
        match (self.topology, self.delta) {
            (TopologyArg::Ergodic, Some(_)) => Err(UsageError("--delta only applies to left-to-right".into()).into()),
            (TopologyArg::Ergodic, None) => Ok(Topology::Ergodic),
            (TopologyArg::LeftToRight, d) => Ok(Topology::LeftToRight { delta: d }),
        }
    }

    pub fn config(&self, seed: u64) -> Result<ModelConfig> {
        let mut spec = HmmSpec::new(self.states, self.topology()?);
        spec.transition_init = match self.transition_init {
            TransitionInitArg::Uniform => TransitionInit::Uniform,
            TransitionInitArg::Randomized => TransitionInit::Randomized,
        };
        spec.emission_init = match self.emission_init {
            EmissionInitArg::Kmeans => EmissionInit::KMeans,
            EmissionInitArg::Random => EmissionInit::Random { diagonal: false },
            EmissionInitArg::RandomDiagonal => EmissionInit::Random { diagonal: true },
        };
        let train = TrainConfig {
            iterations: self.iterations,
            variance_floor: self.variance_floor,
            seed,
        };
        train.validate()?;
        let chains = match (self.model, self.chains) {
            (ModelKind::Hmm, Some(_)) => return Err(UsageError("--chains requires --model fhmm".into()).into()),
            (ModelKind::Hmm, None) => None,
            (ModelKind::Fhmm, c) => Some(c.unwrap_or(2)),
        };
        if self.states == 0 || chains == Some(0) {
            return Err(UsageError("--states and --chains must be positive".into()).into());
        }
        Ok(ModelConfig { spec, chains, train })
    }
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    /// Comma-separated feature names, or a JSON feature-spec file.
    #[arg(long, default_value = "root_pos,root_vel,extremities_pos,root_rot,root_rot_norm")]
    pub features: String,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub no_smooth: bool,
    #[arg(long)]
    pub no_scale: bool,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
}

impl FeatureArgs {
    pub fn spec(&self) -> Result<FeatureSpec> {
        let path = PathBuf::from(&self.features);
        let spec = if path.is_file() {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        } else {
            let names: Vec<&str> = self
                .features
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            FeatureSpec {
                normalized: !self.no_normalize,
                smoothed: !self.no_smooth,
                scaled: !self.no_scale,
                window: self.window,
                ..FeatureSpec::new(names)
            }
        };
        spec.resolve()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Decision maker for the multi-label system, e.g. `logistic:l1:1e-3`,
    /// `svm:l2:1`, `tree:gini:15`, `forest:info_gain:15:40`, `max`, `threshold:0`.
    #[arg(long, default_value = "logistic:l1:1e-3")]
    pub decision: String,
}

impl SystemArgs {
    pub fn config(&self, kind: SystemKind, seed: u64) -> Result<SystemConfig> {
        let features = self.features.spec()?;
        let model = self.model.config(seed)?;
        Ok(match kind {
            SystemKind::Powerset => SystemConfig::Powerset { features, model },
            SystemKind::Multilabel => SystemConfig::Multilabel {
                features,
                model,
                decision: parse_decision(&self.decision)?,
            },
        })
    }
}

fn parse_penalty(s: &str) -> Result<Penalty> {
    match s {
        "l1" => Ok(Penalty::L1),
        "l2" => Ok(Penalty::L2),
        _ => bail!(UsageError(format!("unknown penalty `{s}`"))),
    }
}

fn parse_criterion(s: &str) -> Result<Criterion> {
    match s {
        "gini" => Ok(Criterion::Gini),
        "info_gain" | "entropy" => Ok(Criterion::InfoGain),
        _ => bail!(UsageError(format!("unknown criterion `{s}`"))),
    }
}

fn number<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| UsageError(format!("bad {what} `{s}`")).into())
}

pub fn parse_decision(text: &str) -> Result<DecisionConfig> {
    let parts: Vec<&str> = text.split(':').collect();
    let config = match parts.as_slice() {
        ["max"] => DecisionConfig::Max,
        ["threshold"] => DecisionConfig::Threshold { boundary: 0.0 },
        ["threshold", b] => DecisionConfig::Threshold {
            boundary: number(b, "boundary")?,
        },
        ["logistic", p, c] => DecisionConfig::Logistic {
            penalty: parse_penalty(p)?,
            c: number(c, "C")?,
        },
        ["svm", p, c] => DecisionConfig::LinearSvm {
            penalty: parse_penalty(p)?,
            c: number(c, "C")?,
        },
        ["tree", crit, depth] => DecisionConfig::Tree {
            criterion: parse_criterion(crit)?,
            max_depth: number(depth, "depth")?,
        },
        ["forest", crit, depth, trees] => DecisionConfig::Forest {
            criterion: parse_criterion(crit)?,
            max_depth: number(depth, "depth")?,
            trees: number(trees, "tree count")?,
        },
        _ => bail!(UsageError(format!("unrecognized decision maker `{text}`"))),
    };
    Ok(config)
}
