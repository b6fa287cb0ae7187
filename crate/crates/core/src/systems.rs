//! End-to-end recognizers: the power-set system (one model per observed
//! label combination, argmax decision) and the multi-label system (one model
//! per label plus a trained decision maker).

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{DecisionConfig, DecisionMaker};
use crate::dataset::{Dataset, LabelVector, LabelVocabulary, MotionRecord};
use crate::error::{Error, Result};
use crate::evaluation::{stratified_kfold, summarize, FoldAssignment, Summary};
use crate::features::{apply_scaler, build_observation, fit_scaler, FeatureSpec, ObservationSequence, ScalerParams};
use crate::fhmm::{self, FhmmParams};
use crate::hmm::{self, HmmParams, HmmSpec, TrainConfig};
use crate::math::argmax;
use crate::rng::derive_seed;

/// Either kind of generative sequence model.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SequenceModel {
    Hmm(HmmParams),
    Fhmm(FhmmParams),
}

impl SequenceModel {
    pub fn log_likelihood(&self, obs: &ObservationSequence) -> Result<f64> {
        match self {
            SequenceModel::Hmm(m) => hmm::log_likelihood(m, obs),
            SequenceModel::Fhmm(m) => fhmm::log_likelihood(m, obs),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SequenceModel::Hmm(m) => m.dim(),
            SequenceModel::Fhmm(m) => m.dim(),
        }
    }
}

/// How each per-class model is built. `chains: None` means a plain HMM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub spec: HmmSpec,
    pub chains: Option<usize>,
    pub train: TrainConfig,
}

impl ModelConfig {
    pub fn hmm(spec: HmmSpec, train: TrainConfig) -> Self {
        ModelConfig {
            spec,
            chains: None,
            train,
        }
    }

    pub fn fhmm(spec: HmmSpec, chains: usize, train: TrainConfig) -> Self {
        ModelConfig {
            spec,
            chains: Some(chains),
            train,
        }
    }

    pub fn fit(&self, training: &[ObservationSequence], seed: u64) -> Result<SequenceModel> {
        let train = TrainConfig { seed, ..self.train };
        match self.chains {
            None => hmm::fit(training, &self.spec, &train).map(SequenceModel::Hmm),
            Some(m) => fhmm::sequential_train(training, m, &self.spec, &train).map(SequenceModel::Fhmm),
        }
    }

    pub fn describe(&self) -> String {
        match self.chains {
            None => format!("hmm K={} {}", self.spec.states, self.spec.topology),
            Some(m) => format!("fhmm K={} M={m} {}", self.spec.states, self.spec.topology),
        }
    }
}

/// Feature spec plus the scaler fitted on training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub spec: FeatureSpec,
    pub scaler: Option<ScalerParams>,
}

impl FeaturePipeline {
    /// Extracts training observations and fits the scaler on them.
    pub fn fit(spec: &FeatureSpec, records: &[&MotionRecord]) -> Result<(FeaturePipeline, Vec<ObservationSequence>)> {
        let mut obs = records
            .par_iter()
            .map(|r| build_observation(r, spec, None))
            .collect::<Result<Vec<_>>>()?;
        let scaler = if spec.scaled {
            let params = fit_scaler(&obs)?;
            for o in obs.iter_mut() {
                o.data = apply_scaler(o.data.view(), &params)?;
            }
            Some(params)
        } else {
            None
        };
        Ok((
            FeaturePipeline {
                spec: spec.clone(),
                scaler,
            },
            obs,
        ))
    }

    pub fn transform(&self, record: &MotionRecord) -> Result<ObservationSequence> {
        build_observation(record, &self.spec, self.scaler.as_ref())
    }
}

/// Models sharing one feature pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnsemble {
    pub pipeline: FeaturePipeline,
    pub models: Vec<SequenceModel>,
}

impl ModelEnsemble {
    pub fn likelihoods(&self, record: &MotionRecord) -> Result<Vec<f64>> {
        let obs = self.pipeline.transform(record)?;
        self.models.par_iter().map(|m| m.log_likelihood(&obs)).collect()
    }

    pub fn likelihood_matrix(&self, records: &[&MotionRecord]) -> Result<Array2<f64>> {
        let rows = records
            .par_iter()
            .map(|r| {
                let obs = self.pipeline.transform(r)?;
                self.models
                    .iter()
                    .map(|m| m.log_likelihood(&obs))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros((records.len(), self.models.len()));
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }
}

/// Observed label combinations in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerSetCodec {
    pub combos: Vec<LabelVector>,
}

impl PowerSetCodec {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a LabelVector>) -> Self {
        let mut codec = PowerSetCodec::default();
        for y in labels {
            codec.encode(y);
        }
        codec
    }

    /// Id of `labels`, registering it if unseen.
    pub fn encode(&mut self, labels: &LabelVector) -> usize {
        match self.lookup(labels) {
            Some(id) => id,
            None => {
                self.combos.push(labels.clone());
                self.combos.len() - 1
            }
        }
    }

    pub fn lookup(&self, labels: &LabelVector) -> Option<usize> {
        self.combos.iter().position(|c| c == labels)
    }

    pub fn decode(&self, id: usize) -> Result<&LabelVector> {
        self.combos
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no label combination with id {id}")))
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }
}

fn combo_name(vocabulary: &LabelVocabulary, y: &LabelVector) -> String {
    let names = vocabulary.decode(y);
    if names.is_empty() {
        "(none)".into()
    } else {
        names.join("+")
    }
}

/// Trains one model per group in parallel; groups hold training indices.
fn train_groups(
    dataset: &Dataset,
    features: &FeatureSpec,
    model: &ModelConfig,
    groups: &[Vec<usize>],
    names: &[String],
    task: &str,
    seed: u64,
) -> Result<ModelEnsemble> {
    let records: Vec<&MotionRecord> = dataset.samples.iter().map(|s| &s.record).collect();
    let (pipeline, obs) = FeaturePipeline::fit(features, &records)?;
    let models = groups
        .par_iter()
        .enumerate()
        .map(|(i, idx)| {
            let training: Vec<ObservationSequence> = idx.iter().map(|&j| obs[j].clone()).collect();
            model
                .fit(&training, derive_seed(seed, task, i as u64))
                .map_err(|e| e.context(format!("training model for `{}`", names[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelEnsemble { pipeline, models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSetSystem {
    pub vocabulary: LabelVocabulary,
    pub codec: PowerSetCodec,
    /// Training samples per combination.
    pub sample_counts: Vec<usize>,
    pub ensemble: ModelEnsemble,
}

impl PowerSetSystem {
    /// Combinations backed by a single training sample.
    pub fn sparse_combos(&self) -> Vec<String> {
        self.codec
            .combos
            .iter()
            .zip(&self.sample_counts)
            .filter(|(_, &n)| n == 1)
            .map(|(c, _)| combo_name(&self.vocabulary, c))
            .collect()
    }

    /// Argmax over per-combination likelihoods, lowest id on ties.
    pub fn decide(&self, likelihoods: &[f64]) -> LabelVector {
        let id = argmax(likelihoods).unwrap_or(0);
        self.codec.combos[id].clone()
    }
}

pub fn train_powerset(
    dataset: &Dataset,
    features: &FeatureSpec,
    model: &ModelConfig,
    seed: u64,
) -> Result<PowerSetSystem> {
    if dataset.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    let mut codec = PowerSetCodec::default();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        let id = codec.encode(&s.labels);
        if id == groups.len() {
            groups.push(Vec::new());
        }
        groups[id].push(i);
    }
    let names: Vec<String> = codec
        .combos
        .iter()
        .map(|c| combo_name(&dataset.vocabulary, c))
        .collect();
    let ensemble = train_groups(dataset, features, model, &groups, &names, "powerset", seed)?;
    Ok(PowerSetSystem {
        vocabulary: dataset.vocabulary.clone(),
        sample_counts: groups.iter().map(Vec::len).collect(),
        codec,
        ensemble,
    })
}

pub fn classify_powerset(system: &PowerSetSystem, record: &MotionRecord) -> Result<Prediction> {
    let likelihoods = system.ensemble.likelihoods(record)?;
    Ok(Prediction {
        labels: system.decide(&likelihoods),
        likelihoods,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelSystem {
    pub vocabulary: LabelVocabulary,
    pub ensemble: ModelEnsemble,
    pub decision: DecisionMaker,
}

pub fn train_multilabel(
    dataset: &Dataset,
    features: &FeatureSpec,
    model: &ModelConfig,
    decision: &DecisionConfig,
    seed: u64,
) -> Result<MultiLabelSystem> {
    if dataset.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    let labels = dataset.vocabulary.labels();
    let groups: Vec<Vec<usize>> = (0..labels.len())
        .map(|l| {
            (0..dataset.len())
                .filter(|&i| dataset.samples[i].labels.get(l))
                .collect()
        })
        .collect();
    if let Some(l) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Validation(format!(
            "label `{}` has no training samples",
            labels[l]
        )));
    }
    let ensemble = train_groups(dataset, features, model, &groups, labels, "label", seed)?;
    let records: Vec<&MotionRecord> = dataset.samples.iter().map(|s| &s.record).collect();
    let x = ensemble.likelihood_matrix(&records)?;
    let decision = DecisionMaker::fit(
        decision,
        x.view(),
        &dataset.label_matrix(),
        derive_seed(seed, "decision", 0),
    )?;
    Ok(MultiLabelSystem {
        vocabulary: dataset.vocabulary.clone(),
        ensemble,
        decision,
    })
}

pub fn classify_multilabel(system: &MultiLabelSystem, record: &MotionRecord) -> Result<Prediction> {
    let likelihoods = system.ensemble.likelihoods(record)?;
    Ok(Prediction {
        labels: system.decision.predict(&likelihoods)?,
        likelihoods,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: LabelVector,
    pub likelihoods: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum SystemConfig {
    Powerset {
        features: FeatureSpec,
        model: ModelConfig,
    },
    Multilabel {
        features: FeatureSpec,
        model: ModelConfig,
        decision: DecisionConfig,
    },
}

impl SystemConfig {
    pub fn features(&self) -> &FeatureSpec {
        match self {
            SystemConfig::Powerset { features, .. } | SystemConfig::Multilabel { features, .. } => features,
        }
    }

    pub fn model(&self) -> &ModelConfig {
        match self {
            SystemConfig::Powerset { model, .. } | SystemConfig::Multilabel { model, .. } => model,
        }
    }

    pub fn decision_name(&self) -> String {
        match self {
            SystemConfig::Powerset { .. } => "argmax".into(),
            SystemConfig::Multilabel { decision, .. } => decision.name(),
        }
    }

    pub fn train(&self, dataset: &Dataset, seed: u64) -> Result<System> {
        match self {
            SystemConfig::Powerset { features, model } => {
                train_powerset(dataset, features, model, seed).map(System::Powerset)
            }
            SystemConfig::Multilabel {
                features,
                model,
                decision,
            } => train_multilabel(dataset, features, model, decision, seed).map(System::Multilabel),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Powerset(PowerSetSystem),
    Multilabel(MultiLabelSystem),
}

impl System {
    pub fn vocabulary(&self) -> &LabelVocabulary {
        match self {
            System::Powerset(s) => &s.vocabulary,
            System::Multilabel(s) => &s.vocabulary,
        }
    }

    pub fn ensemble(&self) -> &ModelEnsemble {
        match self {
            System::Powerset(s) => &s.ensemble,
            System::Multilabel(s) => &s.ensemble,
        }
    }

    /// Names of the per-model classes, in model order.
    pub fn model_names(&self) -> Vec<String> {
        match self {
            System::Powerset(s) => s.codec.combos.iter().map(|c| combo_name(&s.vocabulary, c)).collect(),
            System::Multilabel(s) => s.vocabulary.labels().to_vec(),
        }
    }

    pub fn classify(&self, record: &MotionRecord) -> Result<Prediction> {
        match self {
            System::Powerset(s) => classify_powerset(s, record),
            System::Multilabel(s) => classify_multilabel(s, record),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            System::Powerset(_) => "powerset",
            System::Multilabel(_) => "multilabel",
        }
    }

    /// Writes a bundle directory: `manifest.json` plus one file per part.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, value: &dyn erased::Json| -> Result<String> {
            let path = dir.join(name);
            std::fs::write(&path, value.to_pretty()?).map_err(|e| Error::io(&path, e))?;
            Ok(name.to_string())
        };
        let ensemble = self.ensemble();
        let models = ensemble
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| write(&format!("model-{i:03}.json"), m))
            .collect::<Result<Vec<_>>>()?;
        let scaler = match &ensemble.pipeline.scaler {
            Some(s) => Some(write("scaler.json", s)?),
            None => None,
        };
        let (codec, sample_counts, decision) = match self {
            System::Powerset(s) => (
                Some(write("codec.json", &s.codec)?),
                Some(s.sample_counts.clone()),
                None,
            ),
            System::Multilabel(s) => (None, None, Some(write("decision.json", &s.decision)?)),
        };
        let manifest = BundleManifest {
            format: BUNDLE_FORMAT.into(),
            version: 1,
            system: self.kind().into(),
            labels: self.vocabulary().labels().to_vec(),
            features: ensemble.pipeline.spec.clone(),
            scaler,
            models,
            codec,
            sample_counts,
            decision,
        };
        write("manifest.json", &manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<System> {
        fn read<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))
        }
        let manifest: BundleManifest = read(dir, "manifest.json")?;
        if manifest.format != BUNDLE_FORMAT || manifest.version != 1 {
            return Err(Error::Validation(format!(
                "unsupported bundle {} v{}",
                manifest.format, manifest.version
            )));
        }
        let models = manifest
            .models
            .iter()
            .map(|name| read::<SequenceModel>(dir, name))
            .collect::<Result<Vec<_>>>()?;
        let scaler = manifest.scaler.as_deref().map(|n| read(dir, n)).transpose()?;
        let ensemble = ModelEnsemble {
            pipeline: FeaturePipeline {
                spec: manifest.features,
                scaler,
            },
            models,
        };
        let vocabulary = LabelVocabulary::new(manifest.labels);
        let missing = |what: &str| Error::Validation(format!("bundle manifest lacks `{what}`"));
        let system = match manifest.system.as_str() {
            "powerset" => {
                let codec: PowerSetCodec = read(dir, manifest.codec.as_deref().ok_or_else(|| missing("codec"))?)?;
                let sample_counts = manifest.sample_counts.ok_or_else(|| missing("sample_counts"))?;
                if codec.len() != ensemble.models.len() || sample_counts.len() != codec.len() {
                    return Err(Error::Validation("codec and model count disagree".into()));
                }
                System::Powerset(PowerSetSystem {
                    vocabulary,
                    codec,
                    sample_counts,
                    ensemble,
                })
            }
            "multilabel" => {
                let decision = read(dir, manifest.decision.as_deref().ok_or_else(|| missing("decision"))?)?;
                if vocabulary.len() != ensemble.models.len() {
                    return Err(Error::Validation("label and model count disagree".into()));
                }
                System::Multilabel(MultiLabelSystem {
                    vocabulary,
                    ensemble,
                    decision,
                })
            }
            other => return Err(Error::Validation(format!("unknown system kind `{other}`"))),
        };
        Ok(system)
    }
}

const BUNDLE_FORMAT: &str = "motionhmm-bundle";

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    format: String,
    version: u32,
    system: String,
    labels: Vec<String>,
    features: FeatureSpec,
    scaler: Option<String>,
    models: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    codec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decision: Option<String>,
}

mod erased {
    use crate::error::Result;

    pub trait Json {
        fn to_pretty(&self) -> Result<String>;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_pretty(&self) -> Result<String> {
            let mut s = serde_json::to_string_pretty(self)?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Out-of-fold predictions for every sample, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: FoldAssignment,
    pub predictions: Vec<LabelVector>,
    pub summary: Summary,
}

/// Stratified k-fold evaluation of one system configuration. The fold
/// assignment is derived from `seed` unless given.
pub fn cross_validate(
    dataset: &Dataset,
    config: &SystemConfig,
    k: usize,
    seed: u64,
    folds: Option<&FoldAssignment>,
) -> Result<CrossValidation> {
    let truth = dataset.label_matrix();
    let folds = match folds {
        Some(f) => f.clone(),
        None => stratified_kfold(&truth, k, derive_seed(seed, "folds", 0))?,
    };
    let mut predictions = vec![LabelVector::zeros(dataset.vocabulary.len()); dataset.len()];
    for fold in 0..folds.k {
        let train = dataset.subset(&folds.train_indices(fold));
        let system = config
            .train(&train, derive_seed(seed, "fold", fold as u64))
            .map_err(|e| e.context(format!("fold {fold}")))?;
        let test = folds.test_indices(fold);
        let preds = test
            .par_iter()
            .map(|&i| system.classify(&dataset.samples[i].record).map(|p| p.labels))
            .collect::<Result<Vec<_>>>()?;
        for (i, p) in test.into_iter().zip(preds) {
            predictions[i] = p;
        }
    }
    let summary = summarize(&predictions, &truth)?;
    Ok(CrossValidation {
        folds,
        predictions,
        summary,
    })
}
