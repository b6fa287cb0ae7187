//! Motion sequence classification with Gaussian HMMs and factorial HMMs.
//!
//! The crate covers the full pipeline: loading labeled motion datasets,
//! extracting normalized kinematic features, training one generative model
//! per class or per label, turning per-model log-likelihoods into label
//! predictions, and evaluating the result with stratified multi-label k-fold.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fhmm;
pub mod hmm;
pub mod math;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod systems;

pub use dataset::{Channel, Dataset, LabelVector, LabelVocabulary, MotionRecord, Sample};
pub use error::{Error, Result};
pub use features::{FeatureSpec, ObservationSequence, ScalerParams};
pub use fhmm::FhmmParams;
pub use hmm::{HmmParams, HmmSpec, Topology, TrainConfig};
