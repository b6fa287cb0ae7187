//! Synthetic labeled datasets sampled from known left-to-right HMMs.
//!
//! Informative dimensions are dealt out to the labels round robin. Each label
//! owns a random per-state signature on its dimensions (magnitude between
//! 0.5 and 1.5 times `separation`, random sign), and a class's state
//! means are the sum of the signatures of its labels, so a dimension sits at
//! zero whenever its label is absent. Noise channels have zero mean in every
//! state and carry no class information.

use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Channel, Dataset, MotionRecord};
use crate::error::{Error, Result};
use crate::hmm::{sample, HmmParams, Topology};
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthChannel {
    pub name: String,
    pub width: usize,
    #[serde(default = "yes")]
    pub informative: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Label names of each class.
    pub classes: Vec<Vec<String>>,
    pub sequences_per_class: usize,
    pub length: usize,
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default = "default_delta")]
    pub delta: usize,
    /// Scale of the label signatures.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Emission standard deviation.
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub channels: Vec<SynthChannel>,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
}

fn default_states() -> usize {
    5
}
fn default_delta() -> usize {
    1
}
fn default_separation() -> f64 {
    2.0
}
fn default_noise() -> f64 {
    1.0
}
fn default_rate() -> f64 {
    100.0
}

impl SynthSpec {
    /// A single informative `joint_pos` channel of width `dim`.
    pub fn simple(classes: Vec<Vec<String>>, sequences_per_class: usize, length: usize, dim: usize) -> Self {
        SynthSpec {
            classes,
            sequences_per_class,
            length,
            states: default_states(),
            delta: default_delta(),
            separation: default_separation(),
            noise: default_noise(),
            channels: vec![SynthChannel {
                name: "joint_pos".into(),
                width: dim,
                informative: true,
            }],
            sample_rate_hz: default_rate(),
        }
    }

    pub fn dim(&self) -> usize {
        self.channels.iter().map(|c| c.width).sum()
    }

    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.classes.iter().flatten().cloned().collect();
        l.sort();
        l.dedup();
        l
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("synth spec: {m}")));
        if self.classes.is_empty() || self.classes.iter().any(Vec::is_empty) {
            return bad("every class needs at least one label");
        }
        let mut sets: Vec<Vec<String>> = self
            .classes
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.sort();
                c.dedup();
                c
            })
            .collect();
        sets.sort();
        if sets.windows(2).any(|w| w[0] == w[1]) {
            return bad("classes must have distinct label sets");
        }
        if self.sequences_per_class == 0 || self.states == 0 || self.length < 2 {
            return bad("sequences, states must be positive and length at least 2");
        }
        let informative: usize = self.channels.iter().filter(|c| c.informative).map(|c| c.width).sum();
        if informative < self.labels().len() {
            return bad("need at least one informative dimension per label");
        }
        if self.delta == 0 || self.channels.is_empty() || self.channels.iter().any(|c| c.width == 0) {
            return bad("delta and channel widths must be positive");
        }
        if !(self.noise > 0.0) || !(self.separation >= 0.0) || !(self.sample_rate_hz > 0.0) {
            return bad("noise and sample rate must be positive");
        }
        Ok(())
    }
}

/// The generating model of each class.
#[derive(Debug, Clone, PartialEq)]
pub struct Generators {
    pub labels: Vec<String>,
    pub signatures: Vec<Array2<f64>>,
    pub models: Vec<HmmParams>,
}

impl Generators {
    pub fn new(spec: &SynthSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let labels = spec.labels();
        let (k, d) = (spec.states, spec.dim());
        let mut next = 0;
        let owner: Vec<Option<usize>> = spec
            .channels
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.informative, c.width))
            .map(|inf| {
                inf.then(|| {
                    next += 1;
                    (next - 1) % labels.len()
                })
            })
            .collect();
        let signatures: Vec<Array2<f64>> = (0..labels.len())
            .map(|l| {
                let mut rng = Rng::new(derive_seed(seed, "synth-signature", l as u64));
                Array2::from_shape_fn((k, d), |(_, j)| {
                    let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                    let v = sign * rng.uniform(0.5, 1.5) * spec.separation;
                    if owner[j] == Some(l) {
                        v
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let topology = Topology::left_to_right(spec.delta);
        let mask = topology.mask(k);
        let stay = if k == 1 {
            1.0
        } else {
            (1.0 - k as f64 / spec.length as f64).clamp(0.0, 0.99)
        };
        let mut transitions = Array2::zeros((k, k));
        for i in 0..k {
            if i + 1 == k {
                transitions[[i, i]] = 1.0;
            } else {
                transitions[[i, i]] = stay;
                let ahead = (i + 1..k).filter(|&j| mask[[i, j]]).count();
                for j in (i + 1..k).filter(|&j| mask[[i, j]]) {
                    transitions[[i, j]] = (1.0 - stay) / ahead as f64;
                }
            }
        }
        let mut pi = Array1::zeros(k);
        pi[0] = 1.0;
        let models = spec
            .classes
            .iter()
            .map(|class| {
                let mut means = Array2::zeros((k, d));
                for name in class {
                    let l = labels.binary_search(name).expect("label collected from classes");
                    means += &signatures[l];
                }
                let cov = Array2::from_elem((k, d), spec.noise * spec.noise);
                HmmParams::new(
                    Some(topology),
                    pi.clone(),
                    transitions.clone(),
                    means,
                    cov,
                    mask.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Generators {
            labels,
            signatures,
            models,
        })
    }
}

/// Samples the dataset described by `spec`. Ids are `c<class>_s<index>`.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<(Dataset, Generators)> {
    let generators = Generators::new(spec, seed)?;
    let n = spec.sequences_per_class;
    let channels: Vec<Channel> = spec
        .channels
        .iter()
        .map(|c| Channel::new(c.name.clone(), c.width))
        .collect();
    let items = (0..spec.classes.len() * n)
        .into_par_iter()
        .map(|i| {
            let (c, j) = (i / n, i % n);
            let obs = sample(
                &generators.models[c],
                spec.length,
                derive_seed(seed, "synth-sample", i as u64),
            );
            let record = MotionRecord::new(
                format!("c{c:02}_s{j:03}"),
                spec.sample_rate_hz,
                channels.clone(),
                obs.data,
                None,
            )?;
            Ok((record, spec.classes[c].clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::from_labeled(items)?, generators))
}

/// Writes one CSV per motion under `dir/motions` and `dir/manifest.json`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let motions = dir.join("motions");
    std::fs::create_dir_all(&motions).map_err(|e| Error::io(&motions, e))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        let file = format!("motions/{}.csv", s.record.id);
        crate::dataset::write_motion_file(&s.record, &dir.join(&file))?;
        entries.push(serde_json::json!({
            "id": s.record.id,
            "file": file,
            "labels": dataset.vocabulary.decode(&s.labels),
        }));
    }
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&entries)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    fn classes() -> Vec<Vec<String>> {
        vec![vec!["a".into()], vec!["a".into(), "b".into()], vec!["c".into()]]
    }

    #[test]
    fn counts_and_shapes() {
        let spec = SynthSpec::simple(classes(), 4, 30, 4);
        let (d, g) = generate(&spec, 3).unwrap();
        assert_eq!(d.len(), 12);
        assert_eq!(g.labels, vec!["a", "b", "c"]);
        assert_eq!(d.samples[0].record.frames.dim(), (30, 4));
        // dims 0 and 3 belong to `a`, 1 to `b`, 2 to `c`
        let zero_outside = |sig: &Array2<f64>, own: &[usize]| {
            (0..4).all(|j| own.contains(&j) || sig.column(j).iter().all(|v| *v == 0.0))
        };
        assert!(zero_outside(&g.signatures[0], &[0, 3]));
        assert!(zero_outside(&g.signatures[1], &[1]));
        assert!(zero_outside(&g.signatures[2], &[2]));
        for m in &g.models {
            m.validate().unwrap();
        }
        let ab = &g.models[1].means;
        assert_eq!(ab, &(&g.signatures[0] + &g.signatures[1]));
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec::simple(classes(), 2, 10, 3);
        assert_eq!(generate(&spec, 5).unwrap().0, generate(&spec, 5).unwrap().0);
        assert_ne!(generate(&spec, 5).unwrap().0, generate(&spec, 6).unwrap().0);
    }

    #[test]
    fn noise_channels_carry_no_signal() {
        let mut spec = SynthSpec::simple(classes(), 1, 10, 3);
        spec.channels.push(SynthChannel {
            name: "marker_pos".into(),
            width: 3,
            informative: false,
        });
        let g = Generators::new(&spec, 1).unwrap();
        for m in &g.models {
            assert!(m.means.slice(s![.., 3..]).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn rejects_duplicate_classes() {
        let spec = SynthSpec::simple(
            vec![vec!["a".into(), "b".into()], vec!["b".into(), "a".into()]],
            1,
            10,
            2,
        );
        assert!(spec.validate().is_err());
        let spec = SynthSpec::simple(vec![vec!["a".into()], vec!["b".into()]], 1, 10, 1);
        assert!(spec.validate().is_err());
    }
}
