use motionhmm::classifiers::DecisionConfig;
use motionhmm::hmm::{HmmSpec, TrainConfig};
use motionhmm::synth::{generate, write_dataset, SynthSpec};
use motionhmm::systems::{cross_validate, ModelConfig, System, SystemConfig};
use motionhmm::{Dataset, FeatureSpec, Topology};

fn classes() -> Vec<Vec<String>> {
    [&["walk"][..], &["wave"], &["walk", "wave"]]
        .iter()
        .map(|c| c.iter().map(|s| s.to_string()).collect())
        .collect()
}

fn small_dataset() -> Dataset {
    generate(&SynthSpec::simple(classes(), 8, 40, 4), 21).unwrap().0
}

fn model(chains: Option<usize>) -> ModelConfig {
    let spec = HmmSpec::new(3, Topology::left_to_right(1));
    let train = TrainConfig {
        iterations: 5,
        ..TrainConfig::default()
    };
    match chains {
        None => ModelConfig::hmm(spec, train),
        Some(m) => ModelConfig::fhmm(spec, m, train),
    }
}

fn features() -> FeatureSpec {
    FeatureSpec {
        normalized: false,
        ..FeatureSpec::new(["joint_pos"])
    }
}

#[test]
fn bundles_reload_with_identical_predictions() {
    let data = small_dataset();
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        SystemConfig::Powerset {
            features: features(),
            model: model(None),
        },
        SystemConfig::Multilabel {
            features: features(),
            model: model(None),
            decision: DecisionConfig::sparse_logistic(),
        },
        SystemConfig::Multilabel {
            features: features(),
            model: model(Some(2)),
            decision: DecisionConfig::Forest {
                criterion: motionhmm::classifiers::tree::Criterion::Gini,
                max_depth: 4,
                trees: 5,
            },
        },
    ];
    for (i, config) in configs.iter().enumerate() {
        let system = config.train(&data, 4).unwrap();
        let path = dir.path().join(format!("bundle{i}"));
        system.save(&path).unwrap();
        let loaded = System::load(&path).unwrap();
        for s in &data.samples {
            let a = system.classify(&s.record).unwrap();
            let b = loaded.classify(&s.record).unwrap();
            assert_eq!(a, b, "config {i}, motion {}", s.record.id);
        }
    }
}

#[test]
fn training_motions_get_their_generating_labels() {
    let data = small_dataset();
    let config = SystemConfig::Powerset {
        features: features(),
        model: model(None),
    };
    let system = config.train(&data, 1).unwrap();
    let correct = data
        .samples
        .iter()
        .filter(|s| system.classify(&s.record).unwrap().labels == s.labels)
        .count();
    assert!(correct >= data.len() - 1, "{correct}/{}", data.len());
}

#[test]
fn cross_validation_is_reproducible() {
    let data = small_dataset().shuffle(3);
    let config = SystemConfig::Multilabel {
        features: features(),
        model: model(None),
        decision: DecisionConfig::Max,
    };
    let a = cross_validate(&data, &config, 3, 8, None).unwrap();
    let b = cross_validate(&data, &config, 3, 8, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.predictions.len(), data.len());
    assert_eq!(a.folds.fold_sizes().iter().sum::<usize>(), data.len());
}

#[test]
fn written_datasets_load_back_and_export() {
    let data = small_dataset();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&data, dir.path()).unwrap();
    let loaded = Dataset::open(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(loaded, data);
    let archive = dir.path().join("all.json");
    loaded.export(&archive).unwrap();
    assert_eq!(Dataset::open(&archive).unwrap(), data);
    let report = loaded.report();
    assert_eq!(report.samples, 24);
    assert_eq!(
        report.label_counts,
        vec![("walk".to_string(), 16), ("wave".to_string(), 16)]
    );
}

#[test]
fn missing_feature_channel_is_named() {
    let data = small_dataset();
    let config = SystemConfig::Powerset {
        features: FeatureSpec::new(["root_pos"]),
        model: model(None),
    };
    let err = config.train(&data, 0).unwrap_err().to_string();
    assert!(err.contains("root_pos"), "{err}");
}
