use qmon_core::classifiers::ClassifierConfig;
use qmon_core::data::synth_generate;
use qmon_core::doe::OperatingPoint;
use qmon_core::rng::rng_from;
use qmon_core::store::{ModelRecord, ModelStore, RecordMetadata, StoreError};
use qmon_core::{EnsembleModel, Family, Fusion, Schema, TrainedClassifier};
use rand::Rng;

fn record() -> ModelRecord {
    let schema = Schema::lacquering();
    let (data, _) = synth_generate(&schema, 300, 0.15, 11).unwrap();
    let train = data.all_samples();
    let config = ClassifierConfig::default();
    let members: Vec<TrainedClassifier> = Family::ALL
        .iter()
        .enumerate()
        .map(|(i, &f)| TrainedClassifier::train(f, &train, None, &config, i as u64).unwrap())
        .collect();
    let ensemble = EnsembleModel::manual(members, Fusion::Vote, 0.5).unwrap();
    let reference = OperatingPoint::reference(&schema, data.raw());
    ModelRecord::new(
        "Orange peel",
        data.encoder().clone(),
        ensemble,
        reference,
        RecordMetadata {
            seed: 11,
            training_rows: 300,
            ..Default::default()
        },
    )
}

fn probes(schema: &Schema, n: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_from(99);
    (0..n)
        .map(|_| {
            schema
                .factors
                .iter()
                .map(|f| match &f.kind {
                    qmon_core::FactorKind::Continuous { bounds } => {
                        rng.random_range(bounds[0]..=bounds[1])
                    }
                    qmon_core::FactorKind::Discrete { states } => {
                        states[rng.random_range(0..states.len())]
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn round_trip_predictions_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::open(dir.path()).unwrap();
    let rec = record();
    let id = store.save(&rec).unwrap();
    assert_eq!(id, "orange_peel");
    let back = store.load(&id).unwrap();
    assert_eq!(back, rec);
    for row in probes(&rec.schema, 100) {
        let (c0, r0) = rec.predict_raw(&row).unwrap();
        let (c1, r1) = back.predict_raw(&row).unwrap();
        assert_eq!(c0, c1);
        assert_eq!(r0.to_bits(), r1.to_bits());
    }
    let index = store.index().unwrap();
    assert_eq!(index.models[&id].members, 4);
}

#[test]
fn canonical_bytes() {
    let rec = record();
    let a = rec.to_bytes().unwrap();
    let b = rec.clone().to_bytes().unwrap();
    assert_eq!(a, b);
    let reparsed: ModelRecord = serde_json::from_slice(&a).unwrap();
    assert_eq!(reparsed.to_bytes().unwrap(), a);
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::open(dir.path()).unwrap();
    let id = store.save(&record()).unwrap();
    assert!(matches!(store.load("nope"), Err(StoreError::UnknownId(_))));

    let path = dir.path().join(format!("{id}.json"));
    let text = std::fs::read_to_string(&path).unwrap();
    let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert_ne!(bumped, text);
    std::fs::write(&path, &bumped).unwrap();
    let err = store.load(&id).unwrap_err();
    assert!(matches!(err, StoreError::UnsupportedVersion { found: 2 }));
    assert!(err.to_string().contains("unsupported version"));

    let tampered = text.replacen("\"threshold\": 0.5", "\"threshold\": 0.25", 1);
    assert_ne!(tampered, text);
    std::fs::write(&path, &tampered).unwrap();
    assert!(matches!(store.load(&id), Err(StoreError::Corrupt { .. })));

    std::fs::write(&path, b"{ not json").unwrap();
    assert!(matches!(store.load(&id), Err(StoreError::Corrupt { .. })));
}

#[test]
fn saving_twice_replaces_the_entry() {
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::open(dir.path()).unwrap();
    let rec = record();
    store.save(&rec).unwrap();
    let first = std::fs::read(dir.path().join("orange_peel.json")).unwrap();
    store.save(&rec).unwrap();
    let second = std::fs::read(dir.path().join("orange_peel.json")).unwrap();
    assert_eq!(first, second);
    assert_eq!(store.load_all().unwrap().len(), 1);
}
