use uqkit::backend::{generate_dataset, FileBackend, SyntheticBackend, SyntheticWorld};
use uqkit::corpus_index::CorpusIndex;
use uqkit::evidence::GenerativeEvidence;
use uqkit::features::{extract_all, ExtractContext, FeatureGroupSelection, FeatureSpec};
use uqkit::noiser::NoiseConfig;
use uqkit::records::{
    read_jsonl_records, read_mask_predictions, read_sample_sets, write_jsonl, write_jsonl_records,
};

#[test]
fn dumped_synthetic_outputs_replay_to_identical_features() {
    let world = SyntheticWorld {
        seed: 42,
        ..SyntheticWorld::default()
    };
    let noise = NoiseConfig {
        seed: 42,
        ..NoiseConfig::default()
    };
    let data = generate_dataset(&world, &[("eq", 25)], 80, &noise, 6).unwrap();
    let split = &data.splits[0];

    let dir = tempfile::tempdir().unwrap();
    let (r, s, m) = (
        dir.path().join("r.jsonl"),
        dir.path().join("s.jsonl"),
        dir.path().join("m.jsonl"),
    );
    write_jsonl_records(&split.records, &r).unwrap();
    write_jsonl(&split.samples, &s).unwrap();
    write_jsonl(&split.masks, &m).unwrap();
    let records = read_jsonl_records(&r).unwrap();
    let replay = FileBackend::from_parts(
        None,
        Some(read_sample_sets(&s).unwrap()),
        Some(read_mask_predictions(&m).unwrap()),
    );

    let index = CorpusIndex::build(&data.corpus).unwrap();
    let spec = FeatureSpec::default();
    let ctx = ExtractContext {
        index: Some(&index),
        spec: &spec,
    };
    let all = FeatureGroupSelection::all();
    let from_files = extract_all(&records, &replay, ctx, &all).unwrap();

    let backend = SyntheticBackend::new(world.clone());
    let live = GenerativeEvidence {
        backend: &backend,
        noise,
        mc_samples: 6,
        seed: world.seed,
    };
    let generated = extract_all(&split.records, &live, ctx, &all).unwrap();
    assert_eq!(from_files, generated);
}

#[test]
fn file_backend_without_samples_cannot_serve_group_two() {
    let world = SyntheticWorld::default();
    let data = generate_dataset(&world, &[("nos", 3)], 20, &NoiseConfig::default(), 4).unwrap();
    let replay = FileBackend::from_parts(None, None, None);
    let spec = FeatureSpec::default();
    let ctx = ExtractContext {
        index: None,
        spec: &spec,
    };
    let sel = FeatureGroupSelection::parse("II").unwrap();
    let err = extract_all(&data.splits[0].records, &replay, ctx, &sel).unwrap_err();
    assert!(err.to_string().contains("II"), "{err}");
}
