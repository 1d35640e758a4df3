use std::fs;
use std::path::{Path, PathBuf};

use hypernet::data::{
    generate_synthetic, load_dataset, save_dataset, DatasetManifest, MultiModalDataset,
    SyntheticSpec, MANIFEST_FILE,
};
use hypernet::models::{Family, ModelConfig};
use hypernet::training::{train, TrainConfig};
use hypernet::Error;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/minimal")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        name: "small".into(),
        n_vertices: 120,
        n_classes: 3,
        n_modalities: 2,
        dims: vec![5, 4],
        separation: 3.0,
        noise_std: 1.0,
        correlation: 0.7,
        label_rate: 0.25,
        seed,
        knn_k: 5,
    }
}

#[test]
fn minimal_fixture_loads() {
    let ds = load_dataset(fixture().join(MANIFEST_FILE)).unwrap();
    assert_eq!(ds.n_vertices(), 3);
    assert_eq!(ds.modalities.len(), 1);
    assert_eq!(ds.modalities[0].hypergraph.n_hyperedges(), 3);
    assert_eq!(ds.label_rate(), 1.0 / 3.0);
    assert_eq!(ds.labels, vec![0, 0, 1]);
    assert_eq!(ds.test_mask, vec![false, true, true]);
}

#[test]
fn extra_label_line_is_reported_with_its_line_number() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixture(), dir.path());
    fs::write(dir.path().join("labels.txt"), "0\n0\n1\n1\n").unwrap();
    match load_dataset(dir.path().join(MANIFEST_FILE)).unwrap_err() {
        Error::Parse { file, line, .. } => {
            assert!(file.ends_with("labels.txt"), "{}", file.display());
            assert_eq!(line, 4);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn malformed_files_are_validation_errors() {
    let cases = [
        ("labels.txt", "0\n2\n1\n", 2),
        ("labels.txt", "0\nx\n1\n", 2),
        ("labels.txt", "0\n0\n", 3),
        ("features_view.csv", "0.0,0.0\n1.0\n0.0,2.5\n", 2),
        ("features_view.csv", "0.0,0.0\n1.0,NaN\n0.0,2.5\n", 2),
        ("split.txt", "train\nvalid\ntest\n", 2),
    ];
    for (file, content, want_line) in cases {
        let dir = tempfile::tempdir().unwrap();
        copy_dir(&fixture(), dir.path());
        fs::write(dir.path().join(file), content).unwrap();
        let err = load_dataset(dir.path().join(MANIFEST_FILE)).unwrap_err();
        assert!(err.is_validation(), "{err}");
        match err {
            Error::Parse { line, .. } => assert_eq!(line, want_line, "{file}: {content:?}"),
            other => panic!("unexpected error {other}"),
        }
    }
}

#[test]
fn empty_modality_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixture(), dir.path());
    let path = dir.path().join(MANIFEST_FILE);
    let mut manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    manifest.modalities.clear();
    fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Validation(_))));
}

fn assert_same(a: &MultiModalDataset, b: &MultiModalDataset) {
    assert_eq!(a.name, b.name);
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.train_mask, b.train_mask);
    assert_eq!(a.test_mask, b.test_mask);
    assert_eq!(a.n_classes, b.n_classes);
    assert_eq!(a.knn_k, b.knn_k);
    assert_eq!(a.modalities.len(), b.modalities.len());
    for (x, y) in a.modalities.iter().zip(&b.modalities) {
        assert_eq!(x.id, y.id);
        assert!(x.features.max_abs_diff(&y.features) <= 1e-12);
        assert_eq!(x.hypergraph, y.hypergraph);
    }
}

#[test]
fn save_then_load_round_trips() {
    let ds = generate_synthetic(&small_spec(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(&ds, dir.path(), false).unwrap();
    let rate = manifest.label_rate.unwrap();
    assert!((rate - ds.label_rate()).abs() <= 1.0 / ds.n_vertices() as f64);
    let back = load_dataset(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_same(&ds, &back);
    // full 17-digit precision survives the text format
    assert_eq!(ds.modalities[0].features, back.modalities[0].features);
}

#[test]
fn overwrite_needs_force() {
    let ds = generate_synthetic(&small_spec(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path(), false).unwrap();
    assert!(matches!(
        save_dataset(&ds, dir.path(), false),
        Err(Error::Validation(_))
    ));
    save_dataset(&ds, dir.path(), true).unwrap();
}

#[test]
fn manifest_label_rate_tracks_the_mask() {
    for seed in 0..5 {
        let ds = generate_synthetic(&small_spec(seed)).unwrap();
        let n = ds.n_vertices() as f64;
        let popcount = ds.train_mask.iter().filter(|&&b| b).count() as f64;
        assert!((ds.label_rate() - popcount / n).abs() <= 1.0 / n);
        assert!((ds.label_rate() - 0.25).abs() <= 1.0 / n);
    }
}

fn quick_train(family: Family, ds: &MultiModalDataset, seed: u64) -> f64 {
    let mut cfg = ModelConfig::new(family, 2, ds.n_classes);
    cfg.hidden = 32;
    cfg.seed = seed;
    let tc = TrainConfig {
        learning_rate: 0.01,
        epochs: 100,
        eval_every: 100,
        seed,
        ..TrainConfig::default()
    };
    train(&cfg, &tc, ds).unwrap().final_test_accuracy
}

#[test]
fn noiseless_synthetic_is_solved_exactly() {
    let spec = SyntheticSpec {
        noise_std: 0.0,
        correlation: 1.0,
        ..small_spec(5)
    };
    let ds = generate_synthetic(&spec).unwrap();
    assert_eq!(quick_train(Family::Hgnn, &ds, 0), 1.0);
}

#[test]
fn second_modality_adds_information() {
    let (mut single, mut fused) = (0.0, 0.0);
    for seed in 0..8 {
        let ds = generate_synthetic(&small_spec(100 + seed)).unwrap();
        let one = MultiModalDataset {
            modalities: ds.modalities[..1].to_vec(),
            ..ds.clone()
        };
        single += quick_train(Family::Hgnn, &one, seed);
        fused += quick_train(Family::MultiHgnn, &ds, seed);
    }
    assert!(single < fused, "single {} vs fused {}", single / 8.0, fused / 8.0);
}
