use idgap::embeddings::{labels_path, load_embeddings, FileFormat};
use idgap::{EmbeddingSet, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(n: usize, dim: usize, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    EmbeddingSet::new("random", dim, values, None).unwrap()
}

#[test]
fn binary_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.emb");
    let set = random_set(1000, 128, 42);
    set.save_binary(&path).unwrap();
    let back = load_embeddings(&path, FileFormat::Binary).unwrap();
    assert_eq!(back.len(), 1000);
    let a: Vec<u8> = set.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let b: Vec<u8> = back.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    assert_eq!(a, b);
    let mut again = Vec::new();
    back.write_binary(&mut again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), again);
}

#[test]
fn labels_travel_in_sidecar_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<String> = (0..20).map(|i| format!("person {}", i % 4)).collect();
    let set = random_set(20, 3, 1).with_labels(labels.clone()).unwrap();
    let bin = dir.path().join("l.emb");
    set.save_binary(&bin).unwrap();
    assert!(labels_path(&bin).exists());
    assert_eq!(
        load_embeddings(&bin, FileFormat::Binary)
            .unwrap()
            .labels()
            .unwrap(),
        &labels[..]
    );

    let csv = dir.path().join("l.csv");
    set.save_csv(&csv).unwrap();
    let back = load_embeddings(&csv, FileFormat::Csv).unwrap();
    assert_eq!(back.labels().unwrap(), &labels[..]);
    assert_eq!(back.values(), set.values());
}

#[test]
fn truncated_binary_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.emb");
    random_set(5, 4, 2).save_binary(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    match load_embeddings(&path, FileFormat::Binary) {
        Err(Error::Row { row, .. }) => assert_eq!(row, 4),
        other => panic!("expected row error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_io_error() {
    let err = load_embeddings(
        std::path::Path::new("/nonexistent/x.emb"),
        FileFormat::Binary,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}
