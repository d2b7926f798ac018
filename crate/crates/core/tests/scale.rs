use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use sha2::{Digest, Sha256};

use clustercount::embedding::trace::{read_trace, write_trace, EmbeddingTrace, TraceEpisode};
use clustercount::embedding::EmbeddingVector;
use clustercount::gmm::{fit, GmmConfig};
use clustercount::pseudocount::{
    table_restore, table_snapshot, EpisodicClustering, GlobalClusterTable,
};

fn random_vectors(seed: u64, n: usize, d: usize) -> Vec<EmbeddingVector> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..n)
        .map(|_| EmbeddingVector((0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()))
        .collect()
}

fn sha(path: &std::path::Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn ten_thousand_vector_trace_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let vectors = random_vectors(1, 10_000, 64);
    let trace = EmbeddingTrace {
        dim: 64,
        episodes: vectors
            .chunks(525)
            .map(|c| TraceEpisode {
                embeddings: c.to_vec(),
                positions: Some((0..c.len()).map(|i| (i as f32, -(i as f32))).collect()),
            })
            .collect(),
    };
    let a = tmp.path().join("a.bin");
    let b = tmp.path().join("b.bin");
    write_trace(&trace, &a).unwrap();
    let back = read_trace(&a).unwrap();
    assert_eq!(back, trace);
    write_trace(&back, &b).unwrap();
    assert_eq!(sha(&a), sha(&b));
}

#[test]
fn ten_thousand_entry_table_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let vectors = random_vectors(2, 10_000, 32);
    let mut table = GlobalClusterTable::new(1.0).unwrap();
    for chunk in vectors.chunks(1000) {
        table
            .process_episode(&EpisodicClustering::passthrough(chunk).unwrap())
            .unwrap();
    }
    assert_eq!(table.len(), 10_000);
    let a = tmp.path().join("a.bin");
    let b = tmp.path().join("b.bin");
    table_snapshot(&table, &a).unwrap();
    let back = table_restore(&a, 1.0).unwrap();
    assert_eq!(back.entries(), table.entries());
    table_snapshot(&back, &b).unwrap();
    assert_eq!(sha(&a), sha(&b));
}

#[test]
fn full_size_mixture_fits() {
    let data = random_vectors(3, 2100, 384);
    let config = GmmConfig {
        n_components: 250,
        max_iter: 2,
        ..GmmConfig::default()
    };
    let model = fit(&config, &data).unwrap();
    assert_eq!(model.n_components(), 250);
    assert!(model.log_likelihood.is_finite());
    let labels = model.predict(&data).unwrap();
    assert!(labels.iter().all(|&l| l < 250));
}
