use mpe_core::corpus::{load_records, save_records};
use mpe_core::splitter::{merge_single_to_mpe, SinglePropertyRecord};
use mpe_core::synthetic::{generate_synthetic, GeneratorConfig};
use mpe_core::{corpus_stats, NormalizationPolicy};

#[test]
fn records_survive_a_file_round_trip() {
    let corpus = generate_synthetic(
        &GeneratorConfig {
            articles: 50,
            ..Default::default()
        },
        1,
    )
    .unwrap()
    .records;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    save_records(&path, &corpus).unwrap();
    let back: Vec<_> = load_records(&path, NormalizationPolicy::default())
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(back, corpus);
    assert_eq!(corpus_stats(&back).unwrap(), corpus_stats(&corpus).unwrap());
}

#[test]
fn merging_many_singles_matches_expected_pairs() {
    let singles = (0..30).map(|i| SinglePropertyRecord {
        article_id: format!("a{}", i % 7),
        text: format!("text {}", i % 7),
        property: format!("p{}", i % 5),
        values: vec![format!("v{i}")],
    });
    let merged = merge_single_to_mpe(singles, &NormalizationPolicy::default()).unwrap();
    assert_eq!(merged.len(), 7);
    assert_eq!(merged.iter().map(|r| r.pairs.len()).sum::<usize>(), 30);
}
