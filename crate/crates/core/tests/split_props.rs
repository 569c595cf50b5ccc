use std::collections::BTreeSet;

use mpe_core::splitter::{audit_split, controlled_split, Split, SplitConfig};
use mpe_core::synthetic::{generate_synthetic, GeneratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_splits_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for draw in 0..20 {
        let gen = GeneratorConfig {
            articles: rng.random_range(200..500),
            properties: rng.random_range(10..40),
            mean_pairs_per_article: rng.random_range(1.5..3.0),
            pair_spread: 1.0,
            property_skew: rng.random_range(1.0..2.0),
            ..Default::default()
        };
        let corpus = generate_synthetic(&gen, draw).unwrap().records;
        let config = SplitConfig {
            test_only_property_fraction: rng.random_range(0.0..0.2),
            val_only_property_fraction: rng.random_range(0.0..0.2),
            shared_valtest_property_fraction: rng.random_range(0.0..0.1),
            seen_articles_per_eval_split: rng.random_range(0..30),
            max_eval_split_articles: 10_000,
            seed: draw,
        };
        let Ok(assignment) = controlled_split(&corpus, &config) else {
            continue;
        };
        checked += 1;
        let report = audit_split(&corpus, &assignment).unwrap();
        assert!(report.overlaps.iter().all(|o| o.overlap_count == 0));
        assert_eq!(report.held_out_violations, 0);

        let parts = assignment.apply(&corpus).unwrap();
        let props = |s: Split| -> BTreeSet<String> {
            parts
                .get(s)
                .iter()
                .flat_map(|r| r.pairs.iter().map(|p| p.property.clone()))
                .collect()
        };
        let (train, val, test) = (props(Split::Train), props(Split::Validation), props(Split::Test));
        for p in &assignment.test_only_properties {
            assert!(!train.contains(p) && !val.contains(p));
        }
        for p in &assignment.val_only_properties {
            assert!(!train.contains(p) && !test.contains(p));
        }
        for p in &assignment.shared_valtest_properties {
            assert!(!train.contains(p));
        }
        let configured = config.held_out_fraction() * report.property_inventory as f64;
        assert!((report.unseen_in_train_count as f64 - configured).abs() <= 1.0);
        assert_eq!(
            assignment.count(Split::Train) + assignment.count(Split::Validation) + assignment.count(Split::Test),
            corpus.len()
        );
    }
    assert!(checked >= 15, "only {checked} draws were feasible");
}

#[test]
fn split_is_deterministic_per_seed() {
    let corpus = generate_synthetic(
        &GeneratorConfig {
            articles: 300,
            property_skew: 1.5,
            ..Default::default()
        },
        3,
    )
    .unwrap()
    .records;
    let config = SplitConfig {
        max_eval_split_articles: 300,
        ..Default::default()
    };
    assert_eq!(
        controlled_split(&corpus, &config).unwrap(),
        controlled_split(&corpus, &config).unwrap()
    );
}
