use std::sync::OnceLock;

use mpe_core::tokenizer::{parse_pairs, serialize_pairs, train_subword, PairOrder, TokenizerConfig, Vocabulary, PAD};
use mpe_core::{NormalizationPolicy, PropertyValuePair};
use proptest::prelude::*;

const TEXTS: [&str; 4] = [
    "The river Odra flows through Wrocław, Poland.",
    "country ⊢ Poland ∥ located in ⊢ Lower Silesia",
    "Born 1900 in Paris; died (aged 80) in Nice!",
    "banana bandana cabana",
];

fn vocab() -> &'static Vocabulary {
    static V: OnceLock<Vocabulary> = OnceLock::new();
    V.get_or_init(|| {
        train_subword(
            &TEXTS,
            &TokenizerConfig {
                vocab_size: 400,
                byte_fallback: true,
                ..Default::default()
            },
        )
        .unwrap()
    })
}

#[test]
fn training_is_deterministic() {
    let config = TokenizerConfig {
        vocab_size: 120,
        ..Default::default()
    };
    assert_eq!(
        train_subword(&TEXTS, &config).unwrap(),
        train_subword(&TEXTS, &config).unwrap()
    );
}

fn text_piece() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9éł]{1,6}( [a-zA-Z0-9.,]{1,6}){0,2}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]
    #[test]
    fn serialize_parse_round_trip(pairs in prop::collection::btree_set((text_piece(), text_piece()), 0..6)) {
        let pairs: Vec<PropertyValuePair> = pairs.into_iter().map(|(p, v)| PropertyValuePair::new(p, v).unwrap()).collect();
        let text = serialize_pairs(&pairs, PairOrder::Input).unwrap();
        let parsed = parse_pairs(&text);
        prop_assert_eq!(parsed.malformed, 0);
        prop_assert_eq!(parsed.pairs, pairs);
    }
}

proptest! {
    #[test]
    fn encode_contract(text in "[ -~éł⊢∥\t]{0,80}", l1 in 0usize..40, extra in 0usize..40) {
        let v = vocab();
        let ids = v.encode(&text, usize::MAX);
        prop_assert!(ids.iter().all(|&id| (id as usize) < v.size() && id != PAD));
        let short = v.encode(&text, l1);
        let long = v.encode(&text, l1 + extra);
        prop_assert!(short.len() <= l1);
        prop_assert_eq!(&long[..short.len()], &short[..]);
    }

    #[test]
    fn decode_inverts_encode(text in "[a-zA-Z0-9.,;!?()é \u{4e00}-\u{4e10}]{0,60}") {
        let v = vocab();
        let ids = v.encode(&text, usize::MAX);
        prop_assert_eq!(v.decode(&ids), NormalizationPolicy::default().apply(&text));
    }

    #[test]
    fn parse_never_panics(text in "\\PC{0,40}") {
        let parsed = parse_pairs(&text);
        prop_assert!(parsed.pairs.len() + parsed.malformed <= text.matches('∥').count() + 1);
    }
}
