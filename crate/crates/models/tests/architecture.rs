use mpe_autograd::{grad_check_params, ParamStore, Tape, Tensor, Var};
use mpe_core::tokenizer::{BOS, EOS};
use mpe_models::model::{causal_mask, Encoded};
use mpe_models::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 14;

fn micro(architecture: Architecture) -> ModelConfig {
    ModelConfig {
        architecture,
        encoder_layers: 2,
        decoder_layers: 2,
        embedding_dim: 16,
        ffn_dim: 24,
        attention_heads: 2,
        max_target_len: 16,
        ..ModelConfig::default()
    }
}

fn ids(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(3..VOCAB as u32)).collect()
}

fn example(seed: u64) -> Example {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let article = ids(&mut rng, 7);
    let properties = ids(&mut rng, 3);
    let mut source = properties.clone();
    source.push(4);
    source.extend(&article);
    let mut target = vec![BOS];
    target.extend(ids(&mut rng, 4));
    target.push(EOS);
    Example {
        article_id: format!("ex{seed}"),
        article,
        properties,
        source,
        target,
        pairs: Vec::new(),
    }
}

fn to_tensor_err(e: Error) -> mpe_autograd::Error {
    mpe_autograd::Error::InvalidArgument {
        op: "model",
        message: e.to_string(),
    }
}

fn check_gradients(config: ModelConfig) -> f64 {
    let model: Model<f64> = Model::new(config, VOCAB, 3).unwrap();
    let batch = [example(1), example(2)];
    let refs: Vec<&Example> = batch.iter().collect();
    let mut store = model.params().clone();
    let report = grad_check_params(&mut store, 1e-5, Some(6), 11, |tape| {
        model.batch_loss(tape, &refs).map_err(to_tensor_err)
    })
    .unwrap();
    report.max_relative_error
}

#[test]
fn dual_source_micro_model_gradients() {
    let err = check_gradients(micro(Architecture::DualSource));
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn dual_source_variants_gradients() {
    let config = ModelConfig {
        activation: Activation::Gelu,
        positional: Positional::Learned,
        tie_all_embeddings: true,
        cross_attention_order: CrossAttentionOrder::ArticleThenProperties,
        ..micro(Architecture::DualSource)
    };
    let err = check_gradients(config);
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn single_source_micro_model_gradients() {
    let err = check_gradients(micro(Architecture::Transformer));
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn recurrent_micro_model_gradients() {
    let err = check_gradients(micro(Architecture::Seq2seq));
    assert!(err < 1e-3, "max relative error {err}");
}

fn logits(model: &Model<f64>, ex: &Example) -> Tensor<f64> {
    let mut tape = Tape::new(model.params());
    let encoded = model.encode(&mut tape, ex).unwrap();
    let n = ex.target.len() - 1;
    let out = model.decode_logits(&mut tape, &encoded, &ex.target[..n]).unwrap();
    tape.value(out).clone()
}

#[test]
fn shared_encoder_gives_identical_encodings() {
    let model: Model<f64> = Model::new(micro(Architecture::DualSource), VOCAB, 0).unwrap();
    let mut ex = example(5);
    ex.properties = ex.article.clone();
    let mut tape = Tape::new(model.params());
    let Encoded::Attention(memories) = model.encode(&mut tape, &ex).unwrap() else {
        panic!("transformer memories expected");
    };
    assert_eq!(tape.value(memories[0]), tape.value(memories[1]));
    // No parameter names a second encoder.
    assert!(model.params().iter().all(|(_, name, _)| !name.starts_with("enc2")));
}

#[test]
fn gradient_step_moves_both_encodings_alike() {
    let mut model: Model<f64> = Model::new(micro(Architecture::DualSource), VOCAB, 0).unwrap();
    let ex = example(6);
    let grads = {
        let mut tape = Tape::new(model.params());
        let loss = model.batch_loss(&mut tape, &[&ex]).unwrap();
        tape.backward(loss).unwrap()
    };
    let ids: Vec<_> = grads.iter().map(|(id, _)| id).collect();
    for id in ids {
        let g = grads.get(id).unwrap().clone();
        let mut step = g;
        step.scale_assign(-0.1);
        model.params_mut().value_mut(id).add_assign(&step);
    }
    let seq = ex.article.clone();
    let mut tape = Tape::new(model.params());
    let a = model.encode_source(&mut tape, &seq, None).unwrap();
    let b = model.encode_source(&mut tape, &seq, None).unwrap();
    assert_eq!(tape.value(a), tape.value(b));
}

#[test]
fn swapping_sources_changes_logits() {
    let model: Model<f64> = Model::new(micro(Architecture::DualSource), VOCAB, 0).unwrap();
    let ex = example(7);
    let mut swapped = ex.clone();
    std::mem::swap(&mut swapped.article, &mut swapped.properties);
    assert!(logits(&model, &ex).max_abs_diff(&logits(&model, &swapped)) > 1e-6);
}

#[test]
fn decoder_is_causal() {
    for arch in [
        Architecture::DualSource,
        Architecture::Transformer,
        Architecture::Seq2seq,
    ] {
        let model: Model<f64> = Model::new(micro(arch), VOCAB, 1).unwrap();
        let ex = example(8);
        let base = logits(&model, &ex);
        let n = ex.target.len() - 1;
        for t in 0..n {
            let mut perturbed = ex.clone();
            for k in t + 1..ex.target.len() {
                perturbed.target[k] = (perturbed.target[k] + 1) % VOCAB as u32;
            }
            let other = logits(&model, &perturbed);
            for row in 0..=t {
                let diff = base
                    .row(row)
                    .iter()
                    .zip(other.row(row))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert_eq!(diff, 0.0, "{arch:?}: row {row} changed after perturbing beyond {t}");
            }
        }
    }
}

#[test]
fn tokens_beyond_the_source_limit_never_matter() {
    use mpe_core::tokenizer::{train_subword, PairOrder, TokenizerConfig};
    use mpe_core::{MpeRecord, NormalizationPolicy, PropertyValuePair};
    let words: Vec<String> = (0..700).map(|i| format!("w{}", i % 37)).collect();
    let long = words.join(" ");
    let mut longer = long.clone();
    longer.push_str(" tail words that differ entirely");
    let pairs = vec![PropertyValuePair::new("colour", "w3").unwrap()];
    let policy = NormalizationPolicy::default();
    let a = MpeRecord::new("a", long.clone(), pairs.clone(), &policy).unwrap();
    let b = MpeRecord::new("a", longer, pairs, &policy).unwrap();
    let vocab = train_subword(
        &[long.as_str(), "colour ⊢ w3"],
        &TokenizerConfig {
            vocab_size: 80,
            ..TokenizerConfig::default()
        },
    )
    .unwrap();
    for arch in [
        Architecture::DualSource,
        Architecture::Transformer,
        Architecture::Seq2seq,
    ] {
        let config = ModelConfig {
            max_target_len: 32,
            ..micro(arch)
        };
        let ea = prepare_example(&a, &vocab, &config, PairOrder::Input).unwrap();
        let eb = prepare_example(&b, &vocab, &config, PairOrder::Input).unwrap();
        assert_eq!(ea.article.len(), 512);
        assert_eq!(ea.source.len(), 512);
        let model: Model<f64> = Model::new(config, vocab.size(), 2).unwrap();
        assert_eq!(logits(&model, &ea), logits(&model, &eb), "{arch:?}");
        // Feeding an untruncated source is refused.
        let mut raw = ea.clone();
        raw.article.push(raw.article[0]);
        raw.source.push(raw.source[0]);
        let mut tape = Tape::new(model.params());
        assert!(matches!(model.encode(&mut tape, &raw), Err(Error::InvalidInput(_))));
    }
}

#[test]
fn pooled_encoding_ignores_order_without_positions() {
    let config = ModelConfig {
        positional: Positional::None,
        ..micro(Architecture::DualSource)
    };
    let model: Model<f64> = Model::new(config, VOCAB, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let seq = ids(&mut rng, 9);
    let mut permuted = seq.clone();
    permuted.reverse();
    permuted.swap(0, 4);
    let pooled = |s: &[u32]| -> Vec<f64> {
        let mut tape = Tape::new(model.params());
        let h = model.encode_source(&mut tape, s, None).unwrap();
        let t = tape.value(h);
        let d = t.shape()[1];
        (0..d)
            .map(|j| (0..s.len()).map(|i| t.row(i)[j]).sum::<f64>() / s.len() as f64)
            .collect()
    };
    let (a, b) = (pooled(&seq), pooled(&permuted));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect()
}

fn affine(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let out = w.shape()[1];
    (0..out)
        .map(|j| {
            b.data()[j]
                + x.iter()
                    .enumerate()
                    .map(|(i, v)| v * w.data()[i * out + j])
                    .sum::<f64>()
        })
        .collect()
}

#[test]
fn identity_attention_reduces_to_position_wise_layers() {
    let config = ModelConfig {
        architecture: Architecture::Transformer,
        encoder_layers: 1,
        embedding_dim: 4,
        ffn_dim: 6,
        attention_heads: 1,
        positional: Positional::None,
        ..ModelConfig::default()
    };
    let mut model: Model<f64> = Model::new(config, VOCAB, 5).unwrap();
    // Non-trivial norms so the oracle exercises gains and biases.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let names: Vec<String> = model.params().iter().map(|(_, n, _)| n.to_string()).collect();
    for name in names
        .iter()
        .filter(|n| n.starts_with("enc.") && (n.ends_with(".g") || n.ends_with(".b")))
    {
        let id = model.params().id(name).unwrap();
        for v in model.params_mut().value_mut(id).data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let p = |name: &str| model.params().value(model.params().id(name).unwrap()).clone();
    let seq = vec![5u32, 9, 3];
    let n = seq.len();
    let mask: Vec<bool> = (0..n * n).map(|k| k / n != k % n).collect();
    let mut tape = Tape::new(model.params());
    let h = model.encode_source(&mut tape, &seq, Some(&mask)).unwrap();
    let got = tape.value(h).clone();

    let emb = p("embed.source");
    let scale_norm = |x: &[f64], prefix: &str| -> Vec<f64> {
        let (g, b) = (p(&format!("{prefix}.g")), p(&format!("{prefix}.b")));
        layer_norm(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v * g.data()[i] + b.data()[i])
            .collect()
    };
    for (row, &id) in seq.iter().enumerate() {
        let x: Vec<f64> = emb.row(id as usize).iter().map(|v| v * 2.0).collect();
        // Each token attends to itself only: attention output is W_o(W_v norm(x)).
        let a = scale_norm(&x, "enc.0.attn_norm");
        let v = affine(&a, &p("enc.0.attn.v.w"), &p("enc.0.attn.v.b"));
        let o = affine(&v, &p("enc.0.attn.o.w"), &p("enc.0.attn.o.b"));
        let x: Vec<f64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
        let f = scale_norm(&x, "enc.0.ffn_norm");
        let up: Vec<f64> = affine(&f, &p("enc.0.ffn.up.w"), &p("enc.0.ffn.up.b"))
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let down = affine(&up, &p("enc.0.ffn.down.w"), &p("enc.0.ffn.down.b"));
        let x: Vec<f64> = x.iter().zip(&down).map(|(a, b)| a + b).collect();
        let expected = scale_norm(&x, "enc.norm");
        for (e, g) in expected.iter().zip(got.row(row)) {
            assert!((e - g).abs() < 1e-12, "{e} vs {g}");
        }
    }
}

#[test]
fn zero_recurrent_model_predicts_uniformly() {
    let mut model: Model<f64> = Model::new(micro(Architecture::Seq2seq), VOCAB, 0).unwrap();
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        model.params_mut().value_mut(id).data_mut().fill(0.0);
    }
    let ex = example(3);
    let mut tape = Tape::new(model.params());
    let loss = model.batch_loss(&mut tape, &[&ex]).unwrap();
    assert!((tape.value(loss).item() - (VOCAB as f64).ln()).abs() < 1e-12);
}

#[test]
fn long_recurrent_rollout_stays_finite() {
    let config = ModelConfig {
        max_target_len: 600,
        ..micro(Architecture::Seq2seq)
    };
    let mut model: Model<f64> = Model::new(config, VOCAB, 0).unwrap();
    // Large weights push the gates into saturation.
    let param_ids: Vec<_> = model.params().ids().collect();
    for id in param_ids {
        model.params_mut().value_mut(id).scale_assign(25.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ex = example(0);
    ex.source = ids(&mut rng, 512);
    let mut tape = Tape::new(model.params());
    let Encoded::Recurrent(states) = model.encode(&mut tape, &ex).unwrap() else {
        panic!("recurrent states expected");
    };
    for (h, c) in states {
        assert!(tape.value(h).is_finite() && tape.value(c).is_finite());
        assert!(tape.value(h).data().iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn tied_embeddings_are_one_tensor() {
    let config = ModelConfig {
        tie_all_embeddings: true,
        ..micro(Architecture::DualSource)
    };
    let model: Model<f64> = Model::new(config, VOCAB, 0).unwrap();
    assert_eq!(model.source_embedding(), model.output_projection());
    let vocab_sized = model
        .params()
        .iter()
        .filter(|(_, _, t)| t.shape().len() == 2 && t.shape()[0] == VOCAB)
        .count();
    assert_eq!(vocab_sized, 1);
    assert!(model.params().iter().all(|(_, n, _)| n != "output.w"));
    let ex = example(4);
    let mut tape = Tape::new(model.params());
    let loss = model.batch_loss(&mut tape, &[&ex]).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert!(grads.get(model.source_embedding()).is_some());
}

#[test]
fn loss_matches_perplexity_from_logits() {
    for arch in [
        Architecture::DualSource,
        Architecture::Transformer,
        Architecture::Seq2seq,
    ] {
        let model: Model<f64> = Model::new(micro(arch), VOCAB, 6).unwrap();
        let ex = example(10);
        let mut tape = Tape::new(model.params());
        let loss = model.batch_loss(&mut tape, &[&ex]).unwrap();
        let loss = tape.value(loss).item();
        let l = logits(&model, &ex);
        let mut nll = 0.0;
        for (row, &t) in ex.target[1..].iter().enumerate() {
            let r = l.row(row);
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = r.iter().map(|v| (v - max).exp()).sum();
            nll -= r[t as usize] - max - z.ln();
        }
        let perplexity = (nll / (ex.target.len() - 1) as f64).exp();
        assert!((loss.exp() / perplexity - 1.0).abs() < 1e-6, "{arch:?}");
    }
}

#[test]
fn repeated_calls_are_identical() {
    let model: Model<f64> = Model::new(micro(Architecture::Transformer), VOCAB, 8).unwrap();
    let ex = example(11);
    assert_eq!(logits(&model, &ex), logits(&model, &ex));
    let again: Model<f64> = Model::new(micro(Architecture::Transformer), VOCAB, 8).unwrap();
    assert_eq!(logits(&model, &ex), logits(&again, &ex));
}

#[test]
fn dropout_only_acts_on_training_tapes() {
    let config = ModelConfig {
        hidden_dropout: 0.3,
        attention_dropout: 0.3,
        activation_dropout: 0.3,
        ..micro(Architecture::DualSource)
    };
    let model: Model<f64> = Model::new(config, VOCAB, 0).unwrap();
    let ex = example(12);
    let eval = |tape: &mut Tape<'_, f64>| -> f64 {
        let v: Var = model.batch_loss(tape, &[&ex]).unwrap();
        tape.value(v).item()
    };
    let a = eval(&mut Tape::new(model.params()));
    let b = eval(&mut Tape::new(model.params()));
    let c = eval(&mut Tape::training(model.params(), 1));
    let d = eval(&mut Tape::training(model.params(), 1));
    assert_eq!(a, b);
    assert_eq!(c, d);
    assert_ne!(a, c);
}

#[test]
fn out_of_vocabulary_ids_are_rejected() {
    let model: Model<f64> = Model::new(micro(Architecture::DualSource), VOCAB, 0).unwrap();
    let mut ex = example(13);
    ex.article[0] = VOCAB as u32;
    let mut tape = Tape::new(model.params());
    assert!(matches!(model.encode(&mut tape, &ex), Err(Error::VocabMismatch(_))));
}

#[test]
fn configurations_are_validated() {
    let bad_heads = ModelConfig {
        embedding_dim: 10,
        attention_heads: 4,
        ..ModelConfig::default()
    };
    assert!(bad_heads.validate().is_err());
    let no_layers = ModelConfig {
        decoder_layers: 0,
        ..ModelConfig::default()
    };
    assert!(Model::<f32>::new(no_layers, 100, 0).is_err());
    let mut store: ParamStore<f32> = Model::<f32>::new(ModelConfig::default(), 100, 0).unwrap().into_params();
    store.add("stray", Tensor::zeros([1]));
    assert!(matches!(
        Model::from_params(ModelConfig::default(), 100, store),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn causal_mask_hides_the_future() {
    assert_eq!(
        causal_mask(3),
        vec![false, true, true, false, false, true, false, false, false]
    );
}
