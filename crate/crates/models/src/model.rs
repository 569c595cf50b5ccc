//! Parameter layout and forward passes for the three architectures.
//!
//! All transformer blocks are pre-norm: `x + f(norm(x))`, with a final norm
//! after each stack. Every example gets its own subgraph on the shared tape,
//! so batches need no padding.

use mpe_autograd::{ParamId, ParamStore, Reduction, Scalar, Tape, Tensor, Var};
use mpe_core::tokenizer::PAD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Activation, Architecture, CrossAttentionOrder, ModelConfig, Positional};
use crate::data::Example;
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-5;
const MASK_VALUE: f64 = -1e9;

#[derive(Debug, Clone)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    attn_norm: Norm,
    attn: Attention,
    ffn_norm: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct CrossBlock {
    norm: Norm,
    attn: Attention,
    /// Index into the encoder memories.
    memory: usize,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_norm: Norm,
    self_attn: Attention,
    cross: Vec<CrossBlock>,
    ffn_norm: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct Lstm {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
enum Body {
    Transformer {
        encoder: Vec<EncoderLayer>,
        encoder_norm: Norm,
        decoder: Vec<DecoderLayer>,
        decoder_norm: Norm,
    },
    Recurrent {
        encoder: Vec<Lstm>,
        decoder: Vec<Lstm>,
    },
}

#[derive(Debug, Clone)]
struct Layout {
    source_embed: ParamId,
    target_embed: ParamId,
    /// `None` when tied: logits use the target embedding transposed.
    output: Option<ParamId>,
    output_bias: ParamId,
    positions: Option<ParamId>,
    body: Body,
}

enum Init {
    Zeros,
    Ones,
    Xavier,
    Normal(f64),
    Uniform(f64),
    /// LSTM bias: zero except the forget-gate block, set to one.
    ForgetBias(usize),
}

/// Registers parameters (when given a generator) or looks them up by name.
struct Builder<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: Option<ChaCha8Rng>,
    seen: usize,
}

impl<T: Scalar> Builder<'_, T> {
    fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        self.seen += 1;
        let Some(rng) = self.rng.as_mut() else {
            let id = self
                .store
                .id(name)
                .map_err(|_| Error::Checkpoint(format!("missing parameter {name}")))?;
            let found = self.store.value(id).shape();
            if found != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {found:?}, expected {shape:?}"
                )));
            }
            return Ok(id);
        };
        let tensor = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::full(shape, T::one()),
            Init::Xavier => {
                let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                Tensor::uniform(shape, bound, rng)
            }
            Init::Normal(std) => Tensor::randn(shape, std, rng),
            Init::Uniform(bound) => Tensor::uniform(shape, bound, rng),
            Init::ForgetBias(hidden) => {
                let mut t = Tensor::zeros(shape);
                t.data_mut()[hidden..2 * hidden].fill(T::one());
                t
            }
        };
        Ok(self.store.add(name, tensor))
    }

    fn linear(&mut self, prefix: &str, input: usize, output: usize) -> Result<Linear> {
        Ok(Linear {
            w: self.get(&format!("{prefix}.w"), &[input, output], Init::Xavier)?,
            b: self.get(&format!("{prefix}.b"), &[output], Init::Zeros)?,
        })
    }

    fn norm(&mut self, prefix: &str, dim: usize) -> Result<Norm> {
        Ok(Norm {
            g: self.get(&format!("{prefix}.g"), &[dim], Init::Ones)?,
            b: self.get(&format!("{prefix}.b"), &[dim], Init::Zeros)?,
        })
    }

    fn attention(&mut self, prefix: &str, dim: usize) -> Result<Attention> {
        Ok(Attention {
            q: self.linear(&format!("{prefix}.q"), dim, dim)?,
            k: self.linear(&format!("{prefix}.k"), dim, dim)?,
            v: self.linear(&format!("{prefix}.v"), dim, dim)?,
            o: self.linear(&format!("{prefix}.o"), dim, dim)?,
        })
    }

    fn ffn(&mut self, prefix: &str, dim: usize, hidden: usize) -> Result<FeedForward> {
        Ok(FeedForward {
            up: self.linear(&format!("{prefix}.up"), dim, hidden)?,
            down: self.linear(&format!("{prefix}.down"), hidden, dim)?,
        })
    }

    fn lstm(&mut self, prefix: &str, input: usize, hidden: usize) -> Result<Lstm> {
        let bound = 1.0 / (hidden as f64).sqrt();
        Ok(Lstm {
            wx: self.get(&format!("{prefix}.wx"), &[input, 4 * hidden], Init::Uniform(bound))?,
            wh: self.get(&format!("{prefix}.wh"), &[hidden, 4 * hidden], Init::Uniform(bound))?,
            b: self.get(&format!("{prefix}.b"), &[4 * hidden], Init::ForgetBias(hidden))?,
        })
    }
}

fn build_layout<T: Scalar>(
    config: &ModelConfig,
    vocab_size: usize,
    store: &mut ParamStore<T>,
    rng: Option<ChaCha8Rng>,
) -> Result<Layout> {
    let d = config.embedding_dim;
    let mut b = Builder { store, rng, seen: 0 };
    let embed_std = (d as f64).powf(-0.5);
    let (source_embed, target_embed, output) = if config.tie_all_embeddings {
        let e = b.get("embed.shared", &[vocab_size, d], Init::Normal(embed_std))?;
        (e, e, None)
    } else {
        let s = b.get("embed.source", &[vocab_size, d], Init::Normal(embed_std))?;
        let t = b.get("embed.target", &[vocab_size, d], Init::Normal(embed_std))?;
        let o = b.get("output.w", &[d, vocab_size], Init::Xavier)?;
        (s, t, Some(o))
    };
    let output_bias = b.get("output.b", &[vocab_size], Init::Zeros)?;
    let recurrent = config.architecture == Architecture::Seq2seq;
    let positions = if config.positional == Positional::Learned && !recurrent {
        let max_pos = config.max_source_len.max(config.max_target_len);
        Some(b.get("positions", &[max_pos, d], Init::Normal(0.02))?)
    } else {
        None
    };
    let body = if recurrent {
        let encoder = (0..config.encoder_layers)
            .map(|i| b.lstm(&format!("enc.{i}.lstm"), d, d))
            .collect::<Result<_>>()?;
        let decoder = (0..config.decoder_layers)
            .map(|i| b.lstm(&format!("dec.{i}.lstm"), d, d))
            .collect::<Result<_>>()?;
        Body::Recurrent { encoder, decoder }
    } else {
        let f = config.ffn_dim;
        let mut encoder = Vec::new();
        for i in 0..config.encoder_layers {
            encoder.push(EncoderLayer {
                attn_norm: b.norm(&format!("enc.{i}.attn_norm"), d)?,
                attn: b.attention(&format!("enc.{i}.attn"), d)?,
                ffn_norm: b.norm(&format!("enc.{i}.ffn_norm"), d)?,
                ffn: b.ffn(&format!("enc.{i}.ffn"), d, f)?,
            });
        }
        let encoder_norm = b.norm("enc.norm", d)?;
        // Memory 0 is the single source, or the article for dual-source
        // models; memory 1 holds the property names.
        let cross_roles: Vec<(&str, usize)> = match (config.architecture, config.cross_attention_order) {
            (Architecture::DualSource, CrossAttentionOrder::PropertiesThenArticle) => {
                vec![("cross_props", 1), ("cross_article", 0)]
            }
            (Architecture::DualSource, CrossAttentionOrder::ArticleThenProperties) => {
                vec![("cross_article", 0), ("cross_props", 1)]
            }
            _ => vec![("cross", 0)],
        };
        let mut decoder = Vec::new();
        for i in 0..config.decoder_layers {
            let self_norm = b.norm(&format!("dec.{i}.self_norm"), d)?;
            let self_attn = b.attention(&format!("dec.{i}.self"), d)?;
            let mut cross = Vec::new();
            for &(role, memory) in &cross_roles {
                cross.push(CrossBlock {
                    norm: b.norm(&format!("dec.{i}.{role}_norm"), d)?,
                    attn: b.attention(&format!("dec.{i}.{role}"), d)?,
                    memory,
                });
            }
            decoder.push(DecoderLayer {
                self_norm,
                self_attn,
                cross,
                ffn_norm: b.norm(&format!("dec.{i}.ffn_norm"), d)?,
                ffn: b.ffn(&format!("dec.{i}.ffn"), d, f)?,
            });
        }
        let decoder_norm = b.norm("dec.norm", d)?;
        Body::Transformer {
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
        }
    };
    if b.seen != b.store.len() {
        return Err(Error::Checkpoint(format!(
            "parameter store holds {} tensors, the configuration uses {}",
            b.store.len(),
            b.seen
        )));
    }
    Ok(Layout {
        source_embed,
        target_embed,
        output,
        output_bias,
        positions,
        body,
    })
}

/// Sinusoidal position table `[len, dim]`.
pub fn sinusoidal_positions<T: Scalar>(len: usize, dim: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(len * dim);
    for pos in 0..len {
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            data.push(T::lit(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![len, dim], data).expect("sizes agree")
}

/// Mask for `[n, n]` scores hiding future positions.
pub fn causal_mask(n: usize) -> Vec<bool> {
    (0..n * n).map(|k| k % n > k / n).collect()
}

/// Encoder outputs on a tape: one memory per source, or LSTM final states.
#[derive(Debug, Clone)]
pub enum Encoded {
    Attention(Vec<Var>),
    Recurrent(Vec<(Var, Var)>),
}

/// Encoder outputs detached from any tape, for step-wise decoding.
#[derive(Debug, Clone)]
pub enum EncodedValues<T: Scalar> {
    Attention(Vec<Tensor<T>>),
    Recurrent(Vec<(Tensor<T>, Tensor<T>)>),
}

impl Encoded {
    pub fn values<T: Scalar>(&self, tape: &Tape<'_, T>) -> EncodedValues<T> {
        match self {
            Self::Attention(vs) => EncodedValues::Attention(vs.iter().map(|&v| tape.value(v).clone()).collect()),
            Self::Recurrent(vs) => EncodedValues::Recurrent(
                vs.iter()
                    .map(|&(h, c)| (tape.value(h).clone(), tape.value(c).clone()))
                    .collect(),
            ),
        }
    }
}

impl<T: Scalar> EncodedValues<T> {
    pub fn load(&self, tape: &mut Tape<'_, T>) -> Encoded {
        match self {
            Self::Attention(ts) => Encoded::Attention(ts.iter().map(|t| tape.constant(t.clone())).collect()),
            Self::Recurrent(ts) => Encoded::Recurrent(
                ts.iter()
                    .map(|(h, c)| (tape.constant(h.clone()), tape.constant(c.clone())))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    config: ModelConfig,
    vocab_size: usize,
    params: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> Model<T> {
    /// A freshly initialized model.
    pub fn new(config: ModelConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size <= mpe_core::tokenizer::SPECIALS.len() {
            return Err(Error::Config(format!("vocabulary of {vocab_size} pieces is too small")));
        }
        let mut params = ParamStore::new();
        let layout = build_layout(&config, vocab_size, &mut params, Some(ChaCha8Rng::seed_from_u64(seed)))?;
        Ok(Self {
            config,
            vocab_size,
            params,
            layout,
        })
    }

    /// Wraps existing parameters, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, vocab_size: usize, mut params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let layout = build_layout(&config, vocab_size, &mut params, None)?;
        Ok(Self {
            config,
            vocab_size,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    /// Id of the input embedding used for sources.
    pub fn source_embedding(&self) -> ParamId {
        self.layout.source_embed
    }

    /// Id of the output projection; the target embedding when tied.
    pub fn output_projection(&self) -> ParamId {
        self.layout.output.unwrap_or(self.layout.target_embed)
    }

    fn check_ids(&self, what: &str, ids: &[u32]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::InvalidInput(format!("{what} is empty")));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::VocabMismatch(format!(
                "{what} holds id {bad}, the model has {} pieces",
                self.vocab_size
            )));
        }
        Ok(())
    }

    fn check_source(&self, what: &str, ids: &[u32]) -> Result<()> {
        self.check_ids(what, ids)?;
        if ids.len() > self.config.max_source_len {
            return Err(Error::InvalidInput(format!(
                "{what} has {} tokens, more than max_source_len {}; truncate it first",
                ids.len(),
                self.config.max_source_len
            )));
        }
        Ok(())
    }

    /// Scaled token embeddings plus positions.
    fn embed(&self, tape: &mut Tape<'_, T>, table: ParamId, ids: &[u32]) -> Result<Var> {
        let d = self.config.embedding_dim;
        let table = tape.param(table);
        let x = tape.embedding(table, ids)?;
        if self.config.architecture == Architecture::Seq2seq {
            return Ok(x);
        }
        let x = tape.scale(x, T::lit((d as f64).sqrt()));
        let x = match (self.config.positional, self.layout.positions) {
            (Positional::Learned, Some(p)) => {
                let p = tape.param(p);
                if ids.len() > tape.shape(p)[0] {
                    return Err(Error::InvalidInput(format!(
                        "sequence of {} tokens exceeds learned positions",
                        ids.len()
                    )));
                }
                let p = tape.narrow(p, 0, 0, ids.len())?;
                tape.add(x, p)?
            }
            (Positional::Sinusoidal, _) => {
                let p = tape.constant(sinusoidal_positions(ids.len(), d));
                tape.add(x, p)?
            }
            _ => x,
        };
        Ok(tape.dropout(x, self.config.hidden_dropout)?)
    }

    fn apply_linear(&self, tape: &mut Tape<'_, T>, l: &Linear, x: Var) -> Result<Var> {
        let w = tape.param(l.w);
        let b = tape.param(l.b);
        Ok(tape.linear(x, w, Some(b))?)
    }

    fn apply_norm(&self, tape: &mut Tape<'_, T>, n: &Norm, x: Var) -> Result<Var> {
        let g = tape.param(n.g);
        let b = tape.param(n.b);
        Ok(tape.layer_norm(x, g, b, NORM_EPS)?)
    }

    /// Multi-head attention of `x` over `memory`; `mask` (true = hidden)
    /// has one entry per query-key pair.
    fn attend(&self, tape: &mut Tape<'_, T>, a: &Attention, x: Var, memory: Var, mask: Option<&[bool]>) -> Result<Var> {
        let d = self.config.embedding_dim;
        let heads = self.config.attention_heads;
        let dh = d / heads;
        let q = self.apply_linear(tape, &a.q, x)?;
        let q = tape.scale(q, T::lit(1.0 / (dh as f64).sqrt()));
        let k = self.apply_linear(tape, &a.k, memory)?;
        let v = self.apply_linear(tape, &a.v, memory)?;
        let mut outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.narrow(q, 1, h * dh, dh)?,
                    tape.narrow(k, 1, h * dh, dh)?,
                    tape.narrow(v, 1, h * dh, dh)?,
                )
            };
            let mut scores = tape.matmul_t(qh, kh, false, true)?;
            if let Some(mask) = mask {
                scores = tape.masked_fill(scores, mask, T::lit(MASK_VALUE))?;
            }
            let probs = tape.softmax(scores, 1)?;
            let probs = tape.dropout(probs, self.config.attention_dropout)?;
            outputs.push(tape.matmul(probs, vh)?);
        }
        let joined = if heads == 1 {
            outputs[0]
        } else {
            tape.concat(&outputs, 1)?
        };
        self.apply_linear(tape, &a.o, joined)
    }

    fn feed_forward(&self, tape: &mut Tape<'_, T>, f: &FeedForward, x: Var) -> Result<Var> {
        let h = self.apply_linear(tape, &f.up, x)?;
        let h = match self.config.activation {
            Activation::Relu => tape.relu(h),
            Activation::Gelu => tape.gelu(h),
        };
        let h = tape.dropout(h, self.config.activation_dropout)?;
        self.apply_linear(tape, &f.down, h)
    }

    fn residual(&self, tape: &mut Tape<'_, T>, x: Var, update: Var) -> Result<Var> {
        let update = tape.dropout(update, self.config.hidden_dropout)?;
        Ok(tape.add(x, update)?)
    }

    /// Runs the transformer encoder over one source. `self_mask` optionally
    /// hides query-key pairs in every encoder self-attention.
    pub fn encode_source(&self, tape: &mut Tape<'_, T>, ids: &[u32], self_mask: Option<&[bool]>) -> Result<Var> {
        self.check_source("source", ids)?;
        let Body::Transformer {
            encoder, encoder_norm, ..
        } = &self.layout.body
        else {
            return Err(Error::InvalidInput("encode_source needs a transformer model".into()));
        };
        let mut x = self.embed(tape, self.layout.source_embed, ids)?;
        for layer in encoder {
            let h = self.apply_norm(tape, &layer.attn_norm, x)?;
            let h = self.attend(tape, &layer.attn, h, h, self_mask)?;
            x = self.residual(tape, x, h)?;
            let h = self.apply_norm(tape, &layer.ffn_norm, x)?;
            let h = self.feed_forward(tape, &layer.ffn, h)?;
            x = self.residual(tape, x, h)?;
        }
        self.apply_norm(tape, encoder_norm, x)
    }

    /// One LSTM layer over `inputs: [steps, in]`, starting from `init` or
    /// zeros. Returns the hidden states `[steps, hidden]` and the final state.
    fn run_lstm(
        &self,
        tape: &mut Tape<'_, T>,
        l: &Lstm,
        inputs: Var,
        init: Option<(Var, Var)>,
    ) -> Result<(Var, (Var, Var))> {
        let hidden = self.config.embedding_dim;
        let steps = tape.shape(inputs)[0];
        let (wx, wh, b) = (tape.param(l.wx), tape.param(l.wh), tape.param(l.b));
        let projected = tape.linear(inputs, wx, Some(b))?;
        let (mut h, mut c) = match init {
            Some(state) => state,
            None => (
                tape.constant(Tensor::zeros([1, hidden])),
                tape.constant(Tensor::zeros([1, hidden])),
            ),
        };
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = tape.narrow(projected, 0, t, 1)?;
            let hw = tape.matmul(h, wh)?;
            let gates = tape.add(xt, hw)?;
            let i = tape.narrow(gates, 1, 0, hidden)?;
            let i = tape.sigmoid(i);
            let f = tape.narrow(gates, 1, hidden, hidden)?;
            let f = tape.sigmoid(f);
            let g = tape.narrow(gates, 1, 2 * hidden, hidden)?;
            let g = tape.tanh(g);
            let o = tape.narrow(gates, 1, 3 * hidden, hidden)?;
            let o = tape.sigmoid(o);
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            c = tape.add(keep, write)?;
            let squashed = tape.tanh(c);
            h = tape.mul(o, squashed)?;
            outputs.push(h);
        }
        let out = tape.concat(&outputs, 0)?;
        Ok((out, (h, c)))
    }

    /// Encodes the sources of `example` according to the architecture.
    pub fn encode(&self, tape: &mut Tape<'_, T>, example: &Example) -> Result<Encoded> {
        match (&self.layout.body, self.config.architecture) {
            (Body::Transformer { .. }, Architecture::DualSource) => {
                let article = self.encode_source(tape, &example.article, None)?;
                let properties = self.encode_source(tape, &example.properties, None)?;
                Ok(Encoded::Attention(vec![article, properties]))
            }
            (Body::Transformer { .. }, _) => Ok(Encoded::Attention(vec![self.encode_source(
                tape,
                &example.source,
                None,
            )?])),
            (Body::Recurrent { encoder, .. }, _) => {
                self.check_source("source", &example.source)?;
                let mut x = self.embed(tape, self.layout.source_embed, &example.source)?;
                let mut states = Vec::with_capacity(encoder.len());
                for layer in encoder {
                    let (out, state) = self.run_lstm(tape, layer, x, None)?;
                    states.push(state);
                    x = tape.dropout(out, self.config.hidden_dropout)?;
                }
                Ok(Encoded::Recurrent(states))
            }
        }
    }

    fn project(&self, tape: &mut Tape<'_, T>, h: Var) -> Result<Var> {
        let logits = match self.layout.output {
            Some(w) => {
                let w = tape.param(w);
                tape.matmul(h, w)?
            }
            None => {
                let e = tape.param(self.layout.target_embed);
                tape.matmul_t(h, e, false, true)?
            }
        };
        let b = tape.param(self.layout.output_bias);
        Ok(tape.add(logits, b)?)
    }

    /// Logits `[prefix.len(), vocab]` for the next token after every prefix
    /// position.
    pub fn decode_logits(&self, tape: &mut Tape<'_, T>, encoded: &Encoded, prefix: &[u32]) -> Result<Var> {
        let (h, _) = self.decode_hidden(tape, encoded, prefix)?;
        self.project(tape, h)
    }

    /// Logits `[1, vocab]` for the token following the whole prefix.
    pub fn next_token_logits(&self, tape: &mut Tape<'_, T>, encoded: &Encoded, prefix: &[u32]) -> Result<Var> {
        let (h, _) = self.decode_hidden(tape, encoded, prefix)?;
        let last = tape.narrow(h, 0, prefix.len() - 1, 1)?;
        self.project(tape, last)
    }

    /// Decoder hidden states for `prefix`; for recurrent models also the
    /// final state of every decoder layer.
    fn decode_hidden(
        &self,
        tape: &mut Tape<'_, T>,
        encoded: &Encoded,
        prefix: &[u32],
    ) -> Result<(Var, Vec<(Var, Var)>)> {
        self.check_ids("target prefix", prefix)?;
        match (&self.layout.body, encoded) {
            (
                Body::Transformer {
                    decoder, decoder_norm, ..
                },
                Encoded::Attention(memories),
            ) => {
                if self.layout.positions.is_some()
                    && prefix.len() > self.config.max_source_len.max(self.config.max_target_len)
                {
                    return Err(Error::InvalidInput(
                        "target longer than the learned position table".into(),
                    ));
                }
                let mask = causal_mask(prefix.len());
                let mut x = self.embed(tape, self.layout.target_embed, prefix)?;
                for layer in decoder {
                    let h = self.apply_norm(tape, &layer.self_norm, x)?;
                    let h = self.attend(tape, &layer.self_attn, h, h, Some(&mask))?;
                    x = self.residual(tape, x, h)?;
                    for block in &layer.cross {
                        let memory = *memories
                            .get(block.memory)
                            .ok_or_else(|| Error::InvalidInput("encoder memory missing for cross-attention".into()))?;
                        let h = self.apply_norm(tape, &block.norm, x)?;
                        let h = self.attend(tape, &block.attn, h, memory, None)?;
                        x = self.residual(tape, x, h)?;
                    }
                    let h = self.apply_norm(tape, &layer.ffn_norm, x)?;
                    let h = self.feed_forward(tape, &layer.ffn, h)?;
                    x = self.residual(tape, x, h)?;
                }
                Ok((self.apply_norm(tape, decoder_norm, x)?, Vec::new()))
            }
            (Body::Recurrent { decoder, .. }, Encoded::Recurrent(states)) => {
                let mut x = self.embed(tape, self.layout.target_embed, prefix)?;
                let mut finals = Vec::with_capacity(decoder.len());
                for (i, layer) in decoder.iter().enumerate() {
                    // Deeper decoders than encoders reuse the top encoder state.
                    let init = states[i.min(states.len() - 1)];
                    let (out, state) = self.run_lstm(tape, layer, x, Some(init))?;
                    finals.push(state);
                    x = tape.dropout(out, self.config.hidden_dropout)?;
                }
                Ok((x, finals))
            }
            _ => Err(Error::InvalidInput(
                "encoder output does not match the architecture".into(),
            )),
        }
    }

    /// Next-token logits `[1, vocab]` after consuming `token`, for recurrent
    /// decoding from explicit per-layer states. Returns the new states.
    pub fn recurrent_step(
        &self,
        tape: &mut Tape<'_, T>,
        states: &[(Var, Var)],
        token: u32,
    ) -> Result<(Var, Vec<(Var, Var)>)> {
        let Body::Recurrent { .. } = &self.layout.body else {
            return Err(Error::InvalidInput("recurrent_step needs a seq2seq model".into()));
        };
        let (h, finals) = self.decode_hidden(tape, &Encoded::Recurrent(states.to_vec()), &[token])?;
        Ok((self.project(tape, h)?, finals))
    }

    /// Summed cross entropy of one example (teacher forcing) and the number
    /// of scored tokens.
    pub fn example_loss(&self, tape: &mut Tape<'_, T>, example: &Example) -> Result<(Var, usize)> {
        if example.target.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "target of {} is too short",
                example.article_id
            )));
        }
        let encoded = self.encode(tape, example)?;
        let n = example.target.len() - 1;
        let logits = self.decode_logits(tape, &encoded, &example.target[..n])?;
        let labels = &example.target[1..];
        let count = labels.iter().filter(|&&t| t != PAD).count();
        let loss = tape.cross_entropy(logits, labels, Some(PAD), Reduction::Sum)?;
        Ok((loss, count))
    }

    /// Mean per-token cross entropy over a batch.
    pub fn batch_loss(&self, tape: &mut Tape<'_, T>, batch: &[&Example]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let mut total: Option<Var> = None;
        let mut tokens = 0usize;
        for example in batch {
            let (loss, count) = self.example_loss(tape, example)?;
            tokens += count;
            total = Some(match total {
                Some(t) => tape.add(t, loss)?,
                None => loss,
            });
        }
        let total = total.expect("batch is non-empty");
        Ok(tape.scale(total, T::lit(1.0 / tokens.max(1) as f64)))
    }
}
