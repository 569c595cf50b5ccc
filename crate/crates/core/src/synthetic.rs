//! Deterministic synthetic MPE corpora for desk-scale experiments.
//!
//! Articles are assembled from sentence templates. Every property sentence
//! names its property and mentions the value either verbatim or through a
//! fixed alias (a lookup-table synonym for categorical values, reversed word
//! order for names), so each pair is inferable from its article by
//! construction. With `correlated` enabled, pairs of categorical properties
//! are linked by a fixed value mapping and the dependent sentence may be
//! omitted, leaving the value implied by the other property.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{MpeRecord, PropertyValuePair};
use crate::error::{Error, Result};
use crate::normalize::NormalizationPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub articles: usize,
    /// Size of the property inventory.
    pub properties: usize,
    pub mean_pairs_per_article: f64,
    /// Half-width of the uniform distribution of properties per article.
    pub pair_spread: f64,
    pub categorical_fraction: f64,
    /// Probability that a value is written verbatim rather than via its alias.
    pub value_in_text_prob: f64,
    /// Zipf exponent of property popularity.
    pub property_skew: f64,
    pub min_filler_sentences: usize,
    pub max_filler_sentences: usize,
    pub correlated: bool,
    /// Probability of omitting the dependent sentence of a correlated pair.
    pub correlation_redundancy: f64,
    /// Draw person names from this many first and this many last names
    /// instead of inventing every name afresh.
    pub name_pool: Option<usize>,
    pub id_prefix: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            articles: 1000,
            properties: 40,
            mean_pairs_per_article: 4.5,
            pair_spread: 2.0,
            categorical_fraction: 0.5,
            value_in_text_prob: 0.85,
            property_skew: 1.0,
            min_filler_sentences: 1,
            max_filler_sentences: 4,
            correlated: false,
            correlation_redundancy: 0.5,
            name_pool: None,
            id_prefix: "syn".into(),
        }
    }
}

impl GeneratorConfig {
    fn spread(&self) -> f64 {
        self.pair_spread.min(self.mean_pairs_per_article - 1.0).max(0.0)
    }

    pub fn max_pairs_per_article(&self) -> usize {
        (self.mean_pairs_per_article + self.spread()).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.articles == 0 {
            return Err(Error::Config("articles must be positive".into()));
        }
        if !(self.mean_pairs_per_article >= 1.0) {
            return Err(Error::Config("mean_pairs_per_article must be >= 1".into()));
        }
        if self.properties < self.max_pairs_per_article() {
            return Err(Error::Config(format!(
                "property inventory of {} is smaller than the {} properties an article may need",
                self.properties,
                self.max_pairs_per_article()
            )));
        }
        for (name, p) in [
            ("categorical_fraction", self.categorical_fraction),
            ("value_in_text_prob", self.value_in_text_prob),
            ("correlation_redundancy", self.correlation_redundancy),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.min_filler_sentences > self.max_filler_sentences {
            return Err(Error::Config("min_filler_sentences > max_filler_sentences".into()));
        }
        if self.name_pool.is_some_and(|n| !(1..=2000).contains(&n)) {
            return Err(Error::Config("name_pool must lie in 1..=2000".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Categorical,
    Relational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub kind: PropertyKind,
    pub popularity: f64,
    /// Categorical value inventory with sampling weights and aliases.
    pub values: Vec<String>,
    pub value_weights: Vec<f64>,
    pub aliases: Vec<String>,
    /// `(source property, mapping from source value index to own value index)`.
    pub determined_by: Option<(String, Vec<usize>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mention {
    Verbatim,
    Alias,
    Implied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub property: String,
    pub value: String,
    pub mention: Mention,
    pub surface: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub article_id: String,
    pub subject: String,
    pub pairs: Vec<PairMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub inventory: Vec<PropertySpec>,
    pub records: Vec<MpeRecord>,
    pub meta: Vec<RecordMeta>,
}

const CATEGORICAL_NAMES: &[&str] = &[
    "continent",
    "country",
    "occupation",
    "genre",
    "language",
    "religion",
    "sport",
    "instrument",
    "position",
    "party",
    "label",
    "color",
    "species",
    "family",
    "order",
    "genus",
    "currency",
    "climate",
    "material",
    "style",
    "gender",
    "rank",
    "league",
    "era",
];

const RELATIONAL_NAMES: &[&str] = &[
    "father",
    "mother",
    "spouse",
    "sibling",
    "child",
    "founder",
    "director",
    "author",
    "composer",
    "producer",
    "architect",
    "coach",
    "birthplace",
    "capital",
    "headquarters",
    "publisher",
    "developer",
    "owner",
    "mentor",
    "designer",
    "editor",
    "painter",
    "sponsor",
    "manager",
    "successor",
    "predecessor",
    "namesake",
];

const CONSONANTS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

const PROPERTY_TEMPLATES: &[&str] = &["Its {p} is {v}.", "The {p} is {v}.", "{v} is the {p}."];
const OPENERS: &[&str] = &[
    "{s} is a notable subject.",
    "{s} is widely known.",
    "This article is about {s}.",
];
const FILLER_VERBS: &[&str] = &["visited", "described", "joined", "met", "studied", "praised"];
const FILLER_NOUNS: &[&str] = &[
    "the city",
    "a group",
    "the river",
    "an archive",
    "the valley",
    "a school",
];
const FILLER_TAILS: &[&str] = &["in spring", "many times", "with care", "at last", "long ago", "once"];

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(CONSONANTS[rng.random_range(0..CONSONANTS.len())]);
        w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    capitalize(&w)
}

fn pseudo_name(rng: &mut ChaCha8Rng) -> String {
    let first = pseudo_word(rng, 2);
    let syllables = rng.random_range(2..=3);
    let last = pseudo_word(rng, syllables);
    format!("{first} {last}")
}

/// Person names, fresh or combined from fixed first/last name pools.
struct NameSource {
    pools: Option<(Vec<String>, Vec<String>)>,
}

impl NameSource {
    fn new(pool: Option<usize>, rng: &mut ChaCha8Rng) -> Self {
        let pools = pool.map(|n| {
            let firsts = distinct_words(rng, n, || 2);
            let lasts = distinct_words(rng, n, || 3);
            (firsts, lasts)
        });
        Self { pools }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> String {
        match &self.pools {
            None => pseudo_name(rng),
            Some((firsts, lasts)) => {
                let first = &firsts[rng.random_range(0..firsts.len())];
                let last = &lasts[rng.random_range(0..lasts.len())];
                format!("{first} {last}")
            }
        }
    }
}

fn distinct_words(rng: &mut ChaCha8Rng, n: usize, syllables: impl Fn() -> usize) -> Vec<String> {
    let mut words: Vec<String> = Vec::with_capacity(n);
    while words.len() < n {
        let w = pseudo_word(rng, syllables());
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

fn reversed_words(s: &str) -> String {
    let mut words: Vec<&str> = s.split(' ').collect();
    words.reverse();
    words.join(" ")
}

fn weighted_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut draw = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if draw < *w {
            return i;
        }
        draw -= w;
    }
    weights.len() - 1
}

fn build_inventory(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<PropertySpec> {
    let n_cat = (config.categorical_fraction * config.properties as f64).round() as usize;
    let mut used_words = BTreeSet::new();
    let mut fresh_word = |rng: &mut ChaCha8Rng, syllables: usize| loop {
        let w = pseudo_word(rng, syllables);
        if used_words.insert(w.clone()) {
            return w;
        }
    };
    let mut inventory = Vec::with_capacity(config.properties);
    for i in 0..config.properties {
        let categorical = i < n_cat;
        let name = if categorical {
            CATEGORICAL_NAMES
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("category {i}"))
        } else {
            RELATIONAL_NAMES
                .get(i - n_cat)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("relation {i}"))
        };
        let (values, value_weights, aliases) = if categorical {
            let n = rng.random_range(3..=10);
            let values: Vec<String> = (0..n).map(|_| fresh_word(rng, 2)).collect();
            let aliases: Vec<String> = (0..n).map(|_| fresh_word(rng, 3)).collect();
            let weights = (0..n).map(|j| 0.45f64.powi(j)).collect();
            (values, weights, aliases)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        inventory.push(PropertySpec {
            name,
            kind: if categorical {
                PropertyKind::Categorical
            } else {
                PropertyKind::Relational
            },
            popularity: 0.0,
            values,
            value_weights,
            aliases,
            determined_by: None,
        });
    }
    let mut ranks: Vec<usize> = (0..config.properties).collect();
    ranks.shuffle(rng);
    for (spec, rank) in inventory.iter_mut().zip(ranks) {
        spec.popularity = 1.0 / ((rank + 1) as f64).powf(config.property_skew);
    }
    if config.correlated {
        // Consecutive categorical properties form (source, dependent) pairs.
        let mut i = 0;
        while i + 1 < n_cat {
            let n_src = inventory[i].values.len();
            let n_dst = inventory[i + 1].values.len();
            let mapping = (0..n_src).map(|_| rng.random_range(0..n_dst)).collect();
            inventory[i + 1].determined_by = Some((inventory[i].name.clone(), mapping));
            i += 2;
        }
    }
    inventory
}

fn sample_properties(rng: &mut ChaCha8Rng, inventory: &[PropertySpec], k: usize) -> Vec<usize> {
    let mut weights: Vec<f64> = inventory.iter().map(|p| p.popularity).collect();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let i = weighted_index(rng, &weights);
        weights[i] = 0.0;
        chosen.push(i);
    }
    chosen
}

/// Generates a corpus; identical `(config, seed)` yields identical output.
pub fn generate_synthetic(config: &GeneratorConfig, seed: u64) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inventory = build_inventory(config, &mut rng);
    let names = NameSource::new(config.name_pool, &mut rng);
    let policy = NormalizationPolicy::default();
    let spread = config.spread();
    let mut records = Vec::with_capacity(config.articles);
    let mut meta = Vec::with_capacity(config.articles);

    for a in 0..config.articles {
        let draw = config.mean_pairs_per_article - spread + 2.0 * spread * rng.random::<f64>();
        let mut k = draw.floor() as usize;
        if rng.random::<f64>() < draw - draw.floor() {
            k += 1;
        }
        let k = k.clamp(1, config.properties);
        let chosen = sample_properties(&mut rng, &inventory, k);
        let subject = names.draw(&mut rng);

        // Categorical value indices picked so far, for correlated dependents.
        let mut picked: Vec<(usize, usize)> = Vec::new();
        let mut pairs = Vec::with_capacity(k);
        let mut pair_meta = Vec::with_capacity(k);
        let mut sentences = Vec::new();
        for &pi in &chosen {
            let spec = &inventory[pi];
            let (value, alias, value_index) = match spec.kind {
                PropertyKind::Categorical => {
                    let j = weighted_index(&mut rng, &spec.value_weights);
                    (spec.values[j].clone(), spec.aliases[j].clone(), Some(j))
                }
                PropertyKind::Relational => {
                    let v = names.draw(&mut rng);
                    let alias = reversed_words(&v);
                    (v, alias, None)
                }
            };
            let (value, alias, value_index, implied_ok) = match &spec.determined_by {
                Some((source, mapping)) => {
                    let source_idx = inventory.iter().position(|p| &p.name == source);
                    match picked.iter().find(|(p, _)| Some(*p) == source_idx) {
                        Some(&(_, sj)) => {
                            let j = mapping[sj];
                            (spec.values[j].clone(), spec.aliases[j].clone(), Some(j), true)
                        }
                        None => (value, alias, value_index, false),
                    }
                }
                None => (value, alias, value_index, false),
            };
            if let Some(j) = value_index {
                picked.push((pi, j));
            }
            let mention = if implied_ok && rng.random::<f64>() < config.correlation_redundancy {
                Mention::Implied
            } else if rng.random::<f64>() < config.value_in_text_prob {
                Mention::Verbatim
            } else {
                Mention::Alias
            };
            let surface = match mention {
                Mention::Verbatim => Some(value.clone()),
                Mention::Alias => Some(alias),
                Mention::Implied => None,
            };
            if let Some(surface) = &surface {
                let template = PROPERTY_TEMPLATES[rng.random_range(0..PROPERTY_TEMPLATES.len())];
                let sentence = template.replace("{p}", &spec.name).replace("{v}", surface);
                sentences.push(capitalize(&sentence));
            }
            pairs.push(PropertyValuePair::new(spec.name.clone(), value.clone())?);
            pair_meta.push(PairMeta {
                property: spec.name.clone(),
                value,
                mention,
                surface,
            });
        }
        let n_filler = rng.random_range(config.min_filler_sentences..=config.max_filler_sentences);
        for _ in 0..n_filler {
            let sentence = format!(
                "{} {} {} {}.",
                subject.split(' ').next().unwrap_or("It"),
                FILLER_VERBS[rng.random_range(0..FILLER_VERBS.len())],
                FILLER_NOUNS[rng.random_range(0..FILLER_NOUNS.len())],
                FILLER_TAILS[rng.random_range(0..FILLER_TAILS.len())],
            );
            let at = rng.random_range(0..=sentences.len());
            sentences.insert(at, sentence);
        }
        let opener = OPENERS[rng.random_range(0..OPENERS.len())].replace("{s}", &subject);
        let text = std::iter::once(opener).chain(sentences).collect::<Vec<_>>().join(" ");
        let article_id = format!("{}{:06}", config.id_prefix, a);
        records.push(MpeRecord::new(article_id.clone(), text, pairs, &policy)?);
        meta.push(RecordMeta {
            article_id,
            subject,
            pairs: pair_meta,
        });
    }
    Ok(SyntheticCorpus {
        inventory,
        records,
        meta,
    })
}
