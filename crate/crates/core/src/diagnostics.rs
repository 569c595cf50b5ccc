//! Diagnostic subsets (rare, unseen, categorical, relational, exact match,
//! long articles), their per-article shares, and approximate matching of
//! values against article text.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::MpeRecord;
use crate::error::{Error, Result};
use crate::normalize::{alnum_words, NormalizationPolicy};

/// Training statistics of one property.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyStats {
    pub train_frequency: usize,
    /// Pair counts per value.
    pub value_counts: BTreeMap<String, usize>,
}

/// What a property occurrence counts as when measuring frequency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyUnit {
    /// Every pair counts once, so frequency equals the sum of value counts.
    #[default]
    Pairs,
    /// Every article mentioning the property counts once.
    Articles,
}

pub fn property_stats<'a>(
    train: impl IntoIterator<Item = &'a MpeRecord>,
    unit: FrequencyUnit,
) -> BTreeMap<String, PropertyStats> {
    let mut stats: BTreeMap<String, PropertyStats> = BTreeMap::new();
    for record in train {
        for pair in &record.pairs {
            let entry = stats.entry(pair.property.clone()).or_default();
            *entry.value_counts.entry(pair.value.clone()).or_default() += 1;
            if unit == FrequencyUnit::Pairs {
                entry.train_frequency += 1;
            }
        }
        if unit == FrequencyUnit::Articles {
            for property in record.properties() {
                stats.get_mut(property).expect("inserted above").train_frequency += 1;
            }
        }
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongArticleThreshold {
    /// Articles with more words than this are long.
    Words(usize),
    /// Articles longer than this percentile of train article lengths are long.
    Percentile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticThresholds {
    /// Properties with train frequency strictly below this are rare.
    pub rare_max: usize,
    pub entropy_threshold: f64,
    pub long_article: LongArticleThreshold,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        Self {
            rare_max: 4000,
            entropy_threshold: 0.7,
            long_article: LongArticleThreshold::Words(695),
        }
    }
}

impl DiagnosticThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.rare_max < 1 {
            return Err(Error::Config("rare_max must be at least 1".into()));
        }
        if !(self.entropy_threshold > 0.0 && self.entropy_threshold < 1.0) {
            return Err(Error::Config(format!(
                "entropy_threshold must lie in (0, 1), got {}",
                self.entropy_threshold
            )));
        }
        if let LongArticleThreshold::Percentile(p) = self.long_article {
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::Config(format!(
                    "long-article percentile must lie in (0, 100], got {p}"
                )));
            }
        }
        Ok(())
    }

    /// Word threshold after resolving percentile mode against train lengths.
    pub fn long_words(&self, train_word_lengths: &[usize]) -> Result<usize> {
        match self.long_article {
            LongArticleThreshold::Words(w) => Ok(w),
            LongArticleThreshold::Percentile(p) => percentile_nearest_rank(train_word_lengths, p),
        }
    }
}

/// Nearest-rank percentile: the smallest value with at least `p` percent of
/// the data at or below it.
pub fn percentile_nearest_rank(values: &[usize], p: f64) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::Empty("no article lengths to take a percentile of".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

/// Shannon entropy of the value distribution divided by `log2(k)`; 0 when a
/// single distinct value exists.
pub fn normalized_entropy<'a>(counts: impl IntoIterator<Item = &'a usize>) -> Result<f64> {
    let counts: Vec<usize> = counts.into_iter().copied().collect();
    if counts.is_empty() {
        return Err(Error::InvalidValue("entropy of an empty distribution".into()));
    }
    if counts.contains(&0) {
        return Err(Error::InvalidValue("value counts must be positive".into()));
    }
    let k = counts.len();
    if k == 1 {
        return Ok(0.0);
    }
    let total: usize = counts.iter().sum();
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    Ok((h / (k as f64).log2()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyFlags {
    pub unseen: bool,
    pub rare: bool,
    pub categorical: bool,
    /// `None` for unseen properties, which default to relational.
    pub entropy: Option<f64>,
}

pub fn classify_property(
    property: &str,
    stats: &BTreeMap<String, PropertyStats>,
    thresholds: &DiagnosticThresholds,
) -> PropertyFlags {
    let Some(s) = stats.get(property).filter(|s| s.train_frequency > 0) else {
        return PropertyFlags {
            unseen: true,
            rare: true,
            categorical: false,
            entropy: None,
        };
    };
    let entropy = normalized_entropy(s.value_counts.values()).ok();
    PropertyFlags {
        unseen: false,
        rare: s.train_frequency < thresholds.rare_max,
        categorical: entropy.is_some_and(|h| h < thresholds.entropy_threshold),
        entropy,
    }
}

/// Whether the words of `value` appear contiguously among the words of
/// `text`, both normalized under `policy`.
pub fn value_mentioned(value: &str, text: &str, policy: &NormalizationPolicy) -> bool {
    let value = policy.apply(value);
    let text = policy.apply(text);
    let needle = alnum_words(&value);
    if needle.is_empty() {
        return !value.is_empty() && text.contains(value.as_str());
    }
    let hay = alnum_words(&text);
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFlags {
    pub exact_match: bool,
    pub long_article: bool,
}

/// Flags of the `(record, property)` instance. A multi-valued instance is an
/// exact match only when every value is mentioned.
pub fn classify_instance(
    record: &MpeRecord,
    property: &str,
    long_words: usize,
    policy: &NormalizationPolicy,
) -> InstanceFlags {
    let mut values = record.values_of(property).peekable();
    let exact_match = values.peek().is_some() && values.all(|v| value_mentioned(v, &record.text, policy));
    InstanceFlags {
        exact_match,
        long_article: record.word_count() > long_words,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Rare,
    Unseen,
    Categorical,
    Relational,
    ExactMatch,
    LongArticles,
}

impl Subset {
    /// Report row order.
    pub const ALL: [Subset; 6] = [
        Subset::Rare,
        Subset::Unseen,
        Subset::Categorical,
        Subset::Relational,
        Subset::ExactMatch,
        Subset::LongArticles,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Subset::Rare => "rare",
            Subset::Unseen => "unseen",
            Subset::Categorical => "categorical",
            Subset::Relational => "relational",
            Subset::ExactMatch => "exact match",
            Subset::LongArticles => "long articles",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceLabel {
    pub article_id: String,
    pub property: String,
    pub unseen: bool,
    pub rare: bool,
    pub categorical: bool,
    pub relational: bool,
    pub exact_match: bool,
    pub long_article: bool,
    pub entropy: Option<f64>,
}

impl InstanceLabel {
    pub fn has(&self, subset: Subset) -> bool {
        match subset {
            Subset::Rare => self.rare,
            Subset::Unseen => self.unseen,
            Subset::Categorical => self.categorical,
            Subset::Relational => self.relational,
            Subset::ExactMatch => self.exact_match,
            Subset::LongArticles => self.long_article,
        }
    }
}

/// Labels of every `(article, property)` instance of a split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticLabels {
    pub labels: Vec<InstanceLabel>,
}

impl DiagnosticLabels {
    pub fn lookup(&self) -> HashMap<(&str, &str), &InstanceLabel> {
        self.labels
            .iter()
            .map(|l| ((l.article_id.as_str(), l.property.as_str()), l))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for label in &self.labels {
            serde_json::to_writer(&mut w, label).map_err(|e| Error::io(path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut labels = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            labels.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self { labels })
    }
}

/// Labels every instance of `split` against statistics gathered on train.
pub fn label_split(
    split: &[MpeRecord],
    stats: &BTreeMap<String, PropertyStats>,
    thresholds: &DiagnosticThresholds,
    long_words: usize,
    policy: &NormalizationPolicy,
) -> Result<DiagnosticLabels> {
    thresholds.validate()?;
    let mut labels = Vec::new();
    let mut cache: HashMap<&str, PropertyFlags> = HashMap::new();
    for record in split {
        for property in record.properties() {
            let p = *cache
                .entry(property)
                .or_insert_with(|| classify_property(property, stats, thresholds));
            let i = classify_instance(record, property, long_words, policy);
            labels.push(InstanceLabel {
                article_id: record.article_id.clone(),
                property: property.to_string(),
                unseen: p.unseen,
                rare: p.rare,
                categorical: p.categorical,
                relational: !p.categorical,
                exact_match: i.exact_match,
                long_article: i.long_article,
                entropy: p.entropy,
            });
        }
    }
    Ok(DiagnosticLabels { labels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub articles: usize,
    /// Mean per-article share of instances in each subset, as a percentage.
    pub shares: BTreeMap<Subset, f64>,
}

pub fn subset_report(split: &[MpeRecord], labels: &DiagnosticLabels) -> Result<SubsetReport> {
    if split.is_empty() {
        return Err(Error::Empty("split has no articles".into()));
    }
    let lookup = labels.lookup();
    let mut sums: BTreeMap<Subset, f64> = Subset::ALL.iter().map(|s| (*s, 0.0)).collect();
    for record in split {
        let props = record.properties();
        let mut counts = [0usize; 6];
        for property in &props {
            let label = lookup.get(&(record.article_id.as_str(), *property)).ok_or_else(|| {
                Error::MissingAssignment(format!(
                    "no diagnostic label for article {:?}, property {:?}",
                    record.article_id, property
                ))
            })?;
            for (slot, subset) in counts.iter_mut().zip(Subset::ALL) {
                *slot += usize::from(label.has(subset));
            }
        }
        for (count, subset) in counts.iter().zip(Subset::ALL) {
            *sums.get_mut(&subset).unwrap() += *count as f64 / props.len() as f64;
        }
    }
    let n = split.len() as f64;
    Ok(SubsetReport {
        articles: split.len(),
        shares: sums.into_iter().map(|(s, v)| (s, v / n * 100.0)).collect(),
    })
}

impl SubsetReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>8}", "subset", "share %");
        for subset in Subset::ALL {
            let _ = writeln!(out, "{:<14} {:>8.2}", subset.label(), self.shares[&subset]);
        }
        let _ = writeln!(out, "{:<14} {:>8}", "articles", self.articles);
        out
    }
}

/// A matched region of the article, in byte offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSpan {
    pub start: usize,
    pub end: usize,
    pub distance: usize,
}

/// Spans of `article` within `max_edit_distance` (Levenshtein, over chars)
/// of `value`, selected greedily best-distance-first without overlap and
/// returned in that order.
pub fn approx_match(value: &str, article: &str, max_edit_distance: usize) -> Result<Vec<MatchSpan>> {
    let pattern: Vec<char> = value.chars().collect();
    if pattern.is_empty() {
        return Err(Error::InvalidValue("approximate match of an empty value".into()));
    }
    let offsets: Vec<usize> = article
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(article.len()))
        .collect();
    let text: Vec<char> = article.chars().collect();
    let m = pattern.len();

    // Column-wise DP with free start: cost[i] and the start column of the
    // best alignment ending at the current column.
    let mut cost: Vec<usize> = (0..=m).collect();
    let mut start: Vec<usize> = vec![0; m + 1];
    let mut candidates = Vec::new();
    for (j, &c) in text.iter().enumerate() {
        let mut next_cost = vec![0usize; m + 1];
        let mut next_start = vec![j + 1; m + 1];
        for i in 1..=m {
            let sub = cost[i - 1] + usize::from(pattern[i - 1] != c);
            let del = next_cost[i - 1] + 1;
            let ins = cost[i] + 1;
            let (best, from) = [(sub, start[i - 1]), (ins, start[i]), (del, next_start[i - 1])]
                .into_iter()
                .min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
                .unwrap();
            next_cost[i] = best;
            next_start[i] = from;
        }
        cost = next_cost;
        start = next_start;
        if cost[m] <= max_edit_distance && start[m] < j + 1 {
            candidates.push(MatchSpan {
                start: start[m],
                end: j + 1,
                distance: cost[m],
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.distance
            .cmp(&b.distance)
            .then((a.end - a.start).cmp(&(b.end - b.start)))
            .then(a.start.cmp(&b.start))
    });
    let mut chosen: Vec<MatchSpan> = Vec::new();
    for c in candidates {
        if chosen.iter().all(|s| c.end <= s.start || c.start >= s.end) {
            chosen.push(c);
        }
    }
    Ok(chosen
        .into_iter()
        .map(|s| MatchSpan {
            start: offsets[s.start],
            end: offsets[s.end],
            distance: s.distance,
        })
        .collect())
}
