//! Merging single-property records into MPE records, the controlled split
//! with held-out property sets, and leakage audits.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{MpeRecord, PropertyValuePair};
use crate::error::{Error, Result};
use crate::normalize::NormalizationPolicy;

/// Full-scale constants the desk defaults are scaled from.
pub const FULL_SCALE_SEEN_ARTICLES_PER_EVAL_SPLIT: usize = 2_000;
pub const FULL_SCALE_MAX_EVAL_SPLIT_ARTICLES: usize = 5_000;
pub const FULL_SCALE_DRAFTED_ARTICLES: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidValue(format!("unknown split {other:?}"))),
        }
    }
}

/// A record whose pairs all share one property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinglePropertyRecord {
    pub article_id: String,
    pub text: String,
    pub property: String,
    pub values: Vec<String>,
}

impl SinglePropertyRecord {
    pub fn from_record(record: MpeRecord) -> Result<Self> {
        let props = record.properties();
        if props.len() != 1 {
            return Err(Error::InvalidValue(format!(
                "record {:?} carries {} properties, expected exactly one",
                record.article_id,
                props.len()
            )));
        }
        let property = props[0].to_string();
        Ok(Self {
            article_id: record.article_id,
            text: record.text,
            property,
            values: record.pairs.into_iter().map(|p| p.value).collect(),
        })
    }

    pub fn into_record(self) -> MpeRecord {
        let property = self.property;
        MpeRecord {
            article_id: self.article_id,
            text: self.text,
            pairs: self
                .values
                .into_iter()
                .map(|value| PropertyValuePair {
                    property: property.clone(),
                    value,
                })
                .collect(),
        }
    }
}

/// Unions single-property records per article. Output is ordered by
/// article id, so input order does not affect it beyond pair order.
pub fn merge_single_to_mpe(
    records: impl IntoIterator<Item = SinglePropertyRecord>,
    policy: &NormalizationPolicy,
) -> Result<Vec<MpeRecord>> {
    let mut merged: BTreeMap<String, (String, Vec<PropertyValuePair>)> = BTreeMap::new();
    for single in records {
        let pairs = single
            .values
            .iter()
            .map(|v| PropertyValuePair::new(single.property.clone(), v.clone()))
            .collect::<Result<Vec<_>>>()?;
        match merged.get_mut(&single.article_id) {
            Some((text, acc)) => {
                if policy.apply(text) != policy.apply(&single.text) {
                    return Err(Error::ConflictingText(single.article_id));
                }
                acc.extend(pairs);
            }
            None => {
                merged.insert(single.article_id, (single.text, pairs));
            }
        }
    }
    merged
        .into_iter()
        .map(|(id, (text, pairs))| MpeRecord::new(id, text, pairs, policy))
        .collect()
}

/// One single-property record per distinct property, carrying all its values.
pub fn reduce_to_single(record: &MpeRecord) -> Vec<SinglePropertyRecord> {
    record
        .properties()
        .into_iter()
        .map(|property| SinglePropertyRecord {
            article_id: record.article_id.clone(),
            text: record.text.clone(),
            property: property.to_string(),
            values: record.values_of(property).map(str::to_string).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_only_property_fraction: f64,
    pub val_only_property_fraction: f64,
    pub shared_valtest_property_fraction: f64,
    pub seen_articles_per_eval_split: usize,
    pub max_eval_split_articles: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_only_property_fraction: 0.2,
            val_only_property_fraction: 0.2,
            shared_valtest_property_fraction: 0.1,
            seen_articles_per_eval_split: 50,
            max_eval_split_articles: 500,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn held_out_fraction(&self) -> f64 {
        self.test_only_property_fraction + self.val_only_property_fraction + self.shared_valtest_property_fraction
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("test_only_property_fraction", self.test_only_property_fraction),
            ("val_only_property_fraction", self.val_only_property_fraction),
            (
                "shared_valtest_property_fraction",
                self.shared_valtest_property_fraction,
            ),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        if self.held_out_fraction() > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "held-out fractions sum to {} > 1",
                self.held_out_fraction()
            )));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of the inventory into
    /// `[test_only, val_only, shared]` counts.
    pub fn held_out_counts(&self, inventory: usize) -> [usize; 3] {
        let fractions = [
            self.test_only_property_fraction,
            self.val_only_property_fraction,
            self.shared_valtest_property_fraction,
        ];
        let total = (self.held_out_fraction() * inventory as f64).round() as usize;
        let quotas: Vec<f64> = fractions.iter().map(|f| f * inventory as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut assigned: usize = counts.iter().sum();
        for &i in order.iter().cycle().take(6) {
            if assigned >= total {
                break;
            }
            if fractions[i] > 0.0 {
                counts[i] += 1;
                assigned += 1;
            }
        }
        [counts[0], counts[1], counts[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// A validation-only property inside a test article.
    ValOnlyInTest,
    /// A test-only property outside the test split.
    TestOnlyOutsideTest,
    /// A held-out property inside a training article.
    HeldOutInTrain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub article_id: String,
    pub pair: PropertyValuePair,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub split_of: BTreeMap<String, Split>,
    pub test_only_properties: BTreeSet<String>,
    pub val_only_properties: BTreeSet<String>,
    pub shared_valtest_properties: BTreeSet<String>,
    pub dropped_pairs: Vec<DroppedPair>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitCorpora {
    pub train: Vec<MpeRecord>,
    pub validation: Vec<MpeRecord>,
    pub test: Vec<MpeRecord>,
}

impl SplitCorpora {
    pub fn get(&self, split: Split) -> &[MpeRecord] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<MpeRecord> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }
}

impl SplitAssignment {
    /// Why `property` may not be retained in `split`, if it may not.
    pub fn violation(&self, split: Split, property: &str) -> Option<DropReason> {
        match split {
            Split::Train => (self.test_only_properties.contains(property)
                || self.val_only_properties.contains(property)
                || self.shared_valtest_properties.contains(property))
            .then_some(DropReason::HeldOutInTrain),
            Split::Validation => self
                .test_only_properties
                .contains(property)
                .then_some(DropReason::TestOnlyOutsideTest),
            Split::Test => self
                .val_only_properties
                .contains(property)
                .then_some(DropReason::ValOnlyInTest),
        }
    }

    pub fn count(&self, split: Split) -> usize {
        self.split_of.values().filter(|s| **s == split).count()
    }

    /// Partitions the corpus, removing pairs the held-out sets forbid.
    /// Articles left without pairs are omitted.
    pub fn apply(&self, corpus: &[MpeRecord]) -> Result<SplitCorpora> {
        let mut out = SplitCorpora::default();
        for record in corpus {
            let split = *self
                .split_of
                .get(&record.article_id)
                .ok_or_else(|| Error::MissingAssignment(record.article_id.clone()))?;
            let pairs: Vec<_> = record
                .pairs
                .iter()
                .filter(|p| self.violation(split, &p.property).is_none())
                .cloned()
                .collect();
            if pairs.is_empty() {
                continue;
            }
            out.get_mut(split).push(MpeRecord {
                article_id: record.article_id.clone(),
                text: record.text.clone(),
                pairs,
            });
        }
        Ok(out)
    }
}

fn check_corpus(corpus: &[MpeRecord]) -> Result<()> {
    let mut ids = HashSet::new();
    for r in corpus {
        if !ids.insert(r.article_id.as_str()) {
            return Err(Error::DuplicateArticle {
                line: 0,
                article_id: r.article_id.clone(),
            });
        }
    }
    Ok(())
}

/// Controlled split: held-out property sets are drafted from the least
/// frequent properties, articles carrying them are routed to the evaluation
/// splits (test before validation), evaluation splits are topped up with
/// articles of train-seen properties, and the rest goes to train.
pub fn controlled_split(corpus: &[MpeRecord], config: &SplitConfig) -> Result<SplitAssignment> {
    config.validate()?;
    check_corpus(corpus)?;
    if corpus.len() < 3 {
        return Err(Error::Infeasible(format!(
            "need at least 3 articles, corpus has {}",
            corpus.len()
        )));
    }

    // Property ids in first-appearance order; per-article property id lists.
    let mut prop_index: HashMap<&str, usize> = HashMap::new();
    let mut prop_names: Vec<&str> = Vec::new();
    let mut frequency: Vec<usize> = Vec::new();
    let mut article_props: Vec<Vec<usize>> = Vec::with_capacity(corpus.len());
    for record in corpus {
        for pair in &record.pairs {
            let id = *prop_index.entry(pair.property.as_str()).or_insert_with(|| {
                prop_names.push(pair.property.as_str());
                frequency.push(0);
                prop_names.len() - 1
            });
            frequency[id] += 1;
        }
        let mut props: Vec<usize> = record.properties().iter().map(|p| prop_index[p]).collect();
        props.sort_unstable();
        article_props.push(props);
    }
    let n_props = prop_names.len();
    if n_props < 4 {
        return Err(Error::Infeasible(format!(
            "need at least 4 distinct properties, corpus has {n_props}"
        )));
    }
    let targets = config.held_out_counts(n_props);
    if targets.iter().sum::<usize>() > n_props {
        return Err(Error::Infeasible(format!(
            "held-out counts {targets:?} exceed the inventory of {n_props} properties"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut candidates: Vec<usize> = (0..n_props).collect();
    candidates.sort_by(|&a, &b| prop_names[a].cmp(prop_names[b]));
    candidates.shuffle(&mut rng);
    candidates.sort_by_key(|&p| frequency[p]);

    let mut articles_of: Vec<Vec<usize>> = vec![Vec::new(); n_props];
    for (a, props) in article_props.iter().enumerate() {
        for &p in props {
            articles_of[p].push(a);
        }
    }
    // Articles free of designated properties, per property.
    let mut free_count: Vec<usize> = articles_of.iter().map(Vec::len).collect();
    let mut blocked = vec![false; corpus.len()];
    let mut designated: Vec<Option<usize>> = vec![None; n_props];
    let mut filled = [0usize; 3];
    let mut slot = 0usize;

    for &p in &candidates {
        if filled == targets {
            break;
        }
        while filled[slot % 3] >= targets[slot % 3] {
            slot += 1;
        }
        let newly: Vec<usize> = articles_of[p].iter().copied().filter(|&a| !blocked[a]).collect();
        for &a in &newly {
            for &q in &article_props[a] {
                free_count[q] -= 1;
            }
        }
        let keeps_train_coverage = (0..n_props).all(|q| q == p || designated[q].is_some() || free_count[q] > 0);
        if keeps_train_coverage {
            for &a in &newly {
                blocked[a] = true;
            }
            designated[p] = Some(slot % 3);
            filled[slot % 3] += 1;
            slot += 1;
        } else {
            for &a in &newly {
                for &q in &article_props[a] {
                    free_count[q] += 1;
                }
            }
        }
    }
    if filled != targets {
        return Err(Error::Infeasible(format!(
            "could only draft {filled:?} of {targets:?} held-out properties without leaving \
             some property unseen in train; lower the held-out fractions"
        )));
    }

    let mut split: Vec<Option<Split>> = vec![None; corpus.len()];
    let mut alternate_test = true;
    for (a, props) in article_props.iter().enumerate() {
        let has = |set: usize| props.iter().any(|&p| designated[p] == Some(set));
        split[a] = if has(0) {
            Some(Split::Test)
        } else if has(1) {
            Some(Split::Validation)
        } else if has(2) {
            let s = if alternate_test { Split::Test } else { Split::Validation };
            alternate_test = !alternate_test;
            Some(s)
        } else {
            None
        };
    }

    // Top-ups never take the last unassigned article of any property.
    let mut remaining_count = vec![0usize; n_props];
    for (a, props) in article_props.iter().enumerate() {
        if split[a].is_none() {
            for &p in props {
                remaining_count[p] += 1;
            }
        }
    }
    let mut pool: Vec<usize> = (0..corpus.len()).filter(|&a| split[a].is_none()).collect();
    pool.shuffle(&mut rng);
    let mut need = [config.seen_articles_per_eval_split; 2];
    let mut turn = 0usize;
    for a in pool {
        if need == [0, 0] {
            break;
        }
        if article_props[a].iter().any(|&p| remaining_count[p] <= 1) {
            continue;
        }
        if need[turn] == 0 {
            turn = 1 - turn;
        }
        split[a] = Some(if turn == 0 { Split::Test } else { Split::Validation });
        need[turn] -= 1;
        turn = 1 - turn;
        for &p in &article_props[a] {
            remaining_count[p] -= 1;
        }
    }

    let mut assignment = SplitAssignment::default();
    for (p, set) in designated.iter().enumerate() {
        let name = prop_names[p].to_string();
        match set {
            Some(0) => assignment.test_only_properties.insert(name),
            Some(1) => assignment.val_only_properties.insert(name),
            Some(_) => assignment.shared_valtest_properties.insert(name),
            None => false,
        };
    }
    for (record, s) in corpus.iter().zip(&split) {
        let s = s.unwrap_or(Split::Train);
        assignment.split_of.insert(record.article_id.clone(), s);
        for pair in &record.pairs {
            if let Some(reason) = assignment.violation(s, &pair.property) {
                assignment.dropped_pairs.push(DroppedPair {
                    article_id: record.article_id.clone(),
                    pair: pair.clone(),
                    reason,
                });
            }
        }
    }
    for s in [Split::Test, Split::Validation] {
        let n = assignment.count(s);
        if n > config.max_eval_split_articles {
            return Err(Error::Infeasible(format!(
                "{} split would hold {n} articles, above the maximum of {}; shrink the held-out \
                 fractions or the seen-article top-up",
                s.name(),
                config.max_eval_split_articles
            )));
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOverlap {
    pub source: Split,
    pub target: Split,
    pub overlap_count: usize,
    pub target_size: usize,
    pub overlap_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub sizes: BTreeMap<Split, usize>,
    pub overlaps: Vec<SplitOverlap>,
    pub properties: BTreeMap<Split, BTreeSet<String>>,
    /// Share of all retained properties never seen in retained train pairs.
    pub unseen_in_train_fraction: f64,
    pub unseen_in_train_count: usize,
    pub property_inventory: usize,
    /// Share of test property types never seen in train.
    pub test_unseen_fraction: f64,
    /// Retained pairs that break a held-out constraint (zero for sound splits).
    pub held_out_violations: usize,
}

/// Overlap of article ids between splits, one entry per unit (a record, or an
/// `(article, property)` instance for property-centric datasets). The
/// percentage counts target units whose article also occurs in the source.
pub fn audit_units(units: &BTreeMap<Split, Vec<&str>>) -> Vec<SplitOverlap> {
    let empty = Vec::new();
    let ids = |s: Split| -> HashSet<&str> { units.get(&s).unwrap_or(&empty).iter().copied().collect() };
    let mut out = Vec::new();
    for (source, target) in [
        (Split::Train, Split::Validation),
        (Split::Train, Split::Test),
        (Split::Validation, Split::Test),
    ] {
        let source_ids = ids(source);
        let target_units = units.get(&target).unwrap_or(&empty);
        let overlap_count = target_units.iter().filter(|a| source_ids.contains(*a)).count();
        let target_size = target_units.len();
        let overlap_percent = if target_size == 0 {
            0.0
        } else {
            overlap_count as f64 / target_size as f64 * 100.0
        };
        out.push(SplitOverlap {
            source,
            target,
            overlap_count,
            target_size,
            overlap_percent,
        });
    }
    out
}

/// Audits retained split contents.
pub fn audit_corpora(corpora: &SplitCorpora, assignment: Option<&SplitAssignment>) -> AuditReport {
    let mut units = BTreeMap::new();
    let mut properties: BTreeMap<Split, BTreeSet<String>> = BTreeMap::new();
    let mut sizes = BTreeMap::new();
    let mut violations = 0;
    for s in Split::ALL {
        let records = corpora.get(s);
        units.insert(s, records.iter().map(|r| r.article_id.as_str()).collect());
        sizes.insert(s, records.len());
        let props = properties.entry(s).or_default();
        for r in records {
            for p in &r.pairs {
                props.insert(p.property.clone());
                if assignment.is_some_and(|a| a.violation(s, &p.property).is_some()) {
                    violations += 1;
                }
            }
        }
    }
    let train = &properties[&Split::Train];
    let all: BTreeSet<&String> = properties.values().flatten().collect();
    let unseen = all.iter().filter(|p| !train.contains(**p)).count();
    let test = &properties[&Split::Test];
    let test_unseen = test.iter().filter(|p| !train.contains(*p)).count();
    AuditReport {
        sizes,
        overlaps: audit_units(&units),
        unseen_in_train_fraction: if all.is_empty() {
            0.0
        } else {
            unseen as f64 / all.len() as f64
        },
        unseen_in_train_count: unseen,
        property_inventory: all.len(),
        test_unseen_fraction: if test.is_empty() {
            0.0
        } else {
            test_unseen as f64 / test.len() as f64
        },
        held_out_violations: violations,
        properties,
    }
}

pub fn audit_split(corpus: &[MpeRecord], assignment: &SplitAssignment) -> Result<AuditReport> {
    let corpora = assignment.apply(corpus)?;
    Ok(audit_corpora(&corpora, Some(assignment)))
}

impl AuditReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:<12} {:>10} {:>10} {:>8}",
            "source", "target", "size", "in source", "%"
        );
        for o in &self.overlaps {
            let _ = writeln!(
                out,
                "{:<12} {:<12} {:>10} {:>10} {:>8.2}",
                o.source.name(),
                o.target.name(),
                o.target_size,
                o.overlap_count,
                o.overlap_percent
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12} {:>10} {:>12}", "split", "articles", "properties");
        for s in Split::ALL {
            let _ = writeln!(
                out,
                "{:<12} {:>10} {:>12}",
                s.name(),
                self.sizes.get(&s).copied().unwrap_or(0),
                self.properties.get(&s).map_or(0, BTreeSet::len)
            );
        }
        let _ = writeln!(
            out,
            "unseen in train: {}/{} properties ({:.2}%), test types unseen: {:.2}%, held-out violations: {}",
            self.unseen_in_train_count,
            self.property_inventory,
            self.unseen_in_train_fraction * 100.0,
            self.test_unseen_fraction * 100.0,
            self.held_out_violations
        );
        out
    }
}

#[derive(Serialize, Deserialize)]
struct AssignmentLine {
    article_id: String,
    split: Split,
}

#[derive(Serialize, Deserialize, Default)]
struct Sidecar {
    test_only_properties: BTreeSet<String>,
    val_only_properties: BTreeSet<String>,
    shared_valtest_properties: BTreeSet<String>,
    dropped_pairs: Vec<DroppedPair>,
}

/// Writes the assignment file (one `{article_id, split}` line per article)
/// and its sidecar with held-out sets and dropped pairs.
pub fn save_assignment(
    assignment: &SplitAssignment,
    path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (article_id, split) in &assignment.split_of {
        let line = AssignmentLine {
            article_id: article_id.clone(),
            split: *split,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let sidecar = Sidecar {
        test_only_properties: assignment.test_only_properties.clone(),
        val_only_properties: assignment.val_only_properties.clone(),
        shared_valtest_properties: assignment.shared_valtest_properties.clone(),
        dropped_pairs: assignment.dropped_pairs.clone(),
    };
    let sidecar_path = sidecar_path.as_ref();
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(sidecar_path, json + "\n").map_err(|e| Error::io(sidecar_path, e))
}

pub fn load_assignment(path: impl AsRef<Path>, sidecar_path: Option<&Path>) -> Result<SplitAssignment> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut assignment = SplitAssignment::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AssignmentLine = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        assignment.split_of.insert(parsed.article_id, parsed.split);
    }
    if let Some(sidecar_path) = sidecar_path {
        let raw = std::fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&raw).map_err(|e| Error::Malformed {
            line: 0,
            message: e.to_string(),
        })?;
        assignment.test_only_properties = sidecar.test_only_properties;
        assignment.val_only_properties = sidecar.val_only_properties;
        assignment.shared_valtest_properties = sidecar.shared_valtest_properties;
        assignment.dropped_pairs = sidecar.dropped_pairs;
    }
    Ok(assignment)
}
