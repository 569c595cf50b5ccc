//! Record data model, record-stream IO and corpus statistics.
//!
//! Record-stream format: one JSON object per line (UTF-8, LF), with fields
//! `article_id` (string), `text` (string) and `pairs` (array of
//! `{"property": .., "value": ..}` objects).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::{word_count, NormalizationPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PropertyValuePair {
    pub property: String,
    pub value: String,
}

impl PropertyValuePair {
    /// Validates that both fields are non-empty after trimming.
    pub fn new(property: impl Into<String>, value: impl Into<String>) -> Result<Self> {
        let pair = Self {
            property: property.into(),
            value: value.into(),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.property.trim().is_empty() {
            return Err(Error::InvalidPair(format!("empty property (value {:?})", self.value)));
        }
        if self.value.trim().is_empty() {
            return Err(Error::InvalidPair(format!(
                "empty value for property {:?}",
                self.property
            )));
        }
        Ok(())
    }

    pub fn normalized(&self, policy: &NormalizationPolicy) -> Self {
        Self {
            property: policy.apply(&self.property),
            value: policy.apply(&self.value),
        }
    }
}

/// One article and its pairs. Pair order is the order of first appearance in
/// the stream; duplicates under the active policy are collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpeRecord {
    pub article_id: String,
    pub text: String,
    pub pairs: Vec<PropertyValuePair>,
}

impl MpeRecord {
    pub fn new(
        article_id: impl Into<String>,
        text: impl Into<String>,
        pairs: impl IntoIterator<Item = PropertyValuePair>,
        policy: &NormalizationPolicy,
    ) -> Result<Self> {
        let article_id = article_id.into();
        let pairs = canonical_pairs(pairs, policy)?;
        if pairs.is_empty() {
            return Err(Error::EmptyPairs { line: 0, article_id });
        }
        Ok(Self {
            article_id,
            text: text.into(),
            pairs,
        })
    }

    pub fn pair_set(&self) -> BTreeSet<PropertyValuePair> {
        self.pairs.iter().cloned().collect()
    }

    /// Distinct properties in first-appearance order.
    pub fn properties(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.pairs
            .iter()
            .filter(|p| seen.insert(p.property.as_str()))
            .map(|p| p.property.as_str())
            .collect()
    }

    pub fn values_of<'a>(&'a self, property: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.pairs
            .iter()
            .filter(move |p| p.property == property)
            .map(|p| p.value.as_str())
    }

    pub fn word_count(&self) -> usize {
        word_count(&self.text)
    }
}

/// Validates, normalizes and de-duplicates pairs, keeping first occurrences.
pub fn canonical_pairs(
    pairs: impl IntoIterator<Item = PropertyValuePair>,
    policy: &NormalizationPolicy,
) -> Result<Vec<PropertyValuePair>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for pair in pairs {
        pair.validate()?;
        let pair = pair.normalized(policy);
        if seen.insert(pair.clone()) {
            out.push(pair);
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawRecord {
    article_id: String,
    text: String,
    pairs: Vec<PropertyValuePair>,
}

/// Streaming reader over a record stream. Yields records in file order and
/// fails on the first malformed line, duplicate id or empty pair list.
pub struct RecordReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    policy: NormalizationPolicy,
    seen: HashSet<String>,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R, policy: NormalizationPolicy) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            policy,
            seen: HashSet::new(),
        }
    }

    fn parse(&mut self, raw_line: &str) -> Result<MpeRecord> {
        let line = self.line;
        let raw: RawRecord = serde_json::from_str(raw_line).map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        if raw.article_id.trim().is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty article_id".into(),
            });
        }
        let pairs = canonical_pairs(raw.pairs, &self.policy).map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        if pairs.is_empty() {
            return Err(Error::EmptyPairs {
                line,
                article_id: raw.article_id,
            });
        }
        if !self.seen.insert(raw.article_id.clone()) {
            return Err(Error::DuplicateArticle {
                line,
                article_id: raw.article_id,
            });
        }
        Ok(MpeRecord {
            article_id: raw.article_id,
            text: raw.text,
            pairs,
        })
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<MpeRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = match self.lines.next()? {
                Ok(raw) => raw,
                Err(e) => {
                    return Some(Err(Error::Malformed {
                        line: self.line + 1,
                        message: e.to_string(),
                    }))
                }
            };
            self.line += 1;
            if raw.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&raw));
        }
    }
}

/// Opens `path` as a record stream.
pub fn load_records(path: impl AsRef<Path>, policy: NormalizationPolicy) -> Result<RecordReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(RecordReader::new(BufReader::new(file), policy))
}

/// Reads a whole record stream into memory.
pub fn read_corpus(path: impl AsRef<Path>, policy: NormalizationPolicy) -> Result<Vec<MpeRecord>> {
    load_records(path, policy)?.collect()
}

pub fn write_records<'a, W: Write>(writer: W, records: impl IntoIterator<Item = &'a MpeRecord>) -> std::io::Result<()> {
    let mut writer = BufWriter::new(writer);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_records<'a>(path: impl AsRef<Path>, records: impl IntoIterator<Item = &'a MpeRecord>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(file, records).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub article_count: usize,
    /// One count per `(record, pair)` instance: a property with two values in
    /// one record counts twice.
    pub property_frequency: BTreeMap<String, usize>,
    pub mean_properties_per_record: f64,
    pub article_word_lengths: Vec<usize>,
}

impl CorpusStats {
    pub fn total_pairs(&self) -> usize {
        self.property_frequency.values().sum()
    }
}

pub fn corpus_stats<'a>(corpus: impl IntoIterator<Item = &'a MpeRecord>) -> Result<CorpusStats> {
    let mut property_frequency = BTreeMap::new();
    let mut article_word_lengths = Vec::new();
    let mut total = 0usize;
    for record in corpus {
        for pair in &record.pairs {
            *property_frequency.entry(pair.property.clone()).or_insert(0) += 1;
        }
        total += record.pairs.len();
        article_word_lengths.push(record.word_count());
    }
    let article_count = article_word_lengths.len();
    if article_count == 0 {
        return Err(Error::Empty("corpus has no records".into()));
    }
    Ok(CorpusStats {
        article_count,
        property_frequency,
        mean_properties_per_record: total as f64 / article_count as f64,
        article_word_lengths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(p: &str, v: &str) -> PropertyValuePair {
        PropertyValuePair::new(p, v).unwrap()
    }

    fn read(src: &str) -> Vec<Result<MpeRecord>> {
        RecordReader::new(src.as_bytes(), NormalizationPolicy::default()).collect()
    }

    #[test]
    fn single_record() {
        let out = read(
            r#"{"article_id":"a1","text":"Born in Paris.","pairs":[{"property":"place of birth","value":"Paris"}]}"#,
        );
        assert_eq!(out.len(), 1);
        let rec = out[0].as_ref().unwrap();
        assert_eq!(rec.pairs, vec![pair("place of birth", "Paris")]);
    }

    #[test]
    fn duplicate_pairs_collapse() {
        let out = read(
            r#"{"article_id":"a1","text":"t","pairs":[{"property":"country","value":"France"},{"property":"country","value":" France "}]}"#,
        );
        let rec = out[0].as_ref().unwrap();
        assert_eq!(rec.pairs, vec![pair("country", "France")]);
    }

    #[test]
    fn duplicate_article_id_reported_at_second_occurrence() {
        let src = concat!(
            r#"{"article_id":"a1","text":"t","pairs":[{"property":"p","value":"v"}]}"#,
            "\n",
            r#"{"article_id":"a1","text":"u","pairs":[{"property":"q","value":"w"}]}"#,
            "\n"
        );
        let out = read(src);
        assert!(out[0].is_ok());
        match &out[1] {
            Err(Error::DuplicateArticle { line, article_id }) => {
                assert_eq!(*line, 2);
                assert_eq!(article_id, "a1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_empty_errors_carry_line() {
        let out = read("\n{not json}\n");
        assert!(matches!(out[0], Err(Error::Malformed { line: 2, .. })));
        let out = read(r#"{"article_id":"a","text":"t","pairs":[]}"#);
        assert!(matches!(out[0], Err(Error::EmptyPairs { line: 1, .. })));
        let out = read(r#"{"article_id":"a","text":"t","pairs":[{"property":" ","value":"v"}]}"#);
        assert!(matches!(out[0], Err(Error::Malformed { line: 1, .. })));
    }

    fn rec(id: &str, pairs: &[(&str, &str)]) -> MpeRecord {
        MpeRecord::new(
            id,
            "some words here",
            pairs.iter().map(|(p, v)| pair(p, v)),
            &NormalizationPolicy::default(),
        )
        .unwrap()
    }

    #[test]
    fn stats_mean_four_and_a_half() {
        let a = rec("a", &[("p1", "v"), ("p2", "v"), ("p3", "v")]);
        let b = rec(
            "b",
            &[
                ("p1", "v"),
                ("p2", "v"),
                ("p3", "v"),
                ("p4", "v"),
                ("p5", "v"),
                ("p6", "v"),
            ],
        );
        let stats = corpus_stats([&a, &b]).unwrap();
        assert_eq!(stats.mean_properties_per_record, 4.5);
        assert_eq!(stats.total_pairs(), 9);
    }

    #[test]
    fn stats_counting() {
        let s = corpus_stats([&rec("a", &[("p", "v")])]).unwrap();
        assert_eq!(s.property_frequency, BTreeMap::from([("p".to_string(), 1)]));
        assert_eq!(s.mean_properties_per_record, 1.0);
        let recs: Vec<_> = (0..3).map(|i| rec(&i.to_string(), &[("country", "X")])).collect();
        assert_eq!(corpus_stats(&recs).unwrap().property_frequency["country"], 3);
        let multi = rec("m", &[("sister", "A"), ("sister", "B")]);
        assert_eq!(corpus_stats([&multi]).unwrap().property_frequency["sister"], 2);
        assert!(matches!(corpus_stats(std::iter::empty()), Err(Error::Empty(_))));
    }
}
