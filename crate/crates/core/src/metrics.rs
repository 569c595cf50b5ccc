//! Set-based pair F1, Mean-F1 over (article, property) instances,
//! Mean-MultiProperty-F1 over articles, and reports with diagnostic
//! breakdowns.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{MpeRecord, PropertyValuePair};
use crate::diagnostics::{DiagnosticLabels, Subset};
use crate::error::{Error, Result};
use crate::normalize::NormalizationPolicy;

pub type AnswerSet = BTreeSet<PropertyValuePair>;

/// Canonical answer set: pairs normalized under `policy`, duplicates merged.
pub fn answer_set<'a>(
    pairs: impl IntoIterator<Item = &'a PropertyValuePair>,
    policy: &NormalizationPolicy,
) -> AnswerSet {
    pairs.into_iter().map(|p| p.normalized(policy)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `predicted` against `expected`. Two empty sets
/// score 1; an empty prediction has precision 0.
pub fn pair_f1(expected: &AnswerSet, predicted: &AnswerSet) -> Prf {
    if expected.is_empty() && predicted.is_empty() {
        return Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let hit = expected.intersection(predicted).count() as f64;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        hit / predicted.len() as f64
    };
    let recall = if expected.is_empty() {
        0.0
    } else {
        hit / expected.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

fn mean_pair_f1(items: &[(AnswerSet, AnswerSet)], what: &str) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Empty(format!("no {what} to score")));
    }
    let total: f64 = items.iter().map(|(e, o)| pair_f1(e, o).f1).sum();
    Ok(total / items.len() as f64)
}

/// Mean of per-instance F1, one `(expected, predicted)` entry per
/// `(article, property)` instance.
pub fn mean_f1(instances: &[(AnswerSet, AnswerSet)]) -> Result<f64> {
    mean_pair_f1(instances, "instances")
}

/// Mean of per-article F1 over pairs pooled across all properties.
pub fn mmp_f1(articles: &[(AnswerSet, AnswerSet)]) -> Result<f64> {
    mean_pair_f1(articles, "articles")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub mmp_f1: f64,
    pub articles: usize,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mean_f1: f64,
    pub mmp_f1: f64,
    /// Only subsets with at least one flagged instance appear.
    pub per_subset: BTreeMap<Subset, SubsetScore>,
    pub n_instances: usize,
    pub n_articles: usize,
}

fn restrict(set: &AnswerSet, properties: &HashSet<&str>) -> AnswerSet {
    set.iter()
        .filter(|p| properties.contains(p.property.as_str()))
        .cloned()
        .collect()
}

/// Scores predictions for every article of `split`. Subset scores pool only
/// the instances carrying the subset flag; articles without any are left out.
pub fn build_report(
    split: &[MpeRecord],
    predictions: &BTreeMap<String, Vec<PropertyValuePair>>,
    labels: &DiagnosticLabels,
    policy: &NormalizationPolicy,
) -> Result<MetricReport> {
    if split.is_empty() {
        return Err(Error::Empty("split has no articles".into()));
    }
    let lookup = labels.lookup();
    let mut instances = Vec::new();
    let mut articles = Vec::new();
    let mut subset_items: BTreeMap<Subset, (Vec<(AnswerSet, AnswerSet)>, usize)> = BTreeMap::new();
    for record in split {
        let predicted = predictions
            .get(&record.article_id)
            .ok_or_else(|| Error::MissingPrediction(record.article_id.clone()))?;
        let expected = answer_set(&record.pairs, policy);
        let predicted = answer_set(predicted, policy);
        let properties = record.properties();
        for property in &properties {
            let only = HashSet::from([policy.apply(property)]);
            let only: HashSet<&str> = only.iter().map(String::as_str).collect();
            instances.push((restrict(&expected, &only), restrict(&predicted, &only)));
        }
        for subset in Subset::ALL {
            let flagged: Vec<String> = properties
                .iter()
                .filter(|p| {
                    lookup
                        .get(&(record.article_id.as_str(), **p))
                        .is_some_and(|l| l.has(subset))
                })
                .map(|p| policy.apply(p))
                .collect();
            if flagged.is_empty() {
                continue;
            }
            let flagged_set: HashSet<&str> = flagged.iter().map(String::as_str).collect();
            let entry = subset_items.entry(subset).or_default();
            entry
                .0
                .push((restrict(&expected, &flagged_set), restrict(&predicted, &flagged_set)));
            entry.1 += flagged.len();
        }
        articles.push((expected, predicted));
    }
    let mut per_subset = BTreeMap::new();
    for (subset, (items, n)) in subset_items {
        per_subset.insert(
            subset,
            SubsetScore {
                mmp_f1: mmp_f1(&items)?,
                articles: items.len(),
                instances: n,
            },
        );
    }
    Ok(MetricReport {
        mean_f1: mean_f1(&instances)?,
        mmp_f1: mmp_f1(&articles)?,
        per_subset,
        n_instances: instances.len(),
        n_articles: articles.len(),
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

impl MetricReport {
    /// One-line table: Mean-F1, MMP-F1, then subset MMP-F1 in report order,
    /// all as percentages with one decimal.
    pub fn to_table(&self) -> String {
        let mut header = vec!["Mean-F1".to_string(), "MMP-F1".to_string()];
        let mut row = vec![pct(self.mean_f1), pct(self.mmp_f1)];
        for subset in Subset::ALL {
            header.push(subset.label().to_string());
            row.push(self.per_subset.get(&subset).map_or("-".into(), |s| pct(s.mmp_f1)));
        }
        header.push("n".into());
        row.push(self.n_articles.to_string());
        let widths: Vec<usize> = header.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
        let mut out = String::new();
        for line in [&header, &row] {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  "));
        }
        out
    }
}

#[derive(Deserialize)]
struct PredictionLine {
    article_id: String,
    #[serde(default)]
    pairs: Vec<PropertyValuePair>,
}

/// Reads a predictions file: record-stream lines where `text` is optional
/// and `pairs` may be empty.
pub fn load_predictions(
    path: impl AsRef<Path>,
    policy: &NormalizationPolicy,
) -> Result<BTreeMap<String, Vec<PropertyValuePair>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredictionLine = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        let pairs: Vec<PropertyValuePair> = parsed
            .pairs
            .iter()
            .filter(|p| p.validate().is_ok())
            .map(|p| p.normalized(policy))
            .collect();
        if out.insert(parsed.article_id.clone(), pairs).is_some() {
            return Err(Error::DuplicateArticle {
                line: i + 1,
                article_id: parsed.article_id,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> AnswerSet {
        pairs
            .iter()
            .map(|(p, v)| PropertyValuePair::new(*p, *v).unwrap())
            .collect()
    }

    #[test]
    fn pair_f1_examples() {
        let e = set(&[("p", "a"), ("p", "b")]);
        assert_eq!(pair_f1(&e, &e).f1, 1.0);
        let prf = pair_f1(&e, &set(&[("p", "a")]));
        assert_eq!((prf.precision, prf.recall), (1.0, 0.5));
        assert!((prf.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(pair_f1(&e, &set(&[("q", "a")])).f1, 0.0);
        assert_eq!(pair_f1(&e, &AnswerSet::new()).precision, 0.0);
        assert_eq!(pair_f1(&AnswerSet::new(), &AnswerSet::new()).f1, 1.0);
    }

    #[test]
    fn means_require_items() {
        assert!(mean_f1(&[]).is_err());
        assert!(mmp_f1(&[]).is_err());
        let e = set(&[("p", "a")]);
        let v = vec![(e.clone(), e.clone()), (e, AnswerSet::new())];
        assert_eq!(mean_f1(&v).unwrap(), 0.5);
    }

    #[test]
    fn table_renders_percentages() {
        let report = MetricReport {
            mean_f1: 0.824,
            mmp_f1: 0.809,
            per_subset: BTreeMap::new(),
            n_instances: 3,
            n_articles: 2,
        };
        let table = report.to_table();
        assert!(table.contains("82.4") && table.contains("80.9"));
    }
}
