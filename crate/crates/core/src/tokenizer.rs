//! Subword vocabulary (BPE-style merges), greedy longest-match encoding and
//! the textual form of pair sequences used as model targets.
//!
//! Pre-tokenization splits whitespace-separated words into runs of
//! alphanumeric characters and single other characters; the first unit of
//! every word carries the [`WORD_MARK`] prefix. Merges never cross units and
//! the separator characters always map to their dedicated special ids.
//!
//! Target convention: `property ⊢ value ∥ property ⊢ value`, with
//! [`FIELD_SEP`] and [`PAIR_SEP`] separated from text by single spaces.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::PropertyValuePair;
use crate::error::{Error, Result};

pub const FIELD_SEP: &str = "⊢";
pub const PAIR_SEP: &str = "∥";
pub const WORD_MARK: char = '▁';

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const FIELD_SEP_ID: u32 = 4;
pub const PAIR_SEP_ID: u32 = 5;
pub const SPECIALS: [&str; 6] = ["<pad>", "<s>", "</s>", "<unk>", FIELD_SEP, PAIR_SEP];

pub const DEFAULT_MAX_LEN: usize = 512;
const VOCAB_HEADER: &str = "#mpe-vocab v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub vocab_size: usize,
    /// Adds the 256 byte pieces so that every character is encodable.
    pub byte_fallback: bool,
    /// Trains on a seeded random subset of texts when set.
    pub max_training_texts: Option<usize>,
    pub seed: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2000,
            byte_fallback: false,
            max_training_texts: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit<'a> {
    Text(&'a str, bool),
    Special(u32),
}

fn separator_id(c: char) -> Option<u32> {
    match c {
        '⊢' => Some(FIELD_SEP_ID),
        '∥' => Some(PAIR_SEP_ID),
        _ => None,
    }
}

/// Splits text into units; the flag marks word-initial units.
fn pre_tokenize(text: &str) -> Vec<Unit<'_>> {
    let mut units = Vec::new();
    for word in text.split_whitespace() {
        let mut first = true;
        let mut chars = word.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            if let Some(id) = separator_id(c) {
                units.push(Unit::Special(id));
                first = true;
                continue;
            }
            let mut end = start + c.len_utf8();
            if c.is_alphanumeric() {
                while let Some(&(i, d)) = chars.peek() {
                    if !d.is_alphanumeric() {
                        break;
                    }
                    end = i + d.len_utf8();
                    chars.next();
                }
            }
            units.push(Unit::Text(&word[start..end], first));
            first = false;
        }
    }
    units
}

fn marked(unit: &str, word_start: bool) -> String {
    if word_start {
        let mut s = String::with_capacity(unit.len() + 3);
        s.push(WORD_MARK);
        s.push_str(unit);
        s
    } else {
        unit.to_string()
    }
}

fn byte_piece(b: u8) -> String {
    format!("<0x{b:02X}>")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    byte_fallback: bool,
    max_piece_chars: usize,
}

impl Vocabulary {
    fn from_pieces(pieces: Vec<String>, byte_fallback: bool) -> Result<Self> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if pieces.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::VocabFormat(format!("special token {s:?} must have id {i}")));
            }
        }
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if index.insert(p.clone(), i as u32).is_some() {
                return Err(Error::VocabFormat(format!("duplicate piece {p:?}")));
            }
        }
        let max_piece_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        Ok(Self {
            pieces,
            index,
            byte_fallback,
            max_piece_chars,
        })
    }

    pub fn size(&self) -> usize {
        self.pieces.len()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    fn encode_unit(&self, unit: &str, out: &mut Vec<u32>) {
        let chars: Vec<(usize, char)> = unit.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let mut matched = None;
            let longest = (chars.len() - i).min(self.max_piece_chars);
            for len in (1..=longest).rev() {
                let start = chars[i].0;
                let end = chars.get(i + len).map_or(unit.len(), |c| c.0);
                if let Some(&id) = self.index.get(&unit[start..end]) {
                    if id as usize >= SPECIALS.len() {
                        matched = Some((id, len));
                        break;
                    }
                }
            }
            match matched {
                Some((id, len)) => {
                    out.push(id);
                    i += len;
                }
                None => {
                    let c = chars[i].1;
                    if self.byte_fallback {
                        let mut buf = [0u8; 4];
                        for b in c.encode_utf8(&mut buf).bytes() {
                            out.push(self.index[&byte_piece(b)]);
                        }
                    } else {
                        out.push(UNK);
                    }
                    i += 1;
                }
            }
        }
    }

    /// Ids of `text`, truncated to the first `max_len`. No BOS/EOS is added.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<u32> {
        let mut out = Vec::new();
        for unit in pre_tokenize(text) {
            if out.len() >= max_len {
                break;
            }
            match unit {
                Unit::Special(id) => out.push(id),
                Unit::Text(s, first) => self.encode_unit(&marked(s, first), &mut out),
            }
        }
        out.truncate(max_len);
        out
    }

    /// Text of `ids` with whitespace collapsed. PAD, BOS and EOS are skipped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut raw = String::new();
        let mut bytes: Vec<u8> = Vec::new();
        let flush = |bytes: &mut Vec<u8>, raw: &mut String| {
            if !bytes.is_empty() {
                raw.push_str(&String::from_utf8_lossy(bytes));
                bytes.clear();
            }
        };
        for &id in ids {
            match id {
                PAD | BOS | EOS => {}
                UNK => {
                    flush(&mut bytes, &mut raw);
                    raw.push('\u{FFFD}');
                }
                FIELD_SEP_ID | PAIR_SEP_ID => {
                    flush(&mut bytes, &mut raw);
                    raw.push(' ');
                    raw.push_str(SPECIALS[id as usize]);
                    raw.push(' ');
                }
                _ => {
                    let Some(piece) = self.piece(id) else {
                        continue;
                    };
                    match parse_byte_piece(piece) {
                        Some(b) if self.byte_fallback => bytes.push(b),
                        _ => {
                            flush(&mut bytes, &mut raw);
                            raw.push_str(piece);
                        }
                    }
                }
            }
        }
        flush(&mut bytes, &mut raw);
        let spaced = raw.replace(WORD_MARK, " ");
        spaced.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{VOCAB_HEADER}");
        let _ = writeln!(out, "size {}", self.size());
        let _ = writeln!(out, "byte_fallback {}", self.byte_fallback);
        let _ = writeln!(out, "specials {}", SPECIALS.join(" "));
        for (i, p) in self.pieces.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{p}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(VOCAB_HEADER) {
            return Err(Error::VocabFormat(format!("missing {VOCAB_HEADER:?} header")));
        }
        let mut field = |name: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|l| l.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::VocabFormat(format!("missing {name} line")))
        };
        let size: usize = field("size")?
            .parse()
            .map_err(|_| Error::VocabFormat("size is not a number".into()))?;
        let byte_fallback: bool = field("byte_fallback")?
            .parse()
            .map_err(|_| Error::VocabFormat("byte_fallback is not a boolean".into()))?;
        let specials = field("specials")?;
        if specials.split(' ').collect::<Vec<_>>() != SPECIALS {
            return Err(Error::VocabFormat(format!("unexpected specials {specials:?}")));
        }
        let mut pieces = Vec::with_capacity(size);
        for line in lines {
            let (id, piece) = line
                .split_once('\t')
                .ok_or_else(|| Error::VocabFormat(format!("bad piece line {line:?}")))?;
            if id.parse::<usize>().ok() != Some(pieces.len()) {
                return Err(Error::VocabFormat(format!("ids must be dense, found {id:?}")));
            }
            pieces.push(piece.to_string());
        }
        if pieces.len() != size {
            return Err(Error::VocabFormat(format!(
                "header size {size}, found {} pieces",
                pieces.len()
            )));
        }
        Self::from_pieces(pieces, byte_fallback)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_byte_piece(piece: &str) -> Option<u8> {
    let hex = piece.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

/// Trains a vocabulary of exactly `vocab_size` pieces, or fewer when no pair
/// is left to merge.
pub fn train_subword<S: AsRef<str>>(texts: &[S], config: &TokenizerConfig) -> Result<Vocabulary> {
    let chosen: Vec<&str> = match config.max_training_texts {
        Some(n) if n < texts.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut idx = sample(&mut rng, texts.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| texts[i].as_ref()).collect()
        }
        _ => texts.iter().map(AsRef::as_ref).collect(),
    };

    let mut unit_counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in &chosen {
        for unit in pre_tokenize(text) {
            if let Unit::Text(s, first) = unit {
                *unit_counts.entry(marked(s, first)).or_default() += 1;
            }
        }
    }

    let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    if config.byte_fallback {
        pieces.extend((0..=255u8).map(byte_piece));
    }
    let mut alphabet: Vec<char> = unit_counts.keys().flat_map(|u| u.chars()).collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    let mut known: HashMap<String, u32> = pieces.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
    for c in alphabet {
        let s = c.to_string();
        if !known.contains_key(&s) {
            known.insert(s.clone(), pieces.len() as u32);
            pieces.push(s);
        }
    }
    if config.vocab_size < pieces.len() {
        return Err(Error::VocabTooSmall {
            requested: config.vocab_size,
            minimum: pieces.len(),
        });
    }

    // Each distinct unit as a symbol sequence with its corpus count.
    let mut words: Vec<(Vec<u32>, usize)> = unit_counts
        .iter()
        .map(|(u, &n)| (u.chars().map(|c| known[&c.to_string()]).collect(), n))
        .collect();
    while pieces.len() < config.vocab_size {
        let mut pair_counts: HashMap<(u32, u32), usize> = HashMap::new();
        for (symbols, n) in &words {
            for w in symbols.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_default() += n;
            }
        }
        let best = pair_counts.into_iter().max_by(|(a, ca), (b, cb)| {
            ca.cmp(cb).then_with(|| {
                let ka = (&pieces[a.0 as usize], &pieces[a.1 as usize]);
                let kb = (&pieces[b.0 as usize], &pieces[b.1 as usize]);
                kb.cmp(&ka)
            })
        });
        let Some(((left, right), _)) = best else {
            break;
        };
        let merged = format!("{}{}", pieces[left as usize], pieces[right as usize]);
        let id = match known.get(&merged) {
            Some(&id) => id,
            None => {
                let id = pieces.len() as u32;
                known.insert(merged.clone(), id);
                pieces.push(merged);
                id
            }
        };
        for (symbols, _) in &mut words {
            let mut i = 0;
            let mut out = Vec::with_capacity(symbols.len());
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    out.push(id);
                    i += 2;
                } else {
                    out.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = out;
        }
    }
    Vocabulary::from_pieces(pieces, config.byte_fallback)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrder {
    /// Keep the given order (targets follow the input property order).
    #[default]
    Input,
    Lexicographic,
}

pub fn serialize_pairs(pairs: &[PropertyValuePair], order: PairOrder) -> Result<String> {
    let mut ordered: Vec<&PropertyValuePair> = pairs.iter().collect();
    if order == PairOrder::Lexicographic {
        ordered.sort();
    }
    let mut segments = Vec::with_capacity(ordered.len());
    for pair in ordered {
        for text in [&pair.property, &pair.value] {
            for sep in [FIELD_SEP, PAIR_SEP] {
                if text.contains(sep) {
                    return Err(Error::ReservedSeparator {
                        separator: sep.to_string(),
                        text: text.clone(),
                    });
                }
            }
        }
        segments.push(format!("{} {FIELD_SEP} {}", pair.property.trim(), pair.value.trim()));
    }
    Ok(segments.join(&format!(" {PAIR_SEP} ")))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedPairs {
    pub pairs: Vec<PropertyValuePair>,
    pub malformed: usize,
}

/// Inverse of [`serialize_pairs`] that accepts any text. Segments without
/// exactly one field separator, or with an empty side, count as malformed.
pub fn parse_pairs(text: &str) -> ParsedPairs {
    let mut parsed = ParsedPairs::default();
    if text.trim().is_empty() {
        return parsed;
    }
    for segment in text.split(PAIR_SEP) {
        let mut fields = segment.split(FIELD_SEP);
        match (fields.next(), fields.next(), fields.next()) {
            (Some(p), Some(v), None) if !p.trim().is_empty() && !v.trim().is_empty() => {
                let pair = PropertyValuePair {
                    property: p.trim().to_string(),
                    value: v.trim().to_string(),
                };
                if !parsed.pairs.contains(&pair) {
                    parsed.pairs.push(pair);
                }
            }
            _ => parsed.malformed += 1,
        }
    }
    parsed
}
