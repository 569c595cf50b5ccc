//! Search spaces over categorical, integer and real parameters.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sampled or declared parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Int(i) => Some(*i as f64),
            Self::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Self::Int(i) => Some(*i),
            Self::Real(x) if x.fract() == 0.0 => Some(*x as i64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Self::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Self::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Bool(b) => write!(f, "{b}"),
            Self::Int(i) => write!(f, "{i}"),
            Self::Real(x) => write!(f, "{x}"),
            Self::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamSpec {
    Categorical {
        choices: Vec<ParamValue>,
    },
    Int {
        low: i64,
        high: i64,
        #[serde(default)]
        log: bool,
    },
    Real {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
    },
}

impl ParamSpec {
    fn validate(&self, name: &str) -> Result<()> {
        let fail = |m: &str| Err(Error::Space(format!("{name}: {m}")));
        match self {
            Self::Categorical { choices } if choices.is_empty() => fail("no choices"),
            Self::Int { low, high, log } => {
                if low > high {
                    fail("low exceeds high")
                } else if *log && *low <= 0 {
                    fail("log range must be strictly positive")
                } else {
                    Ok(())
                }
            }
            Self::Real { low, high, log } => {
                if !(low.is_finite() && high.is_finite()) || low > high {
                    fail("range must be finite with low <= high")
                } else if *log && *low <= 0.0 {
                    fail("log range must be strictly positive")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Whether `value` lies in the declared range or choice list.
    pub fn contains(&self, value: &ParamValue) -> bool {
        match (self, value) {
            (Self::Categorical { choices }, v) => choices.contains(v),
            (Self::Int { low, high, .. }, ParamValue::Int(i)) => low <= i && i <= high,
            (Self::Real { low, high, .. }, v) => v.as_f64().is_some_and(|x| *low <= x && x <= *high),
            _ => false,
        }
    }

    /// Bounds in the sampler's internal coordinates (log space when marked).
    pub(crate) fn internal_bounds(&self) -> Option<(f64, f64)> {
        match self {
            Self::Int { low, high, log } => Some(to_internal(*low as f64, *log, *high as f64)),
            Self::Real { low, high, log } => Some(to_internal(*low, *log, *high)),
            Self::Categorical { .. } => None,
        }
    }

    pub(crate) fn is_log(&self) -> bool {
        matches!(self, Self::Int { log: true, .. } | Self::Real { log: true, .. })
    }

    /// Maps an internal coordinate back to a value inside the range.
    pub(crate) fn from_internal(&self, x: f64) -> ParamValue {
        match self {
            Self::Int { low, high, log } => {
                let v = if *log { x.exp() } else { x };
                ParamValue::Int((v.round() as i64).clamp(*low, *high))
            }
            Self::Real { low, high, log } => {
                let v = if *log { x.exp() } else { x };
                ParamValue::Real(v.clamp(*low, *high))
            }
            Self::Categorical { .. } => unreachable!("categoricals have no internal coordinate"),
        }
    }

    pub(crate) fn to_internal_value(&self, v: &ParamValue) -> Option<f64> {
        let x = v.as_f64()?;
        Some(if self.is_log() { x.ln() } else { x })
    }
}

fn to_internal(low: f64, log: bool, high: f64) -> (f64, f64) {
    if log {
        (low.ln(), high.ln())
    } else {
        (low, high)
    }
}

/// Sampled values by parameter name.
pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: BTreeMap<String, ParamSpec>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, spec: ParamSpec) -> Self {
        self.params.insert(name.into(), spec);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::Space("no parameters".into()));
        }
        for (name, spec) in &self.params {
            spec.validate(name)?;
        }
        Ok(())
    }

    /// Whether `params` assigns an in-range value to exactly the declared names.
    pub fn check(&self, params: &Params) -> std::result::Result<(), String> {
        for (name, spec) in &self.params {
            match params.get(name) {
                None => return Err(format!("missing parameter {name}")),
                Some(v) if !spec.contains(v) => return Err(format!("{name} = {v} is outside the space")),
                Some(_) => {}
            }
        }
        if let Some(extra) = params.keys().find(|k| !self.params.contains_key(*k)) {
            return Err(format!("unknown parameter {extra}"));
        }
        Ok(())
    }

    /// The full-scale search space of the dual-source hyperparameter study.
    /// Widths, heads and activation apply to encoder and decoder alike.
    pub fn paper() -> Self {
        let ints = |v: &[i64]| ParamSpec::Categorical {
            choices: v.iter().map(|&i| ParamValue::Int(i)).collect(),
        };
        let reals = |v: &[f64]| ParamSpec::Categorical {
            choices: v.iter().map(|&x| ParamValue::Real(x)).collect(),
        };
        let texts = |v: &[&str]| ParamSpec::Categorical {
            choices: v.iter().map(|s| ParamValue::Text(s.to_string())).collect(),
        };
        let flag = ParamSpec::Categorical {
            choices: vec![ParamValue::Bool(true), ParamValue::Bool(false)],
        };
        let layers = ParamSpec::Int {
            low: 1,
            high: 6,
            log: false,
        };
        Self::new()
            .with("batch_size", ints(&[64, 128, 256, 512]))
            .with("lr", reals(&[1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2]))
            .with("lr_scheduler", texts(&["inverse_sqrt", "linear"]))
            .with("hidden_dropout", reals(&[0.0, 0.1]))
            .with("attention_dropout", reals(&[0.0, 0.1]))
            .with("activation_dropout", reals(&[0.0, 0.1]))
            .with("weight_decay", reals(&[0.0, 0.1]))
            .with("encoder_layers", layers.clone())
            .with("decoder_layers", layers)
            .with("embedding_dim", ints(&[32, 64, 128, 256, 512]))
            .with("ffn_dim", ints(&[64, 128, 256, 512, 1024, 2048]))
            .with("attention_heads", ints(&[4, 8, 16, 32]))
            .with("activation", texts(&["relu", "gelu"]))
            .with("learned_positional", flag.clone())
            .with("share_all_embeddings", flag)
    }

    /// The same parameters with widths, depths and batch sizes shrunk for
    /// single-core training.
    pub fn desk() -> Self {
        let mut space = Self::paper();
        let ints = |v: &[i64]| ParamSpec::Categorical {
            choices: v.iter().map(|&i| ParamValue::Int(i)).collect(),
        };
        let layers = ParamSpec::Int {
            low: 1,
            high: 3,
            log: false,
        };
        space.params.insert("batch_size".into(), ints(&[8, 16, 32]));
        space.params.insert("encoder_layers".into(), layers.clone());
        space.params.insert("decoder_layers".into(), layers);
        space.params.insert("embedding_dim".into(), ints(&[16, 32, 64]));
        space.params.insert("ffn_dim".into(), ints(&[32, 64, 128, 256]));
        space.params.insert("attention_heads".into(), ints(&[2, 4]));
        space
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("search spaces serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let space: Self = serde_json::from_str(text)?;
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}
