use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::space::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Self::Maximize => a > b,
            Self::Minimize => a < b,
        }
    }

    /// Maps objectives so that larger is always better.
    pub fn orient(self, value: f64) -> f64 {
        match self {
            Self::Maximize => value,
            Self::Minimize => -value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Running,
    Completed,
    Pruned,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub params: Params,
    /// Best-so-far objective at every reported step.
    pub intermediate: BTreeMap<u64, f64>,
    pub status: TrialStatus,
    /// Present iff completed.
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruned_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trial {
    pub fn new(id: usize, params: Params) -> Self {
        Self {
            id,
            params,
            intermediate: BTreeMap::new(),
            status: TrialStatus::Running,
            value: None,
            pruned_at: None,
            error: None,
        }
    }

    /// Records `value` at `step`, keeping the best value seen so far.
    /// Steps must increase; a repeated or earlier step is ignored.
    pub fn report(&mut self, step: u64, value: f64, direction: Direction) -> bool {
        if self.intermediate.keys().next_back().is_some_and(|&last| step <= last) {
            return false;
        }
        let best = match self.intermediate.values().next_back() {
            Some(&prev) if !direction.better(value, prev) => prev,
            _ => value,
        };
        self.intermediate.insert(step, best);
        true
    }

    pub fn is_completed(&self) -> bool {
        self.status == TrialStatus::Completed
    }
}
