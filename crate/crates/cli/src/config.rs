//! Run configuration: one TOML file with a section per module. Every field
//! defaults to the owning module's default, and command-line flags override
//! the file.

use std::path::Path;

use mpe_core::diagnostics::{DiagnosticThresholds, FrequencyUnit};
use mpe_core::splitter::SplitConfig;
use mpe_core::synthetic::GeneratorConfig;
use mpe_core::tokenizer::TokenizerConfig;
use mpe_hpo::StudyConfig;
use mpe_models::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub thresholds: DiagnosticThresholds,
    pub frequency_unit: FrequencyUnit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Feeds every seeded component: generator, splitter, tokenizer
    /// sampling, model initialization, batch order and the study sampler.
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub split: SplitConfig,
    pub tokenizer: TokenizerConfig,
    pub diagnostics: DiagnosticsConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub study: StudyConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Copies the run seed into every section that carries its own.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.split.seed = seed;
        self.tokenizer.seed = seed;
        self.train.seed = seed;
        self.study.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: String| CliError::Usage(e);
        self.generator.validate().map_err(|e| usage(e.to_string()))?;
        self.split.validate().map_err(|e| usage(e.to_string()))?;
        self.diagnostics
            .thresholds
            .validate()
            .map_err(|e| usage(e.to_string()))?;
        self.model.validate().map_err(|e| usage(e.to_string()))?;
        self.train.validate().map_err(|e| usage(e.to_string()))?;
        self.study.validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_module_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.model.max_source_len, 512);
        assert_eq!(c.train.patience, 3);
        assert_eq!(c.train.beam_size, 8);
        assert_eq!(c.diagnostics.thresholds.rare_max, 4000);
        assert_eq!(c.diagnostics.thresholds.entropy_threshold, 0.7);
    }

    #[test]
    fn sections_parse_and_unknown_keys_fail() {
        let c = RunConfig::from_toml(
            "seed = 4\n[model]\narchitecture = \"transformer\"\n[diagnostics.thresholds]\nlong_article = { percentile = 90.0 }\n",
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.model.architecture, mpe_models::Architecture::Transformer);
        assert!(matches!(
            c.diagnostics.thresholds.long_article,
            mpe_core::diagnostics::LongArticleThreshold::Percentile(p) if p == 90.0
        ));
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(CliError::Usage(_))));
    }

    #[test]
    fn shipped_desk_config_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let c = RunConfig::load(&path).unwrap();
        c.validate().unwrap();
    }
}
