//! Pipeline configuration: parsing, defaults, and validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokenizer operating mode.
///
/// `Static` assigns every item a single feature-only semantic ID.
/// `MultiIdentifier` keeps several IDs per item but always tokenizes with the
/// most frequent one, relying on augmentation alone to mix them.
/// `Personalized` selects the ID matching the user context at every position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerMode {
    Static,
    MultiIdentifier,
    Personalized,
}

impl std::str::FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(TokenizerMode::Static),
            "multi" | "multi-identifier" => Ok(TokenizerMode::MultiIdentifier),
            "personalized" => Ok(TokenizerMode::Personalized),
            other => Err(Error::Config(format!(
                "mode must be one of static|multi|personalized, got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TokenizerMode::Static => "static",
            TokenizerMode::MultiIdentifier => "multi-identifier",
            TokenizerMode::Personalized => "personalized",
        };
        f.write_str(s)
    }
}

/// Parameters of the interaction-count-based centroid budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationParams {
    /// Number of interaction-volume groups (T).
    pub groups: usize,
    /// Shape of the Gamma(K, 1) prior over group sizes.
    pub gamma_shape: f64,
    /// Centroid count of the first (lowest-volume) group.
    pub c_start: usize,
    /// Arithmetic-progression step between consecutive groups.
    pub delta: usize,
}

impl Default for AllocationParams {
    fn default() -> Self {
        Self {
            groups: 5,
            gamma_shape: 2.0,
            c_start: 1,
            delta: 1,
        }
    }
}

/// How augmentation picks the replacement among an item's semantic IDs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplacementDistribution {
    /// Uniform over the item's other IDs (never the current one).
    UniformOthers,
    /// Frequency-weighted over the item's other IDs.
    WeightedOthers,
    /// Uniform over all of the item's IDs, including the current one. Used by
    /// the popular-rate analysis variant, not by training.
    UniformAll,
}

/// Full pipeline configuration. All knobs are validated by
/// [`PipelineConfig::validate`] before use.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Semantic ID length G (content digits + conflict digit). When absent,
    /// derived as `codebook_sizes.len() + 1`.
    pub digits: Option<usize>,
    /// Codebook size per content level.
    pub codebook_sizes: Vec<usize>,
    /// Size of the auxiliary conflict-digit alphabet.
    pub conflict_alphabet: usize,
    /// Fusion weight between context and feature blocks.
    pub alpha: f32,
    /// Relative frequency threshold below which an item's semantic IDs are
    /// merged away.
    pub tau: f64,
    /// Augmentation probability.
    pub gamma: f64,
    /// How augmentation draws the replacement ID.
    pub augment_distribution: ReplacementDistribution,
    pub allocation: AllocationParams,
    /// Beam width for autoregressive decoding.
    pub beam_width: usize,
    /// Sequences keep only their most recent `max_seq_len` items.
    pub max_seq_len: usize,
    /// Core-filtering threshold on user and item interaction counts.
    pub min_interactions: usize,
    pub seed: u64,
    pub mode: TokenizerMode,
    /// Exponential-decay factor of the builtin context encoder, in (0, 1].
    pub context_decay: f32,
    /// Laplace smoothing constant of the count token model.
    pub smoothing: f64,
    /// Number of trailing items whose IDs form the count-model context
    /// signature.
    pub signature_items: usize,
    /// Augmentation re-draws per training pass; the count model accumulates
    /// counts over all of them.
    pub train_epochs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            digits: None,
            codebook_sizes: vec![256, 256, 256],
            conflict_alphabet: 256,
            alpha: 0.5,
            tau: 0.2,
            gamma: 0.3,
            augment_distribution: ReplacementDistribution::UniformOthers,
            allocation: AllocationParams::default(),
            beam_width: 50,
            max_seq_len: 20,
            min_interactions: 5,
            seed: 42,
            mode: TokenizerMode::Personalized,
            context_decay: 0.8,
            smoothing: 0.1,
            signature_items: 2,
            train_epochs: 3,
        }
    }
}

impl PipelineConfig {
    /// Parse a TOML document and validate it.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()
    }

    /// Total semantic ID length, content digits plus the conflict digit.
    pub fn num_digits(&self) -> usize {
        self.digits.unwrap_or(self.codebook_sizes.len() + 1)
    }

    /// Vocabulary size of each digit level, conflict level last.
    pub fn level_vocab_sizes(&self) -> Vec<usize> {
        let mut sizes = self.codebook_sizes.clone();
        sizes.push(self.conflict_alphabet);
        sizes
    }

    /// Check every invariant and fill the derived G, returning the normalized
    /// config.
    pub fn validate(mut self) -> Result<Self> {
        fn fail(msg: impl Into<String>) -> Result<PipelineConfig> {
            Err(Error::Config(msg.into()))
        }

        if self.codebook_sizes.is_empty() {
            return fail("codebook_sizes must name at least one content level");
        }
        if let Some(&bad) = self.codebook_sizes.iter().find(|&&s| s == 0) {
            return fail(format!("codebook size must be positive, got {bad}"));
        }
        match self.digits {
            None => self.digits = Some(self.codebook_sizes.len() + 1),
            Some(g) => {
                if g != self.codebook_sizes.len() + 1 {
                    return fail(format!(
                        "digits must equal codebook_sizes.len() + 1 = {}, got {g}",
                        self.codebook_sizes.len() + 1
                    ));
                }
            }
        }
        if self.conflict_alphabet == 0 {
            return fail("conflict_alphabet must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return fail(format!("alpha must lie in [0,1], got {}", self.alpha));
        }
        if self.tau < 0.0 || !self.tau.is_finite() {
            return fail(format!("tau must be >= 0, got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !self.gamma.is_finite() {
            return fail(format!("gamma must lie in [0,1], got {}", self.gamma));
        }
        if self.allocation.groups == 0 {
            return fail("allocation.groups must be >= 1");
        }
        if self.allocation.gamma_shape <= 0.0 || !self.allocation.gamma_shape.is_finite() {
            return fail(format!(
                "allocation.gamma_shape must be > 0, got {}",
                self.allocation.gamma_shape
            ));
        }
        if self.allocation.c_start == 0 {
            return fail("allocation.c_start must be >= 1");
        }
        if self.beam_width == 0 {
            return fail("beam_width must be >= 1");
        }
        if self.max_seq_len == 0 {
            return fail("max_seq_len must be >= 1");
        }
        if !(0.0 < self.context_decay && self.context_decay <= 1.0) {
            return fail(format!(
                "context_decay must lie in (0,1], got {}",
                self.context_decay
            ));
        }
        if self.smoothing < 0.0 || !self.smoothing.is_finite() {
            return fail(format!("smoothing must be >= 0, got {}", self.smoothing));
        }
        if self.train_epochs == 0 {
            return fail("train_epochs must be >= 1");
        }
        Ok(self)
    }
}

/// Validate a parsed config, filling defaults for absent fields.
pub fn validate_config(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate()
}
