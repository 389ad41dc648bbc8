//! End-to-end orchestration: ingest -> context -> condense -> quantize ->
//! registry -> tokenize -> fit -> evaluate.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::condense::{
    allocate_centroids, condense_all, group_rows_by_item, CentroidAllocation, ItemCentroids,
};
use crate::config::{AllocationParams, PipelineConfig, TokenizerMode};
use crate::context::ContextEncoder;
use crate::embed::{ContextTable, FeatureTable};
use crate::error::Result;
use crate::eval::{evaluate, MetricsReport};
use crate::gr::CountTokenModel;
use crate::ingest::{InteractionLog, Split};
use crate::quantize::{
    assign_conflict_digit, fuse, QuantizedFacet, ResidualCodebooks, WhiteningTransform,
};
use crate::registry::{RegistryEntry, SidRegistry};
use crate::seeds::mix_seed;
use crate::tokenize::{build_training_set, TokenSequence, Tokenizer};
use crate::types::ItemId;

/// Everything the tokenizer needs beyond the corpus itself.
#[derive(Debug, Clone)]
pub struct TokenizerArtifacts {
    pub encoder: ContextEncoder,
    pub allocation: CentroidAllocation,
    pub condensed: BTreeMap<ItemId, ItemCentroids>,
    pub whitening: WhiteningTransform,
    pub codebooks: ResidualCodebooks,
    pub registry: SidRegistry,
    /// Fusion weight actually used; static mode forces 0 (feature-only).
    pub effective_alpha: f32,
}

impl TokenizerArtifacts {
    pub fn tokenizer<'a>(
        &'a self,
        features: &'a FeatureTable,
        mode: TokenizerMode,
    ) -> Tokenizer<'a> {
        Tokenizer {
            registry: &self.registry,
            encoder: &self.encoder,
            features,
            whitening: &self.whitening,
            alpha: self.effective_alpha,
            mode,
        }
    }
}

/// Static mode approximates a feature-only tokenizer: the context block is
/// zeroed out of the fusion.
pub fn effective_alpha(cfg: &PipelineConfig) -> f32 {
    match cfg.mode {
        TokenizerMode::Static => 0.0,
        _ => cfg.alpha,
    }
}

/// Run condensation and quantization, producing the semantic-ID registry.
pub fn build_tokenizer(
    log: &InteractionLog,
    split: &Split,
    features: &FeatureTable,
    external_contexts: Option<&ContextTable>,
    cfg: &PipelineConfig,
) -> Result<TokenizerArtifacts> {
    let alpha = effective_alpha(cfg);
    let encoder = match external_contexts {
        Some(table) => ContextEncoder::External(table.clone()),
        None => ContextEncoder::builtin(cfg.context_decay),
    };
    let contexts = encoder.encode_all(log, split, features)?;

    let grouped = group_rows_by_item(&contexts, log, split);
    let counts: BTreeMap<ItemId, usize> = grouped
        .iter()
        .map(|(&item, (rows, _))| (item, rows.len()))
        .collect();
    let allocation = match cfg.mode {
        // one centroid per item
        TokenizerMode::Static => allocate_centroids(
            &counts,
            &AllocationParams {
                groups: 1,
                gamma_shape: 1.0,
                c_start: 1,
                delta: 0,
            },
        ),
        _ => allocate_centroids(&counts, &cfg.allocation),
    };
    let condensed = condense_all(&contexts, log, split, &allocation, cfg.seed)?;

    let mut fused_rows = Vec::new();
    let mut owners = Vec::new();
    let mut facets = Vec::new();
    let mut occurrence_lists = Vec::new();
    for (item, ic) in &condensed {
        for k in 0..ic.num_centroids() {
            fused_rows.push(fuse(&ic.centroids[k], features.row(*item), alpha));
            owners.push(*item);
            facets.push(k);
            occurrence_lists.push(
                ic.occurrences
                    .iter()
                    .zip(&ic.assignment)
                    .filter(|&(_, &a)| a == k)
                    .map(|(&occ, _)| occ)
                    .collect::<Vec<_>>(),
            );
        }
    }

    let whitening = WhiteningTransform::fit(&fused_rows)?;
    let whitened = whitening.apply_all(&fused_rows);
    let codebooks = ResidualCodebooks::fit(
        &whitened,
        &cfg.codebook_sizes,
        mix_seed(cfg.seed, &[0xC0DE]),
    )?;

    let quantized: Vec<QuantizedFacet> = whitened
        .iter()
        .zip(owners.iter().zip(&facets))
        .map(|(row, (&item, &facet))| QuantizedFacet {
            item,
            facet,
            digits: codebooks.encode_digits(row),
        })
        .collect();
    let sids = assign_conflict_digit(&quantized, cfg.conflict_alphabet)?;

    let entries: Vec<RegistryEntry> = sids
        .into_iter()
        .zip(whitened)
        .zip(facets.iter().zip(occurrence_lists))
        .map(|((sid, centroid), (&facet, occurrences))| RegistryEntry {
            sid,
            facet,
            centroid,
            occurrences,
        })
        .collect();
    let registry = SidRegistry::build(entries, owners, cfg.tau)?;

    Ok(TokenizerArtifacts {
        encoder,
        allocation,
        condensed,
        whitening,
        codebooks,
        registry,
        effective_alpha: alpha,
    })
}

/// Tokenize every train prefix (no augmentation), aligned with
/// `split.entries`.
pub fn tokenize_corpus(
    log: &InteractionLog,
    split: &Split,
    tokenizer: &Tokenizer<'_>,
) -> Result<Vec<TokenSequence>> {
    split
        .entries
        .par_iter()
        .map(|entry| {
            tokenizer.tokenize_sequence(&log.sequences[entry.seq], entry.seq, entry.train_len)
        })
        .collect()
}

/// Fit the count model on `train_epochs` independent augmentation draws.
pub fn fit_model(
    log: &InteractionLog,
    split: &Split,
    tokenizer: &Tokenizer<'_>,
    cfg: &PipelineConfig,
) -> Result<CountTokenModel> {
    let mut model =
        CountTokenModel::new(cfg.level_vocab_sizes(), cfg.smoothing, cfg.signature_items);
    for epoch in 0..cfg.train_epochs {
        let examples = build_training_set(
            log,
            split,
            tokenizer,
            cfg.gamma,
            cfg.augment_distribution,
            cfg.seed,
            epoch as u64,
        )?;
        model.add_examples(&examples);
    }
    Ok(model)
}

/// Which held-out item evaluation scores against. Inputs are the tokenized
/// train prefixes in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    Validation,
    Test,
}

pub fn eval_targets(log: &InteractionLog, split: &Split, which: EvalTarget) -> Vec<ItemId> {
    split
        .entries
        .iter()
        .map(|&e| match which {
            EvalTarget::Validation => split.validation_target(log, e),
            EvalTarget::Test => split.test_target(log, e),
        })
        .collect()
}

/// A complete pipeline run on an in-memory corpus.
pub struct PipelineRun {
    pub artifacts: TokenizerArtifacts,
    pub corpus: Vec<TokenSequence>,
    pub model: CountTokenModel,
    pub test_metrics: MetricsReport,
}

/// Build, tokenize, fit, and evaluate against the test targets at the
/// configured beam width with Recall/NDCG at 5 and 10.
pub fn run_full(
    log: &InteractionLog,
    split: &Split,
    features: &FeatureTable,
    external_contexts: Option<&ContextTable>,
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    let artifacts = build_tokenizer(log, split, features, external_contexts, cfg)?;
    let tokenizer = artifacts.tokenizer(features, cfg.mode);
    let corpus = tokenize_corpus(log, split, &tokenizer)?;
    let model = fit_model(log, split, &tokenizer, cfg)?;
    let targets = eval_targets(log, split, EvalTarget::Test);
    let test_metrics = evaluate(
        &model,
        &artifacts.registry,
        &corpus,
        &targets,
        cfg.beam_width,
        &[5, 10],
    );
    Ok(PipelineRun {
        artifacts,
        corpus,
        model,
        test_metrics,
    })
}
