//! Per-occurrence user-context representations.
//!
//! The builtin encoder is a deterministic exponential-decay mean over the
//! interaction prefix (current item included); the external variant imports
//! rows produced by a pretrained sequence encoder.

use rayon::prelude::*;

use crate::embed::{ContextTable, FeatureTable};
use crate::error::{Error, Result};
use crate::ingest::{InteractionLog, Split};
use crate::types::{InteractionSequence, Occurrence};

/// Source of context representations.
#[derive(Debug, Clone)]
pub enum ContextEncoder {
    /// `normalize(sum_{j<=i} decay^{i-j} * feat(v_j))`.
    BuiltinDecayedMean { decay: f32 },
    /// Precomputed rows keyed by occurrence.
    External(ContextTable),
}

impl ContextEncoder {
    pub fn builtin(decay: f32) -> Self {
        ContextEncoder::BuiltinDecayedMean { decay }
    }

    /// Output dimension: the feature dim for the builtin variant, the table
    /// dim for imports.
    pub fn dim(&self, features: &FeatureTable) -> usize {
        match self {
            ContextEncoder::BuiltinDecayedMean { .. } => features.dim(),
            ContextEncoder::External(table) => table.dim(),
        }
    }

    /// Encode the context of position `i` (1-based, current item included).
    pub fn encode(
        &self,
        seq: &InteractionSequence,
        seq_idx: usize,
        i: usize,
        features: &FeatureTable,
    ) -> Result<Vec<f32>> {
        assert!(
            i >= 1 && i <= seq.len(),
            "position {i} out of 1..={}",
            seq.len()
        );
        match self {
            ContextEncoder::BuiltinDecayedMean { decay } => {
                Ok(decayed_mean(&seq.items[..i], *decay, features))
            }
            ContextEncoder::External(table) => table
                .get(Occurrence::new(seq_idx, i))
                .map(|r| r.to_vec())
                .ok_or_else(|| Error::MissingOccurrence {
                    user: seq.user.clone(),
                    position: i,
                }),
        }
    }

    /// Encode every training occurrence (positions within train prefixes).
    /// The result is independent of parallelization.
    pub fn encode_all(
        &self,
        log: &InteractionLog,
        split: &Split,
        features: &FeatureTable,
    ) -> Result<ContextTable> {
        let mut train_len = vec![0usize; log.sequences.len()];
        for e in &split.entries {
            train_len[e.seq] = e.train_len;
        }
        let rows: Result<Vec<Vec<Vec<f32>>>> = log
            .sequences
            .par_iter()
            .enumerate()
            .map(|(seq_idx, seq)| {
                (1..=train_len[seq_idx])
                    .map(|i| self.encode(seq, seq_idx, i, features))
                    .collect()
            })
            .collect();
        Ok(ContextTable::new(self.dim(features), rows?))
    }
}

fn decayed_mean(prefix: &[crate::types::ItemId], decay: f32, features: &FeatureTable) -> Vec<f32> {
    let mut acc = vec![0.0f64; features.dim()];
    let mut weight = 1.0f64;
    for &item in prefix.iter().rev() {
        let row = features.row(item);
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += weight * v as f64;
        }
        weight *= decay as f64;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for v in acc.iter_mut() {
            *v /= norm;
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}
