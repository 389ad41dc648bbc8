//! Full-ranking leave-one-out evaluation (Recall@K, NDCG@K) and the
//! positional popular-rate and parameter-sweep analyses.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{PipelineConfig, ReplacementDistribution};
use crate::embed::{ContextTable, FeatureTable};
use crate::error::{Error, Result};
use crate::gr::{aggregate_detailed, beam_search, RankedItem, TokenModel};
use crate::ingest::{InteractionLog, Split};
use crate::registry::{sid_stats, SidRegistry};
use crate::seeds::mix_seed;
use crate::tokenize::{augment, TokenSequence, Tokenizer};
use crate::types::ItemId;

/// Aggregate ranking metrics over one target set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub num_users: usize,
    /// 1-based rank of the ground truth per user; `None` when it never
    /// entered the aggregated beam, which counts as a miss.
    pub ranks: Vec<Option<usize>>,
}

impl MetricsReport {
    /// `metric,k,value` rows, fixed order.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        let io_err = |e| Error::io("<writer>", e);
        writeln!(w, "metric,k,value").map_err(io_err)?;
        for (k, v) in &self.recall {
            writeln!(w, "recall,{k},{v}").map_err(io_err)?;
        }
        for (k, v) in &self.ndcg {
            writeln!(w, "ndcg,{k},{v}").map_err(io_err)?;
        }
        writeln!(w, "users,,{}", self.num_users).map_err(io_err)?;
        w.flush().map_err(io_err)
    }
}

/// Full-ranking evaluation: decode up to `max(ks)` aggregated items per user
/// and score the target's rank. Users whose target never appears in the
/// aggregated beam count as misses.
pub fn evaluate(
    model: &dyn TokenModel,
    registry: &SidRegistry,
    inputs: &[TokenSequence],
    targets: &[ItemId],
    beam_width: usize,
    ks: &[usize],
) -> MetricsReport {
    evaluate_with_predictions(model, registry, inputs, targets, beam_width, ks).0
}

/// [`evaluate`] also returning each user's ranked items.
pub fn evaluate_with_predictions(
    model: &dyn TokenModel,
    registry: &SidRegistry,
    inputs: &[TokenSequence],
    targets: &[ItemId],
    beam_width: usize,
    ks: &[usize],
) -> (MetricsReport, Vec<Vec<RankedItem>>) {
    assert_eq!(inputs.len(), targets.len());
    let k_max = ks.iter().copied().max().unwrap_or(10);
    let predictions: Vec<Vec<RankedItem>> = inputs
        .par_iter()
        .map(|input| {
            let decoded = beam_search(model, input, beam_width);
            aggregate_detailed(&decoded, registry, k_max)
        })
        .collect();
    let ranks: Vec<Option<usize>> = predictions
        .iter()
        .zip(targets)
        .map(|(ranked, &target)| ranked.iter().position(|r| r.item == target).map(|p| p + 1))
        .collect();

    let n = ranks.len();
    let mut recall = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in ks {
        let mut hits = 0usize;
        let mut gain = 0.0f64;
        for rank in ranks.iter().flatten() {
            if *rank <= k {
                hits += 1;
                gain += 1.0 / ((*rank as f64) + 1.0).log2();
            }
        }
        recall.insert(k, hits as f64 / n.max(1) as f64);
        ndcg.insert(k, gain / n.max(1) as f64);
    }
    (
        MetricsReport {
            recall,
            ndcg,
            num_users: n,
            ranks,
        },
        predictions,
    )
}

/// Per-position fraction of training occurrences tokenized as their item's
/// most frequent semantic ID.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularRateRow {
    /// 1-based sequence position.
    pub position: usize,
    pub rate: f64,
    pub occurrences: usize,
}

/// Tokenize every train prefix under the given mode and augmentation, then
/// measure per position how often the assigned ID is the item's popular one.
pub fn popular_rate(
    log: &InteractionLog,
    split: &Split,
    tokenizer: &Tokenizer<'_>,
    gamma: f64,
    distribution: ReplacementDistribution,
    seed: u64,
    max_position: usize,
) -> Result<Vec<PopularRateRow>> {
    let per_seq: Result<Vec<Vec<bool>>> = split
        .entries
        .par_iter()
        .map(|entry| {
            let seq = &log.sequences[entry.seq];
            let tokenized = tokenizer.tokenize_sequence(seq, entry.seq, entry.train_len)?;
            let tokenized = if gamma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[entry.seq as u64, 0x9d]));
                augment(
                    &tokenized,
                    tokenizer.registry,
                    gamma,
                    distribution,
                    &mut rng,
                )
            } else {
                tokenized
            };
            tokenized
                .entries()
                .iter()
                .map(|e| Ok(*tokenizer.registry.popular_sid(e.item)? == e.sid))
                .collect()
        })
        .collect();

    let mut hits = vec![0usize; max_position];
    let mut totals = vec![0usize; max_position];
    for seq_hits in per_seq? {
        for (pos0, hit) in seq_hits.into_iter().enumerate().take(max_position) {
            totals[pos0] += 1;
            hits[pos0] += hit as usize;
        }
    }
    Ok((0..max_position)
        .filter(|&p| totals[p] > 0)
        .map(|p| PopularRateRow {
            position: p + 1,
            rate: hits[p] as f64 / totals[p] as f64,
            occurrences: totals[p],
        })
        .collect())
}

pub fn write_popular_rate_csv(
    variants: &[(&str, &[PopularRateRow])],
    writer: impl Write,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    let io_err = |e| Error::io("<writer>", e);
    writeln!(w, "variant,position,popular_rate,occurrences").map_err(io_err)?;
    for (name, rows) in variants {
        for r in *rows {
            writeln!(w, "{name},{},{},{}", r.position, r.rate, r.occurrences).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Which hyperparameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    Tau,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParam::Gamma),
            "tau" => Ok(SweepParam::Tau),
            other => Err(Error::Config(format!(
                "sweep parameter must be gamma or tau, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: MetricsReport,
    /// Semantic IDs in use relative to one per item.
    pub usage_ratio: f64,
}

/// Re-run the pipeline and evaluation for each grid value.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    base: &PipelineConfig,
    log: &InteractionLog,
    split: &Split,
    features: &FeatureTable,
    external_contexts: Option<&ContextTable>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        match param {
            SweepParam::Gamma => cfg.gamma = value,
            SweepParam::Tau => cfg.tau = value,
        }
        let cfg = cfg.validate()?;
        let run = crate::pipeline::run_full(log, split, features, external_contexts, &cfg)?;
        rows.push(SweepRow {
            value,
            usage_ratio: sid_stats(&run.artifacts.registry).usage_ratio,
            metrics: run.test_metrics,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(param: SweepParam, rows: &[SweepRow], writer: impl Write) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    let io_err = |e| Error::io("<writer>", e);
    let name = match param {
        SweepParam::Gamma => "gamma",
        SweepParam::Tau => "tau",
    };
    writeln!(
        w,
        "{name},recall@5,recall@10,ndcg@5,ndcg@10,sid_usage_ratio"
    )
    .map_err(io_err)?;
    for r in rows {
        let get = |m: &BTreeMap<usize, f64>, k: usize| m.get(&k).copied().unwrap_or(f64::NAN);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.value,
            get(&r.metrics.recall, 5),
            get(&r.metrics.recall, 10),
            get(&r.metrics.ndcg, 5),
            get(&r.metrics.ndcg, 10),
            r.usage_ratio
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
