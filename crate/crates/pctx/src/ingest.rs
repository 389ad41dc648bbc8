//! Interaction-log loading, preprocessing, leave-one-out splits, and the
//! seeded synthetic multi-intent corpus used by end-to-end tests.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use log::{info, warn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::embed::FeatureTable;
use crate::error::{Error, Result};
use crate::types::{InteractionSequence, ItemId, ItemVocab};

/// Filtered, sorted, truncated interaction corpus plus its item vocabulary.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    pub sequences: Vec<InteractionSequence>,
    pub vocab: ItemVocab,
}

impl InteractionLog {
    pub fn num_users(&self) -> usize {
        self.sequences.len()
    }

    pub fn num_items(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_interactions(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }
}

/// Leave-one-out split: per sequence, a train prefix, a validation target
/// (penultimate item) and a test target (last item).
#[derive(Debug, Clone)]
pub struct Split {
    pub entries: Vec<SplitEntry>,
    /// Sequences shorter than 3 items, excluded from evaluation.
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitEntry {
    /// Index into `InteractionLog::sequences`.
    pub seq: usize,
    /// Length of the train prefix; `items[train_len]` is the validation
    /// target and `items[train_len + 1]` the test target.
    pub train_len: usize,
}

impl Split {
    pub fn train_prefix<'a>(&self, log: &'a InteractionLog, entry: SplitEntry) -> &'a [ItemId] {
        &log.sequences[entry.seq].items[..entry.train_len]
    }

    pub fn validation_target(&self, log: &InteractionLog, entry: SplitEntry) -> ItemId {
        log.sequences[entry.seq].items[entry.train_len]
    }

    pub fn test_target(&self, log: &InteractionLog, entry: SplitEntry) -> ItemId {
        log.sequences[entry.seq].items[entry.train_len + 1]
    }
}

/// One raw `(user, item, timestamp)` record.
#[derive(Debug, Clone)]
struct RawRecord {
    user: String,
    item: String,
    timestamp: i64,
}

/// Load a tab-separated interaction file and apply the preprocessing
/// pipeline: iterative core filtering to fixpoint, per-user chronological
/// sort, and truncation to the most recent `max_seq_len` items.
pub fn load_interactions(path: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<InteractionLog> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    load_interactions_from(BufReader::new(file), &path.display().to_string(), cfg)
}

/// Same as [`load_interactions`] but from any reader; `source` names it in
/// errors.
pub fn load_interactions_from(
    reader: impl Read,
    source: &str,
    cfg: &PipelineConfig,
) -> Result<InteractionLog> {
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (user, item, ts) = match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(i), Some(t)) if !u.is_empty() && !i.is_empty() => (u, i, t),
            _ => {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: lineno + 1,
                    msg: "expected 'user<TAB>item<TAB>timestamp'".to_string(),
                })
            }
        };
        let timestamp: i64 = ts.trim().parse().map_err(|_| Error::Parse {
            path: source.to_string(),
            line: lineno + 1,
            msg: format!("timestamp '{ts}' is not an integer"),
        })?;
        records.push(RawRecord {
            user: user.to_string(),
            item: item.to_string(),
            timestamp,
        });
    }
    build_log(records, cfg)
}

fn build_log(mut records: Vec<RawRecord>, cfg: &PipelineConfig) -> Result<InteractionLog> {
    let initial = records.len();
    records = core_filter(records, cfg.min_interactions);
    if records.is_empty() {
        return Err(Error::CorpusVanished {
            min_interactions: cfg.min_interactions,
        });
    }
    info!(
        "core filtering kept {} of {} interactions",
        records.len(),
        initial
    );

    // Group per user preserving first-appearance order of users so the
    // result is independent of hash-map iteration order.
    let mut user_order = Vec::new();
    let mut per_user: HashMap<String, Vec<(i64, usize, String)>> = HashMap::new();
    for (idx, r) in records.into_iter().enumerate() {
        per_user
            .entry(r.user.clone())
            .or_insert_with(|| {
                user_order.push(r.user.clone());
                Vec::new()
            })
            .push((r.timestamp, idx, r.item));
    }

    let mut vocab = ItemVocab::new();
    let mut sequences = Vec::with_capacity(user_order.len());
    for user in user_order {
        let mut events = per_user.remove(&user).expect("grouped above");
        // chronological; input order breaks timestamp ties
        events.sort_by_key(|a| (a.0, a.1));
        if events.len() > cfg.max_seq_len {
            events.drain(..events.len() - cfg.max_seq_len);
        }
        let timestamps: Vec<i64> = events.iter().map(|e| e.0).collect();
        let items: Vec<ItemId> = events.iter().map(|e| vocab.intern(&e.2)).collect();
        sequences.push(InteractionSequence {
            user,
            items,
            timestamps: Some(timestamps),
        });
    }
    Ok(InteractionLog { sequences, vocab })
}

/// Iteratively drop users and items with fewer than `k` interactions until
/// neither pass removes anything.
fn core_filter(mut records: Vec<RawRecord>, k: usize) -> Vec<RawRecord> {
    loop {
        let before = records.len();
        records = filter_by_count(records, k, |r| &r.user);
        records = filter_by_count(records, k, |r| &r.item);
        if records.len() == before {
            return records;
        }
    }
}

fn filter_by_count<F>(records: Vec<RawRecord>, k: usize, key: F) -> Vec<RawRecord>
where
    F: Fn(&RawRecord) -> &str,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in &records {
        *counts.entry(key(r)).or_default() += 1;
    }
    if counts.values().all(|&c| c >= k) {
        return records;
    }
    let keep: std::collections::HashSet<String> = counts
        .into_iter()
        .filter(|&(_, c)| c >= k)
        .map(|(s, _)| s.to_string())
        .collect();
    records
        .into_iter()
        .filter(|r| keep.contains(key(r)))
        .collect()
}

/// Reserve the last item of each sequence for test and the penultimate one
/// for validation. Sequences shorter than 3 are excluded.
pub fn make_split(log: &InteractionLog) -> Split {
    let mut entries = Vec::new();
    let mut excluded = 0;
    for (seq, s) in log.sequences.iter().enumerate() {
        if s.len() < 3 {
            excluded += 1;
            continue;
        }
        entries.push(SplitEntry {
            seq,
            train_len: s.len() - 2,
        });
    }
    if excluded > 0 {
        warn!("excluded {excluded} sequences shorter than 3 items from the split");
    }
    Split { entries, excluded }
}

/// Synthetic corpus with per-item and per-user ground-truth intent labels.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub log: InteractionLog,
    pub features: FeatureTable,
    /// One or two latent intents per item, indexed by `ItemId`.
    pub item_intents: Vec<Vec<usize>>,
    /// The single intent each user's draws favor, indexed by sequence.
    pub user_intents: Vec<usize>,
}

impl SyntheticCorpus {
    pub fn is_dual_intent(&self, item: ItemId) -> bool {
        self.item_intents[item.index()].len() == 2
    }
}

/// Parameters of the synthetic generator. Defaults match the corpus used by
/// the acceptance suite.
#[derive(Debug, Clone)]
pub struct SyntheticParams {
    pub n_users: usize,
    pub n_items: usize,
    pub n_intents: usize,
    /// Probability that an item carries two intents instead of one.
    pub dual_intent_rate: f64,
    /// Probability that a draw comes from the user's intent pool rather than
    /// the full catalogue.
    pub in_intent_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability of a full-length sequence; the rest draw uniformly from
    /// `min_len..max_len`, giving the position mass the early-heavy shape of
    /// real interaction logs.
    pub full_len_rate: f64,
    /// Zipf exponent of within-pool item popularity. Each intent ranks its
    /// pool independently, so a dual-intent item can be a staple of one
    /// population and a rarity of the other. 0 gives uniform pools.
    pub popularity_skew: f64,
    /// Uniform feature noise half-width.
    pub noise: f32,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_items: 300,
            n_intents: 3,
            dual_intent_rate: 0.3,
            in_intent_rate: 0.9,
            min_len: 5,
            max_len: 20,
            full_len_rate: 0.6,
            popularity_skew: 0.0,
            noise: 0.05,
        }
    }
}

/// Generate a deterministic multi-intent corpus: every user favors one
/// latent intent, every item carries one or two, and feature embeddings are
/// intent-basis mixtures plus small seeded noise.
pub fn generate_synthetic(params: &SyntheticParams, seed: u64) -> Result<SyntheticCorpus> {
    if params.n_intents < 2 {
        return Err(Error::Config(format!(
            "synthetic corpus needs n_intents >= 2, got {}",
            params.n_intents
        )));
    }
    if params.n_items < params.n_intents {
        return Err(Error::Config(format!(
            "n_items ({}) must be >= n_intents ({})",
            params.n_items, params.n_intents
        )));
    }
    if params.min_len < 3 || params.min_len > params.max_len {
        return Err(Error::Config(
            "synthetic sequence lengths need 3 <= min_len <= max_len".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_intents = params.n_intents;

    // Intent assignment. The first n_intents items seed one intent each so
    // no pool is empty.
    let mut item_intents: Vec<Vec<usize>> = Vec::with_capacity(params.n_items);
    for idx in 0..params.n_items {
        if idx < n_intents {
            item_intents.push(vec![idx]);
            continue;
        }
        let first = rng.random_range(0..n_intents);
        if rng.random::<f64>() < params.dual_intent_rate {
            let mut second = rng.random_range(0..n_intents - 1);
            if second >= first {
                second += 1;
            }
            let (a, b) = (first.min(second), first.max(second));
            item_intents.push(vec![a, b]);
        } else {
            item_intents.push(vec![first]);
        }
    }

    let mut pools: Vec<Vec<u32>> = vec![Vec::new(); n_intents];
    for (idx, intents) in item_intents.iter().enumerate() {
        for &intent in intents {
            pools[intent].push(idx as u32);
        }
    }
    // independent popularity order per intent: shuffle, then cumulative
    // Zipf weights for O(log n) sampling
    let pool_cdfs: Vec<Vec<f64>> = pools
        .iter_mut()
        .map(|pool| {
            for i in (1..pool.len()).rev() {
                pool.swap(i, rng.random_range(0..=i));
            }
            let mut acc = 0.0;
            pool.iter()
                .enumerate()
                .map(|(rank, _)| {
                    acc += 1.0 / ((rank + 1) as f64).powf(params.popularity_skew);
                    acc
                })
                .collect()
        })
        .collect();
    let draw_from_pool = |intent: usize, rng: &mut ChaCha8Rng| -> u32 {
        let cdf = &pool_cdfs[intent];
        let target = rng.random::<f64>() * cdf.last().copied().unwrap_or(1.0);
        let idx = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
        pools[intent][idx]
    };

    // Feature embeddings: mean of the item's intent basis vectors plus noise,
    // L2-normalized. Dimension = n_intents.
    let dim = n_intents;
    let mut vocab = ItemVocab::new();
    let mut feature_rows = Vec::with_capacity(params.n_items);
    for (idx, intents) in item_intents.iter().enumerate() {
        vocab.intern(&format!("i{idx:05}"));
        let mut row = vec![0.0f32; dim];
        for &intent in intents {
            row[intent] += 1.0 / intents.len() as f32;
        }
        for v in row.iter_mut() {
            *v += rng.random_range(-params.noise..=params.noise);
        }
        let norm = row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt() as f32;
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        feature_rows.push(row);
    }

    let mut sequences = Vec::with_capacity(params.n_users);
    let mut user_intents = Vec::with_capacity(params.n_users);
    for u in 0..params.n_users {
        let intent = rng.random_range(0..n_intents);
        user_intents.push(intent);
        let len = if rng.random::<f64>() < params.full_len_rate {
            params.max_len
        } else {
            rng.random_range(params.min_len..params.max_len.max(params.min_len + 1))
        };
        let mut items = Vec::with_capacity(len);
        for _ in 0..len {
            let id = if rng.random::<f64>() < params.in_intent_rate {
                draw_from_pool(intent, &mut rng)
            } else {
                rng.random_range(0..params.n_items as u32)
            };
            items.push(ItemId(id));
        }
        let timestamps: Vec<i64> = (0..len as i64).collect();
        sequences.push(InteractionSequence {
            user: format!("u{u:05}"),
            items,
            timestamps: Some(timestamps),
        });
    }

    let log = InteractionLog { sequences, vocab };
    let features = FeatureTable::new(dim, feature_rows)?;
    Ok(SyntheticCorpus {
        log,
        features,
        item_intents,
        user_intents,
    })
}
