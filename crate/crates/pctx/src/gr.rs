//! Desk-scale generative retrieval: a pluggable autoregressive token model,
//! beam search over digit levels, and multi-facet aggregation of semantic-ID
//! probabilities into item scores.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use crate::error::{Error, Result};
use crate::registry::SidRegistry;
use crate::tokenize::{TokenSequence, TrainingExample};
use crate::types::{ItemId, SemanticId};

/// Conditional next-token distribution over the semantic-ID token alphabet.
/// Implementations must return a distribution over level `prefix.len()`'s
/// vocabulary that sums to 1.
pub trait TokenModel: Sync {
    /// Vocabulary size of each digit level.
    fn level_sizes(&self) -> &[usize];

    /// `P(token | input sequence, generated digit prefix)`.
    fn next_token_distribution(&self, input: &TokenSequence, prefix: &[u32]) -> Vec<f64>;

    fn num_digits(&self) -> usize {
        self.level_sizes().len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CtxKey {
    /// Flattened IDs of the trailing signature items; its length encodes the
    /// signature depth.
    sig: Vec<u32>,
    /// Digit prefix generated so far; its length encodes the level.
    prefix: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct LevelCounts {
    token_counts: HashMap<u32, u64>,
    total: u64,
}

/// Count-based autoregressive model: exact conditional counts keyed by
/// (context signature, digit prefix) with Laplace smoothing. Unseen
/// signatures back off to shorter ones, ending at the unconditional prefix
/// counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTokenModel {
    level_sizes: Vec<usize>,
    smoothing: f64,
    signature_items: usize,
    counts: HashMap<CtxKey, LevelCounts>,
}

impl CountTokenModel {
    pub fn new(level_sizes: Vec<usize>, smoothing: f64, signature_items: usize) -> Self {
        Self {
            level_sizes,
            smoothing,
            signature_items,
            counts: HashMap::new(),
        }
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn signature_items(&self) -> usize {
        self.signature_items
    }

    fn signature(&self, input: &TokenSequence, items: usize) -> Vec<u32> {
        let n = input.len();
        let take = items.min(n);
        let mut sig = Vec::with_capacity(take * input.num_digits());
        for e in &input.entries()[n - take..] {
            sig.extend_from_slice(e.sid.tokens());
        }
        sig
    }

    /// Accumulate one (input, target) observation at every signature depth.
    pub fn add_example(&mut self, input: &TokenSequence, target: &SemanticId) {
        debug_assert_eq!(target.len(), self.level_sizes.len());
        let max_items = self.signature_items.min(input.len());
        for items in 0..=max_items {
            let sig = self.signature(input, items);
            for level in 0..target.len() {
                let key = CtxKey {
                    sig: sig.clone(),
                    prefix: target.tokens()[..level].to_vec(),
                };
                let slot = self.counts.entry(key).or_default();
                *slot.token_counts.entry(target.tokens()[level]).or_insert(0) += 1;
                slot.total += 1;
            }
        }
    }

    pub fn add_examples(&mut self, examples: &[TrainingExample]) {
        for ex in examples {
            self.add_example(&ex.input, &ex.target);
        }
    }

    /// Text dump: a header line, then `sig|prefix|token|count` rows in
    /// sorted order.
    pub fn write_text(&self, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let io_err = |e| Error::io("<writer>", e);
        let sizes: Vec<String> = self.level_sizes.iter().map(|s| s.to_string()).collect();
        writeln!(
            w,
            "{}\t{}\t{}",
            self.smoothing,
            self.signature_items,
            sizes.join(" ")
        )
        .map_err(io_err)?;

        let mut rows: Vec<(&CtxKey, Vec<(u32, u64)>)> = self
            .counts
            .iter()
            .map(|(k, v)| {
                let mut tokens: Vec<(u32, u64)> =
                    v.token_counts.iter().map(|(&t, &c)| (t, c)).collect();
                tokens.sort_unstable();
                (k, tokens)
            })
            .collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let join = |v: &[u32]| {
            if v.is_empty() {
                "-".to_string()
            } else {
                v.iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        };
        for (key, tokens) in rows {
            for (token, count) in tokens {
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}",
                    join(&key.sig),
                    join(&key.prefix),
                    token,
                    count
                )
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn read_text(reader: impl Read, source: &str) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{source}: empty model file")))?
            .map_err(|e| Error::io(source, e))?;
        let fields: Vec<&str> = header.split('\t').collect();
        let [smoothing, sig_items, sizes] = fields[..] else {
            return Err(Error::Format(format!("{source}: bad model header")));
        };
        let smoothing: f64 = smoothing
            .parse()
            .map_err(|_| Error::Format(format!("{source}: bad smoothing")))?;
        let signature_items: usize = sig_items
            .parse()
            .map_err(|_| Error::Format(format!("{source}: bad signature size")))?;
        let level_sizes: Vec<usize> = sizes
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Format(format!("{source}: bad level size")))
            })
            .collect::<Result<_>>()?;

        let parse_tokens = |field: &str, what: &str| -> Result<Vec<u32>> {
            if field == "-" {
                return Ok(Vec::new());
            }
            field
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Format(format!("{source}: bad {what} '{t}'")))
                })
                .collect()
        };
        let mut model = Self::new(level_sizes, smoothing, signature_items);
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [sig, prefix, token, count] = fields[..] else {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: lineno + 2,
                    msg: "expected 4 tab-separated fields".to_string(),
                });
            };
            let key = CtxKey {
                sig: parse_tokens(sig, "signature token")?,
                prefix: parse_tokens(prefix, "prefix token")?,
            };
            let token: u32 = token
                .parse()
                .map_err(|_| Error::Format(format!("{source}: bad token")))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::Format(format!("{source}: bad count")))?;
            let slot = model.counts.entry(key).or_default();
            *slot.token_counts.entry(token).or_insert(0) += count;
            slot.total += count;
        }
        Ok(model)
    }
}

/// Fit exact conditional counts over a training set.
pub fn fit_count_model(
    examples: &[TrainingExample],
    level_sizes: Vec<usize>,
    smoothing: f64,
    signature_items: usize,
) -> CountTokenModel {
    let mut model = CountTokenModel::new(level_sizes, smoothing, signature_items);
    model.add_examples(examples);
    model
}

impl TokenModel for CountTokenModel {
    fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    fn next_token_distribution(&self, input: &TokenSequence, prefix: &[u32]) -> Vec<f64> {
        let vocab = self.level_sizes[prefix.len()];
        let max_items = self.signature_items.min(input.len());
        // longest signature with observations wins; depth 0 is the
        // unconditional fallback
        let mut chosen: Option<&LevelCounts> = None;
        for items in (0..=max_items).rev() {
            let key = CtxKey {
                sig: self.signature(input, items),
                prefix: prefix.to_vec(),
            };
            if let Some(counts) = self.counts.get(&key) {
                if counts.total > 0 {
                    chosen = Some(counts);
                    break;
                }
            }
        }
        let beta = self.smoothing;
        match chosen {
            Some(counts) => {
                let denom = counts.total as f64 + beta * vocab as f64;
                (0..vocab as u32)
                    .map(|t| {
                        let c = counts.token_counts.get(&t).copied().unwrap_or(0);
                        (c as f64 + beta) / denom
                    })
                    .collect()
            }
            // nothing observed for this prefix at any depth
            None => vec![1.0 / vocab as f64; vocab],
        }
    }
}

/// One decoded semantic ID with its exact model probability.
pub type ScoredSid = (SemanticId, f64);

/// Standard beam search over the digit levels. Returns up to `beam_width`
/// complete IDs with exact probabilities (products of conditionals), sorted
/// by descending probability with lexicographic tie-breaking. With a width
/// at least the size of the path space this equals exhaustive enumeration.
pub fn beam_search(
    model: &dyn TokenModel,
    input: &TokenSequence,
    beam_width: usize,
) -> Vec<ScoredSid> {
    assert!(beam_width >= 1);
    let num_digits = model.num_digits();
    let mut beams: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
    for level in 0..num_digits {
        let vocab = model.level_sizes()[level];
        let mut candidates: Vec<(Vec<u32>, f64)> =
            Vec::with_capacity(beams.len() * beam_width.min(vocab));
        for (digits, prob) in &beams {
            let dist = model.next_token_distribution(input, digits);
            debug_assert_eq!(dist.len(), vocab);
            // keeping only each parent's best `beam_width` children is
            // lossless: a child ranked below its siblings is dominated by
            // beam_width candidates already
            let mut scored: Vec<(u32, f64)> = dist
                .iter()
                .enumerate()
                .map(|(t, &p)| (t as u32, p))
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scored.truncate(beam_width);
            for (token, p) in scored {
                let mut next = Vec::with_capacity(level + 1);
                next.extend_from_slice(digits);
                next.push(token);
                candidates.push((next, prob * p));
            }
        }
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        candidates.truncate(beam_width);
        beams = candidates;
    }
    beams
        .into_iter()
        .map(|(digits, prob)| (SemanticId::new(digits), prob))
        .collect()
}

/// One ranked item with its aggregated score and its strongest decoded ID.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub item: ItemId,
    pub score: f64,
    pub top_sid: SemanticId,
}

/// Sum decoded ID probabilities per owning item; IDs absent from the
/// registry are invalid generations and dropped. Returns the top `k` items
/// by descending score, ties by item id.
pub fn aggregate_items(
    decoded: &[ScoredSid],
    registry: &SidRegistry,
    k: usize,
) -> Vec<(ItemId, f64)> {
    aggregate_detailed(decoded, registry, k)
        .into_iter()
        .map(|r| (r.item, r.score))
        .collect()
}

/// [`aggregate_items`] keeping each item's highest-probability decoded ID.
pub fn aggregate_detailed(
    decoded: &[ScoredSid],
    registry: &SidRegistry,
    k: usize,
) -> Vec<RankedItem> {
    let mut scores: HashMap<ItemId, (f64, &SemanticId, f64)> = HashMap::new();
    for (sid, prob) in decoded {
        if let Some(item) = registry.item_of(sid) {
            let slot = scores.entry(item).or_insert((0.0, sid, *prob));
            slot.0 += prob;
            if *prob > slot.2 {
                slot.1 = sid;
                slot.2 = *prob;
            }
        }
    }
    let mut ranked: Vec<RankedItem> = scores
        .into_iter()
        .map(|(item, (score, sid, _))| RankedItem {
            item,
            score,
            top_sid: sid.clone(),
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.item.cmp(&b.item)));
    ranked.truncate(k);
    ranked
}
