//! Item sequences to token sequences: context-matched semantic-ID selection
//! plus probabilistic augmentation over each item's alternative IDs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ReplacementDistribution, TokenizerMode};
use crate::context::ContextEncoder;
use crate::embed::FeatureTable;
use crate::error::Result;
use crate::ingest::{InteractionLog, Split};
use crate::quantize::{fuse, WhiteningTransform};
use crate::registry::SidRegistry;
use crate::seeds::mix_seed;
use crate::types::{InteractionSequence, ItemId, SemanticId};

/// One tokenized position with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedItem {
    pub item: ItemId,
    pub sid: SemanticId,
    /// Whether augmentation replaced the originally assigned ID.
    pub augmented: bool,
}

/// A tokenized item sequence; flattening yields `G x items` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    entries: Vec<TokenizedItem>,
    num_digits: usize,
}

impl TokenSequence {
    pub fn new(entries: Vec<TokenizedItem>, num_digits: usize) -> Self {
        debug_assert!(entries.iter().all(|e| e.sid.len() == num_digits));
        Self {
            entries,
            num_digits,
        }
    }

    pub fn entries(&self) -> &[TokenizedItem] {
        &self.entries
    }

    pub fn num_digits(&self) -> usize {
        self.num_digits
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn token_len(&self) -> usize {
        self.entries.len() * self.num_digits
    }

    /// Flattened token stream.
    pub fn tokens(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.token_len());
        for e in &self.entries {
            out.extend_from_slice(e.sid.tokens());
        }
        out
    }

    /// Recover the item sequence from provenance.
    pub fn items(&self) -> Vec<ItemId> {
        self.entries.iter().map(|e| e.item).collect()
    }

    /// The first `n` positions as their own sequence.
    pub fn prefix(&self, n: usize) -> TokenSequence {
        TokenSequence {
            entries: self.entries[..n].to_vec(),
            num_digits: self.num_digits,
        }
    }
}

/// Everything needed to map item positions to semantic IDs.
#[derive(Clone)]
pub struct Tokenizer<'a> {
    pub registry: &'a SidRegistry,
    pub encoder: &'a ContextEncoder,
    pub features: &'a FeatureTable,
    pub whitening: &'a WhiteningTransform,
    pub alpha: f32,
    pub mode: TokenizerMode,
}

impl Tokenizer<'_> {
    /// Tokenize positions `1..=len` of a sequence. Static mode uses the
    /// item's sole ID, multi-identifier mode its most frequent one, and
    /// personalized mode the ID whose centroid sits closest to the whitened
    /// fusion of the position's context and the item features.
    pub fn tokenize_sequence(
        &self,
        seq: &InteractionSequence,
        seq_idx: usize,
        len: usize,
    ) -> Result<TokenSequence> {
        let mut entries = Vec::with_capacity(len);
        for i in 1..=len {
            let item = seq.items[i - 1];
            let item_entries = self.registry.entries(item)?;
            let sid = match self.mode {
                TokenizerMode::Static => item_entries[0].sid.clone(),
                TokenizerMode::MultiIdentifier => self.registry.popular_sid(item)?.clone(),
                TokenizerMode::Personalized => {
                    if item_entries.len() == 1 {
                        item_entries[0].sid.clone()
                    } else {
                        let ctx = self.encoder.encode(seq, seq_idx, i, self.features)?;
                        let fused = fuse(&ctx, self.features.row(item), self.alpha);
                        let whitened = self.whitening.apply(&fused);
                        self.registry.assign_sid(item, &whitened)?.clone()
                    }
                }
            };
            entries.push(TokenizedItem {
                item,
                sid,
                augmented: false,
            });
        }
        Ok(TokenSequence::new(entries, self.registry.num_digits()))
    }
}

/// Independently replace each position's ID with probability `gamma`,
/// drawing the substitute from the item's other IDs (or all of them, for the
/// analysis variant). Single-ID items are never altered.
pub fn augment(
    tokseq: &TokenSequence,
    registry: &SidRegistry,
    gamma: f64,
    distribution: ReplacementDistribution,
    rng: &mut ChaCha8Rng,
) -> TokenSequence {
    let mut entries = Vec::with_capacity(tokseq.len());
    for e in tokseq.entries() {
        let all = registry
            .entries(e.item)
            .expect("tokenized items are in the registry");
        if all.len() <= 1 || rng.random::<f64>() >= gamma {
            entries.push(e.clone());
            continue;
        }
        let replacement = match distribution {
            ReplacementDistribution::UniformAll => {
                let pick = rng.random_range(0..all.len());
                all[pick].sid.clone()
            }
            ReplacementDistribution::UniformOthers => {
                let others: Vec<&SemanticId> = all
                    .iter()
                    .map(|entry| &entry.sid)
                    .filter(|sid| **sid != e.sid)
                    .collect();
                others[rng.random_range(0..others.len())].clone()
            }
            ReplacementDistribution::WeightedOthers => {
                let others: Vec<(&SemanticId, usize)> = all
                    .iter()
                    .filter(|entry| entry.sid != e.sid)
                    .map(|entry| (&entry.sid, entry.count()))
                    .collect();
                let total: usize = others.iter().map(|(_, c)| c).sum();
                let mut target = rng.random_range(0..total.max(1));
                let mut chosen = others[others.len() - 1].0;
                for (sid, c) in &others {
                    if target < *c {
                        chosen = sid;
                        break;
                    }
                    target -= c;
                }
                chosen.clone()
            }
        };
        let augmented = replacement != e.sid;
        entries.push(TokenizedItem {
            item: e.item,
            sid: replacement,
            augmented,
        });
    }
    TokenSequence::new(entries, tokseq.num_digits())
}

/// One next-ID prediction example.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    /// Source sequence index.
    pub seq: usize,
    /// Tokenized (and augmented) prefix `v_1 .. v_j`.
    pub input: TokenSequence,
    /// ID of `v_{j+1}` under its own context, subject to the same
    /// augmentation draw as the inputs.
    pub target: SemanticId,
    pub target_item: ItemId,
}

/// Sliding next-item examples over every train prefix of length >= 2. The
/// whole prefix is tokenized and augmented once per (sequence, epoch), so a
/// position serves as input and target consistently; per-sequence seeds keep
/// the result schedule-independent.
pub fn build_training_set(
    log: &InteractionLog,
    split: &Split,
    tokenizer: &Tokenizer<'_>,
    gamma: f64,
    distribution: ReplacementDistribution,
    seed: u64,
    epoch: u64,
) -> Result<Vec<TrainingExample>> {
    let per_seq: Result<Vec<Vec<TrainingExample>>> = split
        .entries
        .par_iter()
        .map(|entry| {
            if entry.train_len < 2 {
                return Ok(Vec::new());
            }
            let seq = &log.sequences[entry.seq];
            let tokenized = tokenizer.tokenize_sequence(seq, entry.seq, entry.train_len)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[entry.seq as u64, epoch]));
            let augmented = augment(
                &tokenized,
                tokenizer.registry,
                gamma,
                distribution,
                &mut rng,
            );
            let examples = (1..entry.train_len)
                .map(|j| TrainingExample {
                    seq: entry.seq,
                    input: augmented.prefix(j),
                    target: augmented.entries()[j].sid.clone(),
                    target_item: augmented.entries()[j].item,
                })
                .collect();
            Ok(examples)
        })
        .collect();
    Ok(per_seq?.into_iter().flatten().collect())
}

/// Parse a corpus dump back into token sequences, resolving each ID's item
/// through the registry inverse map.
pub fn read_token_corpus(
    reader: impl std::io::Read,
    source: &str,
    registry: &SidRegistry,
) -> Result<Vec<TokenSequence>> {
    use crate::error::Error;
    use std::io::BufRead as _;
    let g = registry.num_digits();
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let bad = |msg: String| Error::Parse {
            path: source.to_string(),
            line: lineno + 1,
            msg,
        };
        let mut tokens = Vec::new();
        for pair in line.split_whitespace() {
            let (level, tok) = pair
                .split_once(':')
                .ok_or_else(|| bad(format!("token '{pair}' is not 'level:index'")))?;
            let level: usize = level
                .parse()
                .map_err(|_| bad(format!("bad level in '{pair}'")))?;
            let tok: u32 = tok
                .parse()
                .map_err(|_| bad(format!("bad index in '{pair}'")))?;
            if level != tokens.len() % g {
                return Err(bad(format!(
                    "level {level} out of order; expected {}",
                    tokens.len() % g
                )));
            }
            tokens.push(tok);
        }
        if tokens.len() % g != 0 {
            return Err(bad(format!(
                "token count {} is not a multiple of {g}",
                tokens.len()
            )));
        }
        let entries: Vec<TokenizedItem> = tokens
            .chunks(g)
            .map(|chunk| {
                let sid = SemanticId::new(chunk.to_vec());
                let item = registry
                    .item_of(&sid)
                    .ok_or_else(|| bad(format!("semantic id {sid} is not in the registry")))?;
                Ok(TokenizedItem {
                    item,
                    sid,
                    augmented: false,
                })
            })
            .collect::<Result<_>>()?;
        out.push(TokenSequence::new(entries, g));
    }
    Ok(out)
}

/// Dump a tokenized corpus, one sequence per line, tokens as `level:index`
/// pairs.
pub fn write_token_corpus(sequences: &[TokenSequence], writer: impl std::io::Write) -> Result<()> {
    use std::io::Write as _;
    let mut w = std::io::BufWriter::new(writer);
    let io_err = |e| crate::error::Error::io("<writer>", e);
    for seq in sequences {
        let mut first = true;
        for e in seq.entries() {
            for (level, &tok) in e.sid.tokens().iter().enumerate() {
                if !first {
                    write!(w, " ").map_err(io_err)?;
                }
                write!(w, "{level}:{tok}").map_err(io_err)?;
                first = false;
            }
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::make_split;
    use crate::registry::RegistryEntry;
    use crate::types::{ItemVocab, Occurrence};

    /// Registry with `sids_per_item[i]` manually placed IDs for item i, with
    /// centroids spread on a line so assign_sid is easy to steer.
    fn manual_registry(
        sids_per_item: &[usize],
        dim: usize,
        counts: Option<&[Vec<usize>]>,
    ) -> SidRegistry {
        let mut raw = Vec::new();
        let mut owners = Vec::new();
        let mut next_seq = 0usize;
        for (item, &n) in sids_per_item.iter().enumerate() {
            for k in 0..n {
                let count = counts.map(|c| c[item][k]).unwrap_or(2 + k);
                let occurrences = (0..count)
                    .map(|_| {
                        next_seq += 1;
                        Occurrence::new(next_seq, 1)
                    })
                    .collect();
                let mut centroid = vec![0.0f32; dim];
                centroid[0] = (item * 10 + k * 2) as f32;
                raw.push(RegistryEntry {
                    sid: SemanticId::new(vec![item as u32, k as u32, 0]),
                    facet: k,
                    centroid,
                    occurrences,
                });
                owners.push(ItemId(item as u32));
            }
        }
        SidRegistry::build(raw, owners, 0.0).unwrap()
    }

    fn dummy_whitening(dim: usize) -> WhiteningTransform {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rows: Vec<Vec<f32>> = (0..dim * 4 + 4)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        WhiteningTransform::fit(&rows).unwrap()
    }

    fn toy_log(items_per_user: &[&[u32]]) -> InteractionLog {
        let mut vocab = ItemVocab::new();
        let max = items_per_user
            .iter()
            .flat_map(|s| s.iter())
            .max()
            .copied()
            .unwrap_or(0);
        for i in 0..=max {
            vocab.intern(&format!("i{i}"));
        }
        InteractionLog {
            sequences: items_per_user
                .iter()
                .enumerate()
                .map(|(u, items)| crate::types::InteractionSequence {
                    user: format!("u{u}"),
                    items: items.iter().map(|&i| ItemId(i)).collect(),
                    timestamps: None,
                })
                .collect(),
            vocab,
        }
    }

    #[test]
    fn static_mode_ignores_context() {
        let registry = manual_registry(&[1, 1], 2, None);
        let features = FeatureTable::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let encoder = ContextEncoder::builtin(0.8);
        let whitening = dummy_whitening(4);
        let tok = Tokenizer {
            registry: &registry,
            encoder: &encoder,
            features: &features,
            whitening: &whitening,
            alpha: 0.0,
            mode: TokenizerMode::Static,
        };
        let log = toy_log(&[&[0, 1, 0], &[1, 1, 0]]);
        let a = tok.tokenize_sequence(&log.sequences[0], 0, 3).unwrap();
        let b = tok.tokenize_sequence(&log.sequences[1], 1, 3).unwrap();
        // same item -> same ID regardless of surrounding context
        assert_eq!(a.entries()[0].sid, a.entries()[2].sid);
        assert_eq!(a.entries()[0].sid, b.entries()[2].sid);
        assert_eq!(a.entries()[1].sid, b.entries()[0].sid);
    }

    #[test]
    fn single_sid_items_keep_their_id_in_personalized_mode() {
        let registry = manual_registry(&[1], 2, None);
        let features = FeatureTable::new(2, vec![vec![1.0, 0.0]]).unwrap();
        let encoder = ContextEncoder::builtin(0.8);
        let whitening = dummy_whitening(4);
        let tok = Tokenizer {
            registry: &registry,
            encoder: &encoder,
            features: &features,
            whitening: &whitening,
            alpha: 0.5,
            mode: TokenizerMode::Personalized,
        };
        let log = toy_log(&[&[0, 0, 0]]);
        let out = tok.tokenize_sequence(&log.sequences[0], 0, 3).unwrap();
        for e in out.entries() {
            assert_eq!(e.sid.tokens(), &[0, 0, 0]);
        }
    }

    #[test]
    fn token_length_is_digits_times_items() {
        let registry = manual_registry(&[1, 1], 2, None);
        let features = FeatureTable::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let encoder = ContextEncoder::builtin(0.8);
        let whitening = dummy_whitening(4);
        let tok = Tokenizer {
            registry: &registry,
            encoder: &encoder,
            features: &features,
            whitening: &whitening,
            alpha: 0.5,
            mode: TokenizerMode::Static,
        };
        let log = toy_log(&[&[0, 1, 0, 1, 1]]);
        let out = tok.tokenize_sequence(&log.sequences[0], 0, 5).unwrap();
        assert_eq!(out.token_len(), 15);
        assert_eq!(out.tokens().len(), 15);
        // detokenization round-trip
        assert_eq!(out.items(), log.sequences[0].items);
    }

    fn multi_sid_sequence(n: usize) -> (SidRegistry, TokenSequence) {
        let registry = manual_registry(&[2], 2, None);
        let sid = registry.entries(ItemId(0)).unwrap()[0].sid.clone();
        let entries = vec![
            TokenizedItem {
                item: ItemId(0),
                sid,
                augmented: false,
            };
            n
        ];
        let seq = TokenSequence::new(entries, 3);
        (registry, seq)
    }

    #[test]
    fn gamma_zero_is_identity() {
        let (registry, seq) = multi_sid_sequence(500);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment(
            &seq,
            &registry,
            0.0,
            ReplacementDistribution::UniformOthers,
            &mut rng,
        );
        assert_eq!(out, seq);
    }

    #[test]
    fn single_sid_items_survive_gamma_one() {
        let registry = manual_registry(&[1, 1], 2, None);
        let entries: Vec<TokenizedItem> = (0..200)
            .map(|i| TokenizedItem {
                item: ItemId(i % 2),
                sid: registry.entries(ItemId(i % 2)).unwrap()[0].sid.clone(),
                augmented: false,
            })
            .collect();
        let seq = TokenSequence::new(entries, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = augment(
            &seq,
            &registry,
            1.0,
            ReplacementDistribution::UniformOthers,
            &mut rng,
        );
        assert_eq!(out, seq);
    }

    #[test]
    fn replacement_rate_matches_gamma() {
        let (registry, seq) = multi_sid_sequence(10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = augment(
            &seq,
            &registry,
            0.5,
            ReplacementDistribution::UniformOthers,
            &mut rng,
        );
        let replaced = out.entries().iter().filter(|e| e.augmented).count();
        let rate = replaced as f64 / 10_000.0;
        assert!((rate - 0.5).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn augmentation_preserves_items() {
        let registry = manual_registry(&[3, 2, 1], 2, None);
        let entries: Vec<TokenizedItem> = (0..300)
            .map(|i| {
                let item = ItemId(i % 3);
                TokenizedItem {
                    item,
                    sid: registry.entries(item).unwrap()[0].sid.clone(),
                    augmented: false,
                }
            })
            .collect();
        let seq = TokenSequence::new(entries, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = augment(
            &seq,
            &registry,
            0.7,
            ReplacementDistribution::UniformOthers,
            &mut rng,
        );
        assert_eq!(out.items(), seq.items());
        for e in out.entries() {
            assert_eq!(registry.item_of(&e.sid), Some(e.item));
        }
        assert!(out.entries().iter().any(|e| e.augmented));
    }

    #[test]
    fn weighted_replacement_follows_counts() {
        // item 0: three IDs with counts 2, 3, 5; replace from ID 0
        let registry = manual_registry(&[3], 2, Some(&[vec![2, 3, 5]]));
        let entries = vec![
            TokenizedItem {
                item: ItemId(0),
                sid: registry.entries(ItemId(0)).unwrap()[0].sid.clone(),
                augmented: false,
            };
            20_000
        ];
        let seq = TokenSequence::new(entries, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = augment(
            &seq,
            &registry,
            1.0,
            ReplacementDistribution::WeightedOthers,
            &mut rng,
        );
        let mut hits = [0usize; 3];
        for e in out.entries() {
            hits[e.sid.tokens()[1] as usize] += 1;
        }
        assert_eq!(hits[0], 0);
        // others have counts 3 and 5 -> 3/8 and 5/8
        let total = (hits[1] + hits[2]) as f64;
        assert!((hits[1] as f64 / total - 3.0 / 8.0).abs() < 0.02);
        assert!((hits[2] as f64 / total - 5.0 / 8.0).abs() < 0.02);
    }

    fn training_fixture<'a>(
        registry: &'a SidRegistry,
        features: &'a FeatureTable,
        encoder: &'a ContextEncoder,
        whitening: &'a WhiteningTransform,
    ) -> Tokenizer<'a> {
        Tokenizer {
            registry,
            encoder,
            features,
            whitening,
            alpha: 0.5,
            mode: TokenizerMode::MultiIdentifier,
        }
    }

    #[test]
    fn sliding_windows_cover_the_prefix() {
        let registry = manual_registry(&[1, 1, 1], 2, None);
        let features =
            FeatureTable::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let encoder = ContextEncoder::builtin(0.8);
        let whitening = dummy_whitening(4);
        let tok = training_fixture(&registry, &features, &encoder, &whitening);
        // train prefix [a, b, c] (sequence length 5)
        let log = toy_log(&[&[0, 1, 2, 0, 1]]);
        let split = make_split(&log);
        let examples = build_training_set(
            &log,
            &split,
            &tok,
            0.0,
            ReplacementDistribution::UniformOthers,
            7,
            0,
        )
        .unwrap();
        assert_eq!(examples.len(), 2); // [a]->b, [a,b]->c
        assert_eq!(examples[0].input.len(), 1);
        assert_eq!(examples[0].target_item, ItemId(1));
        assert_eq!(examples[1].input.len(), 2);
        assert_eq!(examples[1].target_item, ItemId(2));
    }

    #[test]
    fn same_seed_same_training_set() {
        let registry = manual_registry(&[2, 2], 2, None);
        let features = FeatureTable::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let encoder = ContextEncoder::builtin(0.8);
        let whitening = dummy_whitening(4);
        let tok = training_fixture(&registry, &features, &encoder, &whitening);
        let log = toy_log(&[&[0, 1, 0, 1, 0], &[1, 0, 1, 0, 1]]);
        let split = make_split(&log);
        let build = |seed| {
            build_training_set(
                &log,
                &split,
                &tok,
                0.4,
                ReplacementDistribution::UniformOthers,
                seed,
                0,
            )
            .unwrap()
        };
        let a = build(7);
        let b = build(7);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.input, y.input);
            assert_eq!(x.target, y.target);
        }
        let c = build(8);
        let differs = a
            .iter()
            .zip(&c)
            .any(|(x, y)| x.input != y.input || x.target != y.target);
        assert!(differs);
    }

    #[test]
    fn augmented_example_fraction_matches_closed_form() {
        // every item has 2 IDs; users share the same 3-item train prefix, so
        // example j has input length j and P(>=1 augmented) = 1 - (1-g)^j
        let registry = manual_registry(&[2, 2, 2], 2, None);
        let features =
            FeatureTable::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let encoder = ContextEncoder::builtin(0.8);
        let whitening = dummy_whitening(4);
        let tok = training_fixture(&registry, &features, &encoder, &whitening);

        let n_users = 4000;
        let seqs: Vec<Vec<u32>> = (0..n_users).map(|_| vec![0, 1, 2, 0, 1]).collect();
        let refs: Vec<&[u32]> = seqs.iter().map(|s| s.as_slice()).collect();
        let log = toy_log(&refs);
        let split = make_split(&log);
        let gamma = 0.3;
        let examples = build_training_set(
            &log,
            &split,
            &tok,
            gamma,
            ReplacementDistribution::UniformOthers,
            11,
            0,
        )
        .unwrap();

        for j in 1usize..=2 {
            let of_len: Vec<_> = examples.iter().filter(|e| e.input.len() == j).collect();
            assert_eq!(of_len.len(), n_users);
            let with_aug = of_len
                .iter()
                .filter(|e| e.input.entries().iter().any(|p| p.augmented))
                .count();
            let p = 1.0 - (1.0f64 - gamma).powi(j as i32);
            let rate = with_aug as f64 / n_users as f64;
            let sigma = (p * (1.0 - p) / n_users as f64).sqrt();
            assert!(
                (rate - p).abs() < 3.0 * sigma + 0.005,
                "len {j}: rate {rate} vs expected {p}"
            );
        }
    }

    #[test]
    fn build_is_schedule_independent() {
        let registry = manual_registry(&[2, 2], 2, None);
        let features = FeatureTable::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let encoder = ContextEncoder::builtin(0.8);
        let whitening = dummy_whitening(4);
        let tok = training_fixture(&registry, &features, &encoder, &whitening);
        let seqs: Vec<Vec<u32>> = (0..40).map(|u| vec![u % 2, 1, 0, 1, 0]).collect();
        let refs: Vec<&[u32]> = seqs.iter().map(|s| s.as_slice()).collect();
        let log = toy_log(&refs);
        let split = make_split(&log);

        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap();
        let run = |pool: &rayon::ThreadPool| {
            pool.install(|| {
                build_training_set(
                    &log,
                    &split,
                    &tok,
                    0.5,
                    ReplacementDistribution::UniformOthers,
                    13,
                    2,
                )
                .unwrap()
            })
        };
        let a = run(&pool1);
        let b = run(&pool8);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.input, y.input);
            assert_eq!(x.target, y.target);
        }
    }

    #[test]
    fn corpus_dump_uses_level_index_pairs() {
        let registry = manual_registry(&[1], 2, None);
        let sid = registry.entries(ItemId(0)).unwrap()[0].sid.clone();
        let seq = TokenSequence::new(
            vec![
                TokenizedItem {
                    item: ItemId(0),
                    sid: sid.clone(),
                    augmented: false,
                };
                2
            ],
            3,
        );
        let mut buf = Vec::new();
        write_token_corpus(std::slice::from_ref(&seq), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "0:0 1:0 2:0 0:0 1:0 2:0\n");

        let back = read_token_corpus(&buf[..], "test", &registry).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], seq);
    }

    #[test]
    fn corpus_parse_rejects_unknown_sids_and_bad_levels() {
        let registry = manual_registry(&[1], 2, None);
        assert!(read_token_corpus("0:5 1:5 2:5\n".as_bytes(), "t", &registry).is_err());
        assert!(read_token_corpus("1:0 0:0 2:0\n".as_bytes(), "t", &registry).is_err());
        assert!(read_token_corpus("0:0 1:0\n".as_bytes(), "t", &registry).is_err());
    }
}
