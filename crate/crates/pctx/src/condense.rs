//! Per-item condensation of context representations: the interaction-aware
//! centroid budget and k-means++ clustering of each item's context rows.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use crate::config::AllocationParams;
use crate::embed::ContextTable;
use crate::error::{Error, Result};
use crate::ingest::{InteractionLog, Split};
use crate::kmeans::{kmeans, KMeans};
use crate::seeds::mix_seed;
use crate::types::{ItemId, Occurrence};

/// Target centroid count per item, after the practical adjustment.
#[derive(Debug, Clone)]
pub struct CentroidAllocation {
    per_item: BTreeMap<ItemId, ItemAllocation>,
}

#[derive(Debug, Clone, Copy)]
pub struct ItemAllocation {
    /// Interaction-volume group index, 0-based.
    pub group: usize,
    /// Group target before the adjustment.
    pub group_target: usize,
    /// Final centroid count; 1 when the item has fewer rows than the group
    /// target.
    pub target: usize,
}

impl CentroidAllocation {
    pub fn get(&self, item: ItemId) -> Option<ItemAllocation> {
        self.per_item.get(&item).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, ItemAllocation)> + '_ {
        self.per_item.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.per_item.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_item.is_empty()
    }
}

/// Normalized Gamma(K, 1) density evaluated at the integer support points
/// `1..=groups`.
fn group_weights(groups: usize, shape: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=groups)
        .map(|t| (t as f64).powf(shape - 1.0) * (-(t as f64)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Assign each item a centroid budget: items sorted ascending by occurrence
/// count are partitioned into `groups` groups sized by the Gamma weights, and
/// group `t` receives `c_start + t * delta` centroids. Ties never straddle a
/// group boundary, so equal counts always receive equal budgets.
pub fn allocate_centroids(
    occurrence_counts: &BTreeMap<ItemId, usize>,
    params: &AllocationParams,
) -> CentroidAllocation {
    let mut sorted: Vec<(ItemId, usize)> =
        occurrence_counts.iter().map(|(&k, &v)| (k, v)).collect();
    sorted.sort_by_key(|&(item, count)| (count, item));

    let n = sorted.len();
    let weights = group_weights(params.groups, params.gamma_shape);
    let mut boundaries = Vec::with_capacity(params.groups);
    let mut cum = 0.0;
    for w in &weights {
        cum += w;
        boundaries.push(((n as f64) * cum).round() as usize);
    }
    if let Some(last) = boundaries.last_mut() {
        *last = n;
    }
    // extend each boundary to the end of any run of equal counts it splits
    let mut prev = 0usize;
    for b in boundaries.iter_mut() {
        let mut end = (*b).max(prev).min(n);
        while end > 0 && end < n && sorted[end].1 == sorted[end - 1].1 {
            end += 1;
        }
        *b = end;
        prev = end;
    }

    let mut per_item = BTreeMap::new();
    let mut start = 0usize;
    for (group, &end) in boundaries.iter().enumerate() {
        let group_target = params.c_start + group * params.delta;
        for &(item, count) in &sorted[start..end] {
            let target = if count < group_target {
                1
            } else {
                group_target
            };
            per_item.insert(
                item,
                ItemAllocation {
                    group,
                    group_target,
                    target,
                },
            );
        }
        start = end;
    }
    CentroidAllocation { per_item }
}

/// One item's condensed context representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemCentroids {
    pub item: ItemId,
    pub centroids: Vec<Vec<f32>>,
    /// Training occurrences of the item, in (sequence, position) order.
    pub occurrences: Vec<Occurrence>,
    /// Centroid index per occurrence, parallel to `occurrences`.
    pub assignment: Vec<usize>,
    pub member_counts: Vec<usize>,
}

impl ItemCentroids {
    pub fn num_centroids(&self) -> usize {
        self.centroids.len()
    }
}

/// Cluster one item's context rows into `c` centroids.
pub fn cluster_item(
    item: ItemId,
    rows: &[Vec<f32>],
    occurrences: Vec<Occurrence>,
    c: usize,
    seed: u64,
) -> Result<ItemCentroids> {
    debug_assert_eq!(rows.len(), occurrences.len());
    let KMeans {
        centroids,
        assignment,
        ..
    } = kmeans(rows, c, seed)?;
    let mut member_counts = vec![0usize; centroids.len()];
    for &a in &assignment {
        member_counts[a] += 1;
    }
    Ok(ItemCentroids {
        item,
        centroids,
        occurrences,
        assignment,
        member_counts,
    })
}

/// Context rows of every training occurrence, grouped by interacted item in
/// (sequence, position) order.
pub fn group_rows_by_item(
    contexts: &ContextTable,
    log: &InteractionLog,
    split: &Split,
) -> BTreeMap<ItemId, (Vec<Vec<f32>>, Vec<Occurrence>)> {
    let mut grouped: BTreeMap<ItemId, (Vec<Vec<f32>>, Vec<Occurrence>)> = BTreeMap::new();
    for entry in &split.entries {
        let seq = &log.sequences[entry.seq];
        for pos in 1..=entry.train_len {
            let occ = Occurrence::new(entry.seq, pos);
            let item = seq.items[pos - 1];
            let slot = grouped.entry(item).or_default();
            slot.0.push(contexts.row(occ).to_vec());
            slot.1.push(occ);
        }
    }
    grouped
}

/// Condense every item's context rows. Per-item seeds make the result
/// independent of scheduling; items without training occurrences are
/// excluded and reported via the returned count.
pub fn condense_all(
    contexts: &ContextTable,
    log: &InteractionLog,
    split: &Split,
    alloc: &CentroidAllocation,
    global_seed: u64,
) -> Result<BTreeMap<ItemId, ItemCentroids>> {
    let grouped = group_rows_by_item(contexts, log, split);
    let missing = log.num_items() - grouped.len();
    if missing > 0 {
        warn!("{missing} items have no training occurrence and receive no centroids");
    }

    let per_item: Result<Vec<(ItemId, ItemCentroids)>> = grouped
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(item, (rows, occurrences))| {
            let target = alloc
                .get(item)
                .ok_or_else(|| Error::Format(format!("allocation is missing item {item}")))?
                .target;
            let seed = mix_seed(global_seed, &[item.0 as u64]);
            let ic = cluster_item(item, &rows, occurrences, target, seed)?;
            Ok((item, ic))
        })
        .collect();
    Ok(per_item?.into_iter().collect())
}

/// Text dump of condensed centroids:
/// `item<TAB>centroid_idx<TAB>member_count<TAB>f_1 .. f_d`.
pub fn write_centroids(
    condensed: &BTreeMap<ItemId, ItemCentroids>,
    log: &InteractionLog,
    writer: impl std::io::Write,
) -> Result<()> {
    use std::io::Write as _;
    let mut w = std::io::BufWriter::new(writer);
    let io_err = |e| Error::io("<writer>", e);
    for (item, ic) in condensed {
        for (idx, centroid) in ic.centroids.iter().enumerate() {
            let values: Vec<String> = centroid.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                log.vocab.raw_of(*item),
                idx,
                ic.member_counts[idx],
                values.join(" ")
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(groups: usize, shape: f64, c_start: usize, delta: usize) -> AllocationParams {
        AllocationParams {
            groups,
            gamma_shape: shape,
            c_start,
            delta,
        }
    }

    fn counts_of(v: &[usize]) -> BTreeMap<ItemId, usize> {
        v.iter()
            .enumerate()
            .map(|(i, &c)| (ItemId(i as u32), c))
            .collect()
    }

    #[test]
    fn single_group_gives_everyone_c_start() {
        let counts = counts_of(&[10, 20, 30]);
        let alloc = allocate_centroids(&counts, &params(1, 2.0, 3, 1));
        for (_, a) in alloc.iter() {
            assert_eq!(a.group, 0);
            assert_eq!(a.target, 3);
        }
    }

    #[test]
    fn scarce_items_fall_back_to_one_centroid() {
        // count 1 in the top group would get target 3; adjusted to 1
        let counts = counts_of(&[1]);
        let alloc = allocate_centroids(&counts, &params(1, 2.0, 3, 1));
        let a = alloc.get(ItemId(0)).unwrap();
        assert_eq!(a.group_target, 3);
        assert_eq!(a.target, 1);
    }

    #[test]
    fn gamma_proportions_match_density_oracle() {
        // 300 items, distinct counts; T=3, K=2, C_start=1, delta=1.
        let counts = counts_of(&(1..=300).collect::<Vec<_>>());
        let alloc = allocate_centroids(&counts, &params(3, 2.0, 1, 1));

        // oracle: normalized x^(K-1) e^(-x) at x = 1, 2, 3
        let dens = [
            1.0f64 * (-1.0f64).exp(),
            2.0 * (-2.0f64).exp(),
            3.0 * (-3.0f64).exp(),
        ];
        let total: f64 = dens.iter().sum();
        let b1 = (300.0 * dens[0] / total).round() as usize;
        let b2 = (300.0 * (dens[0] + dens[1]) / total).round() as usize;
        let expected = [b1, b2 - b1, 300 - b2];
        assert_eq!(expected, [140, 103, 57]); // frozen from the oracle

        let mut sizes = [0usize; 3];
        for (_, a) in alloc.iter() {
            sizes[a.group] += 1;
        }
        assert_eq!(sizes, expected);

        // targets ascend with count
        for (item, a) in alloc.iter() {
            let expected_target = a.group + 1; // c_start 1, delta 1
            assert_eq!(a.group_target, expected_target, "item {item}");
        }
    }

    #[test]
    fn allocation_is_monotone_in_count_even_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..200);
            let counts: BTreeMap<ItemId, usize> = (0..n)
                .map(|i| (ItemId(i as u32), rng.random_range(1..20usize)))
                .collect();
            let alloc = allocate_centroids(&counts, &params(4, 1.5, 1, 2));
            let items: Vec<_> = alloc.iter().collect();
            for (a_item, a) in &items {
                for (b_item, b) in &items {
                    let (ca, cb) = (counts[a_item], counts[b_item]);
                    if ca <= cb {
                        assert!(
                            a.group_target <= b.group_target,
                            "count {ca} -> {} but count {cb} -> {}",
                            a.group_target,
                            b.group_target
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn two_separated_pairs_find_the_pair_means() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.2, 0.0],
            vec![10.0, 10.0],
            vec![10.2, 10.0],
        ];
        let occs: Vec<Occurrence> = (0..4).map(|i| Occurrence::new(i, 1)).collect();
        let got = cluster_item(ItemId(0), &rows, occs, 2, 5).unwrap();

        // oracle: enumerate every 2-partition of 4 points, keep minimum SSE
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1u32..15 {
            let (mut sse, mut groups) = (0.0, [Vec::new(), Vec::new()]);
            for (i, row) in rows.iter().enumerate() {
                groups[(mask >> i & 1) as usize].push(row.clone());
            }
            if groups[0].is_empty() || groups[1].is_empty() {
                continue;
            }
            for g in &groups {
                let dim = g[0].len();
                let mean: Vec<f64> = (0..dim)
                    .map(|d| g.iter().map(|r| r[d] as f64).sum::<f64>() / g.len() as f64)
                    .collect();
                for r in g {
                    sse += r
                        .iter()
                        .zip(&mean)
                        .map(|(&x, &m)| (x as f64 - m).powi(2))
                        .sum::<f64>();
                }
            }
            if sse < best.0 {
                best = (sse, mask);
            }
        }
        assert_eq!(best.1 & 0b11, (best.1 >> 2) ^ 0b11 & 0b11); // pairs split 2/2

        let got_sse: f64 = rows
            .iter()
            .zip(&got.assignment)
            .map(|(r, &a)| crate::kmeans::sq_dist(r, &got.centroids[a]))
            .sum();
        assert!(
            (got_sse - best.0).abs() < 1e-9,
            "kmeans SSE {got_sse} vs oracle {}",
            best.0
        );

        let mut means: Vec<Vec<f32>> = got.centroids.clone();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((means[0][0] - 0.1).abs() < 1e-6);
        assert!((means[1][0] - 10.1).abs() < 1e-6);
    }

    #[test]
    fn rows_equal_centroid_count_keeps_rows() {
        let rows = vec![vec![0.0], vec![4.0], vec![9.0]];
        let occs: Vec<Occurrence> = (0..3).map(|i| Occurrence::new(i, 1)).collect();
        let got = cluster_item(ItemId(0), &rows, occs, 3, 1).unwrap();
        let mut c: Vec<f32> = got.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f32::total_cmp);
        assert_eq!(c, vec![0.0, 4.0, 9.0]);
        assert_eq!(got.member_counts, vec![1, 1, 1]);
    }

    #[test]
    fn requesting_more_centroids_than_rows_fails() {
        let rows = vec![vec![0.0]];
        let occs = vec![Occurrence::new(0, 1)];
        assert!(cluster_item(ItemId(0), &rows, occs, 2, 1).is_err());
    }

    fn toy_pipeline_inputs(seed: u64) -> (InteractionLog, Split, ContextTable, CentroidAllocation) {
        use crate::context::ContextEncoder;
        use crate::embed::FeatureTable;
        use crate::ingest::make_split;
        use crate::types::{InteractionSequence, ItemVocab};

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_items = 12;
        let mut vocab = ItemVocab::new();
        for i in 0..n_items {
            vocab.intern(&format!("i{i}"));
        }
        let sequences: Vec<InteractionSequence> = (0..25)
            .map(|u| InteractionSequence {
                user: format!("u{u}"),
                items: (0..9)
                    .map(|_| ItemId(rng.random_range(0..n_items)))
                    .collect(),
                timestamps: None,
            })
            .collect();
        let log = InteractionLog { sequences, vocab };
        let split = make_split(&log);
        let rows: Vec<Vec<f32>> = (0..n_items)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        let features = FeatureTable::new(4, rows).unwrap();
        let contexts = ContextEncoder::builtin(0.8)
            .encode_all(&log, &split, &features)
            .unwrap();
        let counts: BTreeMap<ItemId, usize> = group_rows_by_item(&contexts, &log, &split)
            .into_iter()
            .map(|(item, (rows, _))| (item, rows.len()))
            .collect();
        let alloc = allocate_centroids(&counts, &AllocationParams::default());
        (log, split, contexts, alloc)
    }

    #[test]
    fn member_counts_cover_all_training_occurrences() {
        let (log, split, contexts, alloc) = toy_pipeline_inputs(2);
        let condensed = condense_all(&contexts, &log, &split, &alloc, 7).unwrap();
        let total: usize = condensed
            .values()
            .map(|ic| ic.member_counts.iter().sum::<usize>())
            .sum();
        let expected: usize = split.entries.iter().map(|e| e.train_len).sum();
        assert_eq!(total, expected);
        for ic in condensed.values() {
            assert_eq!(ic.assignment.len(), ic.occurrences.len());
            assert_eq!(ic.num_centroids(), alloc.get(ic.item).unwrap().target);
        }
    }

    #[test]
    fn condense_all_is_schedule_independent() {
        let (log, split, contexts, alloc) = toy_pipeline_inputs(3);
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = pool1.install(|| condense_all(&contexts, &log, &split, &alloc, 7).unwrap());
        let b = pool4.install(|| condense_all(&contexts, &log, &split, &alloc, 7).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn single_occurrence_items_keep_their_context_row() {
        use crate::ingest::make_split;
        use crate::types::{InteractionSequence, ItemVocab};

        // one user, items all distinct: every item has exactly one occurrence
        let mut vocab = ItemVocab::new();
        for i in 0..6 {
            vocab.intern(&format!("i{i}"));
        }
        let log = InteractionLog {
            sequences: vec![InteractionSequence {
                user: "u".into(),
                items: (0..6).map(ItemId).collect(),
                timestamps: None,
            }],
            vocab,
        };
        let split = make_split(&log);
        let rows: Vec<Vec<Vec<f32>>> = vec![(0..4).map(|p| vec![p as f32, 1.0]).collect()];
        let contexts = ContextTable::new(2, rows);
        let counts: BTreeMap<ItemId, usize> = (0..4).map(|i| (ItemId(i), 1usize)).collect();
        let alloc = allocate_centroids(&counts, &AllocationParams::default());

        let condensed = condense_all(&contexts, &log, &split, &alloc, 1).unwrap();
        assert_eq!(condensed.len(), 4); // items 4, 5 have no training occurrence
        for (item, ic) in &condensed {
            assert_eq!(ic.num_centroids(), 1);
            assert_eq!(ic.centroids[0], vec![item.0 as f32, 1.0]);
        }
    }
}
