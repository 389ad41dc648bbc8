//! The item <-> semantic-ID registry: duplicate merging, infrequent merging
//! under the relative threshold tau, frequency bookkeeping, and
//! nearest-centroid ID lookup.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use crate::error::{Error, Result};
use crate::ingest::InteractionLog;
use crate::kmeans::sq_dist;
use crate::types::{ItemId, Occurrence, SemanticId};

/// One surviving semantic ID of an item.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub sid: SemanticId,
    /// Facet index from condensation; merges keep the survivor's.
    pub facet: usize,
    /// Centroid in the whitened fused space.
    pub centroid: Vec<f32>,
    /// Training occurrences currently tokenized by this ID.
    pub occurrences: Vec<Occurrence>,
}

impl RegistryEntry {
    pub fn count(&self) -> usize {
        self.occurrences.len()
    }
}

/// Bidirectional item <-> semantic-ID map.
#[derive(Debug, Clone, PartialEq)]
pub struct SidRegistry {
    items: BTreeMap<ItemId, Vec<RegistryEntry>>,
    inverse: HashMap<SemanticId, ItemId>,
    num_digits: usize,
}

/// Collapse entries whose content digits coincide: the survivor keeps the
/// smallest conflict digit, absorbs occurrence lists, and moves its centroid
/// to the count-weighted mean of the merged ones.
pub fn merge_duplicates(mut entries: Vec<RegistryEntry>) -> Vec<RegistryEntry> {
    entries.sort_by(|a, b| a.sid.cmp(&b.sid));
    let mut merged: Vec<RegistryEntry> = Vec::with_capacity(entries.len());
    for entry in entries {
        match merged
            .iter_mut()
            .find(|m| m.sid.content_digits() == entry.sid.content_digits())
        {
            None => merged.push(entry),
            Some(survivor) => {
                let (na, nb) = (survivor.count() as f64, entry.count() as f64);
                let total = na + nb;
                for (s, &v) in survivor.centroid.iter_mut().zip(&entry.centroid) {
                    *s = ((*s as f64 * na + v as f64 * nb) / total) as f32;
                }
                survivor.occurrences.extend(entry.occurrences);
            }
        }
    }
    merged
}

/// Iteratively remove the lowest-frequency entry whose share of the item's
/// occurrences falls below `tau`, redirecting its occurrences to the nearest
/// surviving centroid. The last entry is never removed.
pub fn merge_infrequent(mut entries: Vec<RegistryEntry>, tau: f64) -> Vec<RegistryEntry> {
    entries.sort_by(|a, b| a.sid.cmp(&b.sid));
    let total: usize = entries.iter().map(|e| e.count()).sum();
    if total == 0 {
        return entries;
    }
    loop {
        if entries.len() <= 1 {
            return entries;
        }
        let victim_idx = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| (e.count() as f64) / (total as f64) < tau)
            .min_by(|(_, a), (_, b)| (a.count(), &a.sid).cmp(&(b.count(), &b.sid)))
            .map(|(i, _)| i);
        let Some(victim_idx) = victim_idx else {
            return entries;
        };
        let victim = entries.remove(victim_idx);
        let target_idx = entries
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                sq_dist(&victim.centroid, &a.centroid)
                    .total_cmp(&sq_dist(&victim.centroid, &b.centroid))
                    .then_with(|| a.sid.cmp(&b.sid))
            })
            .map(|(i, _)| i)
            .expect("entries non-empty");
        entries[target_idx].occurrences.extend(victim.occurrences);
    }
}

impl SidRegistry {
    /// Assemble the registry from quantized facets: group by item, merge
    /// duplicates, merge infrequent IDs, and index the inverse map.
    pub fn build(raw: Vec<RegistryEntry>, owners: Vec<ItemId>, tau: f64) -> Result<Self> {
        assert_eq!(raw.len(), owners.len());
        let num_digits = raw.first().map(|e| e.sid.len()).unwrap_or(0);
        let mut grouped: BTreeMap<ItemId, Vec<RegistryEntry>> = BTreeMap::new();
        for (entry, item) in raw.into_iter().zip(owners) {
            grouped.entry(item).or_default().push(entry);
        }
        let mut items = BTreeMap::new();
        for (item, entries) in grouped {
            let entries = merge_infrequent(merge_duplicates(entries), tau);
            items.insert(item, entries);
        }

        let mut inverse: HashMap<SemanticId, ItemId> = HashMap::new();
        for (&item, entries) in &items {
            for e in entries {
                if let Some(&other) = inverse.get(&e.sid) {
                    if other != item {
                        return Err(Error::SidCollision {
                            sid: e.sid.tokens().to_vec(),
                            a: other.0,
                            b: item.0,
                        });
                    }
                }
                inverse.insert(e.sid.clone(), item);
            }
        }
        Ok(Self {
            items,
            inverse,
            num_digits,
        })
    }

    pub fn num_digits(&self) -> usize {
        self.num_digits
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_sids(&self) -> usize {
        self.items.values().map(|e| e.len()).sum()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.contains_key(&item)
    }

    pub fn entries(&self, item: ItemId) -> Result<&[RegistryEntry]> {
        self.items
            .get(&item)
            .map(|e| e.as_slice())
            .ok_or(Error::ItemNotInRegistry(item.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &[RegistryEntry])> {
        self.items.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    /// The item owning a semantic ID, if any.
    pub fn item_of(&self, sid: &SemanticId) -> Option<ItemId> {
        self.inverse.get(sid).copied()
    }

    /// All semantic IDs of one item.
    pub fn sids(&self, item: ItemId) -> Result<Vec<&SemanticId>> {
        Ok(self.entries(item)?.iter().map(|e| &e.sid).collect())
    }

    /// The item's most frequent ID; ties pick the lexicographically smallest.
    pub fn popular_sid(&self, item: ItemId) -> Result<&SemanticId> {
        let entries = self.entries(item)?;
        let mut best = &entries[0];
        for e in &entries[1..] {
            if e.count() > best.count() {
                best = e;
            }
        }
        Ok(&best.sid)
    }

    /// The ID whose centroid is closest to the whitened fused vector; ties
    /// pick the lexicographically smallest ID.
    pub fn assign_sid(&self, item: ItemId, fused_whitened: &[f32]) -> Result<&SemanticId> {
        let entries = self.entries(item)?;
        let mut best = &entries[0];
        let mut best_d = sq_dist(fused_whitened, &entries[0].centroid);
        for e in &entries[1..] {
            let d = sq_dist(fused_whitened, &e.centroid);
            if d < best_d {
                best_d = d;
                best = e;
            }
        }
        Ok(&best.sid)
    }
}

/// Distribution of IDs per item and usage relative to a static tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SidStats {
    /// sid-count -> number of items holding that many IDs.
    pub histogram: BTreeMap<usize, usize>,
    pub total_sids: usize,
    pub num_items: usize,
    /// `total_sids / num_items`; a static tokenizer scores exactly 1.
    pub usage_ratio: f64,
}

pub fn sid_stats(registry: &SidRegistry) -> SidStats {
    let mut histogram = BTreeMap::new();
    for (_, entries) in registry.iter() {
        *histogram.entry(entries.len()).or_insert(0) += 1;
    }
    let total_sids = registry.num_sids();
    let num_items = registry.num_items();
    SidStats {
        histogram,
        total_sids,
        num_items,
        usage_ratio: total_sids as f64 / num_items.max(1) as f64,
    }
}

/// Member sequences grouped per (item, semantic ID), the export feeding
/// external preference summarization.
#[derive(Debug, Clone)]
pub struct SidGroups {
    pub groups: Vec<SidGroup>,
}

#[derive(Debug, Clone)]
pub struct SidGroup {
    pub item: ItemId,
    pub sid: SemanticId,
    pub occurrences: Vec<Occurrence>,
}

pub fn export_sid_groups(registry: &SidRegistry) -> SidGroups {
    let mut groups = Vec::new();
    for (item, entries) in registry.iter() {
        for e in entries {
            let mut occurrences = e.occurrences.clone();
            occurrences.sort();
            groups.push(SidGroup {
                item,
                sid: e.sid.clone(),
                occurrences,
            });
        }
    }
    SidGroups { groups }
}

impl SidGroups {
    /// Text export: one header per group, then one line per member sequence
    /// listing the raw item strings of its train prefix.
    pub fn write_text(&self, log: &InteractionLog, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let io_err = |e| Error::io("<writer>", e);
        for g in &self.groups {
            writeln!(
                w,
                "# item={} sid={} members={}",
                log.vocab.raw_of(g.item),
                g.sid,
                g.occurrences.len()
            )
            .map_err(io_err)?;
            for occ in &g.occurrences {
                let seq = &log.sequences[occ.seq];
                let items: Vec<&str> = seq.items[..occ.position]
                    .iter()
                    .map(|&it| log.vocab.raw_of(it))
                    .collect();
                writeln!(w, "{}\t{}\t{}", seq.user, occ.position, items.join(","))
                    .map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }
}

impl SidRegistry {
    /// The documented dump: `item<TAB>facet<TAB>token_1..token_G<TAB>freq`.
    pub fn write_dump(&self, log: &InteractionLog, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let io_err = |e| Error::io("<writer>", e);
        for (item, entries) in self.iter() {
            for e in entries {
                let tokens: Vec<String> = e.sid.tokens().iter().map(|t| t.to_string()).collect();
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}",
                    log.vocab.raw_of(item),
                    e.facet,
                    tokens.join(" "),
                    e.count()
                )
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    /// Full round-trip state, including centroids and occurrence membership.
    pub fn write_state(&self, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let io_err = |e| Error::io("<writer>", e);
        writeln!(w, "{}", self.num_digits).map_err(io_err)?;
        for (item, entries) in self.iter() {
            for e in entries {
                let tokens: Vec<String> = e.sid.tokens().iter().map(|t| t.to_string()).collect();
                let centroid: Vec<String> = e.centroid.iter().map(|v| v.to_string()).collect();
                let occs: Vec<String> = e
                    .occurrences
                    .iter()
                    .map(|o| format!("{}:{}", o.seq, o.position))
                    .collect();
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}",
                    item.0,
                    e.facet,
                    tokens.join(" "),
                    centroid.join(" "),
                    occs.join(",")
                )
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn read_state(reader: impl Read, source: &str) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let num_digits: usize = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{source}: empty registry state")))?
            .map_err(|e| Error::io(source, e))?
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("{source}: bad digit count header")))?;

        let mut items: BTreeMap<ItemId, Vec<RegistryEntry>> = BTreeMap::new();
        let mut inverse: HashMap<SemanticId, ItemId> = HashMap::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse {
                path: source.to_string(),
                line: lineno + 2,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [item, facet, tokens, centroid, occs] = fields[..] else {
                return Err(bad("expected 5 tab-separated fields"));
            };
            let item = ItemId(item.parse().map_err(|_| bad("bad item id"))?);
            let facet: usize = facet.parse().map_err(|_| bad("bad facet"))?;
            let tokens: Vec<u32> = tokens
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad token")))
                .collect::<Result<_>>()?;
            if tokens.len() != num_digits {
                return Err(bad("token count mismatch"));
            }
            let centroid: Vec<f32> = centroid
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad centroid float")))
                .collect::<Result<_>>()?;
            let occurrences: Vec<Occurrence> = if occs.is_empty() {
                Vec::new()
            } else {
                occs.split(',')
                    .map(|o| {
                        let (seq, pos) = o.split_once(':').ok_or_else(|| bad("bad occurrence"))?;
                        Ok(Occurrence::new(
                            seq.parse().map_err(|_| bad("bad occurrence seq"))?,
                            pos.parse().map_err(|_| bad("bad occurrence pos"))?,
                        ))
                    })
                    .collect::<Result<_>>()?
            };
            let sid = SemanticId::new(tokens);
            if let Some(&other) = inverse.get(&sid) {
                if other != item {
                    return Err(Error::SidCollision {
                        sid: sid.tokens().to_vec(),
                        a: other.0,
                        b: item.0,
                    });
                }
            }
            inverse.insert(sid.clone(), item);
            items.entry(item).or_default().push(RegistryEntry {
                sid,
                facet,
                centroid,
                occurrences,
            });
        }
        for entries in items.values_mut() {
            entries.sort_by(|a, b| a.sid.cmp(&b.sid));
        }
        Ok(Self {
            items,
            inverse,
            num_digits,
        })
    }
}
