//! Embedding tables and their file codec.
//!
//! Feature tables are keyed by item, context tables by `(user, position)`
//! occurrence. Both share one self-describing format: a `N D` header line
//! followed by `key<TAB>f_1 .. f_D` rows, or an equivalent little-endian
//! binary variant behind the `PCTXEMB1` magic.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{InteractionLog, Split};
use crate::types::{parse_occurrence_key, ItemVocab, Occurrence};

const BINARY_MAGIC: &[u8; 8] = b"PCTXEMB1";

/// Parsed embedding file before keys are resolved against a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEmbeddings {
    pub dim: usize,
    pub entries: Vec<(String, Vec<f32>)>,
}

/// Dense per-item embedding rows, indexed by `ItemId`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    rows: Vec<Vec<f32>>,
}

impl FeatureTable {
    pub fn new(dim: usize, rows: Vec<Vec<f32>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::RowLengthMismatch {
                    key: format!("item {i}"),
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    key: format!("item {i}"),
                });
            }
        }
        Ok(Self { dim, rows })
    }

    /// Resolve raw item keys against the vocabulary. Every vocabulary item
    /// must receive a row and every key must be known.
    pub fn from_raw(raw: &RawEmbeddings, vocab: &ItemVocab) -> Result<Self> {
        let mut rows: Vec<Option<Vec<f32>>> = vec![None; vocab.len()];
        for (key, values) in &raw.entries {
            let id = vocab
                .id_of(key)
                .ok_or_else(|| Error::UnknownItem(key.clone()))?;
            rows[id.index()] = Some(values.clone());
        }
        for (idx, row) in rows.iter().enumerate() {
            if row.is_none() {
                return Err(Error::Format(format!(
                    "feature table has no row for item '{}'",
                    vocab.raw_of(crate::types::ItemId(idx as u32))
                )));
            }
        }
        Ok(Self {
            dim: raw.dim,
            rows: rows.into_iter().map(|r| r.expect("checked")).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, item: crate::types::ItemId) -> &[f32] {
        &self.rows[item.index()]
    }

    pub fn rows(&self) -> &[Vec<f32>] {
        &self.rows
    }

    pub fn to_raw(&self, vocab: &ItemVocab) -> RawEmbeddings {
        RawEmbeddings {
            dim: self.dim,
            entries: self
                .rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    (
                        vocab.raw_of(crate::types::ItemId(i as u32)).to_string(),
                        row.clone(),
                    )
                })
                .collect(),
        }
    }
}

/// Per-occurrence context rows covering every training position:
/// `rows[seq][pos - 1]` for 1-based `pos` up to the sequence's train length.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTable {
    dim: usize,
    rows: Vec<Vec<Vec<f32>>>,
}

impl ContextTable {
    pub fn new(dim: usize, rows: Vec<Vec<Vec<f32>>>) -> Self {
        Self { dim, rows }
    }

    /// Resolve `user:position` keys against the log. Every training
    /// occurrence (positions within train prefixes) must be covered; rows
    /// for other positions are ignored.
    pub fn from_raw(raw: &RawEmbeddings, log: &InteractionLog, split: &Split) -> Result<Self> {
        let user_to_seq: HashMap<&str, usize> = log
            .sequences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.user.as_str(), i))
            .collect();
        let mut train_len = vec![0usize; log.sequences.len()];
        for e in &split.entries {
            train_len[e.seq] = e.train_len;
        }

        let mut rows: Vec<Vec<Option<Vec<f32>>>> =
            train_len.iter().map(|&n| vec![None; n]).collect();
        for (key, values) in &raw.entries {
            let (user, position) = parse_occurrence_key(key)?;
            let Some(&seq) = user_to_seq.get(user) else {
                continue;
            };
            if position <= train_len[seq] {
                rows[seq][position - 1] = Some(values.clone());
            }
        }
        for (seq, seq_rows) in rows.iter().enumerate() {
            for (pos0, row) in seq_rows.iter().enumerate() {
                if row.is_none() {
                    return Err(Error::MissingOccurrence {
                        user: log.sequences[seq].user.clone(),
                        position: pos0 + 1,
                    });
                }
            }
        }
        Ok(Self {
            dim: raw.dim,
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(|x| x.expect("checked")).collect())
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, occ: Occurrence) -> &[f32] {
        &self.rows[occ.seq][occ.position - 1]
    }

    pub fn get(&self, occ: Occurrence) -> Option<&[f32]> {
        self.rows
            .get(occ.seq)
            .and_then(|r| r.get(occ.position.checked_sub(1)?))
            .map(|v| v.as_slice())
    }

    /// Number of stored occurrence rows.
    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_raw(&self, log: &InteractionLog) -> RawEmbeddings {
        let mut entries = Vec::with_capacity(self.len());
        for (seq, seq_rows) in self.rows.iter().enumerate() {
            for (pos0, row) in seq_rows.iter().enumerate() {
                entries.push((
                    format!("{}:{}", log.sequences[seq].user, pos0 + 1),
                    row.clone(),
                ));
            }
        }
        RawEmbeddings {
            dim: self.dim,
            entries,
        }
    }
}

/// Load an embedding file, auto-detecting the binary variant by its magic.
pub fn load_raw_embeddings(path: impl AsRef<Path>) -> Result<RawEmbeddings> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(&name, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_binary(&bytes, &name)
    } else {
        read_text(&bytes[..], &name)
    }
}

/// Parse the text format from any reader; `source` names it in errors.
pub fn read_text(reader: impl Read, source: &str) -> Result<RawEmbeddings> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: 1,
            msg: "missing 'N D' header".to_string(),
        })?
        .map_err(|e| Error::io(source, e))?;
    let mut parts = header.split_whitespace();
    let (n, dim): (usize, usize) = match (parts.next(), parts.next(), parts.next()) {
        (Some(n), Some(d), None) => {
            let n = n.parse().map_err(|_| Error::Parse {
                path: source.to_string(),
                line: 1,
                msg: format!("count '{n}' is not an integer"),
            })?;
            let d = d.parse().map_err(|_| Error::Parse {
                path: source.to_string(),
                line: 1,
                msg: format!("dim '{d}' is not an integer"),
            })?;
            (n, d)
        }
        _ => {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 1,
                msg: format!("header must be 'N D', got '{header}'"),
            })
        }
    };

    let mut entries = Vec::with_capacity(n);
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: lineno + 2,
            msg: "expected 'key<TAB>values'".to_string(),
        })?;
        let mut values = Vec::with_capacity(dim);
        for tok in rest.split_whitespace() {
            let v: f32 = tok.parse().map_err(|_| Error::Parse {
                path: source.to_string(),
                line: lineno + 2,
                msg: format!("'{tok}' is not a float"),
            })?;
            values.push(v);
        }
        if values.len() != dim {
            return Err(Error::RowLengthMismatch {
                key: key.to_string(),
                expected: dim,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                key: key.to_string(),
            });
        }
        entries.push((key.to_string(), values));
    }
    if entries.len() != n {
        return Err(Error::Format(format!(
            "{source}: header declares {n} rows but file holds {}",
            entries.len()
        )));
    }
    check_unique_keys(&entries, source)?;
    Ok(RawEmbeddings { dim, entries })
}

fn check_unique_keys(entries: &[(String, Vec<f32>)], source: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(entries.len());
    for (key, _) in entries {
        if !seen.insert(key.as_str()) {
            return Err(Error::Format(format!("{source}: duplicate key '{key}'")));
        }
    }
    Ok(())
}

/// Serialize to the text format. Floats use shortest round-trip formatting.
pub fn write_text(raw: &RawEmbeddings, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let io_err = |e| Error::io("<writer>", e);
    writeln!(w, "{} {}", raw.entries.len(), raw.dim).map_err(io_err)?;
    for (key, values) in &raw.entries {
        write!(w, "{key}").map_err(io_err)?;
        for (i, v) in values.iter().enumerate() {
            let sep = if i == 0 { '\t' } else { ' ' };
            write!(w, "{sep}{v}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_binary(bytes: &[u8], source: &str) -> Result<RawEmbeddings> {
    let fail = |msg: &str| Error::Format(format!("{source}: {msg}"));
    let mut at = BINARY_MAGIC.len();
    let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
        let slice = bytes
            .get(*at..*at + n)
            .ok_or_else(|| fail("truncated binary embedding file"))?;
        *at += n;
        Ok(slice)
    };
    let n = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let key_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let key = std::str::from_utf8(take(&mut at, key_len)?)
            .map_err(|_| fail("key is not valid UTF-8"))?
            .to_string();
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            values.push(f32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { key });
        }
        entries.push((key, values));
    }
    if at != bytes.len() {
        return Err(fail("trailing bytes after declared entries"));
    }
    check_unique_keys(&entries, source)?;
    Ok(RawEmbeddings { dim, entries })
}

/// Serialize to the little-endian binary variant.
pub fn write_binary(raw: &RawEmbeddings, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let io_err = |e| Error::io("<writer>", e);
    w.write_all(BINARY_MAGIC).map_err(io_err)?;
    w.write_all(&(raw.entries.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(raw.dim as u32).to_le_bytes())
        .map_err(io_err)?;
    for (key, values) in &raw.entries {
        w.write_all(&(key.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(key.as_bytes()).map_err(io_err)?;
        for v in values {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}
