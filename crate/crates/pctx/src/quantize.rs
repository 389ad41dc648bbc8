//! Fused-representation quantization: context/feature fusion, PCA with
//! whitening, residual k-means codebooks, and conflict-digit assignment.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, nearest, sq_dist};
use crate::seeds::mix_seed;
use crate::types::{ItemId, SemanticId};

const EIGENVALUE_FLOOR: f64 = 1e-10;
const CODEBOOK_MAGIC: &[u8] = b"PCTXRQ1";

/// `concat(alpha * ctx, (1 - alpha) * feat)`.
pub fn fuse(ctx: &[f32], feat: &[f32], alpha: f32) -> Vec<f32> {
    let mut out = Vec::with_capacity(ctx.len() + feat.len());
    out.extend(ctx.iter().map(|&v| alpha * v));
    out.extend(feat.iter().map(|&v| (1.0 - alpha) * v));
    out
}

/// PCA basis scaled by inverse singular spread: applied to its fitting set,
/// every retained coordinate has zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    mean: Vec<f64>,
    /// Row k holds the k-th principal direction divided by sqrt(eigenvalue).
    components: Vec<Vec<f64>>,
    input_dim: usize,
}

impl WhiteningTransform {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// Fit on `rows` by eigendecomposition of the (population) covariance.
    /// Components with eigenvalue below 1e-10 are dropped; each component's
    /// largest-magnitude coordinate is made positive so the basis sign is
    /// reproducible.
    pub fn fit(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.len() <= dim {
            return Err(Error::TooFewWhiteningRows {
                rows: rows.len(),
                dim,
            });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0f64; dim];
        for row in rows {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }

        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for row in rows {
            for i in 0..dim {
                let di = row[i] as f64 - mean[i];
                for j in i..dim {
                    let dj = row[j] as f64 - mean[j];
                    cov[(i, j)] += di * dj;
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[(i, j)] / n;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }

        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let mut components = Vec::new();
        for &idx in &order {
            let lambda = eig.eigenvalues[idx];
            if lambda < EIGENVALUE_FLOOR {
                continue;
            }
            let col = eig.eigenvectors.column(idx);
            let mut comp: Vec<f64> = col.iter().copied().collect();
            // sign convention: largest-magnitude coordinate positive
            let lead = comp
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(_, &v)| v)
                .unwrap_or(0.0);
            let scale = if lead < 0.0 { -1.0 } else { 1.0 } / lambda.sqrt();
            for v in comp.iter_mut() {
                *v *= scale;
            }
            components.push(comp);
        }
        if components.is_empty() {
            return Err(Error::DegenerateCovariance);
        }
        Ok(Self {
            mean,
            components,
            input_dim: dim,
        })
    }

    pub fn apply(&self, row: &[f32]) -> Vec<f32> {
        debug_assert_eq!(row.len(), self.input_dim);
        self.components
            .iter()
            .map(|comp| {
                comp.iter()
                    .zip(row)
                    .zip(&self.mean)
                    .map(|((&p, &x), &m)| p * (x as f64 - m))
                    .sum::<f64>() as f32
            })
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f32>]) -> Vec<Vec<f32>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }

    pub fn write_text(&self, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let io_err = |e| Error::io("<writer>", e);
        writeln!(w, "{} {}", self.input_dim, self.components.len()).map_err(io_err)?;
        let fmt_row = |row: &[f64]| {
            row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(w, "{}", fmt_row(&self.mean)).map_err(io_err)?;
        for comp in &self.components {
            writeln!(w, "{}", fmt_row(comp)).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_text(reader: impl Read, source: &str) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("{source}: missing {what}")))?
                .map_err(|e| Error::io(source, e))
        };
        let header = next_line("header")?;
        let parts: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Format(format!("{source}: bad header")))
            })
            .collect::<Result<_>>()?;
        let [input_dim, out_dim] = parts[..] else {
            return Err(Error::Format(format!("{source}: bad header")));
        };
        let parse_row = |line: String| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Format(format!("{source}: bad float '{t}'")))
                })
                .collect()
        };
        let mean = parse_row(next_line("mean")?)?;
        if mean.len() != input_dim {
            return Err(Error::Format(format!("{source}: mean length mismatch")));
        }
        let mut components = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            let comp = parse_row(next_line("component")?)?;
            if comp.len() != input_dim {
                return Err(Error::Format(format!(
                    "{source}: component length mismatch"
                )));
            }
            components.push(comp);
        }
        Ok(Self {
            mean,
            components,
            input_dim,
        })
    }
}

/// Stacked codebooks, one per content digit; level `g` is fit on the
/// residuals left by levels `0..g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCodebooks {
    levels: Vec<Vec<Vec<f32>>>,
}

impl ResidualCodebooks {
    /// Fit one codebook of at most `sizes[g]` centroids per level. Every
    /// level reuses the k-means++ core; its size shrinks to the number of
    /// distinct residual rows when those run out.
    pub fn fit(rows: &[Vec<f32>], sizes: &[usize], seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::TooFewRows {
                rows: 0,
                requested: sizes.first().copied().unwrap_or(1),
            });
        }
        let mut residuals: Vec<Vec<f32>> = rows.to_vec();
        let mut books = Vec::with_capacity(sizes.len());
        for (level, &size) in sizes.iter().enumerate() {
            let k = size.min(distinct_rows(&residuals)).max(1);
            let km = kmeans(&residuals, k, mix_seed(seed, &[level as u64]))?;
            for row in residuals.iter_mut() {
                let (c, _) = nearest(row, &km.centroids);
                for (v, &cv) in row.iter_mut().zip(&km.centroids[c]) {
                    *v -= cv;
                }
            }
            books.push(km.centroids);
        }
        Ok(Self { levels: books })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, g: usize) -> &[Vec<f32>] {
        &self.levels[g]
    }

    pub fn dim(&self) -> usize {
        self.levels
            .first()
            .and_then(|l| l.first())
            .map(|c| c.len())
            .unwrap_or(0)
    }

    /// Greedy nearest-centroid digits for one row; ties pick the lowest
    /// centroid index.
    pub fn encode_digits(&self, row: &[f32]) -> Vec<u32> {
        let mut residual = row.to_vec();
        let mut digits = Vec::with_capacity(self.levels.len());
        for book in &self.levels {
            let (c, _) = nearest(&residual, book);
            digits.push(c as u32);
            for (v, &cv) in residual.iter_mut().zip(&book[c]) {
                *v -= cv;
            }
        }
        digits
    }

    /// Squared reconstruction error after each level for one row.
    pub fn reconstruction_errors(&self, row: &[f32]) -> Vec<f64> {
        let mut residual = row.to_vec();
        let zero = vec![0.0f32; row.len()];
        let mut errs = Vec::with_capacity(self.levels.len());
        for book in &self.levels {
            let (c, _) = nearest(&residual, book);
            for (v, &cv) in residual.iter_mut().zip(&book[c]) {
                *v -= cv;
            }
            errs.push(sq_dist(&residual, &zero));
        }
        errs
    }

    pub fn write_binary(&self, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let io_err = |e| Error::io("<writer>", e);
        w.write_all(CODEBOOK_MAGIC).map_err(io_err)?;
        w.write_all(&(self.levels.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        for book in &self.levels {
            w.write_all(&(book.len() as u32).to_le_bytes())
                .map_err(io_err)?;
            let dim = book.first().map(|c| c.len()).unwrap_or(0);
            w.write_all(&(dim as u32).to_le_bytes()).map_err(io_err)?;
            for centroid in book {
                for v in centroid {
                    w.write_all(&v.to_le_bytes()).map_err(io_err)?;
                }
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn read_binary(bytes: &[u8], source: &str) -> Result<Self> {
        let fail = |msg: &str| Error::Format(format!("{source}: {msg}"));
        if !bytes.starts_with(CODEBOOK_MAGIC) {
            return Err(fail("missing PCTXRQ1 magic"));
        }
        let mut at = CODEBOOK_MAGIC.len();
        let take_u32 = |at: &mut usize| -> Result<u32> {
            let slice = bytes
                .get(*at..*at + 4)
                .ok_or_else(|| fail("truncated codebook file"))?;
            *at += 4;
            Ok(u32::from_le_bytes(slice.try_into().unwrap()))
        };
        let n_levels = take_u32(&mut at)? as usize;
        let mut levels = Vec::with_capacity(n_levels);
        for _ in 0..n_levels {
            let size = take_u32(&mut at)? as usize;
            let dim = take_u32(&mut at)? as usize;
            let mut book = Vec::with_capacity(size);
            for _ in 0..size {
                let mut centroid = Vec::with_capacity(dim);
                for _ in 0..dim {
                    let slice = bytes
                        .get(at..at + 4)
                        .ok_or_else(|| fail("truncated codebook file"))?;
                    at += 4;
                    centroid.push(f32::from_le_bytes(slice.try_into().unwrap()));
                }
                book.push(centroid);
            }
            levels.push(book);
        }
        if at != bytes.len() {
            return Err(fail("trailing bytes after codebooks"));
        }
        Ok(Self { levels })
    }
}

fn distinct_rows(rows: &[Vec<f32>]) -> usize {
    let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(rows.len());
    for row in rows {
        seen.insert(row.iter().map(|v| v.to_bits()).collect());
    }
    seen.len()
}

/// One quantized facet awaiting its conflict digit.
#[derive(Debug, Clone)]
pub struct QuantizedFacet {
    pub item: ItemId,
    pub facet: usize,
    pub digits: Vec<u32>,
}

/// Append the disambiguation digit: within each content-digit group,
/// distinct items receive digits 0, 1, 2, ... in (item, facet) order, and
/// repeated facets of one item share a digit (to be merged downstream).
pub fn assign_conflict_digit(
    facets: &[QuantizedFacet],
    alphabet: usize,
) -> Result<Vec<SemanticId>> {
    let mut groups: BTreeMap<&[u32], Vec<usize>> = BTreeMap::new();
    for (idx, f) in facets.iter().enumerate() {
        groups.entry(&f.digits).or_default().push(idx);
    }

    let mut out: Vec<Option<SemanticId>> = vec![None; facets.len()];
    for (prefix, mut members) in groups {
        members.sort_by_key(|&i| (facets[i].item, facets[i].facet));
        let mut digit_of_item: BTreeMap<ItemId, u32> = BTreeMap::new();
        for &idx in &members {
            let n = digit_of_item.len() as u32;
            let digit = *digit_of_item.entry(facets[idx].item).or_insert(n);
            if digit as usize >= alphabet {
                return Err(Error::ConflictOverflow {
                    prefix: prefix.to_vec(),
                    items: digit_of_item.len(),
                    alphabet,
                });
            }
            out[idx] = Some(SemanticId::from_parts(prefix, digit));
        }
    }
    Ok(out
        .into_iter()
        .map(|s| s.expect("every facet grouped"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0f32..2.0)).collect())
            .collect()
    }

    #[test]
    fn fuse_scales_and_concatenates() {
        assert_eq!(
            fuse(&[2.0, 0.0], &[0.0, 4.0], 0.5),
            vec![1.0, 0.0, 0.0, 2.0]
        );
        let zero_ctx = fuse(&[3.0, 5.0], &[1.0], 0.0);
        assert_eq!(&zero_ctx[..2], &[0.0, 0.0]);
        assert_eq!(zero_ctx[2], 1.0);
        let zero_feat = fuse(&[3.0], &[1.0, 7.0], 1.0);
        assert_eq!(zero_feat[0], 3.0);
        assert_eq!(&zero_feat[1..], &[0.0, 0.0]);
    }

    #[test]
    fn fuse_is_additive_in_each_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a: Vec<f32> = (0..3).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let b: Vec<f32> = (0..3).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let f: Vec<f32> = (0..2).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let sum: Vec<f32> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = fuse(&sum, &f, 0.3);
            let fa = fuse(&a, &f, 0.3);
            let fb = fuse(&b, &[0.0; 2], 0.3);
            for i in 0..3 {
                assert!((lhs[i] - (fa[i] + fb[i])).abs() < 1e-6);
            }
        }
    }

    fn covariance(rows: &[Vec<f32>]) -> Vec<Vec<f64>> {
        let n = rows.len() as f64;
        let dim = rows[0].len();
        let mut mean = vec![0.0f64; dim];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v as f64 / n;
            }
        }
        let mut cov = vec![vec![0.0f64; dim]; dim];
        for r in rows {
            for i in 0..dim {
                for j in 0..dim {
                    cov[i][j] += (r[i] as f64 - mean[i]) * (r[j] as f64 - mean[j]) / n;
                }
            }
        }
        cov
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn whitened_output_has_identity_covariance() {
        let rows = random_rows(400, 5, 3);
        let w = WhiteningTransform::fit(&rows).unwrap();
        let out = w.apply_all(&rows);
        let cov = covariance(&out);
        for i in 0..w.output_dim() {
            for j in 0..w.output_dim() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov[i][j] - expect).abs() < 1e-4,
                    "cov[{i}][{j}] = {}",
                    cov[i][j]
                );
            }
        }
    }

    #[test]
    fn already_white_rows_stay_white() {
        // approximately white input: standard uniform scaled to unit variance
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f32>> = (0..2000)
            .map(|_| {
                (0..3)
                    .map(|_| rng.random_range(-1.0f32..1.0) * (3.0f32).sqrt())
                    .collect()
            })
            .collect();
        let w = WhiteningTransform::fit(&rows).unwrap();
        assert_eq!(w.output_dim(), 3);
        let cov = covariance(&w.apply_all(&rows));
        for (i, row) in cov.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-4, "cov[{i}][{j}] = {v}");
            }
        }
    }

    #[test]
    fn collinear_rows_collapse_to_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f32>> = (0..50)
            .map(|_| {
                let t: f32 = rng.random_range(-1.0..1.0);
                vec![2.0 * t, -t]
            })
            .collect();
        let w = WhiteningTransform::fit(&rows).unwrap();
        assert_eq!(w.output_dim(), 1);
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let rows = vec![vec![1.0, 2.0]; 10];
        assert!(matches!(
            WhiteningTransform::fit(&rows),
            Err(Error::DegenerateCovariance)
        ));
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let rows = random_rows(4, 4, 0);
        assert!(matches!(
            WhiteningTransform::fit(&rows),
            Err(Error::TooFewWhiteningRows { .. })
        ));
    }

    #[test]
    fn whitening_text_round_trip_is_exact() {
        let rows = random_rows(100, 4, 9);
        let w = WhiteningTransform::fit(&rows).unwrap();
        let mut buf = Vec::new();
        w.write_text(&mut buf).unwrap();
        let back = WhiteningTransform::read_text(&buf[..], "test").unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn single_row_codebooks_are_trivial() {
        let rows = vec![vec![1.5, -3.0]];
        let books = ResidualCodebooks::fit(&rows, &[256, 256, 256], 0).unwrap();
        for g in 0..3 {
            assert_eq!(books.level(g).len(), 1);
        }
        let errs = books.reconstruction_errors(&rows[0]);
        for e in errs {
            assert!(e < 1e-12, "residual should be zero, got {e}");
        }
    }

    #[test]
    fn lattice_rows_reconstruct_exactly_at_level_one() {
        let lattice = [
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let mut rows = Vec::new();
        for (i, p) in lattice.iter().enumerate() {
            for _ in 0..(i + 2) {
                rows.push(p.clone());
            }
        }
        let books = ResidualCodebooks::fit(&rows, &[4, 4], 1).unwrap();
        for row in &rows {
            let errs = books.reconstruction_errors(row);
            assert!(errs[0] < 1e-12, "level-1 error {}", errs[0]);
            assert!(errs[1] < 1e-12);
        }
    }

    #[test]
    fn reconstruction_error_never_grows_with_depth() {
        for seed in 0..10 {
            let rows = random_rows(64, 4, seed);
            let books = ResidualCodebooks::fit(&rows, &[4, 4, 4, 4], seed).unwrap();
            let mut prev = f64::INFINITY;
            for level in 0..4 {
                let mean: f64 = rows
                    .iter()
                    .map(|r| books.reconstruction_errors(r)[level])
                    .sum::<f64>()
                    / rows.len() as f64;
                assert!(
                    mean <= prev + 1e-12,
                    "seed {seed} level {level}: {mean} > {prev}"
                );
                prev = mean;
            }
        }
    }

    #[test]
    fn encode_picks_the_exact_centroid() {
        let rows = vec![vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]];
        let books = ResidualCodebooks::fit(&rows, &[3], 2).unwrap();
        for row in &rows {
            let digits = books.encode_digits(row);
            assert_eq!(&books.level(0)[digits[0] as usize], row);
        }
        // repeated calls are identical
        assert_eq!(books.encode_digits(&rows[1]), books.encode_digits(&rows[1]));
    }

    /// Exhaustive minimum-reconstruction path over all digit combinations.
    fn exhaustive_best_path(row: &[f32], books: &ResidualCodebooks) -> (Vec<u32>, f64) {
        let mut best: Option<(Vec<u32>, f64)> = None;
        let sizes: Vec<usize> = (0..books.num_levels())
            .map(|g| books.level(g).len())
            .collect();
        let mut path = vec![0usize; sizes.len()];
        loop {
            let mut recon = vec![0.0f32; row.len()];
            for (g, &c) in path.iter().enumerate() {
                for (r, &v) in recon.iter_mut().zip(&books.level(g)[c]) {
                    *r += v;
                }
            }
            let err = sq_dist(row, &recon);
            let digits: Vec<u32> = path.iter().map(|&c| c as u32).collect();
            let better = match &best {
                None => true,
                Some((bd, be)) => err < *be || (err == *be && digits < *bd),
            };
            if better {
                best = Some((digits, err));
            }
            // odometer increment
            let mut g = sizes.len();
            loop {
                if g == 0 {
                    return best.expect("at least one path");
                }
                g -= 1;
                path[g] += 1;
                if path[g] < sizes[g] {
                    break;
                }
                path[g] = 0;
            }
        }
    }

    #[test]
    fn greedy_matches_exhaustive_when_level_one_agrees() {
        for seed in 0..30u64 {
            let rows = random_rows(8, 3, seed);
            let books = ResidualCodebooks::fit(&rows, &[2, 2], seed).unwrap();
            for row in &rows {
                let greedy = books.encode_digits(row);
                let (best, _) = exhaustive_best_path(row, &books);
                if greedy[0] == best[0] {
                    assert_eq!(greedy, best, "seed {seed} row {row:?}");
                }
            }
        }
    }

    #[test]
    fn codebook_binary_round_trip() {
        let rows = random_rows(40, 3, 4);
        let books = ResidualCodebooks::fit(&rows, &[8, 8, 8], 4).unwrap();
        let mut buf = Vec::new();
        books.write_binary(&mut buf).unwrap();
        assert!(buf.starts_with(b"PCTXRQ1"));
        let back = ResidualCodebooks::read_binary(&buf, "test").unwrap();
        assert_eq!(books, back);
    }

    fn facet(item: u32, facet: usize, digits: &[u32]) -> QuantizedFacet {
        QuantizedFacet {
            item: ItemId(item),
            facet,
            digits: digits.to_vec(),
        }
    }

    #[test]
    fn unique_prefixes_get_zero_conflict_digits() {
        let facets = vec![
            facet(0, 0, &[1, 2]),
            facet(1, 0, &[3, 4]),
            facet(2, 0, &[5, 6]),
        ];
        let sids = assign_conflict_digit(&facets, 256).unwrap();
        assert!(sids.iter().all(|s| s.conflict_digit() == 0));
    }

    #[test]
    fn colliding_items_get_digits_in_item_order() {
        let facets = vec![facet(7, 0, &[1, 2]), facet(3, 0, &[1, 2])];
        let sids = assign_conflict_digit(&facets, 256).unwrap();
        assert_eq!(sids[0].conflict_digit(), 1); // item 7 sorts after item 3
        assert_eq!(sids[1].conflict_digit(), 0);
    }

    #[test]
    fn same_item_twice_shares_the_conflict_digit() {
        let facets = vec![
            facet(5, 0, &[9, 9]),
            facet(5, 1, &[9, 9]),
            facet(6, 0, &[9, 9]),
        ];
        let sids = assign_conflict_digit(&facets, 256).unwrap();
        assert_eq!(sids[0].conflict_digit(), sids[1].conflict_digit());
        assert_eq!(sids[2].conflict_digit(), 1);
    }

    #[test]
    fn conflict_overflow_reports_the_prefix() {
        let facets: Vec<QuantizedFacet> = (0..5).map(|i| facet(i, 0, &[4, 2])).collect();
        let err = assign_conflict_digit(&facets, 4).unwrap_err();
        match err {
            Error::ConflictOverflow {
                prefix, alphabet, ..
            } => {
                assert_eq!(prefix, vec![4, 2]);
                assert_eq!(alphabet, 4);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
