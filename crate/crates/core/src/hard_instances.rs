//! Adversarial dataset generators: sparse packings, packing-based datasets and
//! the block-diagonal and zero-padding embeddings.

use rand::Rng;

use crate::dataset::{Dataset, DatasetBounds};
use crate::error::{invalid, Error, Result};
use crate::selection::exp_mech::combinations;
use crate::vector::SparseVector;

/// Exhaustive enumeration limit for `C(d, s)`.
pub const ENUMERATION_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Packing {
    /// Points with exactly `s` entries equal to `1/sqrt(s)`.
    pub points: Vec<SparseVector>,
    pub min_pairwise_l2: f64,
    pub sparsity: usize,
    pub dim: usize,
    /// Whether every candidate support was examined.
    pub exhaustive: bool,
}

/// `ceil((d/s - 1/2)^{s/2})`.
pub fn packing_size_bound(s: usize, d: usize) -> f64 {
    (d as f64 / s as f64 - 0.5).powf(s as f64 / 2.0).ceil()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Size of the symmetric difference of two sorted index sets.
fn sym_diff(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    a.len() + b.len() - 2 * common
}

/// Greedy packing of supports whose pairwise symmetric difference exceeds
/// `s/2`. Enumerates supports in lexicographic order when there are at most
/// [`ENUMERATION_LIMIT`] of them; otherwise draws `max_samples` random supports.
pub fn greedy_sparse_packing<R: Rng + ?Sized>(
    s: usize,
    d: usize,
    cap: usize,
    max_samples: usize,
    rng: &mut R,
) -> Result<Packing> {
    if s == 0 || 2 * s > d {
        return Err(invalid("s", format!("need 1 <= s <= d/2, got s = {s}, d = {d}")));
    }
    if cap == 0 {
        return Err(invalid("cap", "must be positive"));
    }
    let mut kept: Vec<Vec<usize>> = Vec::new();
    let consider = |cand: Vec<usize>, kept: &mut Vec<Vec<usize>>| {
        if kept.iter().all(|k| 2 * sym_diff(k, &cand) > s) {
            kept.push(cand);
        }
        kept.len() >= cap
    };
    let exhaustive = binomial(d, s) <= ENUMERATION_LIMIT;
    if exhaustive {
        for cand in combinations(d, s) {
            if consider(cand, &mut kept) {
                break;
            }
        }
    } else {
        for _ in 0..max_samples {
            let mut cand = rand::seq::index::sample(rng, d, s).into_vec();
            cand.sort_unstable();
            if consider(cand, &mut kept) {
                break;
            }
        }
    }
    let v = 1.0 / (s as f64).sqrt();
    let points = kept
        .iter()
        .map(|sup| SparseVector::new(d, sup.iter().map(|&j| (j, v)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let min_pairwise_l2 = kept
        .iter()
        .enumerate()
        .flat_map(|(i, a)| kept[i + 1..].iter().map(move |b| sym_diff(a, b)))
        .min()
        .map_or(f64::INFINITY, |m| (m as f64 / s as f64).sqrt());
    Ok(Packing { points, min_pairwise_l2, sparsity: s, dim: d, exhaustive })
}

/// `n` copies of a uniformly chosen packing point. Returns the dataset and the
/// chosen index.
pub fn packing_hard_dataset<R: Rng + ?Sized>(p: &Packing, n: usize, rng: &mut R) -> Result<(Dataset, usize)> {
    if p.points.is_empty() {
        return Err(invalid("packing", "must be nonempty"));
    }
    let l = rng.random_range(0..p.points.len());
    let bounds = DatasetBounds { dim: p.dim, sparsity: p.sparsity, norm_bound: 1.0 };
    Ok((Dataset::new(vec![p.points[l].clone(); n], bounds)?, l))
}

/// Places `k` independent `n0 x t` blocks on the diagonal of an `n x d` data
/// matrix: block `b` occupies rows `[b n0, (b+1) n0)` and columns
/// `[b t, (b+1) t)`. Remaining rows are zero.
#[allow(clippy::too_many_arguments)]
pub fn block_diagonal_dataset<R, F>(
    mut block_sampler: F,
    n0: usize,
    t: usize,
    k: usize,
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<Dataset>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Vec<SparseVector>,
{
    if n0 == 0 || t == 0 || k == 0 {
        return Err(invalid("blocks", "n0, t and K must be positive"));
    }
    if k * n0 > n || k * t > d {
        return Err(invalid("K", format!("need K <= min(n/n0, d/t), got K = {k}")));
    }
    let mut rows = Vec::with_capacity(n);
    let mut sparsity = 1;
    let mut norm_bound: f64 = 0.0;
    for b in 0..k {
        let block = block_sampler(rng);
        if block.len() != n0 {
            return Err(Error::DimensionMismatch { expected: n0, actual: block.len() });
        }
        for row in block {
            if row.dim() != t {
                return Err(Error::DimensionMismatch { expected: t, actual: row.dim() });
            }
            sparsity = sparsity.max(row.nnz());
            norm_bound = norm_bound.max(row.norms().l2);
            rows.push(SparseVector::new(d, row.iter().map(|(j, v)| (b * t + j, v)).collect())?);
        }
    }
    rows.resize(n, SparseVector::zeros(d));
    let norm_bound = if norm_bound > 0.0 { norm_bound } else { 1.0 };
    Dataset::new(rows, DatasetBounds { dim: d, sparsity, norm_bound })
}

/// `(n0/n) [zbar_1 | ... | zbar_K | 0]`.
pub fn block_diagonal_mean(block_means: &[Vec<f64>], n0: usize, n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    let w = n0 as f64 / n as f64;
    let mut off = 0;
    for m in block_means {
        for (j, v) in m.iter().enumerate() {
            out[off + j] = w * v;
        }
        off += m.len();
    }
    out
}

/// Appends zero vectors up to size `n`.
pub fn zero_pad_dataset(original: &Dataset, n: usize) -> Result<Dataset> {
    if n < original.len() {
        return Err(invalid("n", format!("must be at least {}", original.len())));
    }
    let mut pts = original.points().to_vec();
    pts.resize(n, SparseVector::zeros(original.dim()));
    Dataset::new(pts, original.bounds())
}
