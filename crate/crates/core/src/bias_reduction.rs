//! Subsampled bias-reduced gradient estimator.
//!
//! A random level `N ~ TGeom(M)` picks a batch `B` of size `2^(N+1)`, split
//! into halves `O` and `E`, plus a single index `I`. The private means of the
//! batch gradients are combined as
//!
//! ```text
//! G(x) = (G+(B) - (G-(O) + G-(E)) / 2) / p_N + G0(I)
//! ```
//!
//! Over the randomness of `N`, the differences telescope, so `E[G(x)]` equals
//! the expectation of the mechanism run on a batch of size `2^(M+1)`: the
//! estimator inherits the bias of the largest batch at the cost of one small
//! batch on average.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::loss::{batch_gradient, LossModel};
use crate::mean_estimation::{MeanMechanism, MechanismOutput};
use crate::noise::TGeom;
use crate::params::PrivacyParams;
use crate::rng::RngStream;

/// The batch randomness of one estimator call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchDraw {
    level: usize,
    /// `B` in shuffled order: `O` is the first half, `E` the second.
    batch: Vec<usize>,
    single: usize,
}

impl BatchDraw {
    pub fn new(n: usize, level: usize, batch: Vec<usize>, single: usize) -> Result<Self> {
        if level >= usize::BITS as usize - 1 || batch.len() != 1 << (level + 1) {
            return Err(invalid("batch", format!("need 2^(N+1) indices for N = {level}")));
        }
        if batch.iter().chain(std::iter::once(&single)).any(|&i| i >= n) {
            return Err(invalid("batch", format!("indices must be below n = {n}")));
        }
        let mut sorted = batch.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("batch", "indices must be distinct"));
        }
        Ok(Self { level, batch, single })
    }

    /// `N`.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn half_size(&self) -> usize {
        1 << self.level
    }

    pub fn batch(&self) -> &[usize] {
        &self.batch
    }

    pub fn odd(&self) -> &[usize] {
        &self.batch[..self.half_size()]
    }

    pub fn even(&self) -> &[usize] {
        &self.batch[self.half_size()..]
    }

    pub fn single(&self) -> usize {
        self.single
    }
}

/// Draws `N ~ TGeom(M)`, then the batch and single index for that level.
pub fn sample_batches<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<BatchDraw> {
    let level = TGeom::new(m)?.sample(rng);
    sample_batches_at_level(n, level, rng)
}

/// Uniform subset of size `2^(N+1)` by partial shuffle, then a uniform single index.
pub fn sample_batches_at_level<R: Rng + ?Sized>(n: usize, level: usize, rng: &mut R) -> Result<BatchDraw> {
    if n < 2 {
        return Err(invalid("n", "need at least two points"));
    }
    let max_level = n.ilog2() as usize - 1;
    if level > max_level {
        return Err(invalid("N", format!("level {level} exceeds floor(log2 n) - 1 = {max_level}")));
    }
    let size = 1usize << (level + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let (chosen, _) = idx.partial_shuffle(rng, size);
    let batch = chosen.to_vec();
    let single = rng.random_range(0..n);
    Ok(BatchDraw { level, batch, single })
}

/// Per-step privacy cost `(3 * 2^(N+1) + 1) / (16 n)` in units of the budget.
pub fn step_weight(level: usize, n: usize) -> f64 {
    (3.0 * (level as f64 + 1.0).exp2() + 1.0) / (16.0 * n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub draw: BatchDraw,
    /// `p_N`.
    pub p_level: f64,
    pub plus: MechanismOutput,
    pub odd: MechanismOutput,
    pub even: MechanismOutput,
    pub single: MechanismOutput,
    pub eps_consumed: f64,
    pub delta_consumed: f64,
}

impl GradientEstimate {
    /// Recombines the four mechanism outputs; equals `g` exactly.
    pub fn reconstruct(&self) -> Vec<f64> {
        combine(self.p_level, &self.plus.estimate, &self.odd.estimate, &self.even.estimate, &self.single.estimate)
    }
}

fn combine(p: f64, plus: &[f64], odd: &[f64], even: &[f64], single: &[f64]) -> Vec<f64> {
    let inv = 1.0 / p;
    (0..plus.len()).map(|j| inv * (plus[j] - 0.5 * (odd[j] + even[j])) + single[j]).collect()
}

/// One estimator call. `pp` is the estimator's own budget; each of the four
/// mechanism calls runs at `(eps/4, delta/4)`. Mechanism calls use substreams
/// 0..4 of `stream` in the order `B, O, E, I`.
#[allow(clippy::too_many_arguments)]
pub fn bias_reduced_gradient(
    x: &[f64],
    data: &Dataset,
    draw: &BatchDraw,
    pp: PrivacyParams,
    loss: &dyn LossModel,
    mechanism: &MeanMechanism,
    stream: &RngStream,
) -> Result<GradientEstimate> {
    ensure_finite(x, "iterate")?;
    let n = data.len();
    if n < 2 {
        return Err(invalid("n", "need at least two points"));
    }
    if x.len() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), actual: x.len() });
    }
    let tgeom = TGeom::for_dataset_size(n)?;
    if draw.level() > tgeom.m() || draw.batch().iter().chain([&draw.single()]).any(|&i| i >= n) {
        return Err(invalid("draw", "does not fit this dataset"));
    }
    let c = loss.constants();
    let (l, s) = (c.lipschitz, c.sparsity);
    let sub = pp.split(0.25, 0.25);
    let half = draw.half_size();

    let g_plus = batch_gradient(loss, data, x, draw.batch().iter().copied());
    let g_odd = batch_gradient(loss, data, x, draw.odd().iter().copied());
    let g_even = batch_gradient(loss, data, x, draw.even().iter().copied());
    let g_single = batch_gradient(loss, data, x, [draw.single()]);

    let plus = mechanism.apply(&g_plus, sub, 2 * half, l, s, &mut stream.substream(0).rng())?;
    let odd = mechanism.apply(&g_odd, sub, half, l, s, &mut stream.substream(1).rng())?;
    let even = mechanism.apply(&g_even, sub, half, l, s, &mut stream.substream(2).rng())?;
    let single = mechanism.apply(&g_single, sub, 1, l, s, &mut stream.substream(3).rng())?;

    let p_level = tgeom.p(draw.level());
    let g = combine(p_level, &plus.estimate, &odd.estimate, &even.estimate, &single.estimate);
    let w = step_weight(draw.level(), n);
    Ok(GradientEstimate {
        g,
        draw: draw.clone(),
        p_level,
        plus,
        odd,
        even,
        single,
        eps_consumed: w * pp.eps,
        delta_consumed: w * pp.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetBounds;
    use crate::loss::{full_gradient, LinearLoss};
    use crate::mean_estimation::{NoiseMode, ProjectionConfig};
    use crate::vector::SparseVector;

    fn line_data(n: usize, d: usize) -> Dataset {
        let pts =
            (0..n).map(|i| SparseVector::new(d, vec![(i % d, if i % 3 == 0 { -1.0 } else { 1.0 })]).unwrap()).collect();
        Dataset::new(pts, DatasetBounds { dim: d, sparsity: 1, norm_bound: 1.0 }).unwrap()
    }

    #[test]
    fn batch_sizes() {
        let mut rng = RngStream::new(0, 0).rng();
        let d = sample_batches_at_level(4, 0, &mut rng).unwrap();
        assert_eq!(d.batch().len(), 2);
        assert_eq!(d.odd().len(), 1);
        assert_eq!(d.even().len(), 1);
        assert!(sample_batches_at_level(4, 2, &mut rng).is_err());
        for _ in 0..100 {
            assert_eq!(sample_batches(2, 0, &mut rng).unwrap().level(), 0);
        }
        for _ in 0..100 {
            let d = sample_batches(37, 4, &mut rng).unwrap();
            let mut b = d.batch().to_vec();
            b.sort_unstable();
            b.dedup();
            assert_eq!(b.len(), 2 * d.half_size());
            assert!(b.iter().all(|&i| i < 37) && d.single() < 37);
        }
    }

    #[test]
    fn batch_draw_validation() {
        assert!(BatchDraw::new(4, 0, vec![0, 1], 3).is_ok());
        assert!(BatchDraw::new(4, 0, vec![0, 0], 3).is_err());
        assert!(BatchDraw::new(4, 0, vec![0, 1, 2], 3).is_err());
        assert!(BatchDraw::new(4, 0, vec![0, 4], 3).is_err());
        assert!(BatchDraw::new(4, 0, vec![0, 1], 4).is_err());
    }

    #[test]
    fn inclusion_frequency_matches_pmf() {
        let (n, draws) = (64usize, 100_000usize);
        let t = TGeom::for_dataset_size(n).unwrap();
        let expected_size: f64 = (0..=t.m()).map(|k| t.p(k) * (k as f64 + 1.0).exp2()).sum();
        let p = expected_size / n as f64;
        let mut counts = vec![0usize; n];
        let mut rng = RngStream::new(4, 0).rng();
        for _ in 0..draws {
            for &i in sample_batches(n, t.m(), &mut rng).unwrap().batch() {
                counts[i] += 1;
            }
        }
        // Each draw includes a fixed index with probability p, independently
        // across draws, so each count is Binomial(draws, p).
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let f = c as f64 / draws as f64;
            assert!((f - p).abs() <= 4.5 * se, "index {i}: {f} vs {p}");
        }
    }

    #[test]
    fn noiseless_estimate_is_the_single_gradient() {
        let data = line_data(16, 5);
        let loss = LinearLoss::new(5, 1, 1.0, 1.0);
        let x = vec![0.1; 5];
        let mut rng = RngStream::new(1, 0).rng();
        let pp = PrivacyParams::new(1.0, 1e-6).unwrap();
        for mech in [
            MeanMechanism::Exact,
            MeanMechanism::Projection(ProjectionConfig { noise: NoiseMode::Zero, ..Default::default() }),
        ] {
            for _ in 0..20 {
                let draw = sample_batches(16, 3, &mut rng).unwrap();
                let est = bias_reduced_gradient(&x, &data, &draw, pp, &loss, &mech, &RngStream::new(2, 2)).unwrap();
                let expect = data.point(draw.single()).to_dense();
                for (g, e) in est.g.iter().zip(&expect) {
                    assert!((g - e).abs() < 1e-12);
                }
                assert_eq!(est.reconstruct(), est.g);
            }
        }
    }

    #[test]
    fn consumed_budget_follows_the_step_formula() {
        let data = line_data(16, 5);
        let loss = LinearLoss::new(5, 1, 1.0, 1.0);
        let pp = PrivacyParams::new(0.5, 1e-6).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        for _ in 0..20 {
            let draw = sample_batches(16, 3, &mut rng).unwrap();
            let est = bias_reduced_gradient(
                &[0.0; 5],
                &data,
                &draw,
                pp,
                &loss,
                &MeanMechanism::Projection(ProjectionConfig::default()),
                &RngStream::new(5, 0),
            )
            .unwrap();
            let k = (3 * (1 << (draw.level() + 1)) + 1) as f64;
            assert!((est.eps_consumed - k * 0.5 / 256.0).abs() < 1e-15);
            assert!((est.delta_consumed - k * 1e-6 / 256.0).abs() < 1e-20);
            assert_eq!(est.reconstruct(), est.g);
        }
    }

    #[test]
    fn exact_enumeration_is_unbiased() {
        // n = 4, M = 1: enumerate N, the ordered batch and I.
        let data = line_data(4, 3);
        let loss = LinearLoss::new(3, 1, 1.0, 1.0);
        let x = [0.0; 3];
        let tg = TGeom::for_dataset_size(4).unwrap();
        let pp = PrivacyParams::new(1.0, 1e-6).unwrap();
        let mut mean = [0.0; 3];
        for level in 0..=1usize {
            let size = 1 << (level + 1);
            let perms = ordered_subsets(4, size);
            for b in &perms {
                for i in 0..4 {
                    let draw = BatchDraw::new(4, level, b.clone(), i).unwrap();
                    let est = bias_reduced_gradient(
                        &x,
                        &data,
                        &draw,
                        pp,
                        &loss,
                        &MeanMechanism::Exact,
                        &RngStream::new(0, 0),
                    )
                    .unwrap();
                    let w = tg.p(level) / perms.len() as f64 / 4.0;
                    for (m, g) in mean.iter_mut().zip(&est.g) {
                        *m += w * g;
                    }
                }
            }
        }
        let full = full_gradient(&loss, &data, &x);
        for j in 0..3 {
            assert!((mean[j] - full[j]).abs() < 1e-12);
        }
    }

    fn ordered_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for rest in ordered_subsets(n, k - 1) {
            for i in 0..n {
                if !rest.contains(&i) {
                    let mut v = rest.clone();
                    v.push(i);
                    out.push(v);
                }
            }
        }
        out
    }
}
