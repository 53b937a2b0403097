//! Laplace and Gaussian noise, the truncated geometric distribution, and
//! concentration bounds used as test predicates.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// One Laplace(0, scale) draw: a random sign times an exponential.
pub fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the log is finite.
    let e = -(1.0 - rng.random::<f64>()).ln();
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

pub fn laplace_vector<R: Rng + ?Sized>(scale: f64, d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("scale", format!("must be finite and positive, got {scale}")));
    }
    Ok((0..d).map(|_| laplace(scale, rng)).collect())
}

pub fn gaussian_vector<R: Rng + ?Sized>(sigma: f64, d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("sigma", format!("must be finite and positive, got {sigma}")));
    }
    Ok((0..d).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Level `c * scale * ln(d / beta)` that `||xi||_inf` of a Laplace vector stays
/// below with probability at least `1 - beta` (for a suitable absolute `c`).
pub fn laplace_linf_bound(scale: f64, d: usize, beta: f64, c: f64) -> f64 {
    c * scale * (d as f64 / beta).ln()
}

/// Level `c * sigma * (sqrt(d) + sqrt(ln(1/beta)))` for `||xi||_2` of a Gaussian vector.
pub fn gaussian_l2_bound(sigma: f64, d: usize, beta: f64, c: f64) -> f64 {
    c * sigma * ((d as f64).sqrt() + (1.0 / beta).ln().sqrt())
}

/// Truncated geometric distribution on `{0, ..., M}` with `p_k = C_M / 2^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TGeom {
    m: usize,
    pmf: Vec<f64>,
}

/// Largest supported truncation; keeps `2^(M+1)` exact in an f64.
pub const TGEOM_MAX_M: usize = 62;

impl TGeom {
    pub fn new(m: usize) -> Result<Self> {
        if m > TGEOM_MAX_M {
            return Err(invalid("M", format!("must be at most {TGEOM_MAX_M}, got {m}")));
        }
        let pmf = (0..=m).map(|k| pmf_value(m, k)).collect();
        Ok(Self { m, pmf })
    }

    /// `M = floor(log2 n) - 1`, the truncation used for a dataset of size `n >= 2`.
    pub fn for_dataset_size(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "need at least two points"));
        }
        Self::new(n.ilog2() as usize - 1)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn p(&self, k: usize) -> f64 {
        self.pmf[k]
    }

    /// `C_M = 1 / (2 (1 - 2^-(M+1)))`.
    pub fn normalizer(&self) -> f64 {
        1.0 / (2.0 * (1.0 - (-(self.m as f64 + 1.0)).exp2()))
    }

    /// `P[N <= k] = (1 - 2^-(k+1)) / (1 - 2^-(M+1))`.
    pub fn cdf(&self, k: usize) -> f64 {
        if k >= self.m {
            return 1.0;
        }
        (1.0 - (-(k as f64 + 1.0)).exp2()) / (1.0 - (-(self.m as f64 + 1.0)).exp2())
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let scaled = u * (1.0 - (-(self.m as f64 + 1.0)).exp2());
        // Smallest k with 1 - 2^-(k+1) > scaled.
        let guess = (-(1.0 - scaled).log2()).floor();
        let mut k = if guess.is_finite() && guess > 0.0 { (guess as usize).min(self.m) } else { 0 };
        while k > 0 && self.cdf(k - 1) > u {
            k -= 1;
        }
        while k < self.m && self.cdf(k) <= u {
            k += 1;
        }
        k
    }
}

fn pmf_value(m: usize, k: usize) -> f64 {
    // 2^(M-k) / (2^(M+1) - 1)
    ((m - k) as f64).exp2() / ((m as f64 + 1.0).exp2() - 1.0)
}

pub fn tgeom_pmf(m: usize, k: usize) -> Result<f64> {
    if k > m {
        return Err(invalid("k", format!("outside support 0..={m}")));
    }
    if m > TGEOM_MAX_M {
        return Err(invalid("M", format!("must be at most {TGEOM_MAX_M}")));
    }
    Ok(pmf_value(m, k))
}

pub fn tgeom_sample<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<usize> {
    Ok(TGeom::new(m)?.sample(rng))
}
