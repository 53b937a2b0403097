//! Log-log slope fits on per-x medians.

use crate::error::{HarnessError, Result};
use crate::results::quantile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for an exact fit.
    pub stderr: f64,
    pub points: usize,
}

/// Groups `(x, y)` by `x`, takes the median `y` of each group and fits
/// `ln y = a + b ln x` by least squares.
pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if let Some(&(x, y)) = pairs.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(HarnessError::Slope(format!("log-log fit needs positive values, got ({x}, {y})")));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].0;
        let j = sorted[i..].iter().position(|p| p.0 != x).map_or(sorted.len(), |k| i + k);
        let ys: Vec<f64> = sorted[i..j].iter().map(|p| p.1).collect();
        pts.push((x.ln(), quantile(&ys, 0.5).ln()));
        i = j;
    }
    if pts.len() < 3 {
        return Err(HarnessError::Slope(format!("need at least 3 distinct x values, got {}", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(SlopeFit { slope, intercept, stderr: (rss / (k - 2.0) / sxx).sqrt(), points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use spdp_core::RngStream;

    #[test]
    fn exact_power_law() {
        let pairs: Vec<(f64, f64)> = (8..14).map(|k| 2f64.powi(k)).map(|x| (x, x.powf(-0.5))).collect();
        let f = fit_slope(&pairs).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = (1..6).map(|x| (x as f64, 3.0)).collect();
        assert!(fit_slope(&flat).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = RngStream::new(4, 0).rng();
        let mut pairs = Vec::new();
        for k in 0..10 {
            let x = 2f64.powf(6.0 + 0.7 * k as f64);
            for _ in 0..5 {
                let eta: f64 = rng.random_range(-1.0..1.0) * 3f64.sqrt();
                pairs.push((x, x.powf(-0.5) * (1.0 + 0.05 * eta)));
            }
        }
        let f = fit_slope(&pairs).unwrap();
        assert!((f.slope + 0.5).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_slope(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
        assert!(fit_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_slope(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
    }
}
