//! Confidence boosting: repeat the randomly stopped optimizer at a reduced
//! budget and pick a run by noisy score, with a random stopping rule.

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::loss::{empirical_risk, full_gradient, LossModel};
use crate::mean_estimation::NoiseMode;
use crate::noise::laplace;
use crate::params::{FeasibleSet, PrivacyParams};
use crate::rng::RngStream;
use crate::sgd::{run_bias_reduced_sgd, Mode, SgdConfig};
use crate::vector::norm2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostConfig {
    /// Probability of stopping after each run.
    pub gamma: f64,
    /// Maximum number of runs, `ceil(ln(2/delta) / gamma)`.
    pub k: usize,
    /// Budget of each inner run: `(eps/12, (delta/(4K))^2)`.
    pub inner: PrivacyParams,
    /// Laplace scale of the score noise.
    pub lambda_score: f64,
    pub score_noise: NoiseMode,
}

impl BoostConfig {
    /// Defaults `gamma = min(1/2, 3 beta / 4)`.
    pub fn new(pp: PrivacyParams, beta: f64, mode: Mode, loss: &dyn LossModel, n: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid("beta", format!("must be in (0, 1), got {beta}")));
        }
        Self::with_gamma(pp, (0.75 * beta).min(0.5), mode, loss, n)
    }

    pub fn with_gamma(pp: PrivacyParams, gamma: f64, mode: Mode, loss: &dyn LossModel, n: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid("gamma", format!("must be in (0, 1], got {gamma}")));
        }
        if !(pp.delta > 0.0) {
            return Err(invalid("delta", "boosting needs delta > 0"));
        }
        if pp.delta > pp.eps / 10.0 {
            return Err(invalid("delta", format!("need delta <= eps/10, got delta = {}", pp.delta)));
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let k = ((2.0 / pp.delta).ln() / gamma).ceil().max(1.0) as usize;
        let inner_delta = (pp.delta / (4.0 * k as f64)).powi(2);
        let inner = PrivacyParams::new(pp.eps / 12.0, inner_delta)?;
        let c = loss.constants();
        let lambda_score = match mode {
            Mode::Convex => 12.0 * c.range()? / (n as f64 * pp.eps),
            Mode::Nonconvex => 24.0 * c.lipschitz / (n as f64 * pp.eps),
        };
        Ok(Self { gamma, k, inner, lambda_score, score_noise: NoiseMode::Calibrated })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostRun {
    /// Risk (convex) or gradient norm (nonconvex) of the run's output.
    pub score: f64,
    pub noisy_score: f64,
    pub stopping_time: usize,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostOutcome {
    pub output: Vec<f64>,
    /// Index into `runs` of the returned model.
    pub selected: usize,
    /// One entry per executed run; failed runs carry the error.
    pub runs: Vec<std::result::Result<BoostRun, Error>>,
    /// False when all `K` runs executed without the coin stopping.
    pub stopped_by_coin: bool,
}

/// Coins come from substream 0 and are drawn upfront; run `k` uses substream
/// `(1, k)` and its score noise substream `(2, k)`.
#[allow(clippy::too_many_arguments)]
pub fn boost(
    data: &Dataset,
    x0: &[f64],
    eta: f64,
    loss: &dyn LossModel,
    set: &FeasibleSet,
    mode: Mode,
    cfg: &BoostConfig,
    sgd: &SgdConfig,
    stream: &RngStream,
) -> Result<BoostOutcome> {
    let mut coins = stream.substream(0).rng();
    let stop_at = (0..cfg.k).find(|_| coins.random::<f64>() < cfg.gamma);
    let runs_to_do = stop_at.map_or(cfg.k, |i| i + 1);
    let sgd = SgdConfig { record_trace: false, ..*sgd };

    let mut runs = Vec::with_capacity(runs_to_do);
    for k in 0..runs_to_do {
        let run = run_bias_reduced_sgd(data, x0, cfg.inner, eta, loss, set, mode, &stream.path(&[1, k as u64]), &sgd)
            .map(|tr| {
                let score = match mode {
                    Mode::Convex => empirical_risk(loss, data, &tr.output),
                    Mode::Nonconvex => norm2(&full_gradient(loss, data, &tr.output)),
                };
                let noise = match cfg.score_noise {
                    NoiseMode::Calibrated => laplace(cfg.lambda_score, &mut stream.path(&[2, k as u64]).rng()),
                    NoiseMode::Zero => 0.0,
                };
                BoostRun { score, noisy_score: score + noise, stopping_time: tr.stopping_time, output: tr.output }
            });
        if let Err(e) = &run {
            log::warn!("boosting run {k} failed: {e}");
        }
        runs.push(run);
    }

    let mut best: Option<(usize, f64)> = None;
    for (k, r) in runs.iter().enumerate() {
        if let Ok(r) = r {
            if best.is_none_or(|(_, s)| r.noisy_score < s) {
                best = Some((k, r.noisy_score));
            }
        }
    }
    let (selected, _) = best.ok_or_else(|| Error::Consistency("every boosting run failed".into()))?;
    let output = runs[selected].as_ref().map(|r| r.output.clone()).expect("selected run succeeded");
    Ok(BoostOutcome { output, selected, runs, stopped_by_coin: stop_at.is_some() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetBounds;
    use crate::loss::LinearLoss;
    use crate::vector::SparseVector;

    fn toy() -> (Dataset, LinearLoss) {
        let pts = (0..64).map(|i| SparseVector::new(8, vec![(i % 8, 1.0)]).unwrap()).collect();
        let d = Dataset::new(pts, DatasetBounds { dim: 8, sparsity: 1, norm_bound: 1.0 }).unwrap();
        (d, LinearLoss::new(8, 1, 1.0, 1.0))
    }

    #[test]
    fn run_cap_formula() {
        let (d, loss) = toy();
        let pp = PrivacyParams::new(1.0, 0.02).unwrap();
        let cfg = BoostConfig::with_gamma(pp, 0.5, Mode::Convex, &loss, d.len()).unwrap();
        assert_eq!(cfg.k, 10);
        assert!((cfg.inner.eps - 1.0 / 12.0).abs() < 1e-15);
        assert!((cfg.inner.delta - (0.02f64 / 40.0).powi(2)).abs() < 1e-20);
        assert!((cfg.lambda_score - 12.0 * 2.0 / 64.0).abs() < 1e-15);
        let nc = BoostConfig::with_gamma(pp, 0.5, Mode::Nonconvex, &loss, d.len()).unwrap();
        assert!((nc.lambda_score - 24.0 / 64.0).abs() < 1e-15);
        let beta = BoostConfig::new(pp, 0.1, Mode::Convex, &loss, 64).unwrap();
        assert!((beta.gamma - 0.075).abs() < 1e-15);
        assert!(BoostConfig::new(PrivacyParams::new(0.1, 0.02).unwrap(), 0.1, Mode::Convex, &loss, 64).is_err());
    }

    #[test]
    fn certain_coin_runs_once() {
        let (d, loss) = toy();
        let pp = PrivacyParams::new(1.0, 0.01).unwrap();
        let cfg = BoostConfig::with_gamma(pp, 1.0, Mode::Convex, &loss, d.len()).unwrap();
        let set = FeasibleSet::l2_ball(1.0).unwrap();
        let out =
            boost(&d, &[0.0; 8], 0.1, &loss, &set, Mode::Convex, &cfg, &SgdConfig::default(), &RngStream::new(1, 0))
                .unwrap();
        assert_eq!(out.runs.len(), 1);
        assert_eq!(out.selected, 0);
        assert!(out.stopped_by_coin);
    }

    #[test]
    fn exact_scores_pick_the_best_run() {
        let (d, loss) = toy();
        let pp = PrivacyParams::new(1.0, 0.01).unwrap();
        let mut cfg = BoostConfig::with_gamma(pp, 0.2, Mode::Convex, &loss, d.len()).unwrap();
        cfg.score_noise = NoiseMode::Zero;
        let set = FeasibleSet::l2_ball(1.0).unwrap();
        for seed in 0..5 {
            let out = boost(
                &d,
                &[0.0; 8],
                0.2,
                &loss,
                &set,
                Mode::Convex,
                &cfg,
                &SgdConfig::default(),
                &RngStream::new(seed, 3),
            )
            .unwrap();
            let scores: Vec<f64> = out.runs.iter().map(|r| r.as_ref().unwrap().score).collect();
            let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            let first = scores.iter().position(|s| *s == min).unwrap();
            assert_eq!(out.selected, first);
            assert!(out.runs.len() <= cfg.k);
        }
    }
}
