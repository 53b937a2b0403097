//! Regularized output perturbation with an l-infinity post-projection.

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::geometry::project_linf;
use crate::loss::{LossConstants, LossModel};
use crate::mean_estimation::NoiseMode;
use crate::noise::{gaussian_vector, laplace_vector};
use crate::params::{FeasibleSet, PrivacyParams};
use crate::rng::RngStream;
use crate::sgd::{solve_reference, ReferenceSolution};
use crate::vector::{norm_inf, sub};

/// Gradient-norm tolerance for the inner solve. Privacy assumes the exact
/// minimizer, so the achieved residual is reported with every result.
pub const ERM_TOL: f64 = 1e-10;
pub const ERM_MAX_ITER: usize = 200_000;

/// `argmin_X F_S + (lambda/2)||x||^2`, to a projected-gradient residual of `tol`.
pub fn solve_regularized_erm(
    data: &Dataset,
    lambda: f64,
    loss: &dyn LossModel,
    set: &FeasibleSet,
    tol: f64,
    max_iter: usize,
) -> Result<ReferenceSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    solve_reference(loss, data, set, lambda, tol, max_iter)
}

/// l1-sensitivity of the regularized minimizer for smooth losses,
/// `(2 sqrt(2s) L / (lambda n)) (2H/lambda + 1)`.
pub fn pure_l1_sensitivity(l: f64, h: f64, s: usize, lambda: f64, n: usize) -> f64 {
    2.0 * (2.0 * s as f64).sqrt() * l / (lambda * n as f64) * (2.0 * h / lambda + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputPertConfig {
    pub noise: NoiseMode,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OutputPertConfig {
    fn default() -> Self {
        Self { noise: NoiseMode::Calibrated, tol: ERM_TOL, max_iter: ERM_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPertResult {
    pub x_hat: Vec<f64>,
    pub x_star: Vec<f64>,
    pub xi: Vec<f64>,
    /// Laplace scale or Gaussian standard deviation.
    pub sigma: f64,
    pub solver_residual: f64,
    /// `||x_hat - x_star||_inf <= 2 ||xi||_inf`.
    pub linf_bound_holds: bool,
}

pub fn output_perturbation(
    data: &Dataset,
    pp: PrivacyParams,
    lambda: f64,
    loss: &dyn LossModel,
    set: &FeasibleSet,
    stream: &RngStream,
    cfg: &OutputPertConfig,
) -> Result<OutputPertResult> {
    let c = loss.constants();
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = data.dim();
    let denom = lambda * pp.eps * n as f64;
    let sigma = if pp.is_pure() {
        if !set.is_unconstrained() {
            return Err(invalid("set", "the pure branch needs an unconstrained domain"));
        }
        let h = c.smoothness()?;
        pure_l1_sensitivity(c.lipschitz, h, c.sparsity, lambda, n) / pp.eps
    } else {
        (8.0 * c.lipschitz * c.lipschitz * (1.25 / pp.delta).ln()).sqrt() / denom
    };
    let sol = solve_regularized_erm(data, lambda, loss, set, cfg.tol, cfg.max_iter)?;
    log::debug!("regularized ERM residual {:.3e}", sol.residual);
    let mut rng = stream.rng();
    let xi = match (cfg.noise, pp.is_pure()) {
        (NoiseMode::Zero, _) => vec![0.0; d],
        (NoiseMode::Calibrated, true) => laplace_vector(sigma, d, &mut rng)?,
        (NoiseMode::Calibrated, false) => gaussian_vector(sigma, d, &mut rng)?,
    };
    let x_tilde: Vec<f64> = sol.x.iter().zip(&xi).map(|(a, b)| a + b).collect();
    let x_hat = project_linf(set, &x_tilde)?.point;
    let gap = norm_inf(&sub(&x_hat, &sol.x));
    let bound = 2.0 * norm_inf(&xi);
    Ok(OutputPertResult {
        linf_bound_holds: gap <= bound + 1e-9 * (1.0 + bound),
        x_hat,
        x_star: sol.x,
        xi,
        sigma,
        solver_residual: sol.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaRegime {
    ErmPure,
    ErmApprox,
    ScoPure,
    ScoApprox,
}

impl std::str::FromStr for LambdaRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm-pure" => Ok(Self::ErmPure),
            "erm-approx" => Ok(Self::ErmApprox),
            "sco-pure" => Ok(Self::ScoPure),
            "sco-approx" => Ok(Self::ScoApprox),
            _ => Err(invalid("regime", format!("unknown regime `{s}`"))),
        }
    }
}

/// Regularization level balancing the perturbation error against the bias.
pub fn lambda_recommend(
    c: &LossConstants,
    n: usize,
    pp: PrivacyParams,
    beta: f64,
    regime: LambdaRegime,
) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("must be in (0, 1), got {beta}")));
    }
    let l = c.lipschitz;
    let dd = c.diameter()?;
    let s = c.sparsity as f64;
    let nf = n as f64;
    let log_d = (c.dim as f64 / beta).ln();
    let en = pp.eps * nf;
    let approx_delta = || {
        if pp.delta > 0.0 {
            Ok((1.0 / pp.delta).ln())
        } else {
            Err(invalid("delta", "approximate regimes need delta > 0"))
        }
    };
    match regime {
        LambdaRegime::ErmPure | LambdaRegime::ScoPure => {
            let h = c.smoothness()?;
            Ok((l * l * h / (dd * dd) * s * log_d / en).cbrt())
        }
        LambdaRegime::ErmApprox => Ok(l / dd * (s * approx_delta()? * log_d).powf(0.25) / en.sqrt()),
        LambdaRegime::ScoApprox => {
            let stat = nf.ln() * (1.0 / beta).ln() / nf;
            Ok(l / dd * (stat + (s * approx_delta()? * log_d).sqrt() / en).sqrt())
        }
    }
}
