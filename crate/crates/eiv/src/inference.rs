//! Maximum-likelihood fitting and test orchestration.
//!
//! Fits run BFGS with the analytic score in working coordinates where every
//! variance is log-transformed, so positivity holds by construction and the
//! line search never leaves the parameter domain for domain reasons. Fixed
//! coordinates (from the hypothesis under test) are excluded from the
//! working vector entirely.

use serde::Serialize;

use crate::error::{EivError, Result};
use crate::likelihood::{loglik, score, LikelihoodContext};
use crate::model::ParamVector;
use crate::optim;
use crate::rng::{mix_seed, RandomStream};
use crate::skovgaard::{run_test, TestResult};

pub use crate::special::{chi2_cdf, chi2_quantile, chi2_sf};

/// Point null hypothesis: a set of flat parameter coordinates pinned to
/// fixed values; q is the number of constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    constraints: Vec<(usize, f64)>,
    m: usize,
}

impl Hypothesis {
    pub fn new(spec: &crate::model::ModelSpec, constraints: Vec<(usize, f64)>) -> Result<Self> {
        let m = spec.total_params();
        if constraints.is_empty() {
            return Err(EivError::InvalidHypothesis(
                "hypothesis must fix at least one coordinate".into(),
            ));
        }
        let mut seen = vec![false; m];
        let s = spec.params_per_group();
        for &(idx, value) in &constraints {
            if idx >= m {
                return Err(EivError::InvalidHypothesis(format!(
                    "coordinate index {idx} out of range (m = {m})"
                )));
            }
            if seen[idx] {
                return Err(EivError::InvalidHypothesis(format!(
                    "coordinate index {idx} constrained twice"
                )));
            }
            seen[idx] = true;
            if !value.is_finite() {
                return Err(EivError::InvalidHypothesis(
                    "constraint value must be finite".into(),
                ));
            }
            if spec.is_variance(idx % s) && value <= 0.0 {
                return Err(EivError::InvalidHypothesis(format!(
                    "domain violation: variance coordinate {} fixed to {value}",
                    spec.coord_name(idx % s)
                )));
            }
        }
        Ok(Hypothesis { constraints, m })
    }

    pub fn q(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[(usize, f64)] {
        &self.constraints
    }

    /// true for nuisance coordinates (ω), false for constrained ones (ψ).
    pub fn nuisance_mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![true; m];
        for &(idx, _) in &self.constraints {
            mask[idx] = false;
        }
        mask
    }

    /// Overwrite the constrained coordinates with their null values.
    pub fn apply(&self, values: &mut [f64]) {
        for &(idx, v) in &self.constraints {
            values[idx] = v;
        }
    }

    fn holds_at(&self, values: &[f64]) -> bool {
        self.constraints
            .iter()
            .all(|&(idx, v)| (values[idx] - v).abs() <= 1e-12 * (1.0 + v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: ParamVector,
    pub loglik: f64,
    /// Gradient infinity norm in the free working coordinates.
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Exponent applied to Ũ'J̆⁻¹Ũ in the correction factor. The statistic is
/// dimensionally consistent only with q/2; the alternatives exist for audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoExponent {
    QHalf,
    PHalf,
    MHalf,
}

#[derive(Debug, Clone, Copy)]
pub struct TestOptions {
    pub rho_exponent: RhoExponent,
    /// Seeds the deterministic restart jitter of both fits.
    pub seed: u64,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            rho_exponent: RhoExponent::QHalf,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestOutput {
    pub result: TestResult,
    pub full: FitResult,
    pub restricted: FitResult,
}

const VAR_FLOOR: f64 = 1e-4;
const MAX_ITER: usize = 500;
const MAX_RESTARTS: usize = 3;
const GRAD_TOL: f64 = 1e-6;

/// Moment-based starting values, one group at a time: the X mean and
/// variance pin μ_x, σ²_u and σ²_x; covariances give the slopes; response
/// variances give the error variances, floored away from zero.
pub fn default_init(ctx: &LikelihoodContext) -> Result<ParamVector> {
    let spec = &ctx.spec;
    let l = spec.l;
    let s = spec.params_per_group();
    let mut values = Vec::with_capacity(spec.total_params());
    for k in 0..spec.p {
        let n_k = spec.group_sizes[k];
        if n_k < 3 {
            return Err(EivError::Initialization(format!(
                "group {} has fewer than 3 observations",
                k + 1
            )));
        }
        let data = ctx.data.group(k);
        let nf = n_k as f64;
        let mean = |col: usize| -> f64 { (0..n_k).map(|j| data[(j, col)]).sum::<f64>() / nf };
        let x_bar = mean(l);
        let var_x = (0..n_k)
            .map(|j| (data[(j, l)] - x_bar).powi(2))
            .sum::<f64>()
            / nf;
        if var_x <= 1e-12 * (1.0 + x_bar * x_bar) {
            return Err(EivError::Initialization(format!(
                "group {} has (numerically) constant X",
                k + 1
            )));
        }

        let (sigma2_u, sigma2_x) = match &spec.case {
            crate::model::Case::LambdaXKnown { lambda_x } => {
                let s2u = var_x / (lambda_x[k] + 1.0);
                (s2u, lambda_x[k] * s2u)
            }
            _ => {
                let s2u = (var_x / 2.0).max(VAR_FLOOR);
                let s2x = (var_x - s2u).max(VAR_FLOOR);
                (s2u, s2x)
            }
        };

        let mut beta = vec![0.0; l];
        let mut sigma2_e = vec![0.0; l];
        let mut alpha_acc = 0.0;
        for i in 0..l {
            let y_bar = mean(i);
            let cov = (0..n_k)
                .map(|j| (data[(j, i)] - y_bar) * (data[(j, l)] - x_bar))
                .sum::<f64>()
                / nf;
            let var_y = (0..n_k)
                .map(|j| (data[(j, i)] - y_bar).powi(2))
                .sum::<f64>()
                / nf;
            beta[i] = cov / sigma2_x;
            sigma2_e[i] = (var_y - beta[i] * beta[i] * sigma2_x).max(VAR_FLOOR);
            alpha_acc += y_bar - beta[i] * x_bar;
        }
        let alpha = alpha_acc / l as f64;

        let mut block = vec![0.0; s];
        block[..l].copy_from_slice(&beta);
        match &spec.case {
            crate::model::Case::LambdaXKnown { .. } => {
                block[l] = alpha;
                block[l + 1] = x_bar;
                block[l + 2] = sigma2_u;
                block[l + 3..l + 3 + l].copy_from_slice(&sigma2_e);
            }
            crate::model::Case::LambdaEKnown { .. } => {
                block[l] = alpha;
                block[l + 1] = x_bar;
                block[l + 2] = sigma2_x;
                block[l + 3] = sigma2_u;
            }
            crate::model::Case::InterceptKnown { .. } => {
                block[l] = x_bar;
                block[l + 1] = sigma2_x;
                block[l + 2] = sigma2_u;
                block[l + 3..l + 3 + l].copy_from_slice(&sigma2_e);
            }
        }
        values.extend(block);
    }
    ParamVector::new(spec, values)
}

/// The free-coordinate working transform: natural values for location
/// coordinates, log for variances.
struct Working<'a> {
    ctx: &'a LikelihoodContext,
    free: Vec<usize>,
    is_log: Vec<bool>,
    base: Vec<f64>,
}

impl<'a> Working<'a> {
    fn new(ctx: &'a LikelihoodContext, init: &ParamVector, fixed: Option<&Hypothesis>) -> Self {
        let spec = &ctx.spec;
        let s = spec.params_per_group();
        let m = spec.total_params();
        let fixed_mask = match fixed {
            Some(h) => {
                let mut mask = vec![false; m];
                for &(idx, _) in h.constraints() {
                    mask[idx] = true;
                }
                mask
            }
            None => vec![false; m],
        };
        let free: Vec<usize> = (0..m).filter(|&i| !fixed_mask[i]).collect();
        let is_log: Vec<bool> = free.iter().map(|&i| spec.is_variance(i % s)).collect();
        Working {
            ctx,
            free,
            is_log,
            base: init.values().to_vec(),
        }
    }

    fn to_working(&self, theta: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .zip(&self.is_log)
            .map(|(&i, &lg)| if lg { theta[i].ln() } else { theta[i] })
            .collect()
    }

    fn to_natural(&self, w: &[f64]) -> Vec<f64> {
        let mut theta = self.base.clone();
        for ((&i, &lg), &wi) in self.free.iter().zip(&self.is_log).zip(w) {
            theta[i] = if lg { wi.exp() } else { wi };
        }
        theta
    }

    /// (-loglik, gradient in working coordinates), or None on evaluation
    /// failure; the optimizer treats failures as rejected steps.
    fn eval(&self, w: &[f64]) -> Option<(f64, Vec<f64>)> {
        let natural = self.to_natural(w);
        let theta = ParamVector::new(&self.ctx.spec, natural).ok()?;
        let value = loglik(self.ctx, &theta).ok()?;
        if !value.is_finite() {
            return None;
        }
        let grad = score(self.ctx, &theta).ok()?;
        let wg: Vec<f64> = self
            .free
            .iter()
            .zip(&self.is_log)
            .zip(w)
            .map(|((&i, &lg), &wi)| {
                let scale = if lg { wi.exp() } else { 1.0 };
                -grad[i] * scale
            })
            .collect();
        if wg.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((-value, wg))
    }
}

/// Maximize the log-likelihood over the free coordinates by BFGS with the
/// analytic gradient; on non-convergence, up to three restarts from
/// multiplicatively jittered starting points (log-normal factor, scale 0.2,
/// deterministic in `seed`).
pub fn fit_mle(
    ctx: &LikelihoodContext,
    init: &ParamVector,
    fixed: Option<&Hypothesis>,
    seed: u64,
) -> Result<FitResult> {
    if init.len() != ctx.spec.total_params() {
        return Err(EivError::DimensionMismatch {
            context: "initial parameter vector length",
        });
    }
    if let Some(h) = fixed {
        if !h.holds_at(init.values()) {
            return Err(EivError::InvalidHypothesis(
                "initial values do not satisfy the fixed coordinates".into(),
            ));
        }
    }

    let work = Working::new(ctx, init, fixed);
    if work.free.is_empty() {
        let value = loglik(ctx, init)?;
        return Ok(FitResult {
            theta: init.clone(),
            loglik: value,
            grad_inf_norm: 0.0,
            iterations: 0,
            converged: true,
            restarts_used: 0,
        });
    }

    let w0 = work.to_working(init.values());
    let mut best: Option<FitResult> = None;
    for attempt in 0..=MAX_RESTARTS {
        let start = if attempt == 0 {
            w0.clone()
        } else {
            let mut rng = RandomStream::substream(seed, attempt as u64);
            w0.iter()
                .map(|&w| w * (0.2 * rng.standard_normal()).exp())
                .collect()
        };
        let outcome = optim::minimize(
            |w| work.eval(w),
            &start,
            MAX_ITER,
            |f| GRAD_TOL * (1.0 + f.abs()),
        );
        let natural = work.to_natural(&outcome.x);
        let fit = ParamVector::new(&ctx.spec, natural)
            .ok()
            .map(|theta| FitResult {
                loglik: -outcome.value,
                grad_inf_norm: outcome.grad.iter().fold(0.0_f64, |m, g| m.max(g.abs())),
                iterations: outcome.iterations,
                converged: outcome.converged,
                restarts_used: attempt,
                theta,
            });
        if let Some(fit) = fit {
            let better = match &best {
                None => true,
                Some(b) => fit.loglik > b.loglik,
            };
            if fit.converged && (better || best.as_ref().map(|b| !b.converged).unwrap_or(true)) {
                return Ok(fit);
            }
            if better {
                best = Some(fit);
            }
        }
    }
    best.ok_or(EivError::Initialization(
        "objective not evaluable at any starting point".into(),
    ))
}

/// Full fit from moment starting values, restricted fit warm-started from
/// the full estimate with the constrained coordinates overwritten, then the
/// adjusted test.
pub fn test_hypothesis(
    ctx: &LikelihoodContext,
    hypothesis: &Hypothesis,
    options: &TestOptions,
) -> Result<TestOutput> {
    let init = default_init(ctx)?;
    let mut full = fit_mle(ctx, &init, None, mix_seed(&[options.seed, 1]))?;

    let mut restricted_vals = full.theta.values().to_vec();
    hypothesis.apply(&mut restricted_vals);
    let restricted_init = ParamVector::new(&ctx.spec, restricted_vals)?;
    let restricted = fit_mle(
        ctx,
        &restricted_init,
        Some(hypothesis),
        mix_seed(&[options.seed, 2]),
    )?;

    // The restricted optimum is a feasible full-model point; if it beats the
    // full fit, the full fit sat in a local optimum. Refit from there.
    if restricted.loglik > full.loglik + 1e-7 {
        let refit = fit_mle(ctx, &restricted.theta, None, mix_seed(&[options.seed, 3]))?;
        if refit.loglik > full.loglik {
            full = refit;
        }
    }

    if !full.converged || !restricted.converged {
        return Err(EivError::FitNotConverged {
            full: Box::new(full),
            restricted: Box::new(restricted),
        });
    }
    let result = run_test(ctx, hypothesis, &full, &restricted, options)?;
    Ok(TestOutput {
        result,
        full,
        restricted,
    })
}
