//! Data generation and the null rejection-rate study.
//!
//! Each replication r draws its own counter-based stream keyed by
//! (master_seed, r), so the tally is independent of execution order and
//! thread count. Replications whose fits do not converge are excluded from
//! the denominator and reported; replications with a degenerate correction
//! factor fall back to LR and are tallied separately, with exclusive rates
//! for the adjusted statistics reported alongside.

use rayon::prelude::*;
use serde::Serialize;

use crate::elliptical::{DensityGenerator, Family};
use crate::error::{EivError, Result};
use crate::inference::{test_hypothesis, Hypothesis, RhoExponent, TestOptions};
use crate::likelihood::LikelihoodContext;
use crate::linalg::Mat;
use crate::model::{build_mu, Case, Dataset, ModelSpec, ParamVector};
use crate::rng::{mix_seed, RandomStream};
use crate::skovgaard::Degeneracy;
use crate::special::chi2_quantile;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub family: Family,
    pub dof: Option<f64>,
    pub theta_true: ParamVector,
    pub hypothesis: Hypothesis,
    pub replications: usize,
    pub levels: Vec<f64>,
    pub master_seed: u64,
    pub rho_exponent: RhoExponent,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(EivError::InvalidConfig(
                "replication count must be positive".into(),
            ));
        }
        if self.levels.is_empty() || self.levels.iter().any(|&g| !(0.0 < g && g < 1.0)) {
            return Err(EivError::InvalidConfig(
                "levels must lie strictly between 0 and 1".into(),
            ));
        }
        // The size study simulates under the null: the truth must satisfy it.
        let holds =
            self.hypothesis.constraints().iter().all(|&(idx, v)| {
                (self.theta_true.values()[idx] - v).abs() <= 1e-12 * (1.0 + v.abs())
            });
        if !holds {
            return Err(EivError::InvalidConfig(
                "true parameter values do not satisfy the hypothesis".into(),
            ));
        }
        if self.family == Family::StudentT && self.dof.is_none() {
            return Err(EivError::InvalidConfig(
                "Student-t simulation requires degrees of freedom".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LevelRates {
    pub level: f64,
    /// Percent rejection over converged replications.
    pub lr: f64,
    /// Adjusted statistics with degenerate replications falling back to LR,
    /// over converged replications.
    pub lr_star: f64,
    pub lr_star_star: f64,
    /// Same, excluding degenerate replications from the denominator.
    pub lr_star_excl_degenerate: f64,
    pub lr_star_star_excl_degenerate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub replications_requested: usize,
    pub converged: usize,
    pub non_convergence_fraction: f64,
    pub degenerate: usize,
    pub degeneracy_fraction: f64,
    pub tiny_lr: usize,
    pub non_positive_rho: usize,
    pub neg_det_u_prime: usize,
    pub rates: Vec<LevelRates>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Draw a dataset from the latent-error representation: per observation,
/// b = η_k + Ω_k^{1/2} s with s a spherical (l+2)-draw, then Z = δ_k + Δ_k b.
/// Ω_k is diagonal, so its square root is elementwise.
pub fn generate_dataset(
    spec: &ModelSpec,
    generator: &DensityGenerator,
    theta_true: &ParamVector,
    rng: &mut RandomStream,
) -> Dataset {
    assert_eq!(
        generator.dim(),
        spec.l + 2,
        "latent error generator must have dimension l+2"
    );
    let l = spec.l;
    let mut groups = Vec::with_capacity(spec.p);
    for k in 0..spec.p {
        let theta_k = theta_true.block(k);
        let beta = &theta_k[..l];
        let mu_x = theta_k[spec.mu_x_index()];
        let mu = build_mu(spec, theta_k, k);
        // δ_k = (α, 0): recover α from μ = (α + β μ_x, μ_x).
        let delta: Vec<f64> = (0..l).map(|i| mu[i] - beta[i] * mu_x).collect();

        // Ω_k diagonal: (σ²_x, σ²_e1..σ²_el, σ²_u).
        let (s2x, s2u, s2e) = match &spec.case {
            Case::LambdaXKnown { lambda_x } => {
                let s2u = theta_k[l + 2];
                let s2e = theta_k[l + 3..l + 3 + l].to_vec();
                (lambda_x[k] * s2u, s2u, s2e)
            }
            Case::LambdaEKnown { lambda_e } => {
                let s2u = theta_k[l + 3];
                let s2e = lambda_e[k].iter().map(|&r| r * s2u).collect();
                (theta_k[l + 2], s2u, s2e)
            }
            Case::InterceptKnown { .. } => {
                let s2u = theta_k[l + 2];
                let s2e = theta_k[l + 3..l + 3 + l].to_vec();
                (theta_k[l + 1], s2u, s2e)
            }
        };
        let mut omega_sqrt = Vec::with_capacity(l + 2);
        omega_sqrt.push(s2x.sqrt());
        omega_sqrt.extend(s2e.iter().map(|v| v.sqrt()));
        omega_sqrt.push(s2u.sqrt());

        let n_k = spec.group_sizes[k];
        let draws = generator.sample_spherical(rng, n_k);
        let mut m = Mat::zeros(n_k, l + 1);
        for (j, s) in draws.iter().enumerate() {
            // b = (x, e_1..e_l, u)
            let x = mu_x + omega_sqrt[0] * s[0];
            let u = omega_sqrt[l + 1] * s[l + 1];
            for i in 0..l {
                let e = omega_sqrt[1 + i] * s[1 + i];
                m[(j, i)] = delta[i] + beta[i] * x + e;
            }
            m[(j, l)] = x + u;
        }
        groups.push(m);
    }
    Dataset::new(spec, groups).expect("generated data has valid shape")
}

enum RepOutcome {
    NotConverged,
    Tested {
        lr: f64,
        lr_star: f64,
        lr_star_star: f64,
        degenerate: Degeneracy,
        neg_det_u_prime: bool,
    },
}

fn run_replication(config: &SimConfig, r: u64) -> RepOutcome {
    let mut rng = RandomStream::substream(config.master_seed, r);
    let generator = DensityGenerator::from_family(config.family, config.spec.l + 2, config.dof)
        .expect("config validated");
    let data = generate_dataset(&config.spec, &generator, &config.theta_true, &mut rng);
    let ctx = match LikelihoodContext::new(
        config.spec.clone(),
        generator.with_dim(config.spec.l + 1),
        data,
    ) {
        Ok(c) => c,
        Err(_) => return RepOutcome::NotConverged,
    };
    let options = TestOptions {
        rho_exponent: config.rho_exponent,
        seed: mix_seed(&[config.master_seed, r]),
    };
    match test_hypothesis(&ctx, &config.hypothesis, &options) {
        Ok(out) => RepOutcome::Tested {
            lr: out.result.lr,
            lr_star: out.result.lr_star,
            lr_star_star: out.result.lr_star_star,
            degenerate: out.result.degenerate,
            neg_det_u_prime: out.result.neg_det_u_prime,
        },
        Err(_) => RepOutcome::NotConverged,
    }
}

/// Run the study on `threads` workers (0 = rayon default). The outcome
/// vector is ordered by replication index before tallying, so the report is
/// identical for any thread count.
pub fn rejection_study(config: &SimConfig, threads: usize) -> Result<SimReport> {
    config.validate()?;
    let started = std::time::Instant::now();
    let q = config.hypothesis.q();

    let run_all = || -> Vec<RepOutcome> {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|r| run_replication(config, r))
            .collect()
    };
    let outcomes: Vec<RepOutcome> = if threads == 0 {
        run_all()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| EivError::InvalidConfig(format!("thread pool: {e}")))?
            .install(run_all)
    };

    let mut converged = 0usize;
    let mut tiny_lr = 0usize;
    let mut non_positive_rho = 0usize;
    let mut neg_det = 0usize;
    let critical: Vec<f64> = config
        .levels
        .iter()
        .map(|&g| chi2_quantile(1.0 - g, q))
        .collect::<Result<_>>()?;
    let mut reject_lr = vec![0usize; critical.len()];
    let mut reject_star = vec![0usize; critical.len()];
    let mut reject_star_star = vec![0usize; critical.len()];
    let mut reject_star_clean = vec![0usize; critical.len()];
    let mut reject_star_star_clean = vec![0usize; critical.len()];

    for outcome in &outcomes {
        match outcome {
            RepOutcome::NotConverged => {}
            RepOutcome::Tested {
                lr,
                lr_star,
                lr_star_star,
                degenerate,
                neg_det_u_prime,
            } => {
                converged += 1;
                let clean = *degenerate == Degeneracy::None;
                match degenerate {
                    Degeneracy::TinyLr => tiny_lr += 1,
                    Degeneracy::NonPositiveRho => non_positive_rho += 1,
                    Degeneracy::None => {}
                }
                if *neg_det_u_prime {
                    neg_det += 1;
                }
                for (i, &c) in critical.iter().enumerate() {
                    if *lr > c {
                        reject_lr[i] += 1;
                    }
                    if *lr_star > c {
                        reject_star[i] += 1;
                        if clean {
                            reject_star_clean[i] += 1;
                        }
                    }
                    if *lr_star_star > c {
                        reject_star_star[i] += 1;
                        if clean {
                            reject_star_star_clean[i] += 1;
                        }
                    }
                }
            }
        }
    }

    let degenerate = tiny_lr + non_positive_rho;
    let clean_count = converged - degenerate;
    let pct = |num: usize, den: usize| {
        if den == 0 {
            f64::NAN
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let rates = config
        .levels
        .iter()
        .enumerate()
        .map(|(i, &level)| LevelRates {
            level,
            lr: pct(reject_lr[i], converged),
            lr_star: pct(reject_star[i], converged),
            lr_star_star: pct(reject_star_star[i], converged),
            lr_star_excl_degenerate: pct(reject_star_clean[i], clean_count),
            lr_star_star_excl_degenerate: pct(reject_star_star_clean[i], clean_count),
        })
        .collect();

    Ok(SimReport {
        replications_requested: config.replications,
        converged,
        non_convergence_fraction: (config.replications - converged) as f64
            / config.replications as f64,
        degenerate,
        degeneracy_fraction: if converged == 0 {
            f64::NAN
        } else {
            degenerate as f64 / converged as f64
        },
        tiny_lr,
        non_positive_rho,
        neg_det_u_prime: neg_det,
        rates,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// The §-style true-value presets used throughout the tables: α = 0.5,
/// σ²_x = 1.5, σ²_u = 0.5, σ²_e = 2.0 with μ_x = 0.5 for the variance-ratio
/// cases; μ_x = 5.0 and slopes at 1 for the known-(null-)intercept case.
pub mod presets {
    use super::*;

    pub const ALPHA: f64 = 0.5;
    pub const SIGMA2_X: f64 = 1.5;
    pub const SIGMA2_U: f64 = 0.5;
    pub const SIGMA2_E: f64 = 2.0;
    pub const LAMBDA_X: f64 = SIGMA2_X / SIGMA2_U;
    pub const LAMBDA_E: f64 = SIGMA2_E / SIGMA2_U;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum CaseKind {
        LambdaXKnown,
        LambdaEKnown,
        NullIntercept,
    }

    pub fn model_spec(kind: CaseKind, l: usize, p: usize, n_k: usize) -> ModelSpec {
        let case = match kind {
            CaseKind::LambdaXKnown => Case::LambdaXKnown {
                lambda_x: vec![LAMBDA_X; p],
            },
            CaseKind::LambdaEKnown => Case::LambdaEKnown {
                lambda_e: vec![vec![LAMBDA_E; l]; p],
            },
            CaseKind::NullIntercept => Case::InterceptKnown {
                alpha: vec![vec![0.0; l]; p],
            },
        };
        ModelSpec::new(l, p, vec![n_k; p], case).expect("preset spec is valid")
    }

    /// True parameter vector under the null (slopes at the null value).
    pub fn theta_true(spec: &ModelSpec, kind: CaseKind) -> ParamVector {
        let l = spec.l;
        let s = spec.params_per_group();
        let mut values = Vec::with_capacity(spec.total_params());
        for _ in 0..spec.p {
            let mut block = vec![0.0; s];
            match kind {
                CaseKind::LambdaXKnown => {
                    block[l] = ALPHA;
                    block[l + 1] = 0.5;
                    block[l + 2] = SIGMA2_U;
                    for i in 0..l {
                        block[l + 3 + i] = SIGMA2_E;
                    }
                }
                CaseKind::LambdaEKnown => {
                    block[l] = ALPHA;
                    block[l + 1] = 0.5;
                    block[l + 2] = SIGMA2_X;
                    block[l + 3] = SIGMA2_U;
                }
                CaseKind::NullIntercept => {
                    for b in block.iter_mut().take(l) {
                        *b = 1.0;
                    }
                    block[l] = 5.0;
                    block[l + 1] = SIGMA2_X;
                    block[l + 2] = SIGMA2_U;
                    for i in 0..l {
                        block[l + 3 + i] = SIGMA2_E;
                    }
                }
            }
            values.extend(block);
        }
        ParamVector::new(spec, values).expect("preset truth is valid")
    }

    /// H0 pins the slope of groups 1..q to the null value (0, or 1 for the
    /// null-intercept case).
    pub fn slope_hypothesis(spec: &ModelSpec, kind: CaseKind, q: usize) -> Hypothesis {
        let psi0 = match kind {
            CaseKind::NullIntercept => 1.0,
            _ => 0.0,
        };
        let constraints = (0..q).map(|k| (spec.flat_index(k, 0), psi0)).collect();
        Hypothesis::new(spec, constraints).expect("preset hypothesis is valid")
    }

    pub fn sim_config(
        kind: CaseKind,
        family: Family,
        dof: Option<f64>,
        q: usize,
        n_k: usize,
        p: usize,
        replications: usize,
        master_seed: u64,
    ) -> SimConfig {
        let spec = model_spec(kind, 1, p, n_k);
        let theta_true = theta_true(&spec, kind);
        let hypothesis = slope_hypothesis(&spec, kind, q);
        SimConfig {
            spec,
            family,
            dof,
            theta_true,
            hypothesis,
            replications,
            levels: vec![0.01, 0.05, 0.10],
            master_seed,
            rho_exponent: RhoExponent::QHalf,
        }
    }
}
