//! Ancillary statistic, sample-space derivatives and the adjusted likelihood
//! ratio statistics.
//!
//! The ancillary is the Cholesky-whitened residual a_jk = P̂_k⁻¹(z_jk − μ̂_k).
//! Writing z_jk = P̂_k a_jk + μ̂_k turns the log-likelihood into a function
//! ℓ(θ; θ̂, a) of the parameter and the MLE jointly; its derivatives in the
//! MLE direction (ℓ′, U′ and the double evaluation J̆ at the restricted
//! estimate) feed the correction factor ρ, which rescales LR into
//!
//!   LR*  = LR (1 − log ρ / LR)²,     LR** = LR − 2 log ρ,
//!
//! both approximately chi-square with q degrees of freedom to high accuracy.
//!
//! Index convention: a sample-space derivative block stores
//! U′[i][i'] = ∂²ℓ/∂θ_i ∂θ̂_i' (rows follow the plain parameter, columns the
//! MLE), matching the order in which the b/c/f/g assembly vectors carry
//! their indices. The scalar (ℓ̂′−ℓ̃′)'(Ũ′)⁻¹Ũ of the ρ formula contracts the
//! θ̂-indexed vector ℓ̂′−ℓ̃′ against the θ̂-indexed rows of (Ũ′)⁻¹ and the
//! θ-indexed score against its columns; both contractions reduce to
//! (θ̂−θ̃)'J(θ̂−θ̃) ≈ LR near the null, which pins the orientation.

use serde::Serialize;

use crate::error::{EivError, Result};
use crate::inference::{FitResult, Hypothesis, RhoExponent, TestOptions};
use crate::likelihood::{observed_info, score, GroupGeometry, LikelihoodContext};
use crate::linalg::{cholesky, d_cholesky, dot, BlockDiag, CholeskyFactor, Mat};
use crate::model::{build_mu, build_sigma, d_mu, d_sigma, ParamVector};
use crate::special::chi2_sf;

/// LR below this is reported as-is; the adjustment is numerically meaningless.
pub const TINY_LR: f64 = 1e-8;

/// Whitened residuals per group; row j of group k holds a_jk.
#[derive(Debug, Clone)]
pub struct Ancillary {
    groups: Vec<Mat>,
}

impl Ancillary {
    pub fn group(&self, k: usize) -> &Mat {
        &self.groups[k]
    }

    pub fn groups(&self) -> &[Mat] {
        &self.groups
    }
}

/// a_jk = P̂_k⁻¹ (z_jk − μ̂_k) via triangular solve.
pub fn ancillary(ctx: &LikelihoodContext, theta_hat: &ParamVector) -> Result<Ancillary> {
    let spec = &ctx.spec;
    let mut groups = Vec::with_capacity(spec.p);
    for k in 0..spec.p {
        let theta_k = theta_hat.block(k);
        let mu = build_mu(spec, theta_k, k);
        let chol = cholesky(&build_sigma(spec, theta_k, k)).map_err(EivError::evaluation)?;
        let data = ctx.data.group(k);
        let mut out = Mat::zeros(data.rows(), spec.l + 1);
        let mut d = vec![0.0; spec.l + 1];
        for j in 0..data.rows() {
            let z = data.row(j);
            for (a, dv) in d.iter_mut().enumerate() {
                *dv = z[a] - mu[a];
            }
            let a_j = chol.solve_lower(&d);
            for (c, v) in a_j.iter().enumerate() {
                out[(j, c)] = *v;
            }
        }
        groups.push(out);
    }
    Ok(Ancillary { groups })
}

/// Per-group quantities anchored at the MLE argument of ℓ(θ; θ̂, a):
/// P̂, μ̂ and their parameter derivatives (P̂_i via the Cholesky-factor
/// tangent sweep). Computed once per fit and shared across the assembly.
pub(crate) struct HatGroup {
    chol: CholeskyFactor,
    mu: Vec<f64>,
    d_chol: Vec<Mat>,
    d_mu: Vec<Vec<f64>>,
}

pub(crate) fn hat_geometry(
    ctx: &LikelihoodContext,
    theta_hat: &ParamVector,
) -> Result<Vec<HatGroup>> {
    let spec = &ctx.spec;
    let s = spec.params_per_group();
    let mut out = Vec::with_capacity(spec.p);
    for k in 0..spec.p {
        let theta_k = theta_hat.block(k);
        let mu = build_mu(spec, theta_k, k);
        let chol = cholesky(&build_sigma(spec, theta_k, k)).map_err(EivError::evaluation)?;
        let mut d_chol = Vec::with_capacity(s);
        let mut dmu = Vec::with_capacity(s);
        for i in 0..s {
            d_chol.push(d_cholesky(&chol, &d_sigma(spec, theta_k, k, i))?);
            dmu.push(d_mu(spec, theta_k, i));
        }
        out.push(HatGroup {
            chol,
            mu,
            d_chol,
            d_mu: dmu,
        });
    }
    Ok(out)
}

/// ℓ′ = ∂ℓ(θ; θ̂, a)/∂θ̂ evaluated at `theta`:
/// coordinate i of block k is 2 Σ_j W(u) (P̂_i a_jk + μ̂_i)' Σ⁻¹ g_jk with
/// g_jk = P̂ a_jk + μ̂ − μ and u = g'Σ⁻¹g.
pub fn sample_space_ell_prime(
    ctx: &LikelihoodContext,
    anc: &Ancillary,
    theta_hat: &ParamVector,
    theta: &ParamVector,
) -> Result<Vec<f64>> {
    let hats = hat_geometry(ctx, theta_hat)?;
    ell_prime_inner(ctx, anc, &hats, theta)
}

pub(crate) fn ell_prime_inner(
    ctx: &LikelihoodContext,
    anc: &Ancillary,
    hats: &[HatGroup],
    theta: &ParamVector,
) -> Result<Vec<f64>> {
    let spec = &ctx.spec;
    let s = spec.params_per_group();
    let dim = spec.l + 1;
    let mut out = vec![0.0; spec.total_params()];
    for k in 0..spec.p {
        let hat = &hats[k];
        let geo = GroupGeometry::build(spec, theta.block(k), k)?;
        let a_mat = anc.group(k);
        let block = &mut out[k * s..(k + 1) * s];
        let mut hg = vec![0.0; dim];
        for j in 0..a_mat.rows() {
            let a_j = a_mat.row(j);
            // g = P̂ a + μ̂ − μ
            let pa = hat.chol.lower().matvec(a_j);
            let g: Vec<f64> = (0..dim).map(|c| pa[c] + hat.mu[c] - geo.mu[c]).collect();
            let v = geo.sigma_inv.matvec(&g);
            let u = dot(&g, &v);
            let w = ctx.generator.weight_w(u)?;
            for i in 0..s {
                let pia = hat.d_chol[i].matvec(a_j);
                for (c, h) in hg.iter_mut().enumerate() {
                    *h = pia[c] + hat.d_mu[i][c];
                }
                block[i] += 2.0 * w * dot(&hg, &v);
            }
        }
    }
    Ok(out)
}

/// U′ = ∂²ℓ(θ; θ̂, a)/∂θ∂θ̂' evaluated at `theta`, block diagonal with
/// M[i][i'] = 2 Σ_j { W(u)·b-term + W'(u)·c-term } per the assembly vectors.
pub fn sample_space_u_prime(
    ctx: &LikelihoodContext,
    anc: &Ancillary,
    theta_hat: &ParamVector,
    theta: &ParamVector,
) -> Result<BlockDiag> {
    let hats = hat_geometry(ctx, theta_hat)?;
    u_prime_inner(ctx, anc, &hats, theta)
}

pub(crate) fn u_prime_inner(
    ctx: &LikelihoodContext,
    anc: &Ancillary,
    hats: &[HatGroup],
    theta: &ParamVector,
) -> Result<BlockDiag> {
    let spec = &ctx.spec;
    let s = spec.params_per_group();
    let dim = spec.l + 1;
    let mut blocks = Vec::with_capacity(spec.p);
    for k in 0..spec.p {
        let hat = &hats[k];
        let geo = GroupGeometry::build(spec, theta.block(k), k)?;
        let a_mat = anc.group(k);
        let mut block = Mat::zeros(s, s);
        for j in 0..a_mat.rows() {
            let a_j = a_mat.row(j);
            let pa = hat.chol.lower().matvec(a_j);
            let g: Vec<f64> = (0..dim).map(|c| pa[c] + hat.mu[c] - geo.mu[c]).collect();
            let v = geo.sigma_inv.matvec(&g);
            let u = dot(&g, &v);
            let w = ctx.generator.weight_w(u)?;
            let wp = ctx.generator.weight_w_prime(u)?;

            // Hat-side vectors P̂_i' a + μ̂_i' and their Σ⁻¹ images.
            let hg: Vec<Vec<f64>> = (0..s)
                .map(|i2| {
                    let pia = hat.d_chol[i2].matvec(a_j);
                    (0..dim).map(|c| pia[c] + hat.d_mu[i2][c]).collect()
                })
                .collect();
            let qg: Vec<Vec<f64>> = hg.iter().map(|h| geo.sigma_inv.matvec(h)).collect();
            // Plain-side contractions t_i = Σ_i v.
            let t: Vec<Vec<f64>> = (0..s).map(|i| geo.d_sigma[i].matvec(&v)).collect();
            // g'Σ^(k)i g − 2 μ_i'Σ⁻¹g, the h-type factor of the c-term.
            let hfac: Vec<f64> = (0..s)
                .map(|i| -dot(&t[i], &v) - 2.0 * dot(&geo.d_mu[i], &v))
                .collect();

            for i in 0..s {
                for i2 in 0..s {
                    // b: (P̂_i' a + μ̂_i')'Σ^(k)i g − μ_i'Σ⁻¹(P̂_i' a + μ̂_i')
                    let b = -dot(&qg[i2], &t[i]) - dot(&geo.d_mu[i], &qg[i2]);
                    // c: (P̂_i' a + μ̂_i')'Σ⁻¹g · hfac_i
                    let c = dot(&hg[i2], &v) * hfac[i];
                    block[(i, i2)] += 2.0 * (w * b + wp * c);
                }
            }
        }
        blocks.push(block);
    }
    Ok(BlockDiag::new(blocks))
}

/// J̆: the mixed derivative with both arguments at the restricted estimate,
/// assembled from the f/g vectors with weights held at the original
/// whitened residuals (W, W' of a'a, which equals d̂'Σ̂⁻¹d̂).
pub fn j_breve(
    ctx: &LikelihoodContext,
    anc: &Ancillary,
    theta_tilde: &ParamVector,
) -> Result<BlockDiag> {
    let spec = &ctx.spec;
    let s = spec.params_per_group();
    let dim = spec.l + 1;
    let tilde = hat_geometry(ctx, theta_tilde)?;
    let mut blocks = Vec::with_capacity(spec.p);
    for k in 0..spec.p {
        let hat = &tilde[k];
        let geo = GroupGeometry::build(spec, theta_tilde.block(k), k)?;
        let a_mat = anc.group(k);
        let mut block = Mat::zeros(s, s);
        for j in 0..a_mat.rows() {
            let a_j = a_mat.row(j);
            let u = dot(a_j, a_j);
            let w = ctx.generator.weight_w(u)?;
            let wp = ctx.generator.weight_w_prime(u)?;
            let pa = hat.chol.lower().matvec(a_j);
            let v = geo.sigma_inv.matvec(&pa);

            let tg: Vec<Vec<f64>> = (0..s)
                .map(|i2| {
                    let pia = hat.d_chol[i2].matvec(a_j);
                    (0..dim).map(|c| pia[c] + hat.d_mu[i2][c]).collect()
                })
                .collect();
            let qg: Vec<Vec<f64>> = tg.iter().map(|h| geo.sigma_inv.matvec(h)).collect();
            let t: Vec<Vec<f64>> = (0..s).map(|i| geo.d_sigma[i].matvec(&v)).collect();
            let hfac: Vec<f64> = (0..s)
                .map(|i| -dot(&t[i], &v) - 2.0 * dot(&geo.d_mu[i], &v))
                .collect();

            for i in 0..s {
                for i2 in 0..s {
                    let f = -dot(&qg[i2], &t[i]) - dot(&geo.d_mu[i], &qg[i2]);
                    let gterm = dot(&tg[i2], &v) * hfac[i];
                    block[(i, i2)] += 2.0 * (w * f + wp * gterm);
                }
            }
        }
        blocks.push(block);
    }
    Ok(BlockDiag::new(blocks))
}

/// Everything ρ needs besides the observed informations and the score.
pub struct SampleSpaceParts {
    pub ell_prime_hat: Vec<f64>,
    pub ell_prime_tilde: Vec<f64>,
    pub u_prime_tilde: BlockDiag,
    pub j_breve: BlockDiag,
}

pub fn sample_space_parts(
    ctx: &LikelihoodContext,
    anc: &Ancillary,
    theta_hat: &ParamVector,
    theta_tilde: &ParamVector,
) -> Result<SampleSpaceParts> {
    let hats = hat_geometry(ctx, theta_hat)?;
    Ok(SampleSpaceParts {
        ell_prime_hat: ell_prime_inner(ctx, anc, &hats, theta_hat)?,
        ell_prime_tilde: ell_prime_inner(ctx, anc, &hats, theta_tilde)?,
        u_prime_tilde: u_prime_inner(ctx, anc, &hats, theta_tilde)?,
        j_breve: j_breve(ctx, anc, theta_tilde)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    None,
    TinyLr,
    NonPositiveRho,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub lr: f64,
    pub lr_star: f64,
    pub lr_star_star: f64,
    pub rho: f64,
    pub q: usize,
    pub p_lr: f64,
    pub p_star: f64,
    pub p_star_star: f64,
    pub degenerate: Degeneracy,
    /// det Ũ′ came out negative; its absolute value was used.
    pub neg_det_u_prime: bool,
}

pub(crate) enum RhoOutcome {
    LogRho { value: f64, neg_det_u_prime: bool },
    Degenerate,
}

/// The correction factor, in log space with sign tracking:
///
///   ρ = |Ĵ|^½ |Ũ′|⁻¹ |J̃_ωω|^½ |J̆_ωω|^(-½) |J̆|^½
///       · (Ũ'J̆⁻¹Ũ)^e / [ LR^(q/2−1) · Ũ'(Ũ′)⁻¹(ℓ̂′−ℓ̃′) ],
///
/// where e defaults to q/2 and the ωω subscripts select the nuisance
/// coordinates. Fits whose curvature factors are not positive, or whose
/// scalar contractions come out non-positive, are reported as degenerate
/// rather than producing a complex or negative ρ.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rho_factor(
    j_hat: &BlockDiag,
    j_tilde: &BlockDiag,
    u_tilde: &[f64],
    parts: &SampleSpaceParts,
    nuisance: &[bool],
    lr: f64,
    q: usize,
    exponent: RhoExponent,
) -> RhoOutcome {
    if lr <= TINY_LR {
        return RhoOutcome::Degenerate;
    }
    let dets = (|| -> Result<(f64, bool)> {
        let (ld_j_hat, s1) = j_hat.log_abs_det()?;
        let (ld_u_prime, s_up) = parts.u_prime_tilde.log_abs_det()?;
        let (ld_j_tilde_nn, s2) = j_tilde.select(nuisance).log_abs_det()?;
        let (ld_breve_nn, s3) = parts.j_breve.select(nuisance).log_abs_det()?;
        let (ld_breve, s4) = parts.j_breve.log_abs_det()?;
        // Factors under a square root must be positive determinants.
        if s1 <= 0.0 || s2 <= 0.0 || s3 <= 0.0 || s4 <= 0.0 {
            return Err(EivError::SingularMatrix);
        }
        let log =
            0.5 * ld_j_hat - ld_u_prime + 0.5 * ld_j_tilde_nn - 0.5 * ld_breve_nn + 0.5 * ld_breve;
        Ok((log, s_up < 0.0))
    })();
    let (log_dets, neg_det_u_prime) = match dets {
        Ok(v) => v,
        Err(_) => return RhoOutcome::Degenerate,
    };

    // Ũ' J̆⁻¹ Ũ
    let quad_breve = match parts.j_breve.solve(u_tilde) {
        Ok(x) => dot(u_tilde, &x),
        Err(_) => return RhoOutcome::Degenerate,
    };
    if !(quad_breve > 0.0) || !quad_breve.is_finite() {
        return RhoOutcome::Degenerate;
    }

    // (ℓ̂′ − ℓ̃′)' (Ũ′)⁻¹ Ũ; see the module doc for the index convention.
    let d_ell: Vec<f64> = parts
        .ell_prime_hat
        .iter()
        .zip(&parts.ell_prime_tilde)
        .map(|(a, b)| a - b)
        .collect();
    let q_scalar = match parts.u_prime_tilde.solve(u_tilde) {
        Ok(y) => dot(&d_ell, &y),
        Err(_) => return RhoOutcome::Degenerate,
    };
    if !(q_scalar > 0.0) || !q_scalar.is_finite() {
        return RhoOutcome::Degenerate;
    }

    let e = match exponent {
        RhoExponent::QHalf => q as f64 / 2.0,
        RhoExponent::PHalf => j_hat.blocks().len() as f64 / 2.0,
        RhoExponent::MHalf => u_tilde.len() as f64 / 2.0,
    };
    let log_rho = log_dets + e * quad_breve.ln() - (q as f64 / 2.0 - 1.0) * lr.ln() - q_scalar.ln();
    if !log_rho.is_finite() {
        return RhoOutcome::Degenerate;
    }
    RhoOutcome::LogRho {
        value: log_rho,
        neg_det_u_prime,
    }
}

/// LR* = LR (1 − log ρ / LR)² and LR** = LR − 2 log ρ.
pub fn adjusted_statistics(lr: f64, rho: f64, _q: usize) -> (f64, f64) {
    let log_rho = rho.ln();
    let star = lr * (1.0 - log_rho / lr).powi(2);
    let star_star = lr - 2.0 * log_rho;
    (star, star_star)
}

/// Assemble LR, the ancillary, all sample-space parts, ρ and the three
/// p-values for a converged full/restricted fit pair.
pub fn run_test(
    ctx: &LikelihoodContext,
    hypothesis: &Hypothesis,
    fit_full: &FitResult,
    fit_restricted: &FitResult,
    options: &TestOptions,
) -> Result<TestResult> {
    if !fit_full.converged || !fit_restricted.converged {
        return Err(EivError::FitNotConverged {
            full: Box::new(fit_full.clone()),
            restricted: Box::new(fit_restricted.clone()),
        });
    }
    let q = hypothesis.q();
    let lr_raw = 2.0 * (fit_full.loglik - fit_restricted.loglik);
    if lr_raw < -1e-6 {
        return Err(EivError::NestingViolation { excess: -lr_raw });
    }
    let lr = lr_raw.max(0.0);
    let p_lr = chi2_sf(lr, q)?;

    let degenerate = |lr: f64, p_lr: f64, kind: Degeneracy, neg_det: bool| TestResult {
        lr,
        lr_star: lr,
        lr_star_star: lr,
        rho: 1.0,
        q,
        p_lr,
        p_star: p_lr,
        p_star_star: p_lr,
        degenerate: kind,
        neg_det_u_prime: neg_det,
    };

    if lr <= TINY_LR {
        return Ok(degenerate(lr, p_lr, Degeneracy::TinyLr, false));
    }

    let theta_hat = &fit_full.theta;
    let theta_tilde = &fit_restricted.theta;
    let anc = ancillary(ctx, theta_hat)?;
    let j_hat = observed_info(ctx, theta_hat)?;
    let j_tilde = observed_info(ctx, theta_tilde)?;
    let u_tilde = score(ctx, theta_tilde)?;
    let parts = sample_space_parts(ctx, &anc, theta_hat, theta_tilde)?;
    let nuisance = hypothesis.nuisance_mask(ctx.spec.total_params());

    match rho_factor(
        &j_hat,
        &j_tilde,
        &u_tilde,
        &parts,
        &nuisance,
        lr,
        q,
        options.rho_exponent,
    ) {
        RhoOutcome::Degenerate => Ok(degenerate(lr, p_lr, Degeneracy::NonPositiveRho, false)),
        RhoOutcome::LogRho {
            value: log_rho,
            neg_det_u_prime,
        } => {
            let rho = log_rho.exp();
            if !(rho > 0.0) || !rho.is_finite() {
                return Ok(degenerate(
                    lr,
                    p_lr,
                    Degeneracy::NonPositiveRho,
                    neg_det_u_prime,
                ));
            }
            let lr_star = lr * (1.0 - log_rho / lr).powi(2);
            let lr_star_star = lr - 2.0 * log_rho;
            Ok(TestResult {
                lr,
                lr_star,
                lr_star_star,
                rho,
                q,
                p_lr,
                p_star: chi2_sf(lr_star, q)?,
                // LR** can go negative; it is clamped for the p-value only.
                p_star_star: chi2_sf(lr_star_star.max(0.0), q)?,
                degenerate: Degeneracy::None,
                neg_det_u_prime,
            })
        }
    }
}
