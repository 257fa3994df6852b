//! Log-likelihood, score vector and observed information for the p-group
//! model.
//!
//! The per-group contribution is -(n_k/2) log|Σ_k| + Σ_j log p0(u_jk) with
//! u_jk = d_jk' Σ_k⁻¹ d_jk and d_jk = z_jk - μ_k. Derivatives use the weights
//! W(u) and W'(u) of the density generator; quadratic forms are computed via
//! triangular solves against the Cholesky factor, with Σ⁻¹ materialized once
//! per (group, θ) for the matrix derivative formulas.

use crate::elliptical::DensityGenerator;
use crate::error::{EivError, Result};
use crate::linalg::{cholesky, dot, BlockDiag, Mat};
use crate::model::{
    build_mu, build_sigma, d2_mu, d2_sigma, d_mu, d_sigma, d_sigma_inv, Dataset, ModelSpec,
    ParamVector,
};

#[derive(Debug, Clone)]
pub struct LikelihoodContext {
    pub spec: ModelSpec,
    pub generator: DensityGenerator,
    pub data: Dataset,
}

impl LikelihoodContext {
    pub fn new(spec: ModelSpec, generator: DensityGenerator, data: Dataset) -> Result<Self> {
        if generator.dim() != spec.l + 1 {
            return Err(EivError::DimensionMismatch {
                context: "generator dimension must be l+1",
            });
        }
        // Dataset::new already validated shapes against a spec; re-validate
        // against this one in case they differ.
        for (k, g) in data.groups().iter().enumerate() {
            if g.rows() != spec.group_sizes[k] || g.cols() != spec.l + 1 {
                return Err(EivError::DimensionMismatch {
                    context: "dataset shape does not match model spec",
                });
            }
        }
        Ok(LikelihoodContext {
            spec,
            generator,
            data,
        })
    }
}

/// Geometry of one group at one parameter point: μ, Σ, its factor and inverse,
/// and the first derivatives of μ and Σ, shared by the score, the information
/// and the sample-space derivative assembly.
pub(crate) struct GroupGeometry {
    pub mu: Vec<f64>,
    pub sigma_inv: Mat,
    pub d_mu: Vec<Vec<f64>>,
    pub d_sigma: Vec<Mat>,
    /// Σ^(k)i = -Σ⁻¹ Σ_i Σ⁻¹.
    pub d_sigma_inv: Vec<Mat>,
}

impl GroupGeometry {
    pub fn build(spec: &ModelSpec, theta_k: &[f64], k: usize) -> Result<Self> {
        let s = spec.params_per_group();
        let mu = build_mu(spec, theta_k, k);
        let sigma = build_sigma(spec, theta_k, k);
        let chol = cholesky(&sigma).map_err(EivError::evaluation)?;
        let sigma_inv = chol.inverse_spd();
        let mut dmu = Vec::with_capacity(s);
        let mut dsig = Vec::with_capacity(s);
        let mut dsiginv = Vec::with_capacity(s);
        for i in 0..s {
            dmu.push(d_mu(spec, theta_k, i));
            let ds = d_sigma(spec, theta_k, k, i);
            dsiginv.push(d_sigma_inv(&sigma_inv, &ds));
            dsig.push(ds);
        }
        Ok(GroupGeometry {
            mu,
            sigma_inv,
            d_mu: dmu,
            d_sigma: dsig,
            d_sigma_inv: dsiginv,
        })
    }
}

pub fn loglik(ctx: &LikelihoodContext, theta: &ParamVector) -> Result<f64> {
    let spec = &ctx.spec;
    let mut total = 0.0;
    for k in 0..spec.p {
        let theta_k = theta.block(k);
        let sigma = build_sigma(spec, theta_k, k);
        let chol = cholesky(&sigma).map_err(EivError::evaluation)?;
        let mu = build_mu(spec, theta_k, k);
        let n_k = spec.group_sizes[k] as f64;
        let mut acc = -0.5 * n_k * chol.log_det();
        let group = ctx.data.group(k);
        let mut d = vec![0.0; spec.l + 1];
        for j in 0..group.rows() {
            let z = group.row(j);
            for (a, dv) in d.iter_mut().enumerate() {
                *dv = z[a] - mu[a];
            }
            let u = chol.whitened_sq_norm(&d);
            acc += ctx.generator.log_p0(u)?;
        }
        total += acc;
    }
    Ok(total)
}

/// Score vector: per group and coordinate,
/// -(n_k/2) tr(Σ⁻¹Σ_i) + Σ_j W(u_jk) (d'Σ^(k)i d - 2 μ_i'Σ⁻¹d),
/// with the observation sum over j = 1..n_k.
pub fn score(ctx: &LikelihoodContext, theta: &ParamVector) -> Result<Vec<f64>> {
    let spec = &ctx.spec;
    let s = spec.params_per_group();
    let mut out = vec![0.0; spec.total_params()];
    for k in 0..spec.p {
        let geo = GroupGeometry::build(spec, theta.block(k), k)?;
        let n_k = spec.group_sizes[k] as f64;
        let block = &mut out[k * s..(k + 1) * s];
        for i in 0..s {
            block[i] = -0.5 * n_k * geo.sigma_inv.trace_product(&geo.d_sigma[i]);
        }
        let group = ctx.data.group(k);
        let mut d = vec![0.0; spec.l + 1];
        for j in 0..group.rows() {
            let z = group.row(j);
            for (a, dv) in d.iter_mut().enumerate() {
                *dv = z[a] - geo.mu[a];
            }
            let v = geo.sigma_inv.matvec(&d);
            let u = dot(&d, &v);
            let w = ctx.generator.weight_w(u)?;
            for i in 0..s {
                // d'Σ^(k)i d = -(Σ⁻¹d)' Σ_i (Σ⁻¹d)
                let h = -geo.d_sigma[i].quad_form(&v, &v) - 2.0 * dot(&geo.d_mu[i], &v);
                block[i] += w * h;
            }
        }
    }
    Ok(out)
}

/// Observed information J = -∂²ℓ, block diagonal over groups and symmetric.
pub fn observed_info(ctx: &LikelihoodContext, theta: &ParamVector) -> Result<BlockDiag> {
    let spec = &ctx.spec;
    let s = spec.params_per_group();
    let dim = spec.l + 1;
    let mut blocks = Vec::with_capacity(spec.p);
    for k in 0..spec.p {
        let theta_k = theta.block(k);
        let geo = GroupGeometry::build(spec, theta_k, k)?;
        let n_k = spec.group_sizes[k] as f64;
        let mut block = Mat::zeros(s, s);

        // Second derivatives of Σ and the trace part of J.
        let mut d2sig = Vec::with_capacity(s * s);
        for i in 0..s {
            for i2 in 0..s {
                d2sig.push(d2_sigma(spec, theta_k, k, i, i2));
            }
        }
        for i in 0..s {
            for i2 in i..s {
                let t = geo.d_sigma_inv[i].trace_product(&geo.d_sigma[i2])
                    + geo.sigma_inv.trace_product(&d2sig[i * s + i2]);
                block[(i, i2)] = 0.5 * n_k * t;
            }
        }

        // Σ⁻¹ μ_i for the m-term.
        let inv_mu: Vec<Vec<f64>> = (0..s).map(|i| geo.sigma_inv.matvec(&geo.d_mu[i])).collect();

        let group = ctx.data.group(k);
        let mut d = vec![0.0; dim];
        let mut h = vec![0.0; s];
        for j in 0..group.rows() {
            let z = group.row(j);
            for (a, dv) in d.iter_mut().enumerate() {
                *dv = z[a] - geo.mu[a];
            }
            let v = geo.sigma_inv.matvec(&d);
            let u = dot(&d, &v);
            let w = ctx.generator.weight_w(u)?;
            let wp = ctx.generator.weight_w_prime(u)?;

            // t_i = Σ_i v and w_i = Σ⁻¹ t_i, reused across pairs.
            let t: Vec<Vec<f64>> = (0..s).map(|i| geo.d_sigma[i].matvec(&v)).collect();
            let wv: Vec<Vec<f64>> = (0..s).map(|i| geo.sigma_inv.matvec(&t[i])).collect();
            for i in 0..s {
                h[i] = -dot(&t[i], &v) - 2.0 * dot(&geo.d_mu[i], &v);
            }

            for i in 0..s {
                for i2 in i..s {
                    // d'Σ^(k)ii' d = 2 t_i'' Σ⁻¹ t_i - v' Σ_ii' v.
                    let quad = 2.0 * dot(&t[i2], &wv[i]) - d2sig[i * s + i2].quad_form(&v, &v);
                    // μ_i' Σ^(k)i' d = -(Σ⁻¹μ_i)' Σ_i' (Σ⁻¹ d) = -(Σ⁻¹μ_i)·t_i'.
                    let mi_di2 = -dot(&inv_mu[i], &t[i2]);
                    let mi2_di = -dot(&inv_mu[i2], &t[i]);
                    let mu2 = d2_mu(spec, theta_k, i, i2);
                    let m = quad - 2.0 * mi_di2 - 2.0 * mi2_di - 2.0 * dot(&mu2, &v)
                        + 2.0 * dot(&geo.d_mu[i], &inv_mu[i2]);
                    block[(i, i2)] -= wp * h[i] * h[i2] + w * m;
                }
            }
        }

        for i in 0..s {
            for i2 in 0..i {
                block[(i, i2)] = block[(i2, i)];
            }
        }
        blocks.push(block);
    }
    Ok(BlockDiag::new(blocks))
}
