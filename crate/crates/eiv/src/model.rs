//! Model geometry: identifiability cases, parameter layout, the per-group
//! mean vector and dispersion matrix, and their first and second parameter
//! derivatives.
//!
//! Each group k has observations Z_jk = (Y_jk, X_jk) of dimension l+1 with
//! mean μ_k = (α + β μ_x, μ_x) and a case-specific dispersion Σ_k. The flat
//! parameter vector θ concatenates p per-group blocks θ_(k) of length s;
//! the in-block coordinate order is frozen so the derivative branch indices
//! below map one-to-one onto it:
//!
//!   λ_x known:       (β_1..β_l, α, μ_x, σ²_u, σ²_e1..σ²_el)     s = 2l+3
//!   λ_e known:       (β_1..β_l, α, μ_x, σ²_x, σ²_u)             s = l+4
//!   intercept known: (β_1..β_l, μ_x, σ²_x, σ²_u, σ²_e1..σ²_el)  s = 2l+3
//!
//! α is a single scalar intercept shared across the l responses; with a
//! vector intercept the per-group parameter count would exceed s.

use crate::error::{EivError, Result};
use crate::linalg::Mat;

/// Identifiability assumption with its known constants (one entry per group).
#[derive(Debug, Clone, PartialEq)]
pub enum Case {
    /// λ_x = σ²_x/σ²_u known.
    LambdaXKnown { lambda_x: Vec<f64> },
    /// λ_e = diag ratios σ²_e,i/σ²_u known (p × l).
    LambdaEKnown { lambda_e: Vec<Vec<f64>> },
    /// Intercept vector known (p × l).
    InterceptKnown { alpha: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub l: usize,
    pub p: usize,
    pub group_sizes: Vec<usize>,
    pub case: Case,
}

impl ModelSpec {
    pub fn new(l: usize, p: usize, group_sizes: Vec<usize>, case: Case) -> Result<Self> {
        if l == 0 || p == 0 {
            return Err(EivError::InvalidSpec(
                "response dimension and group count must be positive".into(),
            ));
        }
        if group_sizes.len() != p || group_sizes.iter().any(|&n| n == 0) {
            return Err(EivError::InvalidSpec(format!(
                "expected {p} positive group sizes"
            )));
        }
        match &case {
            Case::LambdaXKnown { lambda_x } => {
                if lambda_x.len() != p || lambda_x.iter().any(|&v| !(v > 0.0)) {
                    return Err(EivError::InvalidSpec(
                        "lambda_x must hold one positive value per group".into(),
                    ));
                }
            }
            Case::LambdaEKnown { lambda_e } => {
                if lambda_e.len() != p
                    || lambda_e
                        .iter()
                        .any(|g| g.len() != l || g.iter().any(|&v| !(v > 0.0)))
                {
                    return Err(EivError::InvalidSpec(
                        "lambda_e must hold l positive values per group".into(),
                    ));
                }
            }
            Case::InterceptKnown { alpha } => {
                if alpha.len() != p || alpha.iter().any(|g| g.len() != l) {
                    return Err(EivError::InvalidSpec(
                        "known intercept must hold l values per group".into(),
                    ));
                }
            }
        }
        Ok(ModelSpec {
            l,
            p,
            group_sizes,
            case,
        })
    }

    /// Parameters per group: 2l+3, except l+4 when λ_e is known.
    pub fn params_per_group(&self) -> usize {
        match self.case {
            Case::LambdaEKnown { .. } => self.l + 4,
            _ => 2 * self.l + 3,
        }
    }

    pub fn total_params(&self) -> usize {
        self.p * self.params_per_group()
    }

    pub fn total_observations(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn flat_index(&self, group: usize, local: usize) -> usize {
        debug_assert!(group < self.p && local < self.params_per_group());
        group * self.params_per_group() + local
    }

    /// In-block index of μ_x: l+1 except for a known intercept, where it is l.
    pub fn mu_x_index(&self) -> usize {
        match self.case {
            Case::InterceptKnown { .. } => self.l,
            _ => self.l + 1,
        }
    }

    pub fn is_variance(&self, local: usize) -> bool {
        assert!(local < self.params_per_group());
        match self.case {
            Case::LambdaXKnown { .. } => local >= self.l + 2,
            Case::LambdaEKnown { .. } => local >= self.l + 2,
            Case::InterceptKnown { .. } => local > self.l,
        }
    }

    pub fn coord_name(&self, local: usize) -> String {
        assert!(local < self.params_per_group());
        let l = self.l;
        if local < l {
            return format!("beta{}", local + 1);
        }
        match self.case {
            Case::LambdaXKnown { .. } => match local - l {
                0 => "alpha".into(),
                1 => "mu_x".into(),
                2 => "sigma2_u".into(),
                r => format!("sigma2_e{}", r - 2),
            },
            Case::LambdaEKnown { .. } => match local - l {
                0 => "alpha".into(),
                1 => "mu_x".into(),
                2 => "sigma2_x".into(),
                _ => "sigma2_u".into(),
            },
            Case::InterceptKnown { .. } => match local - l {
                0 => "mu_x".into(),
                1 => "sigma2_x".into(),
                2 => "sigma2_u".into(),
                r => format!("sigma2_e{}", r - 2),
            },
        }
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        (0..self.params_per_group()).find(|&i| self.coord_name(i) == name)
    }
}

/// Flat parameter vector in natural coordinates, positivity enforced on the
/// variance coordinates at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    block_len: usize,
}

impl ParamVector {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.total_params() {
            return Err(EivError::InvalidSpec(format!(
                "parameter vector length {} does not match m = {}",
                values.len(),
                spec.total_params()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EivError::InvalidSpec(
                "parameter vector has non-finite entries".into(),
            ));
        }
        let s = spec.params_per_group();
        for k in 0..spec.p {
            for i in 0..s {
                if spec.is_variance(i) && !(values[k * s + i] > 0.0) {
                    return Err(EivError::InvalidSpec(format!(
                        "variance coordinate {}@{} must be positive",
                        spec.coord_name(i),
                        k + 1
                    )));
                }
            }
        }
        Ok(ParamVector {
            values,
            block_len: s,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn block(&self, k: usize) -> &[f64] {
        &self.values[k * self.block_len..(k + 1) * self.block_len]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-group observation matrices; row j of group k is Z_jk = (Y_jk, X_jk).
#[derive(Debug, Clone)]
pub struct Dataset {
    groups: Vec<Mat>,
}

impl Dataset {
    pub fn new(spec: &ModelSpec, groups: Vec<Mat>) -> Result<Self> {
        if groups.len() != spec.p {
            return Err(EivError::InvalidSpec(format!(
                "expected {} groups, got {}",
                spec.p,
                groups.len()
            )));
        }
        for (k, g) in groups.iter().enumerate() {
            if g.rows() != spec.group_sizes[k] || g.cols() != spec.l + 1 {
                return Err(EivError::InvalidSpec(format!(
                    "group {} must be {} x {}",
                    k + 1,
                    spec.group_sizes[k],
                    spec.l + 1
                )));
            }
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(EivError::InvalidSpec(format!(
                    "group {} contains non-finite observations",
                    k + 1
                )));
            }
        }
        Ok(Dataset { groups })
    }

    pub fn group(&self, k: usize) -> &Mat {
        &self.groups[k]
    }

    pub fn groups(&self) -> &[Mat] {
        &self.groups
    }
}

fn slopes(spec: &ModelSpec, theta_k: &[f64]) -> Vec<f64> {
    theta_k[..spec.l].to_vec()
}

/// (β', 1)' — the μ_x direction of the mean and the slope rank-one factor.
fn beta_ext(spec: &ModelSpec, theta_k: &[f64]) -> Vec<f64> {
    let mut c = slopes(spec, theta_k);
    c.push(1.0);
    c
}

/// σ²_x as a function of the block, which in the λ_x-known case is λ_x σ²_u.
fn sigma2_x(spec: &ModelSpec, theta_k: &[f64], k: usize) -> f64 {
    match &spec.case {
        Case::LambdaXKnown { lambda_x } => lambda_x[k] * theta_k[spec.l + 2],
        Case::LambdaEKnown { .. } => theta_k[spec.l + 2],
        Case::InterceptKnown { .. } => theta_k[spec.l + 1],
    }
}

pub fn build_mu(spec: &ModelSpec, theta_k: &[f64], k: usize) -> Vec<f64> {
    let l = spec.l;
    let mu_x = theta_k[spec.mu_x_index()];
    let mut mu = vec![0.0; l + 1];
    match &spec.case {
        Case::InterceptKnown { alpha } => {
            for i in 0..l {
                mu[i] = alpha[k][i] + theta_k[i] * mu_x;
            }
        }
        _ => {
            let a = theta_k[l];
            for i in 0..l {
                mu[i] = a + theta_k[i] * mu_x;
            }
        }
    }
    mu[l] = mu_x;
    mu
}

pub fn build_sigma(spec: &ModelSpec, theta_k: &[f64], k: usize) -> Mat {
    let l = spec.l;
    let beta = slopes(spec, theta_k);
    let s2x = sigma2_x(spec, theta_k, k);
    let mut sig = Mat::zeros(l + 1, l + 1);
    for i in 0..l {
        for j in 0..l {
            sig[(i, j)] = beta[i] * beta[j] * s2x;
        }
        sig[(i, l)] = beta[i] * s2x;
        sig[(l, i)] = beta[i] * s2x;
    }
    match &spec.case {
        Case::LambdaXKnown { lambda_x } => {
            let s2u = theta_k[l + 2];
            for i in 0..l {
                sig[(i, i)] += theta_k[l + 3 + i];
            }
            sig[(l, l)] = (lambda_x[k] + 1.0) * s2u;
        }
        Case::LambdaEKnown { lambda_e } => {
            let s2u = theta_k[l + 3];
            for i in 0..l {
                sig[(i, i)] += lambda_e[k][i] * s2u;
            }
            sig[(l, l)] = s2x + s2u;
        }
        Case::InterceptKnown { .. } => {
            let s2u = theta_k[l + 2];
            for i in 0..l {
                sig[(i, i)] += theta_k[l + 3 + i];
            }
            sig[(l, l)] = s2x + s2u;
        }
    }
    sig
}

/// ∂μ_k/∂θ_(k)i.
pub fn d_mu(spec: &ModelSpec, theta_k: &[f64], i: usize) -> Vec<f64> {
    let l = spec.l;
    let s = spec.params_per_group();
    assert!(i < s, "coordinate index out of range");
    let mut out = vec![0.0; l + 1];
    if i < l {
        out[i] = theta_k[spec.mu_x_index()];
    } else if i == spec.mu_x_index() {
        return beta_ext(spec, theta_k);
    } else if !matches!(spec.case, Case::InterceptKnown { .. }) && i == l {
        // Scalar intercept enters every response coordinate.
        for v in out.iter_mut().take(l) {
            *v = 1.0;
        }
    }
    out
}

/// ∂²μ_k/∂θ_(k)i ∂θ_(k)i'.
pub fn d2_mu(spec: &ModelSpec, _theta_k: &[f64], i: usize, i2: usize) -> Vec<f64> {
    let l = spec.l;
    let s = spec.params_per_group();
    assert!(i < s && i2 < s, "coordinate index out of range");
    let mu_x = spec.mu_x_index();
    let mut out = vec![0.0; l + 1];
    if i < l && i2 == mu_x {
        out[i] = 1.0;
    } else if i2 < l && i == mu_x {
        out[i2] = 1.0;
    }
    out
}

/// Rank-two update x y' + y x'.
fn sym_outer(x: &[f64], y: &[f64]) -> Mat {
    let n = x.len();
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = x[i] * y[j] + y[i] * x[j];
        }
    }
    m
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// ∂Σ_k/∂θ_(k)i.
pub fn d_sigma(spec: &ModelSpec, theta_k: &[f64], k: usize, i: usize) -> Mat {
    let l = spec.l;
    let s = spec.params_per_group();
    assert!(i < s, "coordinate index out of range");
    let n = l + 1;
    if i < l {
        // Slope coordinate: σ²_x (e_i c' + c e_i').
        let c = beta_ext(spec, theta_k);
        return sym_outer(&unit(n, i), &c).scaled(sigma2_x(spec, theta_k, k));
    }
    match &spec.case {
        Case::LambdaXKnown { lambda_x } => match i - l {
            0 | 1 => Mat::zeros(n, n),
            2 => {
                // σ²_u: λ_x c c' plus a unit in the X corner.
                let c = beta_ext(spec, theta_k);
                let mut m = Mat::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        m[(a, b)] = lambda_x[k] * c[a] * c[b];
                    }
                }
                m[(l, l)] += 1.0;
                m
            }
            r => {
                let mut m = Mat::zeros(n, n);
                m[(r - 3, r - 3)] = 1.0;
                m
            }
        },
        Case::LambdaEKnown { lambda_e } => match i - l {
            0 | 1 => Mat::zeros(n, n),
            2 => {
                // σ²_x: c c'.
                let c = beta_ext(spec, theta_k);
                let mut m = Mat::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        m[(a, b)] = c[a] * c[b];
                    }
                }
                m
            }
            _ => {
                // σ²_u: diag(λ_e, 1).
                let mut m = Mat::zeros(n, n);
                for a in 0..l {
                    m[(a, a)] = lambda_e[k][a];
                }
                m[(l, l)] = 1.0;
                m
            }
        },
        Case::InterceptKnown { .. } => match i - l {
            0 => Mat::zeros(n, n),
            1 => {
                let c = beta_ext(spec, theta_k);
                let mut m = Mat::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        m[(a, b)] = c[a] * c[b];
                    }
                }
                m
            }
            2 => {
                let mut m = Mat::zeros(n, n);
                m[(l, l)] = 1.0;
                m
            }
            r => {
                let mut m = Mat::zeros(n, n);
                m[(r - 3, r - 3)] = 1.0;
                m
            }
        },
    }
}

/// ∂²Σ_k/∂θ_(k)i ∂θ_(k)i'. Nonzero only for slope pairs and for a slope
/// against the variance coordinate scaling the rank-one β part.
pub fn d2_sigma(spec: &ModelSpec, theta_k: &[f64], k: usize, i: usize, i2: usize) -> Mat {
    let l = spec.l;
    let s = spec.params_per_group();
    assert!(i < s && i2 < s, "coordinate index out of range");
    let n = l + 1;
    let (lo, hi) = if i <= i2 { (i, i2) } else { (i2, i) };
    if hi < l {
        // Slope-slope: σ²_x (e_i e_i'' + e_i' e_i').
        return sym_outer(&unit(n, lo), &unit(n, hi)).scaled(sigma2_x(spec, theta_k, k));
    }
    if lo < l {
        let c = beta_ext(spec, theta_k);
        match &spec.case {
            Case::LambdaXKnown { lambda_x } => {
                if hi == l + 2 {
                    return sym_outer(&unit(n, lo), &c).scaled(lambda_x[k]);
                }
            }
            Case::LambdaEKnown { .. } => {
                if hi == l + 2 {
                    return sym_outer(&unit(n, lo), &c);
                }
            }
            Case::InterceptKnown { .. } => {
                if hi == l + 1 {
                    return sym_outer(&unit(n, lo), &c);
                }
            }
        }
    }
    Mat::zeros(n, n)
}

/// ∂Σ⁻¹/∂θ_i = -Σ⁻¹ Σ_i Σ⁻¹.
pub fn d_sigma_inv(sigma_inv: &Mat, sigma_i: &Mat) -> Mat {
    sigma_inv.matmul(sigma_i).matmul(sigma_inv).scaled(-1.0)
}

/// ∂²Σ⁻¹/∂θ_i ∂θ_i', in the exact symmetric two-cross-term form
/// Σ⁻¹Σ_i'Σ⁻¹Σ_iΣ⁻¹ + Σ⁻¹Σ_iΣ⁻¹Σ_i'Σ⁻¹ − Σ⁻¹Σ_ii'Σ⁻¹.
pub fn d2_sigma_inv(sigma_inv: &Mat, sigma_i: &Mat, sigma_i2: &Mat, sigma_ii2: &Mat) -> Mat {
    let a = sigma_inv
        .matmul(sigma_i2)
        .matmul(sigma_inv)
        .matmul(sigma_i)
        .matmul(sigma_inv);
    let b = sigma_inv
        .matmul(sigma_i)
        .matmul(sigma_inv)
        .matmul(sigma_i2)
        .matmul(sigma_inv);
    let c = sigma_inv.matmul(sigma_ii2).matmul(sigma_inv);
    a.add(&b).sub(&c)
}
