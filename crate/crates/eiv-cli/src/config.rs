//! TOML configuration for models and simulation studies.

use crate::CliError;
use eiv::inference::RhoExponent;
use eiv::model::{Case, ModelSpec, ParamVector};
use eiv::montecarlo::SimConfig;
use eiv::{Family, Hypothesis};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

impl Scalars {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
        match self {
            Scalars::One(v) => Ok(vec![*v; n]),
            Scalars::Many(vs) if vs.len() == n => Ok(vs.clone()),
            Scalars::Many(vs) => Err(CliError::input(format!(
                "{what}: expected a scalar or {n} values, got {}",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    One(usize),
    Many(Vec<usize>),
}

impl Counts {
    fn expand(&self) -> Vec<usize> {
        match self {
            Counts::One(v) => vec![*v],
            Counts::Many(vs) => vs.clone(),
        }
    }
}

/// Per-group vectors specified as a scalar, one row shared by every group,
/// or a full p x l table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GroupRows {
    Scalar(f64),
    Row(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl GroupRows {
    fn expand(&self, p: usize, l: usize, what: &str) -> Result<Vec<Vec<f64>>, CliError> {
        match self {
            GroupRows::Scalar(v) => Ok(vec![vec![*v; l]; p]),
            GroupRows::Row(r) if r.len() == l => Ok(vec![r.clone(); p]),
            GroupRows::Rows(rows) if rows.len() == p && rows.iter().all(|r| r.len() == l) => {
                Ok(rows.clone())
            }
            _ => Err(CliError::input(format!(
                "{what}: expected a scalar, {l} values, or {p} rows of {l} values"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub l: usize,
    pub p: usize,
    pub case: String,
    pub lambda_x: Option<Scalars>,
    pub lambda_e: Option<GroupRows>,
    pub alpha: Option<GroupRows>,
    pub family: String,
    pub nu: Option<f64>,
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::input(format!("model config: {e}")))
    }

    pub fn family(&self) -> Result<Family, CliError> {
        match self.family.as_str() {
            "normal" => Ok(Family::Normal),
            "student_t" => {
                if self.nu.is_none() {
                    return Err(CliError::input("family student_t requires nu"));
                }
                Ok(Family::StudentT)
            }
            other => Err(CliError::input(format!(
                "unknown family `{other}` (expected normal or student_t)"
            ))),
        }
    }

    pub fn case(&self) -> Result<Case, CliError> {
        match self.case.as_str() {
            "lambda_x_known" => {
                let lx = self
                    .lambda_x
                    .as_ref()
                    .ok_or_else(|| CliError::input("case lambda_x_known requires lambda_x"))?;
                Ok(Case::LambdaXKnown {
                    lambda_x: lx.expand(self.p, "lambda_x")?,
                })
            }
            "lambda_e_known" => {
                let le = self
                    .lambda_e
                    .as_ref()
                    .ok_or_else(|| CliError::input("case lambda_e_known requires lambda_e"))?;
                Ok(Case::LambdaEKnown {
                    lambda_e: le.expand(self.p, self.l, "lambda_e")?,
                })
            }
            "intercept_known" => {
                let a = self
                    .alpha
                    .as_ref()
                    .ok_or_else(|| CliError::input("case intercept_known requires alpha"))?;
                Ok(Case::InterceptKnown {
                    alpha: a.expand(self.p, self.l, "alpha")?,
                })
            }
            other => Err(CliError::input(format!(
                "unknown case `{other}` (expected lambda_x_known, lambda_e_known or intercept_known)"
            ))),
        }
    }

    pub fn model_spec(&self, group_sizes: Vec<usize>) -> Result<ModelSpec, CliError> {
        ModelSpec::new(self.l, self.p, group_sizes, self.case()?)
            .map_err(|e| CliError::input(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimModelSection {
    #[serde(flatten)]
    pub model: ModelConfig,
    pub n_k: Counts,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub beta: Option<Scalars>,
    pub alpha: Option<f64>,
    pub mu_x: f64,
    pub sigma2_x: Option<f64>,
    pub sigma2_u: f64,
    pub sigma2_e: Option<Scalars>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub q: Counts,
    pub psi0: Option<f64>,
    pub replications: usize,
    pub levels: Option<Vec<f64>>,
    pub seed: u64,
    pub rho_exponent: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub model: SimModelSection,
    pub truth: TruthSection,
    pub study: StudySection,
}

/// One cell of the study sweep plus its row labels.
pub struct SimRow {
    pub n_k: usize,
    pub q: usize,
    pub config: SimConfig,
}

impl SimFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::input(format!("simulation config: {e}")))
    }

    pub fn rho_exponent(&self) -> Result<RhoExponent, CliError> {
        match self.study.rho_exponent.as_deref() {
            None | Some("q_half") => Ok(RhoExponent::QHalf),
            Some("p_half") => Ok(RhoExponent::PHalf),
            Some("m_half") => Ok(RhoExponent::MHalf),
            Some(other) => Err(CliError::input(format!(
                "unknown rho_exponent `{other}` (expected q_half, p_half or m_half)"
            ))),
        }
    }

    fn psi0(&self) -> f64 {
        self.study
            .psi0
            .unwrap_or(match self.model.model.case.as_str() {
                "intercept_known" => 1.0,
                _ => 0.0,
            })
    }

    fn theta_true(&self, spec: &ModelSpec) -> Result<ParamVector, CliError> {
        let l = spec.l;
        let p = spec.p;
        let s = spec.params_per_group();
        let truth = &self.truth;
        let beta = match &truth.beta {
            None => vec![self.psi0(); p],
            Some(b) => {
                if l != 1 {
                    if let Scalars::Many(_) = b {
                        return Err(CliError::input(
                            "per-group beta arrays are supported for l = 1 only",
                        ));
                    }
                }
                b.expand(p, "truth.beta")?
            }
        };
        let sigma2_e = truth
            .sigma2_e
            .as_ref()
            .map(|v| v.expand(l, "truth.sigma2_e"))
            .transpose()?;
        let mut values = Vec::with_capacity(spec.total_params());
        for k in 0..p {
            let mut block = vec![0.0; s];
            for b in block.iter_mut().take(l) {
                *b = beta[k];
            }
            match &spec.case {
                Case::LambdaXKnown { lambda_x } => {
                    let alpha = truth
                        .alpha
                        .ok_or_else(|| CliError::input("truth.alpha required for this case"))?;
                    let s2e = sigma2_e
                        .clone()
                        .ok_or_else(|| CliError::input("truth.sigma2_e required for this case"))?;
                    if let Some(s2x) = truth.sigma2_x {
                        let implied = lambda_x[k] * truth.sigma2_u;
                        if (implied - s2x).abs() > 1e-9 * s2x.max(1.0) {
                            return Err(CliError::input(format!(
                                "truth.sigma2_x = {s2x} inconsistent with lambda_x * sigma2_u = {implied}"
                            )));
                        }
                    }
                    block[l] = alpha;
                    block[l + 1] = truth.mu_x;
                    block[l + 2] = truth.sigma2_u;
                    block[l + 3..l + 3 + l].copy_from_slice(&s2e);
                }
                Case::LambdaEKnown { lambda_e } => {
                    let alpha = truth
                        .alpha
                        .ok_or_else(|| CliError::input("truth.alpha required for this case"))?;
                    let s2x = truth
                        .sigma2_x
                        .ok_or_else(|| CliError::input("truth.sigma2_x required for this case"))?;
                    if let Some(s2e) = &sigma2_e {
                        for (i, &v) in s2e.iter().enumerate() {
                            let implied = lambda_e[k][i] * truth.sigma2_u;
                            if (implied - v).abs() > 1e-9 * v.max(1.0) {
                                return Err(CliError::input(format!(
                                    "truth.sigma2_e inconsistent with lambda_e * sigma2_u = {implied}"
                                )));
                            }
                        }
                    }
                    block[l] = alpha;
                    block[l + 1] = truth.mu_x;
                    block[l + 2] = s2x;
                    block[l + 3] = truth.sigma2_u;
                }
                Case::InterceptKnown { .. } => {
                    let s2x = truth
                        .sigma2_x
                        .ok_or_else(|| CliError::input("truth.sigma2_x required for this case"))?;
                    let s2e = sigma2_e
                        .clone()
                        .ok_or_else(|| CliError::input("truth.sigma2_e required for this case"))?;
                    block[l] = truth.mu_x;
                    block[l + 1] = s2x;
                    block[l + 2] = truth.sigma2_u;
                    block[l + 3..l + 3 + l].copy_from_slice(&s2e);
                }
            }
            values.extend(block);
        }
        ParamVector::new(spec, values).map_err(|e| CliError::input(e.to_string()))
    }

    /// The sweep: one row per (n_k, q) pair, n_k outermost. Each row derives
    /// its master seed from (seed, n_k, q) so a cell's rates do not depend on
    /// which sweep it was part of.
    pub fn rows(
        &self,
        reps_override: Option<usize>,
        seed_override: Option<u64>,
    ) -> Result<Vec<SimRow>, CliError> {
        let replications = reps_override.unwrap_or(self.study.replications);
        if replications == 0 {
            return Err(CliError::input("replication count must be positive"));
        }
        let master = seed_override.unwrap_or(self.study.seed);
        let levels = self
            .study
            .levels
            .clone()
            .unwrap_or_else(|| vec![0.01, 0.05, 0.10]);
        let rho_exponent = self.rho_exponent()?;
        let family = self.model.model.family()?;
        let psi0 = self.psi0();

        let mut rows = Vec::new();
        for n_k in self.model.n_k.expand() {
            if n_k < 3 {
                return Err(CliError::input(format!("n_k = {n_k} is too small")));
            }
            let spec = self.model.model.model_spec(vec![n_k; self.model.model.p])?;
            let theta_true = self.theta_true(&spec)?;
            for q in self.study.q.expand() {
                if q == 0 || q > spec.p {
                    return Err(CliError::input(format!(
                        "q = {q} must lie in 1..={}",
                        spec.p
                    )));
                }
                let constraints = (0..q).map(|k| (spec.flat_index(k, 0), psi0)).collect();
                let hypothesis = Hypothesis::new(&spec, constraints)
                    .map_err(|e| CliError::input(e.to_string()))?;
                let config = SimConfig {
                    spec: spec.clone(),
                    family,
                    dof: self.model.model.nu,
                    theta_true: theta_true.clone(),
                    hypothesis,
                    replications,
                    levels: levels.clone(),
                    master_seed: eiv::rng::mix_seed(&[master, n_k as u64, q as u64]),
                    rho_exponent,
                };
                config
                    .validate()
                    .map_err(|e| CliError::input(e.to_string()))?;
                rows.push(SimRow { n_k, q, config });
            }
        }
        Ok(rows)
    }
}

/// Parse a null specification like "beta1@1=0,beta1@2=0" against the model
/// coordinate names.
pub fn parse_null_spec(spec: &ModelSpec, text: &str) -> Result<Hypothesis, CliError> {
    let mut constraints = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (lhs, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("constraint `{part}` is missing `=`")))?;
        let (name, group) = lhs
            .split_once('@')
            .ok_or_else(|| CliError::input(format!("constraint `{part}` is missing `@group`")))?;
        let group: usize = group
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("bad group label in `{part}`")))?;
        if group == 0 || group > spec.p {
            return Err(CliError::input(format!(
                "group {group} out of range 1..={}",
                spec.p
            )));
        }
        let local = spec
            .coord_index(name.trim())
            .ok_or_else(|| CliError::input(format!("unknown coordinate `{}`", name.trim())))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("bad value in `{part}`")))?;
        constraints.push((spec.flat_index(group - 1, local), value));
    }
    Hypothesis::new(spec, constraints).map_err(|e| CliError::input(e.to_string()))
}
