//! Density generating functions for the elliptical families.
//!
//! A d-dimensional elliptical law has density |Σ|^{-1/2} p0(d'Σ⁻¹d). The
//! generator bundles p0 with its log-derivative weights W(u) = ∂ log p0/∂u
//! and W'(u), which are all the likelihood machinery needs to know about the
//! distribution, plus a sampler for the spherical seed vector.

use crate::error::{EivError, Result};
use crate::rng::RandomStream;
use crate::special::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    StudentT,
}

/// Elliptical density generator tagged with the dimension it serves
/// (l+1 for observation vectors, l+2 for the latent error vector).
#[derive(Debug, Clone, Copy)]
pub struct DensityGenerator {
    family: Family,
    dim: usize,
    dof: f64,
}

impl DensityGenerator {
    pub fn normal(dim: usize) -> Self {
        assert!(dim >= 1, "generator dimension must be >= 1");
        DensityGenerator {
            family: Family::Normal,
            dim,
            dof: f64::NAN,
        }
    }

    pub fn student_t(dim: usize, dof: f64) -> Result<Self> {
        assert!(dim >= 1, "generator dimension must be >= 1");
        if !(dof > 0.0) || !dof.is_finite() {
            return Err(EivError::Domain {
                context: "Student-t degrees of freedom must be positive",
            });
        }
        Ok(DensityGenerator {
            family: Family::StudentT,
            dim,
            dof,
        })
    }

    pub fn from_family(family: Family, dim: usize, dof: Option<f64>) -> Result<Self> {
        match family {
            Family::Normal => Ok(DensityGenerator::normal(dim)),
            Family::StudentT => {
                let dof = dof.ok_or(EivError::Domain {
                    context: "Student-t generator requires degrees of freedom",
                })?;
                DensityGenerator::student_t(dim, dof)
            }
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dof(&self) -> Option<f64> {
        match self.family {
            Family::Normal => None,
            Family::StudentT => Some(self.dof),
        }
    }

    /// Same family and dof, serving a different dimension.
    pub fn with_dim(&self, dim: usize) -> Self {
        assert!(dim >= 1);
        DensityGenerator { dim, ..*self }
    }

    /// log p0(u), normalizing constant included, so that |Σ|^{-1/2} p0(d'Σ⁻¹d)
    /// is a proper density in dimension `dim`.
    pub fn log_p0(&self, u: f64) -> Result<f64> {
        self.check_u(u)?;
        let d = self.dim as f64;
        match self.family {
            Family::Normal => Ok(-0.5 * d * LN_2PI - 0.5 * u),
            Family::StudentT => {
                let nu = self.dof;
                Ok(ln_gamma((nu + d) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - 0.5 * d * (nu * std::f64::consts::PI).ln()
                    - 0.5 * (nu + d) * (1.0 + u / nu).ln_1p_safe())
            }
        }
    }

    /// W(u) = ∂ log p0 / ∂u.
    #[inline]
    pub fn weight_w(&self, u: f64) -> Result<f64> {
        self.check_u(u)?;
        match self.family {
            Family::Normal => Ok(-0.5),
            Family::StudentT => {
                let nu = self.dof;
                Ok(-(nu + self.dim as f64) / (2.0 * (nu + u)))
            }
        }
    }

    /// W'(u) = ∂ W / ∂u.
    #[inline]
    pub fn weight_w_prime(&self, u: f64) -> Result<f64> {
        self.check_u(u)?;
        match self.family {
            Family::Normal => Ok(0.0),
            Family::StudentT => {
                let nu = self.dof;
                let denom = nu + u;
                Ok((nu + self.dim as f64) / (2.0 * denom * denom))
            }
        }
    }

    /// Draws of the spherical seed Z*: standard normal vectors for the
    /// normal family; for Student-t, a normal vector scaled by sqrt(ν/g)
    /// with g a chi-square(ν) draw shared across the vector's components.
    pub fn sample_spherical(&self, rng: &mut RandomStream, count: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut z: Vec<f64> = (0..self.dim).map(|_| rng.standard_normal()).collect();
            if self.family == Family::StudentT {
                let g = rng.gamma(self.dof / 2.0, 2.0);
                let scale = (self.dof / g).sqrt();
                for x in &mut z {
                    *x *= scale;
                }
            }
            out.push(z);
        }
        out
    }

    #[inline]
    fn check_u(&self, u: f64) -> Result<()> {
        if u < 0.0 || u.is_nan() {
            return Err(EivError::Domain {
                context: "elliptical generator argument must be nonnegative",
            });
        }
        Ok(())
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_6;

trait Ln1pExt {
    fn ln_1p_safe(self) -> f64;
}

impl Ln1pExt for f64 {
    // The argument arrives as 1 + u/ν; use ln_1p on the increment when small.
    #[inline]
    fn ln_1p_safe(self) -> f64 {
        let x = self - 1.0;
        if x.abs() < 0.5 {
            x.ln_1p()
        } else {
            self.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_log_p0_closed_form() {
        let g = DensityGenerator::normal(2);
        assert_eq!(g.log_p0(0.0).unwrap(), -LN_2PI);
        // log p0(u) + (d/2) log 2π + u/2 vanishes; one rounding of the
        // intermediate sum is the only slack.
        for &u in &[0.0, 0.3, 1.7, 44.0] {
            let v = g.log_p0(u).unwrap() + LN_2PI + u / 2.0;
            assert!(v.abs() <= f64::EPSILON * (1.0 + u));
        }
        assert!(g.log_p0(-1e-9).is_err());
    }

    #[test]
    fn student_t_log_p0_constant() {
        // ν=3, d=2 at u=0: log Γ(2.5) - log Γ(1.5) - log(3π) = log(1.5/(3π)).
        let g = DensityGenerator::student_t(2, 3.0).unwrap();
        let expect = (1.5_f64 / (3.0 * std::f64::consts::PI)).ln();
        assert!((g.log_p0(0.0).unwrap() - expect).abs() < 1e-12);
        // Independent gamma-function oracle for the same constant.
        let oracle = statrs::function::gamma::ln_gamma(2.5)
            - statrs::function::gamma::ln_gamma(1.5)
            - (3.0 * std::f64::consts::PI).ln();
        assert!((g.log_p0(0.0).unwrap() - oracle).abs() < 1e-12);
        assert!((expect + 1.837_877_1).abs() < 1e-6);
    }

    #[test]
    fn student_t_density_normalizes() {
        // 2D Simpson quadrature of the bivariate t(3) density with μ=0, Σ=I.
        let g = DensityGenerator::student_t(2, 3.0).unwrap();
        let half = 35.0;
        let n = 1400usize; // even
        let h = 2.0 * half / n as f64;
        let w1 = |i: usize| -> f64 {
            if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut total = 0.0;
        for i in 0..=n {
            let x = -half + i as f64 * h;
            let mut row = 0.0;
            for j in 0..=n {
                let y = -half + j as f64 * h;
                row += w1(j) * g.log_p0(x * x + y * y).unwrap().exp();
            }
            total += w1(i) * row;
        }
        total *= h * h / 9.0;
        assert!(
            (total - 1.0).abs() < 1e-3,
            "bivariate t(3) mass integrated to {total}"
        );
    }

    #[test]
    fn weights_match_symbolic_values() {
        let g = DensityGenerator::student_t(2, 3.0).unwrap();
        assert!((g.weight_w(0.0).unwrap() + 5.0 / 6.0).abs() < 1e-15);
        assert!((g.weight_w(7.0).unwrap() + 0.25).abs() < 1e-15);
        assert!((g.weight_w_prime(0.0).unwrap() - 5.0 / 18.0).abs() < 1e-15);

        let n = DensityGenerator::normal(4);
        assert_eq!(n.weight_w(3.3).unwrap(), -0.5);
        assert_eq!(n.weight_w_prime(9.1).unwrap(), 0.0);
        assert!(n.weight_w(-0.1).is_err());
        assert!(n.weight_w_prime(f64::NAN).is_err());
    }

    #[test]
    fn weights_match_finite_differences() {
        for gen in [
            DensityGenerator::normal(2),
            DensityGenerator::student_t(2, 3.0).unwrap(),
            DensityGenerator::student_t(5, 7.5).unwrap(),
        ] {
            for &u in &[0.0f64, 0.01, 0.5, 1.0, 10.0, 100.0] {
                let h = 1e-5 * u.max(1.0);
                let (lo, hi) = if u - h < 0.0 {
                    (u, u + h)
                } else {
                    (u - h, u + h)
                };
                let fd = (gen.log_p0(hi).unwrap() - gen.log_p0(lo).unwrap()) / (hi - lo);
                let w = gen.weight_w(0.5 * (lo + hi)).unwrap();
                assert!((fd - w).abs() < 1e-6 * w.abs().max(1e-3), "u={u}");

                let fd2 = (gen.weight_w(hi).unwrap() - gen.weight_w(lo).unwrap()) / (hi - lo);
                let wp = gen.weight_w_prime(0.5 * (lo + hi)).unwrap();
                assert!((fd2 - wp).abs() < 1e-5 * wp.abs().max(1e-3), "u={u}");
            }
        }
    }

    #[test]
    fn student_t_weights_approach_normal_for_large_dof() {
        // |W + 1/2| = |u - d| / (2(ν + u)), so the gap shrinks like 1/ν.
        let g = DensityGenerator::student_t(2, 1e6).unwrap();
        for &u in &[0.0f64, 1.0, 10.0, 100.0] {
            let gap = (g.weight_w(u).unwrap() + 0.5).abs();
            let exact = (u - 2.0).abs() / (2.0 * (1e6 + u));
            assert!((gap - exact).abs() < 1e-12);
            assert!(gap < 1e-4);
        }
        let g8 = DensityGenerator::student_t(2, 1e8).unwrap();
        for &u in &[0.0f64, 1.0, 10.0, 100.0] {
            assert!((g8.weight_w(u).unwrap() + 0.5).abs() < 1e-5);
        }
    }

    #[test]
    fn spherical_sampling_moments() {
        let mut rng = RandomStream::from_seed(2024);
        let g = DensityGenerator::normal(2);
        let draws = g.sample_spherical(&mut rng, 100_000);
        let n = draws.len() as f64;
        let mut mean = [0.0; 2];
        for z in &draws {
            mean[0] += z[0];
            mean[1] += z[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        assert!(mean[0].abs() < 0.02 && mean[1].abs() < 0.02);
        let mut cov = [[0.0; 2]; 2];
        for z in &draws {
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += (z[a] - mean[a]) * (z[b] - mean[b]);
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] /= n;
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((cov[a][b] - target).abs() < 0.03);
            }
        }

        assert!(g.sample_spherical(&mut rng, 0).is_empty());
    }

    #[test]
    fn student_t_marginal_quantile() {
        let mut rng = RandomStream::from_seed(99);
        let g = DensityGenerator::student_t(2, 3.0).unwrap();
        let draws = g.sample_spherical(&mut rng, 100_000);
        let mut xs: Vec<f64> = draws.iter().map(|z| z[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q95 = xs[(0.95 * xs.len() as f64) as usize];
        // Univariate t(3) 95th percentile is 2.353 (marginals of the
        // spherical t are t with the same dof).
        assert!((q95 - 2.353).abs() < 0.1, "95th percentile {q95}");
    }

    #[test]
    fn spherical_angle_is_uniform() {
        // Chi-square goodness of fit for the angular coordinate, 1% level.
        for gen in [
            DensityGenerator::normal(2),
            DensityGenerator::student_t(2, 3.0).unwrap(),
        ] {
            let mut rng = RandomStream::from_seed(7_031);
            let draws = gen.sample_spherical(&mut rng, 100_000);
            let bins = 18usize;
            let mut counts = vec![0u64; bins];
            for z in &draws {
                let ang = z[1].atan2(z[0]) + std::f64::consts::PI;
                let mut b = (ang / (2.0 * std::f64::consts::PI) * bins as f64) as usize;
                if b >= bins {
                    b = bins - 1;
                }
                counts[b] += 1;
            }
            let expect = draws.len() as f64 / bins as f64;
            let stat: f64 = counts
                .iter()
                .map(|&c| {
                    let d = c as f64 - expect;
                    d * d / expect
                })
                .sum();
            let crit = crate::special::chi2_quantile(0.99, bins - 1).unwrap();
            assert!(stat < crit, "angular GOF stat {stat} >= {crit}");
        }
    }
}
