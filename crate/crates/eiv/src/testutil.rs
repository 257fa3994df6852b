//! Shared fixtures for the unit tests.

use crate::elliptical::DensityGenerator;
use crate::linalg::Mat;
use crate::model::{Case, Dataset, ModelSpec, ParamVector};
use crate::rng::RandomStream;

pub(crate) fn spec_case(case: u8, l: usize, p: usize, n: usize) -> ModelSpec {
    let c = match case {
        1 => Case::LambdaXKnown {
            lambda_x: vec![3.0; p],
        },
        2 => Case::LambdaEKnown {
            lambda_e: vec![vec![4.0; l]; p],
        },
        _ => Case::InterceptKnown {
            alpha: vec![vec![0.0; l]; p],
        },
    };
    ModelSpec::new(l, p, vec![n; p], c).unwrap()
}

/// Random interior block: slopes/means in [-2, 2], variances in [0.3, 2.3].
pub(crate) fn random_block(spec: &ModelSpec, rng: &mut RandomStream) -> Vec<f64> {
    (0..spec.params_per_group())
        .map(|i| {
            if spec.is_variance(i) {
                0.3 + 2.0 * rng.uniform()
            } else {
                4.0 * rng.uniform() - 2.0
            }
        })
        .collect()
}

pub(crate) fn random_theta(spec: &ModelSpec, rng: &mut RandomStream) -> ParamVector {
    let mut vals = Vec::new();
    for _ in 0..spec.p {
        vals.extend(random_block(spec, rng));
    }
    ParamVector::new(spec, vals).unwrap()
}

pub(crate) fn random_dataset(spec: &ModelSpec, rng: &mut RandomStream) -> Dataset {
    let groups = spec
        .group_sizes
        .iter()
        .map(|&n| {
            let mut m = Mat::zeros(n, spec.l + 1);
            for j in 0..n {
                for a in 0..=spec.l {
                    m[(j, a)] = 2.0 * rng.standard_normal();
                }
            }
            m
        })
        .collect();
    Dataset::new(spec, groups).unwrap()
}

pub(crate) fn generator_for(l: usize, t_dof: Option<f64>) -> DensityGenerator {
    match t_dof {
        None => DensityGenerator::normal(l + 1),
        Some(nu) => DensityGenerator::student_t(l + 1, nu).unwrap(),
    }
}

/// Closed-form 2x2 / 3x3 inverse and determinant, independent of the
/// Cholesky path used by the implementation.
pub(crate) fn direct_inv_det(m: &Mat) -> (Mat, f64) {
    match m.rows() {
        2 => {
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let inv = Mat::from_rows(&[
                &[m[(1, 1)] / det, -m[(0, 1)] / det],
                &[-m[(1, 0)] / det, m[(0, 0)] / det],
            ]);
            (inv, det)
        }
        3 => {
            let a = m[(0, 0)];
            let b = m[(0, 1)];
            let c = m[(0, 2)];
            let d = m[(1, 0)];
            let e = m[(1, 1)];
            let f = m[(1, 2)];
            let g = m[(2, 0)];
            let h = m[(2, 1)];
            let i = m[(2, 2)];
            let det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
            let cof = Mat::from_rows(&[
                &[e * i - f * h, c * h - b * i, b * f - c * e],
                &[f * g - d * i, a * i - c * g, c * d - a * f],
                &[d * h - e * g, b * g - a * h, a * e - b * d],
            ]);
            (cof.scaled(1.0 / det), det)
        }
        _ => panic!("oracle supports 2x2 and 3x3 only"),
    }
}
