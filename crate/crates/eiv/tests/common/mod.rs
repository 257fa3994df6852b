//! Shared helpers for the integration suites.
#![allow(dead_code)]

use eiv::linalg::Mat;
use eiv::model::{Case, Dataset, ModelSpec, ParamVector};
use eiv::{DensityGenerator, RandomStream};

pub fn spec_case(case: u8, l: usize, p: usize, n: usize) -> ModelSpec {
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

pub fn generator_for(l: usize, t_dof: Option<f64>) -> DensityGenerator {
    match t_dof {
        None => DensityGenerator::normal(l + 1),
        Some(nu) => DensityGenerator::student_t(l + 1, nu).unwrap(),
    }
}

/// Random interior parameter point: slopes/means in [-2, 2], variances in
/// [0.3, 2.3].
pub fn random_theta(spec: &ModelSpec, rng: &mut RandomStream) -> ParamVector {
    let s = spec.params_per_group();
    let mut vals = Vec::with_capacity(spec.total_params());
    for _ in 0..spec.p {
        for i in 0..s {
            vals.push(if spec.is_variance(i) {
                0.3 + 2.0 * rng.uniform()
            } else {
                4.0 * rng.uniform() - 2.0
            });
        }
    }
    ParamVector::new(spec, vals).unwrap()
}

pub fn random_dataset(spec: &ModelSpec, rng: &mut RandomStream) -> Dataset {
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
