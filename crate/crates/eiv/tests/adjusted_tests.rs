//! Behavior of the assembled test: ρ near 1 in large samples, agreement of
//! the block-wise assembly with an independently coded dense pipeline in the
//! scalar case, scale equivariance of LR, and degenerate-input handling.

mod common;

use common::generator_for;
use eiv::inference::{default_init, fit_mle, test_hypothesis, Hypothesis, TestOptions};
use eiv::likelihood::{observed_info, score, LikelihoodContext};
use eiv::linalg::{dot, Mat};
use eiv::model::Dataset;
use eiv::montecarlo::{generate_dataset, presets};
use eiv::skovgaard::{ancillary, sample_space_parts, Degeneracy};
use eiv::{DensityGenerator, Family, RandomStream};

fn simulate_ctx(
    kind: presets::CaseKind,
    family: Family,
    dof: Option<f64>,
    p: usize,
    n_k: usize,
    seed: u64,
) -> LikelihoodContext {
    let spec = presets::model_spec(kind, 1, p, n_k);
    let truth = presets::theta_true(&spec, kind);
    let gen = DensityGenerator::from_family(family, 3, dof).unwrap();
    let mut rng = RandomStream::substream(seed, 0);
    let data = generate_dataset(&spec, &gen, &truth, &mut rng);
    let t_dof = match family {
        Family::Normal => None,
        Family::StudentT => dof,
    };
    LikelihoodContext::new(spec, generator_for(1, t_dof), data).unwrap()
}

#[test]
fn rho_approaches_one_in_large_samples() {
    // First-order agreement of the adjusted and raw statistics under the
    // null: the correction factor tends to 1.
    let ctx = simulate_ctx(
        presets::CaseKind::LambdaXKnown,
        Family::Normal,
        None,
        5,
        4000,
        99,
    );
    let spec = presets::model_spec(presets::CaseKind::LambdaXKnown, 1, 5, 4000);
    let hypothesis = presets::slope_hypothesis(&spec, presets::CaseKind::LambdaXKnown, 2);
    let out = test_hypothesis(&ctx, &hypothesis, &TestOptions::default()).unwrap();
    assert_eq!(out.result.degenerate, Degeneracy::None);
    assert!(
        (out.result.rho - 1.0).abs() < 0.1,
        "rho = {} should be near 1 at n_k = 4000",
        out.result.rho
    );
}

/// Gauss-Jordan inverse, coded here so the dense reference pipeline shares
/// nothing with the library's LU/Cholesky kernels.
fn gj_inverse(a: &Mat) -> Mat {
    let n = a.rows();
    let mut work = a.clone();
    let mut inv = Mat::identity(n);
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if work[(r, col)].abs() > work[(pivot, col)].abs() {
                pivot = r;
            }
        }
        assert!(work[(pivot, col)].abs() > 0.0, "singular matrix in oracle");
        if pivot != col {
            for c in 0..n {
                let t = work[(col, c)];
                work[(col, c)] = work[(pivot, c)];
                work[(pivot, c)] = t;
                let t = inv[(col, c)];
                inv[(col, c)] = inv[(pivot, c)];
                inv[(pivot, c)] = t;
            }
        }
        let d = work[(col, col)];
        for c in 0..n {
            work[(col, c)] /= d;
            inv[(col, c)] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = work[(r, col)];
                if f != 0.0 {
                    for c in 0..n {
                        work[(r, c)] -= f * work[(col, c)];
                        inv[(r, c)] -= f * inv[(col, c)];
                    }
                }
            }
        }
    }
    inv
}

fn gj_det(a: &Mat) -> f64 {
    let n = a.rows();
    let mut work = a.clone();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if work[(r, col)].abs() > work[(pivot, col)].abs() {
                pivot = r;
            }
        }
        if work[(pivot, col)] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            det = -det;
            for c in 0..n {
                let t = work[(col, c)];
                work[(col, c)] = work[(pivot, c)];
                work[(pivot, c)] = t;
            }
        }
        det *= work[(col, col)];
        let d = work[(col, col)];
        for r in (col + 1)..n {
            let f = work[(r, col)] / d;
            for c in col..n {
                work[(r, c)] -= f * work[(col, c)];
            }
        }
    }
    det
}

#[test]
fn scalar_case_matches_dense_reference_pipeline() {
    // q = 1, l = 1, p = 1: the block machinery against a straight dense
    // transliteration of ρ with Gauss-Jordan elimination.
    let ctx = simulate_ctx(
        presets::CaseKind::LambdaXKnown,
        Family::Normal,
        None,
        1,
        40,
        1234,
    );
    let hypothesis = Hypothesis::new(&ctx.spec, vec![(0, 0.0)]).unwrap();
    let out = test_hypothesis(&ctx, &hypothesis, &TestOptions::default()).unwrap();
    assert_eq!(out.result.degenerate, Degeneracy::None);

    let theta_hat = &out.full.theta;
    let theta_tilde = &out.restricted.theta;
    let lr = out.result.lr;
    let q = 1.0f64;

    let anc = ancillary(&ctx, theta_hat).unwrap();
    let j_hat = observed_info(&ctx, theta_hat).unwrap().to_dense();
    let j_tilde = observed_info(&ctx, theta_tilde).unwrap().to_dense();
    let u_tilde = score(&ctx, theta_tilde).unwrap();
    let parts = sample_space_parts(&ctx, &anc, theta_hat, theta_tilde).unwrap();
    let u_prime = parts.u_prime_tilde.to_dense();
    let breve = parts.j_breve.to_dense();
    let nuisance = hypothesis.nuisance_mask(ctx.spec.total_params());

    let j_tilde_nn = j_tilde.select(&nuisance);
    let breve_nn = breve.select(&nuisance);
    let breve_inv = gj_inverse(&breve);
    let u_prime_inv = gj_inverse(&u_prime);
    let d_ell: Vec<f64> = parts
        .ell_prime_hat
        .iter()
        .zip(&parts.ell_prime_tilde)
        .map(|(a, b)| a - b)
        .collect();

    let quad = dot(&u_tilde, &breve_inv.matvec(&u_tilde));
    let q_scalar = dot(&d_ell, &u_prime_inv.matvec(&u_tilde));
    let rho_dense = gj_det(&j_hat).sqrt() / gj_det(&u_prime).abs() * gj_det(&j_tilde_nn).sqrt()
        / gj_det(&breve_nn).sqrt()
        * gj_det(&breve).sqrt()
        * quad.powf(q / 2.0)
        / (lr.powf(q / 2.0 - 1.0) * q_scalar);

    assert!(
        (out.result.rho - rho_dense).abs() < 1e-8 * rho_dense.abs().max(1.0),
        "blockwise rho {} vs dense {}",
        out.result.rho,
        rho_dense
    );

    // And the adjusted statistic recomputed from the dense ρ agrees.
    let lr_star_dense = lr * (1.0 - rho_dense.ln() / lr).powi(2);
    assert!((out.result.lr_star - lr_star_dense).abs() < 1e-8 * lr_star_dense.max(1.0));
}

#[test]
fn lr_is_scale_equivariant_through_the_fits() {
    let ctx = simulate_ctx(
        presets::CaseKind::LambdaEKnown,
        Family::Normal,
        None,
        3,
        25,
        777,
    );
    let spec = ctx.spec.clone();
    let hypothesis = presets::slope_hypothesis(&spec, presets::CaseKind::LambdaEKnown, 2);
    let base = test_hypothesis(&ctx, &hypothesis, &TestOptions::default()).unwrap();

    let c = 2.0;
    let scaled_groups: Vec<Mat> = ctx
        .data
        .groups()
        .iter()
        .map(|g| {
            let mut m = g.clone();
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    m[(i, j)] *= c;
                }
            }
            m
        })
        .collect();
    let scaled = Dataset::new(&spec, scaled_groups).unwrap();
    let ctx_scaled = LikelihoodContext::new(spec, ctx.generator, scaled).unwrap();
    let out = test_hypothesis(&ctx_scaled, &hypothesis, &TestOptions::default()).unwrap();

    assert!(
        (out.result.lr - base.result.lr).abs() < 1e-6 * (1.0 + base.result.lr),
        "LR {} vs {} after scaling",
        out.result.lr,
        base.result.lr
    );
}

#[test]
fn restricted_equal_full_is_reported_tiny() {
    // A hypothesis that already holds at the full MLE: fix a coordinate to
    // its fitted value. LR collapses and the fallback kicks in.
    let ctx = simulate_ctx(
        presets::CaseKind::LambdaXKnown,
        Family::Normal,
        None,
        2,
        20,
        31,
    );
    let init = default_init(&ctx).unwrap();
    let full = fit_mle(&ctx, &init, None, 0).unwrap();
    let beta_hat = full.theta.values()[0];
    let hypothesis = Hypothesis::new(&ctx.spec, vec![(0, beta_hat)]).unwrap();
    let out = test_hypothesis(&ctx, &hypothesis, &TestOptions::default()).unwrap();
    assert_eq!(out.result.degenerate, Degeneracy::TinyLr);
    assert!(out.result.lr.abs() < 1e-8);
    assert_eq!(out.result.lr_star, out.result.lr);
    assert_eq!(out.result.lr_star_star, out.result.lr);
    assert!(out.result.p_lr > 0.999);
    assert!(out.result.p_star > 0.999);
    assert!(!out.result.lr.is_nan() && !out.result.rho.is_nan());
}
