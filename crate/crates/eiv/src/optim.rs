//! BFGS minimizer with a strong Wolfe line search.
//!
//! The objective may fail to evaluate (e.g. a dispersion matrix loses
//! positive definiteness under overflow); failures are treated as rejected
//! steps, never as fatal errors.

pub(crate) struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 60;

/// Minimize f over x starting at x0. `eval` returns (value, gradient) or
/// None when the point is not evaluable. Convergence is declared when
/// ‖grad‖∞ ≤ tol(value).
pub(crate) fn minimize<F, T>(eval: F, x0: &[f64], max_iter: usize, tol: T) -> BfgsOutcome
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
    T: Fn(f64) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = match eval(&x) {
        Some(v) => v,
        None => {
            return BfgsOutcome {
                x,
                value: f64::INFINITY,
                grad: vec![f64::INFINITY; n],
                iterations: 0,
                converged: false,
            }
        }
    };

    // Inverse Hessian approximation, reset to identity on failed searches.
    let mut h_inv = identity(n);
    let mut iterations = 0;
    let mut resets = 0;

    while iterations < max_iter {
        if inf_norm(&g) <= tol(f) {
            return BfgsOutcome {
                x,
                value: f,
                grad: g,
                iterations,
                converged: true,
            };
        }
        iterations += 1;

        let mut dir = neg_matvec(&h_inv, &g);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) || !slope.is_finite() {
            // Curvature information went bad; fall back to steepest descent.
            h_inv = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
            if !(slope < 0.0) {
                break;
            }
        }

        match wolfe_search(&eval, &x, &dir, f, slope) {
            Some((alpha, fx, gx)) => {
                let step: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
                let y: Vec<f64> = gx.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&step, &y);
                let s_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if sy > 1e-10 * s_norm * y_norm {
                    bfgs_update(&mut h_inv, &step, &y, sy);
                }
                for (xi, si) in x.iter_mut().zip(&step) {
                    *xi += si;
                }
                f = fx;
                g = gx;
            }
            None => {
                if resets == 0 {
                    h_inv = identity(n);
                    resets += 1;
                    continue;
                }
                break;
            }
        }
    }

    let converged = inf_norm(&g) <= tol(f);
    BfgsOutcome {
        x,
        value: f,
        grad: g,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn neg_matvec(h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = &h[i * n..(i + 1) * n];
        out[i] = -dot(row, g);
    }
    out
}

/// H ← (I - ρ s y')H(I - ρ y s') + ρ s s' with ρ = 1/(y's).
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    // hy = H y
    let mut hy = vec![0.0; n];
    for i in 0..n {
        hy[i] = dot(&h[i * n..(i + 1) * n], y);
    }
    let yhy = dot(y, &hy);
    // H ← H - ρ(s hy' + hy s') + ρ²(y'Hy) s s' + ρ s s'
    let c = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + c * s[i] * s[j];
        }
    }
}

/// Strong Wolfe line search (bracket then zoom). Returns (α, f, g) at an
/// acceptable point, or None if no acceptable step was found.
fn wolfe_search<F>(
    eval: &F,
    x: &[f64],
    dir: &[f64],
    f0: f64,
    slope0: f64,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let evals = std::cell::Cell::new(0usize);
    let phi = |alpha: f64| -> Option<(f64, f64, Vec<f64>)> {
        evals.set(evals.get() + 1);
        let pt: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        eval(&pt).map(|(f, g)| {
            let d = dot(&g, dir);
            (f, d, g)
        })
    };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = slope0;
    let mut alpha = 1.0;
    let mut lo_state: Option<(f64, f64, f64)> = None; // (alpha_lo, f_lo, d_lo)
    let mut hi_state: Option<(f64, f64)> = None; // (alpha_hi, f_hi)

    for _ in 0..20 {
        if evals.get() > MAX_LINE_EVALS {
            return None;
        }
        match phi(alpha) {
            None => {
                // Not evaluable: bracket between the last good point and here.
                lo_state = Some((alpha_prev, f_prev, d_prev));
                hi_state = Some((alpha, f64::INFINITY));
                break;
            }
            Some((f, d, g)) => {
                if f > f0 + C1 * alpha * slope0 || (alpha_prev > 0.0 && f >= f_prev) {
                    lo_state = Some((alpha_prev, f_prev, d_prev));
                    hi_state = Some((alpha, f));
                    break;
                }
                if d.abs() <= -C2 * slope0 {
                    return Some((alpha, f, g));
                }
                if d >= 0.0 {
                    lo_state = Some((alpha, f, d));
                    hi_state = Some((alpha_prev, f_prev));
                    break;
                }
                alpha_prev = alpha;
                f_prev = f;
                d_prev = d;
                alpha *= 2.0;
            }
        }
    }

    let (mut lo, mut f_lo, mut d_lo) = lo_state?;
    let (mut hi, mut f_hi) = hi_state?;

    // Zoom.
    for _ in 0..MAX_LINE_EVALS {
        if evals.get() > MAX_LINE_EVALS {
            return None;
        }
        let width = hi - lo;
        if width.abs() < 1e-16 * (1.0 + lo.abs()) {
            return None;
        }
        // Quadratic interpolation through (lo, f_lo, d_lo) and f_hi, with a
        // bisection safeguard.
        let mut trial = if f_hi.is_finite() {
            let denom = 2.0 * (f_hi - f_lo - d_lo * width);
            if denom.abs() > 1e-300 {
                lo - d_lo * width * width / denom
            } else {
                lo + 0.5 * width
            }
        } else {
            lo + 0.5 * width
        };
        let lo_end = lo + 0.1 * width;
        let hi_end = lo + 0.9 * width;
        let (a_min, a_max) = if lo_end < hi_end {
            (lo_end, hi_end)
        } else {
            (hi_end, lo_end)
        };
        if !(trial > a_min && trial < a_max) || !trial.is_finite() {
            trial = lo + 0.5 * width;
        }
        match phi(trial) {
            None => {
                hi = trial;
                f_hi = f64::INFINITY;
            }
            Some((f, d, g)) => {
                if f > f0 + C1 * trial * slope0 || f >= f_lo {
                    hi = trial;
                    f_hi = f;
                } else {
                    if d.abs() <= -C2 * slope0 {
                        return Some((trial, f, g));
                    }
                    if d * width >= 0.0 {
                        hi = lo;
                        f_hi = f_lo;
                    }
                    lo = trial;
                    f_lo = f;
                    d_lo = d;
                }
            }
        }
    }
    None
}
