//! Unconstrained minimizers used by the likelihood fit.

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Stopping rule shared by both minimizers.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Relative change in the objective between iterations.
    pub rel_f: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel_f: 1e-9, max_iter: 500 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with a backtracking Armijo line search.
///
/// `fg` returns the objective and writes the gradient into its second
/// argument. Returns `None` if the starting point is not finite.
pub fn bfgs(
    mut fg: impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: &[f64],
    tol: Tolerance,
) -> Option<Minimum> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // Inverse Hessian approximation, row-major.
    let mut h = identity(n);
    let mut first = true;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    for iter in 1..=tol.max_iter {
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // Not a descent direction: restart from steepest descent.
            h = identity(n);
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = dot(&dir, &g);
        }
        if slope.abs() < 1e-300 {
            return Some(Minimum { x, f, iterations: iter, converged: true });
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_new = fg(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * step * slope {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            // Line search failed: converged if the gradient is negligible.
            let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            return Some(Minimum { x, f, iterations: iter, converged: gnorm < 1e-6 * (1.0 + f.abs()) });
        };

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        let done = (f - f_new).abs() <= tol.rel_f * f.abs().max(1e-10);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        let f_old = f;
        f = f_new;
        if done && f <= f_old {
            return Some(Minimum { x, f, iterations: iter, converged: true });
        }
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            update_inverse_hessian(&mut h, &s, &y, sy);
        } else {
            h = identity(n);
            first = true;
        }
    }
    Some(Minimum { x, f, iterations: tol.max_iter, converged: false })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `H <- (I - r s y^T) H (I - r y s^T) + r s s^T`, `r = 1 / (s.y)`.
fn update_inverse_hessian(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += (1.0 + r * yhy) * r * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Nelder-Mead simplex search with standard coefficients.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], tol: Tolerance) -> Minimum {
    let n = x0.len();
    let eval = |f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(&mut f, x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += 0.1 * x[i].abs().max(1.0);
        let v = eval(&mut f, &x);
        simplex.push((x, v));
    }
    let max_iter = tol.max_iter * 20;
    for iter in 1..=max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= tol.rel_f * best.abs().max(1e-10) {
            let (x, f) = simplex.swap_remove(0);
            return Minimum { x, f, iterations: iter, converged: true };
        }
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let towards = |t: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j])).collect()
        };
        let xr = towards(-1.0);
        let fr = eval(&mut f, &xr);
        if fr < simplex[0].1 {
            let xe = towards(-2.0);
            let fe = eval(&mut f, &xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = towards(-0.5);
                let fc = eval(&mut f, &xc);
                (xc, fc)
            } else {
                let xc = towards(0.5);
                let fc = eval(&mut f, &xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        p.0[j] = best[j] + 0.5 * (p.0[j] - best[j]);
                    }
                    p.1 = eval(&mut f, &p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum { x, f, iterations: max_iter, converged: false }
}
