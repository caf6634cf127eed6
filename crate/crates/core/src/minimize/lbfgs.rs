//! Limited-memory BFGS with a user-supplied initial inverse Hessian and a
//! backtracking Armijo line search that can veto trial points.

use std::collections::VecDeque;

use crate::vecops::dot;

pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once `stop(x)` returns true (checked every `check_every` iterations).
    pub check_every: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 12,
            max_iters: 2000,
            check_every: 5,
        }
    }
}

pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
    /// Line search could not make progress (roundoff floor or vetoed region).
    pub stalled: bool,
}

/// Minimises `f` starting at `x0`.
///
/// * `fg(x, g)` returns the value and fills the gradient;
/// * `precond(g)` applies the initial inverse Hessian;
/// * `admissible(x)` may reject a trial point (the step is then halved);
/// * `stop(x)` is the convergence test;
/// * `on_iter(x)` observes every accepted iterate.
pub fn minimize<FG, P, A, S, O>(
    mut fg: FG,
    precond: P,
    mut admissible: A,
    mut stop: S,
    mut on_iter: O,
    x0: Vec<f64>,
    cfg: &LbfgsConfig,
) -> LbfgsOutcome
where
    FG: FnMut(&[f64], &mut [f64]) -> f64,
    P: Fn(&[f64]) -> Vec<f64>,
    A: FnMut(&[f64]) -> bool,
    S: FnMut(&[f64]) -> bool,
    O: FnMut(&[f64]),
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut gnew = vec![0.0; n];
    let mut xnew = vec![0.0; n];
    let mut stalls = 0;
    if n == 0 || stop(&x) {
        return LbfgsOutcome { x, value: f, iters: 0, converged: true, stalled: false };
    }
    for it in 0..cfg.max_iters {
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let mut r = precond(&q);
        if let Some((s, y, _)) = hist.back() {
            let hy = precond(y);
            let gamma = dot(s, y) / dot(y, &hy);
            if gamma.is_finite() && gamma > 0.0 {
                for v in r.iter_mut() {
                    *v *= gamma;
                }
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            for i in 0..n {
                r[i] += s[i] * (a - b);
            }
        }
        let mut dir: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = precond(&g).iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
            if !(slope < 0.0) {
                return LbfgsOutcome { x, value: f, iters: it, converged: false, stalled: true };
            }
        }
        // Backtracking Armijo.
        let mut step = 1.0;
        let mut accepted = false;
        let mut fnew = f;
        for _ in 0..60 {
            for i in 0..n {
                xnew[i] = x[i] + step * dir[i];
            }
            if admissible(&xnew) {
                fnew = fg(&xnew, &mut gnew);
                if fnew.is_finite() && fnew <= f + 1e-4 * step * slope {
                    accepted = true;
                    break;
                }
                // Once the decrease drops below the roundoff of f, fall back
                // on the approximate Wolfe test of Hager and Zhang, which
                // only looks at directional derivatives.
                if fnew.is_finite() && fnew <= f + 1e-10 * f.abs() {
                    let dslope = dot(&gnew, &dir);
                    if dslope <= (2.0 * 1e-4 - 1.0) * slope && dslope >= 0.9 * slope {
                        accepted = true;
                        break;
                    }
                }
                if fnew.is_finite() && fnew > f {
                    // quadratic interpolation of the step
                    let denom = 2.0 * (fnew - f - step * slope);
                    let trial = -slope * step * step / denom;
                    step = trial.clamp(0.1 * step, 0.5 * step);
                    continue;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            if hist.is_empty() {
                stalls += 1;
            }
            hist.clear();
            if stalls >= 2 {
                let converged = stop(&x);
                return LbfgsOutcome { x, value: f, iters: it, converged, stalled: true };
            }
            continue;
        }
        stalls = 0;
        let s: Vec<f64> = (0..n).map(|i| xnew[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gnew[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut xnew);
        std::mem::swap(&mut g, &mut gnew);
        let decrease = f - fnew;
        f = fnew;
        on_iter(&x);
        if (it + 1) % cfg.check_every == 0 || decrease <= 1e-15 * f.abs() && decrease >= 0.0 {
            if stop(&x) {
                return LbfgsOutcome { x, value: f, iters: it + 1, converged: true, stalled: false };
            }
        }
    }
    let converged = stop(&x);
    LbfgsOutcome { x, value: f, iters: cfg.max_iters, converged, stalled: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let out = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            |g| g.to_vec(),
            |_| true,
            |x| ((x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2)).sqrt() < 1e-8,
            |_| {},
            vec![-1.2, 1.0],
            &LbfgsConfig { check_every: 1, ..Default::default() },
        );
        assert!(out.converged, "iters {}", out.iters);
    }

    #[test]
    fn veto_keeps_iterates_admissible() {
        // minimise (x-3)² subject to x ≤ 2 enforced by veto
        let out = minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 3.0);
                (x[0] - 3.0).powi(2)
            },
            |g| g.to_vec(),
            |x| x[0] <= 2.0,
            |_| false,
            |x| assert!(x[0] <= 2.0),
            vec![0.0],
            &LbfgsConfig { max_iters: 100, ..Default::default() },
        );
        assert!(out.x[0] <= 2.0 && out.x[0] > 1.9);
    }
}
