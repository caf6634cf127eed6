//! The discretised action on a fixed time grid with fixed endpoints, its
//! exact gradient with respect to the interior nodes, and the
//! force-balance residual used as the Euler–Lagrange surrogate.

use crate::potential::{thomas, PotentialParams};
use crate::quad::{GL4_NODES, GL4_WEIGHTS};
use crate::vecops::norm;

/// Fixed-grid action problem. Variables are the interior nodes, flattened.
pub struct DiscreteAction<'a> {
    pub params: &'a PotentialParams,
    pub times: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub barrier_radius: f64,
    pub barrier_weight: f64,
    dim: usize,
}

impl<'a> DiscreteAction<'a> {
    pub fn new(params: &'a PotentialParams, times: Vec<f64>, start: Vec<f64>, end: Vec<f64>, barrier_radius: f64) -> Self {
        let dim = start.len();
        Self {
            params,
            times,
            start,
            end,
            barrier_radius,
            barrier_weight: 1.0,
            dim,
        }
    }

    pub fn with_barrier_weight(mut self, w: f64) -> Self {
        self.barrier_weight = w;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        (self.times.len() - 2) * self.dim
    }

    /// Full node array `[start, interior…, end]`.
    pub fn full_nodes(&self, interior: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(interior.len() + 2 * self.dim);
        out.extend_from_slice(&self.start);
        out.extend_from_slice(interior);
        out.extend_from_slice(&self.end);
        out
    }

    fn node<'b>(&self, full: &'b [f64], k: usize) -> &'b [f64] {
        &full[k * self.dim..(k + 1) * self.dim]
    }

    /// Kinetic part `K = Σ ½|Δx|²/Δt` and potential part `P = Σ Δt·mean U`.
    pub fn parts(&self, interior: &[f64]) -> (f64, f64) {
        let full = self.full_nodes(interior);
        let d = self.dim;
        let mut y = vec![0.0; d];
        let (mut kin, mut pot) = (0.0, 0.0);
        for k in 0..self.segments() {
            let dt = self.times[k + 1] - self.times[k];
            let (a, b) = (self.node(&full, k), self.node(&full, k + 1));
            let mut dx2 = 0.0;
            for i in 0..d {
                dx2 += (b[i] - a[i]).powi(2);
            }
            kin += 0.5 * dx2 / dt;
            for (c, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                for i in 0..d {
                    y[i] = a[i] + c * (b[i] - a[i]);
                }
                pot += dt * w * self.params.value(&y);
            }
        }
        (kin, pot)
    }

    fn barrier(&self, r: f64) -> (f64, f64) {
        // value and derivative in r of w·ln(ρ/r)²
        if r >= self.barrier_radius || self.barrier_weight == 0.0 {
            return (0.0, 0.0);
        }
        let l = (self.barrier_radius / r).ln();
        (self.barrier_weight * l * l, -2.0 * self.barrier_weight * l / r)
    }

    /// Objective (action plus barrier) and its gradient.
    pub fn value_grad(&self, interior: &[f64], grad: &mut [f64]) -> f64 {
        let full = self.full_nodes(interior);
        let d = self.dim;
        let nseg = self.segments();
        let mut gfull = vec![0.0; full.len()];
        let mut y = vec![0.0; d];
        let mut gy = vec![0.0; d];
        let mut total = 0.0;
        for k in 0..nseg {
            let dt = self.times[k + 1] - self.times[k];
            let (a, b) = (self.node(&full, k), self.node(&full, k + 1));
            for i in 0..d {
                let v = (b[i] - a[i]) / dt;
                total += 0.5 * v * v * dt;
                gfull[k * d + i] -= v;
                gfull[(k + 1) * d + i] += v;
            }
            for (c, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                for i in 0..d {
                    y[i] = a[i] + c * (b[i] - a[i]);
                }
                total += dt * w * self.params.value(&y);
                self.params.grad_into(&y, &mut gy);
                for i in 0..d {
                    gfull[k * d + i] += dt * w * (1.0 - c) * gy[i];
                    gfull[(k + 1) * d + i] += dt * w * c * gy[i];
                }
            }
        }
        for k in 1..nseg {
            let x = self.node(&full, k);
            let r = norm(x);
            let (b, db) = self.barrier(r);
            if b != 0.0 {
                let wt = 0.5 * (self.times[k + 1] - self.times[k - 1]);
                total += wt * b;
                for i in 0..d {
                    gfull[k * d + i] += wt * db * x[i] / r;
                }
            }
        }
        grad.copy_from_slice(&gfull[d..full.len() - d]);
        total
    }

    /// Largest node force imbalance relative to the local force scale.
    ///
    /// At node `k` the discrete Euler–Lagrange equation balances the
    /// velocity jump `v_k − v_{k−1}` against the averaged force; the scale is
    /// the sum of their magnitudes.
    pub fn el_residual(&self, interior: &[f64]) -> f64 {
        let mut g = vec![0.0; interior.len()];
        let me = DiscreteAction {
            params: self.params,
            times: self.times.clone(),
            start: self.start.clone(),
            end: self.end.clone(),
            barrier_radius: self.barrier_radius,
            barrier_weight: 0.0,
            dim: self.dim,
        };
        me.value_grad(interior, &mut g);
        let full = self.full_nodes(interior);
        let d = self.dim;
        let mut worst: f64 = 0.0;
        let mut gu = vec![0.0; d];
        for k in 1..self.segments() {
            let (a, x, b) = (self.node(&full, k - 1), self.node(&full, k), self.node(&full, k + 1));
            let dt0 = self.times[k] - self.times[k - 1];
            let dt1 = self.times[k + 1] - self.times[k];
            let mut jump2 = 0.0;
            for i in 0..d {
                jump2 += ((b[i] - x[i]) / dt1 - (x[i] - a[i]) / dt0).powi(2);
            }
            self.params.grad_into(x, &mut gu);
            let scale = jump2.sqrt() + 0.5 * (dt0 + dt1) * norm(&gu);
            let gk = norm(&g[(k - 1) * d..k * d]);
            if scale > 0.0 {
                worst = worst.max(gk / scale);
            }
        }
        worst
    }

    /// Applies the inverse of the kinetic Hessian (block tridiagonal, one
    /// block per coordinate) to `g`.
    pub fn kinetic_solve(&self, g: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let m = self.times.len() - 2;
        let inv: Vec<f64> = self.times.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect();
        let diag: Vec<f64> = (0..m).map(|j| inv[j] + inv[j + 1]).collect();
        let off: Vec<f64> = (0..m).map(|j| -inv[j + 1]).collect();
        let sub: Vec<f64> = (0..m).map(|j| if j == 0 { 0.0 } else { -inv[j] }).collect();
        let mut out = vec![0.0; g.len()];
        let mut rhs = vec![0.0; m];
        for i in 0..d {
            for j in 0..m {
                rhs[j] = g[j * d + i];
            }
            let x = thomas(&sub, &diag, &off, &rhs);
            for j in 0..m {
                out[j * d + i] = x[j];
            }
        }
        out
    }

    /// Closest approach to the origin over nodes and straight segments.
    pub fn min_radius(&self, interior: &[f64]) -> f64 {
        let full = self.full_nodes(interior);
        let d = self.dim;
        let mut best = f64::INFINITY;
        for k in 0..self.segments() {
            let (a, b) = (self.node(&full, k), self.node(&full, k + 1));
            let mut ab = 0.0;
            let mut bb = 0.0;
            for i in 0..d {
                let dx = b[i] - a[i];
                ab += a[i] * dx;
                bb += dx * dx;
            }
            let u = if bb > 0.0 { (-ab / bb).clamp(0.0, 1.0) } else { 0.0 };
            let r2: f64 = (0..d).map(|i| (a[i] + u * (b[i] - a[i])).powi(2)).sum();
            best = best.min(r2.sqrt());
        }
        best
    }
}
