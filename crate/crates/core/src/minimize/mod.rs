//! Direct minimisation of the action over discrete paths.
//!
//! * [`minimize_fixed_time`]: endpoints and duration fixed.
//! * [`free_time_minimize`]: duration free, energy `h` prescribed. The
//!   outer problem is solved through its envelope derivative
//!   `f′(T) = h − E(T)`, where `E = (K − P)/T` is the energy of the discrete
//!   minimiser (`K` kinetic and `P` potential integrals). This identity is
//!   exact for the discrete functional under uniform time scaling.
//! * [`minimize_constrained`]: planar free-time problem restricted to a
//!   winding class.
//!
//! Restarts run in parallel and are reduced deterministically: lowest
//! value, then lowest residual, then lowest restart index.

pub mod discrete;
pub mod lbfgs;
pub mod mesh;

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numfmt::g6;
use crate::paths::{self, Path, TopologicalClass};
use crate::potential::{PotentialParams, SphereShape};
use crate::quad::{GL4_NODES, GL4_WEIGHTS};
use crate::vecops::{dist, dot, norm};
use discrete::DiscreteAction;
use lbfgs::LbfgsConfig;

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Number of path segments.
    pub nodes: usize,
    /// L-BFGS iteration cap per inner solve.
    pub max_iters: usize,
    /// Target for the scaled force-balance residual.
    pub grad_tol: f64,
    /// Soft floor on node radii during the search.
    pub barrier_radius: f64,
    /// Additional randomly perturbed starts.
    pub restarts: usize,
    pub seed: u64,
    /// Tolerance on `|E − h|` for free-time results.
    pub energy_tol: f64,
    /// Grid regrading passes in free-time mode.
    pub remesh_passes: usize,
    /// Search range for the duration, as factors of the initial guess.
    pub t_range: (f64, f64),
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            nodes: 256,
            max_iters: 4000,
            grad_tol: 1e-8,
            barrier_radius: 1e-3,
            restarts: 3,
            seed: 0,
            energy_tol: 1e-4,
            remesh_passes: 2,
            t_range: (1e-3, 1e3),
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::InvalidParams(format!("nodes must be at least 8, got {}", self.nodes)));
        }
        if !(self.grad_tol > 0.0 && self.energy_tol > 0.0 && self.barrier_radius > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be positive".into()));
        }
        if !(self.t_range.0 > 0.0 && self.t_range.0 < 1.0 && self.t_range.1 > 1.0) {
            return Err(Error::InvalidParams("t_range must straddle 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub path: Path,
    /// `A` for fixed-time problems, `A_h` for free-time problems.
    pub value: f64,
    /// Sup-norm of the raw discrete gradient at exit.
    pub grad_norm: f64,
    /// `(K − P)/T` for free-time results.
    pub energy_of_path: Option<f64>,
    /// Largest per-segment deviation of `½|v|² − U` from the mean energy.
    pub energy_spread: f64,
    pub el_residual: f64,
    /// Closest approach to the origin (nodes and segments).
    pub min_radius: f64,
    pub collision_suspect: bool,
    /// Inner solve converged and, in free-time mode, the energy matches.
    pub converged: bool,
    pub iterations: usize,
    pub restart_index: usize,
    /// Iterates violating `max|ξ| ≤ √T‖ξ̇‖ + |p|` (always zero in exact arithmetic).
    pub coercivity_violations: usize,
    /// `(T, f(T))` pairs sampled by the outer search.
    pub f_samples: Vec<(f64, f64)>,
    pub class: Option<TopologicalClass>,
}

impl MinimizeResult {
    pub fn duration(&self) -> f64 {
        self.path.duration()
    }
}

impl fmt::Display for MinimizeResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "value = {}", g6(self.value))?;
        writeln!(f, "duration = {}", g6(self.duration()))?;
        if let Some(e) = self.energy_of_path {
            writeln!(f, "energy = {}", g6(e))?;
        }
        writeln!(f, "energy_spread = {}", g6(self.energy_spread))?;
        writeln!(f, "grad_norm = {}", g6(self.grad_norm))?;
        writeln!(f, "el_residual = {}", g6(self.el_residual))?;
        writeln!(f, "min_radius = {}", g6(self.min_radius))?;
        writeln!(f, "collision_suspect = {}", self.collision_suspect)?;
        writeln!(f, "converged = {}", self.converged)?;
        writeln!(f, "restart = {}", self.restart_index)?;
        if let Some(c) = &self.class {
            writeln!(f, "theta_minus = {}", g6(c.theta_minus))?;
            writeln!(f, "theta_plus = {}", g6(c.theta_plus))?;
        }
        Ok(())
    }
}

/// Winding requirement for planar problems with fixed endpoints: the total
/// lifted angle change must equal `delta`.
#[derive(Debug, Clone, Copy)]
struct Winding {
    delta: f64,
}

fn winding_of(full: &[f64]) -> Option<f64> {
    let mut total = 0.0;
    for w in full.chunks(2).collect::<Vec<_>>().windows(2) {
        let (a, b) = (w[0], w[1]);
        if norm(b) == 0.0 {
            return None;
        }
        let inc = paths::angle_increment(a, b);
        if inc.abs() >= PI - 1e-9 {
            return None;
        }
        total += inc;
    }
    Some(total)
}

struct Inner {
    interior: Vec<f64>,
    iters: usize,
    converged: bool,
    el: f64,
    kin: f64,
    pot: f64,
    violations: usize,
    grad_norm: f64,
}

fn inner_solve(
    params: &PotentialParams,
    times: &[f64],
    start: &[f64],
    end: &[f64],
    init: Vec<f64>,
    opts: &MinimizeOptions,
    tol: f64,
    winding: Option<Winding>,
) -> Inner {
    let prob = DiscreteAction::new(params, times.to_vec(), start.to_vec(), end.to_vec(), opts.barrier_radius);
    let t_span = times[times.len() - 1] - times[0];
    let p_norm = norm(start);
    let mut violations = 0usize;
    let out = lbfgs::minimize(
        |x, g| prob.value_grad(x, g),
        |g| prob.kinetic_solve(g),
        |x| match winding {
            Some(w) => {
                let full = prob.full_nodes(x);
                matches!(winding_of(&full), Some(d) if (d - w.delta).abs() < 1e-6)
            }
            None => true,
        },
        |x| prob.el_residual(x) <= tol,
        |x| {
            let (k, _) = prob.parts(x);
            let bound = (t_span * 2.0 * k).sqrt() + p_norm;
            let full = prob.full_nodes(x);
            let maxr = full.chunks(start.len()).map(norm).fold(0.0, f64::max);
            if maxr > bound * (1.0 + 1e-12) + 1e-12 {
                violations += 1;
            }
        },
        init,
        &LbfgsConfig {
            max_iters: opts.max_iters,
            ..Default::default()
        },
    );
    let el = prob.el_residual(&out.x);
    let (kin, pot) = prob.parts(&out.x);
    let mut g = vec![0.0; out.x.len()];
    let free = DiscreteAction::new(params, times.to_vec(), start.to_vec(), end.to_vec(), opts.barrier_radius).with_barrier_weight(0.0);
    free.value_grad(&out.x, &mut g);
    let grad_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Inner {
        interior: out.x,
        iters: out.iters,
        converged: el <= tol.max(1e-6),
        el,
        kin,
        pot,
        violations,
        grad_norm,
    }
}

fn flatten_interior(points: &[Vec<f64>]) -> Vec<f64> {
    points[1..points.len() - 1].concat()
}

fn points_of(start: &[f64], interior: &[f64], end: &[f64]) -> Vec<Vec<f64>> {
    let d = start.len();
    let mut pts = vec![start.to_vec()];
    pts.extend(interior.chunks(d).map(|c| c.to_vec()));
    pts.push(end.to_vec());
    pts
}

/// Per-segment energies `½|Δx/Δt|² − mean U`.
fn segment_energies(params: &PotentialParams, times: &[f64], pts: &[Vec<f64>]) -> Vec<f64> {
    let d = pts[0].len();
    let mut y = vec![0.0; d];
    (0..pts.len() - 1)
        .map(|k| {
            let dt = times[k + 1] - times[k];
            let (a, b) = (&pts[k], &pts[k + 1]);
            let v2 = a.iter().zip(b).map(|(x, z)| ((z - x) / dt).powi(2)).sum::<f64>();
            let mut u = 0.0;
            for (c, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                for i in 0..d {
                    y[i] = a[i] + c * (b[i] - a[i]);
                }
                u += w * params.value(&y);
            }
            0.5 * v2 - u
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    params: &PotentialParams,
    times: Vec<f64>,
    start: &[f64],
    end: &[f64],
    inner: &Inner,
    h: Option<f64>,
    opts: &MinimizeOptions,
    restart_index: usize,
    iterations: usize,
    f_samples: Vec<(f64, f64)>,
    violations: usize,
) -> Result<MinimizeResult> {
    let pts = points_of(start, &inner.interior, end);
    let t_span = times[times.len() - 1] - times[0];
    let path = Path::from_points(times.clone(), &pts)?;
    let value = match h {
        Some(h) => paths::action_h(params, &path, h)?,
        None => paths::action(params, &path)?,
    };
    let prob = DiscreteAction::new(params, times.clone(), start.to_vec(), end.to_vec(), opts.barrier_radius);
    let min_radius = prob.min_radius(&inner.interior);
    let energies = segment_energies(params, &times, &pts);
    let mean_e = (inner.kin - inner.pot) / t_span;
    let energy_spread = energies.iter().map(|e| (e - mean_e).abs()).fold(0.0, f64::max);
    let energy_of_path = h.map(|_| mean_e);
    let energy_ok = match h {
        Some(h) => (mean_e - h).abs() <= opts.energy_tol,
        None => true,
    };
    let class = if path.dim() == 2 { paths::winding_lift(&path).ok() } else { None };
    Ok(MinimizeResult {
        path,
        value,
        grad_norm: inner.grad_norm,
        energy_of_path,
        energy_spread,
        el_residual: inner.el,
        min_radius,
        collision_suspect: min_radius <= opts.barrier_radius,
        converged: inner.converged && energy_ok,
        iterations,
        restart_index,
        coercivity_violations: violations,
        f_samples,
        class,
    })
}

/// Deterministic reduction over restarts.
fn select_best(results: Vec<Result<MinimizeResult>>) -> Result<MinimizeResult> {
    let mut first_err = None;
    let mut best: Option<MinimizeResult> = None;
    for r in results {
        match r {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (r.value, r.el_residual, r.restart_index)
                            .partial_cmp(&(b.value, b.el_residual, b.restart_index))
                            == Some(std::cmp::Ordering::Less)
                            || (b.value.is_nan() && !r.value.is_nan())
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::SolverFailure("no restarts ran".into())))
}

fn perpendicular(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    if d == 1 {
        return vec![0.0];
    }
    // pick the axis least aligned with v and orthogonalise
    let j = (0..d).min_by(|a, b| v[*a].abs().total_cmp(&v[*b].abs())).unwrap();
    let mut e = vec![0.0; d];
    e[j] = 1.0;
    let n2 = dot(v, v);
    if n2 > 0.0 {
        let c = dot(&e, v) / n2;
        for i in 0..d {
            e[i] -= c * v[i];
        }
    }
    crate::vecops::normalized(&e)
}

/// Straight seed from `p` to `q` with `n` segments and a random smooth
/// perturbation for `index > 0`; nudged sideways if it would hit the origin.
fn straight_seed(p: &[f64], q: &[f64], n: usize, index: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = p.len();
    let diff: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let len = norm(&diff);
    let scale = len.max(0.5 * (norm(p) + norm(q)));
    let perp = perpendicular(&diff);
    let mut pts: Vec<Vec<f64>> = (0..=n).map(|k| crate::vecops::lerp(p, q, k as f64 / n as f64)).collect();
    let seg_min = {
        let ab = dot(p, &diff);
        let u = if len > 0.0 { (-ab / (len * len)).clamp(0.0, 1.0) } else { 0.0 };
        norm(&crate::vecops::lerp(p, q, u))
    };
    if seg_min < 1e-3 * scale {
        for (k, pt) in pts.iter_mut().enumerate() {
            let s = (PI * k as f64 / n as f64).sin();
            for i in 0..d {
                pt[i] += 0.1 * scale * s * perp[i];
            }
        }
    }
    if index > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64));
        let modes: Vec<Vec<f64>> = (1..=3)
            .map(|m| (0..d).map(|_| rng.gen_range(-1.0..1.0) * 0.25 * scale / m as f64).collect())
            .collect();
        for (k, pt) in pts.iter_mut().enumerate().take(n).skip(1) {
            let u = k as f64 / n as f64;
            for (m, a) in modes.iter().enumerate() {
                let s = (PI * (m + 1) as f64 * u).sin();
                for i in 0..d {
                    pt[i] += s * a[i];
                }
            }
        }
    }
    pts
}

fn check_endpoints(params: &PotentialParams, p: &[f64], q: &[f64]) -> Result<()> {
    let d = params.dim();
    if p.len() != d || q.len() != d {
        return Err(Error::InvalidParams(format!("endpoints must have {d} components")));
    }
    if p.iter().chain(q).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("non-finite endpoint".into()));
    }
    Ok(())
}

/// Minimises `A` over paths from `p` to `q` on `[0, T]` (uniform grid).
pub fn minimize_fixed_time(params: &PotentialParams, p: &[f64], q: &[f64], t: f64, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    opts.validate()?;
    check_endpoints(params, p, q)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("duration must be positive, got {t}")));
    }
    if norm(p) == 0.0 && norm(q) == 0.0 {
        return Err(Error::Domain("both endpoints at the origin".into()));
    }
    let n = opts.nodes;
    let times = Path::uniform_times(0.0, t, n);
    let results: Vec<Result<MinimizeResult>> = (0..=opts.restarts)
        .into_par_iter()
        .map(|idx| {
            let pts = straight_seed(p, q, n, idx, opts.seed);
            let inner = inner_solve(params, &times, p, q, flatten_interior(&pts), opts, opts.grad_tol, None);
            let (iters, viol) = (inner.iters, inner.violations);
            finish(params, times.clone(), p, q, &inner, None, opts, idx, iters, Vec::new(), viol)
        })
        .collect();
    select_best(results)
}

/// Seed for free-time problems: positions and normalised times in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct FreeSeed {
    pub points: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub duration: f64,
}

impl FreeSeed {
    /// Seed from an existing path (any node count; regraded to `n` segments).
    pub fn from_path(path: &Path, n: usize) -> FreeSeed {
        let t0 = path.t_start();
        let times: Vec<f64> = path.times().iter().map(|t| t - t0).collect();
        let (t, pts) = mesh::grade(&times, &path.points(), n, mesh::UNIFORM_SHARE);
        let dur = path.duration();
        FreeSeed {
            points: pts,
            tau: t.iter().map(|s| s / dur).collect(),
            duration: dur,
        }
    }

    /// Dense curve moving at `speed`, graded to `n` segments.
    pub fn from_curve(curve: &[Vec<f64>], speed: f64, n: usize) -> FreeSeed {
        let times = mesh::constant_speed_times(curve, speed);
        let dur = *times.last().unwrap();
        let (t, pts) = mesh::grade(&times, curve, n, mesh::UNIFORM_SHARE);
        FreeSeed {
            points: pts,
            tau: t.iter().map(|s| s / dur).collect(),
            duration: dur,
        }
    }
}

fn typical_speed(params: &PotentialParams, p: &[f64], q: &[f64], h: f64) -> f64 {
    let up = if norm(p) > 0.0 { params.value(p) } else { 0.0 };
    let uq = if norm(q) > 0.0 { params.value(q) } else { 0.0 };
    (2.0 * h + up + uq).sqrt()
}

/// Free-time search from a single seed.
fn free_time_core(
    params: &PotentialParams,
    h: f64,
    seed: FreeSeed,
    opts: &MinimizeOptions,
    winding: Option<Winding>,
    restart_index: usize,
) -> Result<MinimizeResult> {
    let n = seed.points.len() - 1;
    let start = seed.points[0].clone();
    let end = seed.points[n].clone();
    let mut tau = seed.tau;
    let mut interior = flatten_interior(&seed.points);
    let mut t_cur = seed.duration;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut iterations = 0usize;
    let mut violations = 0usize;
    let loose = (opts.grad_tol * 1e4).max(1e-5);
    let t_lo = seed.duration * opts.t_range.0;
    let t_hi = seed.duration * opts.t_range.1;

    let mut last: Option<Inner> = None;
    for pass in 0..=opts.remesh_passes {
        let mut eval = |t: f64, tol: f64, interior: &mut Vec<f64>, samples: &mut Vec<(f64, f64)>| -> (f64, Inner) {
            let times: Vec<f64> = tau.iter().map(|s| s * t).collect();
            let inner = inner_solve(params, &times, &start, &end, interior.clone(), opts, tol, winding);
            iterations += inner.iters;
            violations += inner.violations;
            interior.clone_from(&inner.interior);
            samples.push((t, inner.kin + inner.pot + h * t));
            (h - (inner.kin - inner.pot) / t, inner)
        };
        // Bracket the root of g(T) = h − E(T).
        let factor = if pass == 0 { 2.0 } else { 1.25 };
        // only the last pass needs fully converged inner solves
        let tight = if pass == opts.remesh_passes { opts.grad_tol } else { (opts.grad_tol * 100.0).max(1e-6).min(loose) };
        let (g0, _) = eval(t_cur, loose, &mut interior, &mut samples);
        let (mut ta, mut ga, mut tb, mut gb) = (t_cur, g0, t_cur, g0);
        let mut guard = 0;
        while ga.signum() == gb.signum() {
            guard += 1;
            let next = if g0 < 0.0 { tb * factor } else { ta / factor };
            if !(t_lo..=t_hi).contains(&next) || guard > 200 {
                return Err(Error::Bracket { t_lo, t_hi, samples });
            }
            let (g, _) = eval(next, loose, &mut interior, &mut samples);
            if g0 < 0.0 {
                ta = tb;
                ga = gb;
                tb = next;
                gb = g;
            } else {
                tb = ta;
                gb = ga;
                ta = next;
                ga = g;
            }
        }
        // Illinois regula falsi with tight inner solves.
        let mut side = 0i32;
        let mut best: Option<(f64, f64, Inner)> = None;
        for _ in 0..60 {
            let tm = ((ta * gb - tb * ga) / (gb - ga)).clamp(ta.min(tb), ta.max(tb));
            let (gm, inner) = eval(tm, tight, &mut interior, &mut samples);
            let done = gm.abs() <= 0.05 * opts.energy_tol || (tb - ta).abs() <= 1e-13 * tm;
            best = Some((tm, gm, inner));
            if done {
                break;
            }
            if gm.signum() == ga.signum() {
                ta = tm;
                ga = gm;
                if side == -1 {
                    gb *= 0.5;
                }
                side = -1;
            } else {
                tb = tm;
                gb = gm;
                if side == 1 {
                    ga *= 0.5;
                }
                side = 1;
            }
        }
        let (tm, _, inner) = best.expect("at least one root iteration");
        t_cur = tm;
        interior.clone_from(&inner.interior);
        if pass < opts.remesh_passes {
            let times: Vec<f64> = tau.iter().map(|s| s * t_cur).collect();
            let pts = points_of(&start, &interior, &end);
            let (nt, np) = mesh::grade(&times, &pts, n, mesh::UNIFORM_SHARE);
            let ok = match winding {
                Some(w) => matches!(winding_of(&np.concat()), Some(d) if (d - w.delta).abs() < 1e-6),
                None => true,
            };
            if ok {
                tau = nt.iter().map(|s| s / t_cur).collect();
                interior = flatten_interior(&np);
            }
        }
        last = Some(inner);
    }
    let inner = last.expect("at least one pass");
    let times: Vec<f64> = tau.iter().map(|s| s * t_cur).collect();
    finish(params, times, &start, &end, &inner, Some(h), opts, restart_index, iterations, samples, violations)
}

/// Minimises `A_h` over paths from `p` to `q` and over their duration.
pub fn free_time_minimize(params: &PotentialParams, p: &[f64], q: &[f64], h: f64, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    opts.validate()?;
    check_endpoints(params, p, q)?;
    if !(h > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {h}")));
    }
    if dist(p, q) == 0.0 {
        return Err(Error::Domain("endpoints coincide".into()));
    }
    let speed = typical_speed(params, p, q, h);
    let n = opts.nodes;
    let results: Vec<Result<MinimizeResult>> = (0..=opts.restarts)
        .into_par_iter()
        .map(|idx| {
            let dense = straight_seed(p, q, 4 * n, idx, opts.seed);
            let seed = FreeSeed::from_curve(&dense, speed, n);
            free_time_core(params, h, seed, opts, None, idx)
        })
        .collect();
    select_best(results)
}

/// Free-time minimisation from caller-supplied seeds (used for warm starts).
pub fn free_time_from_seeds(params: &PotentialParams, h: f64, seeds: Vec<FreeSeed>, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    opts.validate()?;
    if !(h > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {h}")));
    }
    let results: Vec<Result<MinimizeResult>> = seeds
        .into_par_iter()
        .enumerate()
        .map(|(idx, s)| free_time_core(params, h, s, opts, None, idx))
        .collect();
    select_best(results)
}

/// Which collision-exclusion case a planar Gutzwiller problem falls into,
/// after the reductions that preserve the potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionCase {
    /// `θ₋ ∈ [0, π]`, `θ₊ ∈ [−π, 2π]`.
    I,
    /// `θ₋ = 0`, `θ₊ ∈ [−2π, 2π]`.
    II,
    /// `θ₋ = π`, `θ₊ ∈ [−π, 3π]`.
    III,
}

/// Symmetry of the Gutzwiller plane applied to an angle pair: optional
/// reflection across the real axis, across the imaginary axis, time
/// reversal (swap of the ends), and a common shift by a multiple of `2π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleReduction {
    pub reflect_real: bool,
    pub reflect_imag: bool,
    pub swap: bool,
    pub shift: f64,
}

impl AngleReduction {
    pub fn apply(&self, theta_minus: f64, theta_plus: f64) -> (f64, f64) {
        let f = |mut t: f64| {
            if self.reflect_real {
                t = -t;
            }
            if self.reflect_imag {
                t = PI - t;
            }
            t
        };
        let (a, b) = (f(theta_minus), f(theta_plus));
        let (a, b) = if self.swap { (b, a) } else { (a, b) };
        (a + self.shift, b + self.shift)
    }

    /// Maps a point of the reduced problem back to the original plane.
    pub fn unapply_point(&self, x: &[f64]) -> Vec<f64> {
        let (mut a, mut b) = (x[0], x[1]);
        if self.reflect_imag {
            a = -a;
        }
        if self.reflect_real {
            b = -b;
        }
        vec![a, b]
    }
}

const ANGLE_EPS: f64 = 1e-12;

fn match_case(tm: f64, tp: f64) -> Option<ExclusionCase> {
    let inr = |x: f64, a: f64, b: f64| x >= a - ANGLE_EPS && x <= b + ANGLE_EPS;
    if inr(tm, 0.0, PI) && inr(tp, -PI, 2.0 * PI) {
        Some(ExclusionCase::I)
    } else if tm.abs() <= ANGLE_EPS && inr(tp, -2.0 * PI, 2.0 * PI) {
        Some(ExclusionCase::II)
    } else if (tm - PI).abs() <= ANGLE_EPS && inr(tp, -PI, 3.0 * PI) {
        Some(ExclusionCase::III)
    } else {
        None
    }
}

/// Finds a reduction bringing `(θ₋, θ₊)` into one of the exclusion cases.
pub fn exclusion_case(theta_minus: f64, theta_plus: f64) -> Option<(ExclusionCase, AngleReduction)> {
    for swap in [false, true] {
        for reflect_real in [false, true] {
            for reflect_imag in [false, true] {
                let base = AngleReduction { reflect_real, reflect_imag, swap, shift: 0.0 };
                let (a, _) = base.apply(theta_minus, theta_plus);
                let k = (-a / (2.0 * PI)).floor();
                for kk in [k, k + 1.0] {
                    let red = AngleReduction { shift: 2.0 * PI * kk, ..base };
                    let (a, b) = red.apply(theta_minus, theta_plus);
                    if let Some(c) = match_case(a, b) {
                        return Some((c, red));
                    }
                }
            }
        }
    }
    None
}

fn spiral_curve(r1: f64, theta_minus: f64, r2: f64, theta_plus: f64, rho0: f64, sharpness: f64, samples: usize) -> Vec<Vec<f64>> {
    let (l1, l2, l0) = (r1.ln(), r2.ln(), rho0.ln());
    let norm_tanh = (0.5 * sharpness).tanh();
    (0..=samples)
        .map(|k| {
            let u = k as f64 / samples as f64;
            let base = (1.0 - u) * l1 + u * l2;
            let dip = (l0 - 0.5 * (l1 + l2)).min(0.0);
            let lr = base + dip * (PI * u).sin().powi(2);
            let w = 0.5 * (1.0 + (sharpness * (u - 0.5)).tanh() / norm_tanh);
            let th = theta_minus + (theta_plus - theta_minus) * w;
            let r = lr.exp();
            vec![r * th.cos(), r * th.sin()]
        })
        .collect()
}

/// Spiral seeds interpolating the lifted angle, dipping towards `rho0`.
pub fn spiral_seeds(
    params: &PotentialParams,
    r1: f64,
    theta_minus: f64,
    r2: f64,
    theta_plus: f64,
    h: f64,
    opts: &MinimizeOptions,
) -> Vec<FreeSeed> {
    let n = opts.nodes;
    let speed = (2.0 * h).sqrt();
    let _ = params;
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5EED_5EED);
    let fixed = [(1.0, 8.0), (0.4, 10.0), (2.5, 6.0)];
    for k in 0..=opts.restarts {
        let (rho0, sharp) = if k < fixed.len() {
            fixed[k]
        } else {
            (rng.gen_range(-1.5f64..1.5).exp(), rng.gen_range(4.0..14.0))
        };
        let rho0 = rho0.min(0.9 * r1.min(r2));
        let curve = spiral_curve(r1, theta_minus, r2, theta_plus, rho0, sharp, 40 * n);
        out.push(FreeSeed::from_curve(&curve, speed, n));
    }
    out
}

/// Free-time minimisation in the planar winding class `(θ₋, θ₊)` between
/// `r1 e^{iθ₋}` and `r2 e^{iθ₊}`.
#[allow(clippy::too_many_arguments)]
pub fn minimize_constrained(
    params: &PotentialParams,
    r1: f64,
    theta_minus: f64,
    r2: f64,
    theta_plus: f64,
    h: f64,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let seeds = spiral_seeds(params, r1, theta_minus, r2, theta_plus, h, opts);
    minimize_constrained_from_seeds(params, theta_minus, theta_plus, h, seeds, opts)
}

/// As [`minimize_constrained`] with explicit seeds (all in the target class).
pub fn minimize_constrained_from_seeds(
    params: &PotentialParams,
    theta_minus: f64,
    theta_plus: f64,
    h: f64,
    seeds: Vec<FreeSeed>,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    opts.validate()?;
    if params.dim() != 2 {
        return Err(Error::InvalidParams("winding constraints need a planar potential".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {h}")));
    }
    let Some(first) = seeds.first() else {
        return Err(Error::InvalidParams("no seeds".into()));
    };
    let (a, b) = (&first.points[0], first.points.last().unwrap());
    if dist(a, b) == 0.0 {
        return Err(Error::Domain("endpoints coincide".into()));
    }
    let delta = theta_plus - theta_minus;
    let winding = Winding { delta };
    for s in &seeds {
        match winding_of(&s.points.concat()) {
            Some(d) if (d - delta).abs() < 1e-6 => {}
            Some(d) => return Err(Error::Constraint(format!("seed winds by {d:.6}, expected {delta:.6}"))),
            None => return Err(Error::Constraint("seed lift is ambiguous; refine the seed".into())),
        }
    }
    let results: Vec<Result<MinimizeResult>> = seeds
        .into_par_iter()
        .enumerate()
        .map(|(idx, s)| free_time_core(params, h, s, opts, Some(winding), idx))
        .collect();
    let best = select_best(results)?;
    let gutz_planar = matches!(params.shape(), SphereShape::Gutzwiller(w) if w.len() == 2);
    if best.collision_suspect && gutz_planar && exclusion_case(theta_minus, theta_plus).is_some() {
        return Err(Error::SolverFailure(format!(
            "constrained minimiser approaches the origin (min radius {:.3e}) in a collision-free case",
            best.min_radius
        )));
    }
    Ok(best)
}

/// Closed-form upper bounds on the action potential `φ_h`.
#[derive(Debug, Clone)]
pub enum PhiBound {
    /// Radial segment from `r1 s` to `r2 s` at speed `√(2h)`.
    Radial { r1: f64, r2: f64 },
    /// Great-circle arc on the sphere of radius `|x|`, sweeping `angle`
    /// (at most `π`), with the duration optimised.
    SphereArc { radius: f64, angle: f64 },
    /// Path `t^{2/(2+α)} s`, `t ∈ [0, 1]`, from the origin to the unit sphere.
    FromOrigin,
}

pub fn phi_h_bound(params: &PotentialParams, kind: &PhiBound, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {h}")));
    }
    let a = params.alpha();
    let umax = params.u_max();
    match *kind {
        PhiBound::Radial { r1, r2 } => {
            if !(r1 > 0.0 && r2 > r1) {
                return Err(Error::Domain(format!("need 0 < r1 < r2, got r1 = {r1}, r2 = {r2}")));
            }
            let v = (2.0 * h).sqrt();
            let tail = if (a - 1.0).abs() < 1e-15 {
                (r2 / r1).ln()
            } else {
                (r2.powf(1.0 - a) - r1.powf(1.0 - a)) / (1.0 - a)
            };
            Ok(v * (r2 - r1) + umax / v * tail)
        }
        PhiBound::SphereArc { radius, angle } => {
            if !(radius > 0.0) || !(0.0..=PI).contains(&angle) {
                return Err(Error::Domain("need radius > 0 and 0 ≤ angle ≤ π".into()));
            }
            let len = radius * angle;
            Ok(len * (2.0 * (umax * radius.powf(-a) + h)).sqrt())
        }
        PhiBound::FromOrigin => {
            let p = 2.0 / (2.0 + a);
            Ok((0.5 * p * p + umax) * (2.0 + a) / (2.0 - a) + h)
        }
    }
}

/// Node velocities from the discrete Legendre transform: at node `k`,
/// the average of the left and right discrete momenta.
pub fn node_velocities(params: &PotentialParams, path: &Path) -> Vec<Vec<f64>> {
    let d = path.dim();
    let n = path.segments();
    let mut left = vec![vec![0.0; d]; n + 1];
    let mut right = vec![vec![0.0; d]; n + 1];
    let mut y = vec![0.0; d];
    let mut gy = vec![0.0; d];
    for k in 0..n {
        let (a, b) = (path.node(k), path.node(k + 1));
        let dt = path.times()[k + 1] - path.times()[k];
        let mut pa: Vec<f64> = (0..d).map(|i| (b[i] - a[i]) / dt).collect();
        let mut pb = pa.clone();
        for (c, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
            for i in 0..d {
                y[i] = a[i] + c * (b[i] - a[i]);
            }
            params.grad_into(&y, &mut gy);
            for i in 0..d {
                pa[i] -= dt * w * (1.0 - c) * gy[i];
                pb[i] += dt * w * c * gy[i];
            }
        }
        right[k] = pa;
        left[k + 1] = pb;
    }
    (0..=n)
        .map(|k| {
            if k == 0 {
                right[0].clone()
            } else if k == n {
                left[n].clone()
            } else {
                (0..d).map(|i| 0.5 * (left[k][i] + right[k][i])).collect()
            }
        })
        .collect()
}
