//! Piecewise-linear paths `[T⁻, T⁺] → R^d`, their action, time rescaling
//! and, in the plane, the continuous lift of the polar angle.
//!
//! A path may carry one deliberate collision node (a node exactly at the
//! origin). The two segments touching it are modelled by the homothetic
//! power law `x(t) = (|t − t_c|/Δt)^{2/(2+α)} x_nb` instead of a straight
//! line, so their action is finite for every `α ∈ (0, 2)` and exact for
//! homothetic paths.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::potential::PotentialParams;
use crate::quad::{GL4_NODES, GL4_WEIGHTS};
use crate::vecops::{dot, norm};

/// Segments closer than this to the origin are always subdivided.
pub const NEAR_ORIGIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    times: Vec<f64>,
    nodes: Vec<f64>,
    dim: usize,
    collision: Option<usize>,
}

impl Path {
    /// Builds a path from strictly increasing times and flat node storage
    /// (`times.len() * dim` entries).
    pub fn new(times: Vec<f64>, nodes: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        if times.len() < 3 {
            return Err(Error::InvalidParams(format!("a path needs at least 3 nodes, got {}", times.len())));
        }
        if nodes.len() != times.len() * dim {
            return Err(Error::InvalidParams(format!(
                "expected {} coordinates for {} nodes, got {}",
                times.len() * dim,
                times.len(),
                nodes.len()
            )));
        }
        if times.iter().chain(&nodes).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite time or coordinate".into()));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(format!("times not strictly increasing at node {}", k + 1)));
        }
        Ok(Self { times, nodes, dim, collision: None })
    }

    /// Builds a path from a list of points.
    pub fn from_points(times: Vec<f64>, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidParams("points have inconsistent dimensions".into()));
        }
        Self::new(times, points.concat(), dim)
    }

    /// Samples `f` on the given time grid.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(times: Vec<f64>, f: F) -> Result<Self> {
        let pts: Vec<Vec<f64>> = times.iter().map(|t| f(*t)).collect();
        Self::from_points(times, &pts)
    }

    /// Uniform grid with `n` segments on `[t0, t1]`.
    pub fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
    }

    /// Straight segment from `p` to `q` over `[0, t_end]` with `n` segments.
    pub fn straight(p: &[f64], q: &[f64], t_end: f64, n: usize) -> Result<Self> {
        Self::from_fn(Self::uniform_times(0.0, t_end, n), |t| {
            let u = t / t_end;
            p.iter().zip(q).map(|(a, b)| a + u * (b - a)).collect()
        })
    }

    /// Marks node `k` (which must be exactly at the origin) as a deliberate collision.
    pub fn with_collision(mut self, k: usize) -> Result<Self> {
        if k >= self.len() || norm(self.node(k)) != 0.0 {
            return Err(Error::InvalidParams(format!("node {k} is not at the origin")));
        }
        self.collision = Some(k);
        Ok(self)
    }

    pub fn collision(&self) -> Option<usize> {
        self.collision
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn flat_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    pub fn start(&self) -> &[f64] {
        self.node(0)
    }

    pub fn end(&self) -> &[f64] {
        self.node(self.len() - 1)
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.nodes.chunks(self.dim).map(|c| c.to_vec()).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.nodes.chunks(self.dim).map(norm).collect()
    }

    /// Smallest node radius and its index.
    pub fn min_radius(&self) -> (usize, f64) {
        self.radii()
            .into_iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty path")
    }

    fn power_segment(&self, k: usize) -> Option<(usize, bool)> {
        // Returns (neighbour node, collision at segment start?)
        let c = self.collision?;
        if c == k {
            Some((k + 1, true))
        } else if c == k + 1 {
            Some((k, false))
        } else {
            None
        }
    }

    /// Position at time `t` (clamped to the domain).
    pub fn eval(&self, t: f64, alpha: f64) -> Vec<f64> {
        let t = t.clamp(self.t_start(), self.t_end());
        let k = (self.times.partition_point(|s| *s <= t).max(1) - 1).min(self.segments() - 1);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let u = (t - t0) / (t1 - t0);
        match self.power_segment(k) {
            Some((nb, at_start)) => {
                // measured from the collision end to avoid cancellation
                let w = if at_start { u } else { (t1 - t) / (t1 - t0) };
                let f = w.powf(2.0 / (2.0 + alpha));
                self.node(nb).iter().map(|v| f * v).collect()
            }
            None => {
                let (a, b) = (self.node(k), self.node(k + 1));
                a.iter().zip(b).map(|(x, y)| x + u * (y - x)).collect()
            }
        }
    }

    /// Derivative of the interpolant at `t` (right derivative at nodes,
    /// left derivative at the final node).
    pub fn velocity(&self, t: f64, alpha: f64) -> Vec<f64> {
        let t = t.clamp(self.t_start(), self.t_end());
        let k = (self.times.partition_point(|s| *s <= t).max(1) - 1).min(self.segments() - 1);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let dt = t1 - t0;
        match self.power_segment(k) {
            Some((nb, at_start)) => {
                let p = 2.0 / (2.0 + alpha);
                let u = (t - t0) / dt;
                let (w, sign) = if at_start { (u, 1.0) } else { ((t1 - t) / dt, -1.0) };
                let f = sign * p * w.powf(p - 1.0) / dt;
                self.node(nb).iter().map(|v| f * v).collect()
            }
            None => {
                let (a, b) = (self.node(k), self.node(k + 1));
                a.iter().zip(b).map(|(x, y)| (y - x) / dt).collect()
            }
        }
    }

    /// Same nodes, times mapped by `t ↦ a + b t`.
    pub fn map_times(&self, a: f64, b: f64) -> Result<Path> {
        if !(b > 0.0) {
            return Err(Error::Domain(format!("time scale must be positive, got {b}")));
        }
        Ok(Path {
            times: self.times.iter().map(|t| a + b * t).collect(),
            ..self.clone()
        })
    }

    /// Same nodes, times shifted by `dt`.
    pub fn shift_time(&self, dt: f64) -> Path {
        Path {
            times: self.times.iter().map(|t| t + dt).collect(),
            ..self.clone()
        }
    }

    /// Time-reversed path `t ↦ γ(T⁺ + T⁻ − t)`.
    pub fn reversed(&self) -> Path {
        let (a, b) = (self.t_start(), self.t_end());
        let times = self.times.iter().rev().map(|t| a + b - t).collect();
        let nodes = self.nodes.chunks(self.dim).rev().flatten().cloned().collect();
        Path {
            times,
            nodes,
            dim: self.dim,
            collision: self.collision.map(|c| self.len() - 1 - c),
        }
    }

    /// Concatenation; `other` must start where and when `self` ends.
    pub fn concat(&self, other: &Path) -> Result<Path> {
        if self.dim != other.dim {
            return Err(Error::InvalidParams("dimension mismatch".into()));
        }
        if (self.t_end() - other.t_start()).abs() > 1e-12 * (1.0 + self.t_end().abs())
            || crate::vecops::dist(self.end(), other.start()) > 1e-12
        {
            return Err(Error::InvalidParams("paths do not join".into()));
        }
        if self.collision.is_some() && other.collision.is_some() {
            return Err(Error::InvalidParams("at most one collision node".into()));
        }
        let mut times = self.times.clone();
        times.extend_from_slice(&other.times[1..]);
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(&other.nodes[self.dim..]);
        let collision = self.collision.or(other.collision.map(|c| c + self.len() - 1));
        Ok(Path { times, nodes, dim: self.dim, collision })
    }

    /// Sub-path on node range `[i, j]`.
    pub fn slice(&self, i: usize, j: usize) -> Result<Path> {
        if j <= i + 1 || j >= self.len() {
            return Err(Error::InvalidParams(format!("bad node range [{i}, {j}]")));
        }
        let collision = self.collision.filter(|c| (i..=j).contains(c)).map(|c| c - i);
        Ok(Path {
            times: self.times[i..=j].to_vec(),
            nodes: self.nodes[i * self.dim..(j + 1) * self.dim].to_vec(),
            dim: self.dim,
            collision,
        })
    }

    /// Replaces the node positions, keeping times and collision flag.
    pub fn with_nodes(&self, nodes: Vec<f64>) -> Result<Path> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::InvalidParams("node count mismatch".into()));
        }
        Ok(Path { nodes, ..self.clone() })
    }

    /// Resamples onto a new time grid inside the domain.
    pub fn resample(&self, times: Vec<f64>, alpha: f64) -> Result<Path> {
        let pts: Vec<Vec<f64>> = times.iter().map(|t| self.eval(*t, alpha)).collect();
        Path::from_points(times, &pts)
    }

    /// `∫ ½|γ̇|² dt`.
    pub fn kinetic(&self, alpha: f64) -> f64 {
        (0..self.segments()).map(|k| self.segment_parts(k, None, alpha).0).sum()
    }

    /// Kinetic and potential contributions of segment `k`.
    fn segment_parts(&self, k: usize, params: Option<&PotentialParams>, alpha: f64) -> (f64, f64) {
        let dt = self.times[k + 1] - self.times[k];
        if let Some((nb, _)) = self.power_segment(k) {
            let x1 = self.node(nb);
            let p = 2.0 / (2.0 + alpha);
            let factor = (2.0 + alpha) / (2.0 - alpha);
            let kin = 0.5 * p * p * dot(x1, x1) / dt * factor;
            let pot = params.map(|pp| dt * pp.value(x1) * factor).unwrap_or(0.0);
            return (kin, pot);
        }
        let (a, b) = (self.node(k), self.node(k + 1));
        let dx: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let kin = 0.5 * dot(&dx, &dx) / dt;
        let pot = match params {
            Some(pp) => dt * segment_potential_mean(pp, a, &dx),
            None => 0.0,
        };
        (kin, pot)
    }
}

/// Mean of `U` along the straight segment `a + u·dx`, `u ∈ [0, 1]`.
///
/// Uses 4-point Gauss–Legendre, subdividing geometrically around the
/// closest approach to the origin when the segment passes near it.
pub fn segment_potential_mean(params: &PotentialParams, a: &[f64], dx: &[f64]) -> f64 {
    let d = a.len();
    let len2 = dot(dx, dx);
    let len = len2.sqrt();
    let ustar = if len2 > 0.0 { (-dot(a, dx) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let closest: Vec<f64> = (0..d).map(|i| a[i] + ustar * dx[i]).collect();
    let dmin = norm(&closest);
    if dmin == 0.0 {
        return f64::INFINITY;
    }
    let mut x = vec![0.0; d];
    let mut gl = |u0: f64, u1: f64| -> f64 {
        let w = u1 - u0;
        let mut acc = 0.0;
        for (c, wt) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
            let u = u0 + c * w;
            for i in 0..d {
                x[i] = a[i] + u * dx[i];
            }
            acc += wt * params.value(&x);
        }
        acc * w
    };
    if dmin >= NEAR_ORIGIN && dmin >= 0.5 * len {
        return gl(0.0, 1.0);
    }
    // Geometric grading away from the closest point.
    let c = dmin / len;
    let mut breaks = vec![ustar];
    for side in [-1.0, 1.0] {
        let mut step = 0.25 * c;
        let mut u = ustar;
        loop {
            u += side * step;
            if (side < 0.0 && u <= 0.0) || (side > 0.0 && u >= 1.0) {
                break;
            }
            breaks.push(u);
            if step < c {
                step = (step + 0.25 * c).min(c);
            } else {
                step *= 1.5;
            }
        }
    }
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks.windows(2).map(|w| gl(w[0], w[1])).sum()
}

/// `A(γ) = ∫ ½|γ̇|² + U(γ) dt`.
///
/// A node at the origin that is not the flagged collision node makes the
/// action infinite; this is reported as `f64::INFINITY`, not as an error.
pub fn action(params: &PotentialParams, path: &Path) -> Result<f64> {
    if path.dim != params.dim() {
        return Err(Error::InvalidParams("path dimension does not match the potential".into()));
    }
    let alpha = params.alpha();
    let mut total = 0.0;
    for k in 0..path.segments() {
        let (kin, pot) = path.segment_parts(k, Some(params), alpha);
        total += kin + pot;
    }
    Ok(if total.is_nan() { f64::INFINITY } else { total })
}

/// `A_h(γ) = A(γ) + h (T⁺ − T⁻)`.
pub fn action_h(params: &PotentialParams, path: &Path, h: f64) -> Result<f64> {
    Ok(action(params, path)? + h * path.duration())
}

/// `t ↦ γ(t/δ)` on the stretched domain.
pub fn rescale_time(path: &Path, delta: f64) -> Result<Path> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("rescale factor must be positive, got {delta}")));
    }
    path.map_times(0.0, delta)
}

/// Endpoint angles of a planar path and the lift along its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologicalClass {
    pub theta_minus: f64,
    pub theta_plus: f64,
    /// Lifted angle at every node, starting from the principal value.
    pub winding: Vec<f64>,
}

impl TopologicalClass {
    pub fn delta(&self) -> f64 {
        self.theta_plus - self.theta_minus
    }
}

/// Principal angle increment from `a` to `b` in the plane.
pub fn angle_increment(a: &[f64], b: &[f64]) -> f64 {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dotp = a[0] * b[0] + a[1] * b[1];
    cross.atan2(dotp)
}

/// Continuous lift of `Arg γ` along the nodes.
pub fn winding_lift(path: &Path) -> Result<TopologicalClass> {
    if path.dim != 2 {
        return Err(Error::InvalidParams("winding lift needs a planar path".into()));
    }
    let mut winding = Vec::with_capacity(path.len());
    let p0 = path.node(0);
    if norm(p0) == 0.0 {
        return Err(Error::Singularity);
    }
    let mut theta = p0[1].atan2(p0[0]);
    winding.push(theta);
    for k in 0..path.segments() {
        let (a, b) = (path.node(k), path.node(k + 1));
        if norm(b) == 0.0 {
            return Err(Error::Singularity);
        }
        let inc = angle_increment(a, b);
        let cross = a[0] * b[1] - a[1] * b[0];
        // An antipodal pair makes the straight segment pass through the origin.
        if inc.abs() >= PI - 1e-12 || (cross == 0.0 && dot(a, b) < 0.0) {
            return Err(Error::LiftAmbiguous { segment: k, increment: inc.abs().max(PI) });
        }
        theta += inc;
        winding.push(theta);
    }
    Ok(TopologicalClass {
        theta_minus: winding[0],
        theta_plus: *winding.last().unwrap(),
        winding,
    })
}

/// Whether the lifted endpoint angles equal `(θ₋, θ₊)` within `tol`.
///
/// The lift is anchored at the representative of the start angle closest to
/// `θ₋`; the end angle is then compared in `R`, not modulo `2π`.
pub fn in_class(path: &Path, theta_minus: f64, theta_plus: f64, tol: f64) -> Result<bool> {
    let cls = winding_lift(path)?;
    let shift = ((theta_minus - cls.theta_minus) / (2.0 * PI)).round() * 2.0 * PI;
    let start = cls.theta_minus + shift;
    let end = cls.theta_plus + shift;
    Ok((start - theta_minus).abs() <= tol && (end - theta_plus).abs() <= tol)
}

/// Writes `t,x1,...,xd` with a header and 17 significant digits.
pub fn to_csv(path: &Path) -> String {
    let mut out = String::from("t");
    for i in 1..=path.dim {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for k in 0..path.len() {
        let _ = write!(out, "{:.16e}", path.times[k]);
        for v in path.node(k) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Parses the format written by [`to_csv`]. A single interior node exactly
/// at the origin is flagged as the collision node.
pub fn from_csv(text: &str) -> Result<Path> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t" || cols[1..].iter().enumerate().any(|(i, c)| *c != format!("x{}", i + 1)) {
        return Err(Error::Parse {
            line: hline + 1,
            msg: format!("expected header t,x1,...,xd, got '{header}'"),
        });
    }
    let dim = cols.len() - 1;
    let mut times = Vec::new();
    let mut nodes = Vec::new();
    for (ln, line) in lines {
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse { line: ln + 1, msg: e.to_string() })?;
        if vals.len() != dim + 1 {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("expected {} fields, got {}", dim + 1, vals.len()),
            });
        }
        if let Some(prev) = times.last() {
            if vals[0] <= *prev {
                return Err(Error::Parse { line: ln + 1, msg: "times must be strictly increasing".into() });
            }
        }
        times.push(vals[0]);
        nodes.extend_from_slice(&vals[1..]);
    }
    let path = Path::new(times, nodes, dim).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    let origin: Vec<usize> = (1..path.len() - 1).filter(|k| norm(path.node(*k)) == 0.0).collect();
    if origin.len() == 1 {
        return path.with_collision(origin[0]);
    }
    Ok(path)
}
