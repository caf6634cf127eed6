//! α-homogeneous potentials `U(x) = |x|^{-α} U(x/|x|)`.
//!
//! Two shapes are supported:
//!
//! * the Gutzwiller form `U(x) = ⟨x, M x⟩^{-α/2}` with `M = diag(m₁, …, m_d)`,
//!   which has closed-form gradients in any dimension;
//! * a planar general form where the sphere restriction `Ũ(θ) = U(e^{iθ})`
//!   is supplied as a θ-parameterised callback with first and second
//!   derivatives (for example a periodic cubic spline through a table).
//!
//! The condition checker evaluates the structural hypotheses used by the
//! constructions in the rest of the crate: positivity on the sphere,
//! Gutzwiller form, a 2-plane of constant potential, non-degenerate minima
//! of `Ũ`, and the spiral inequality `m₂/m₁ > 1 + (2−α)²/(8α)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numfmt::g6;
use crate::vecops::{dot, norm};

/// Tolerance on `|sphere_grad|` for classifying a point as critical.
pub const CRITICAL_TOL: f64 = 1e-9;

/// Tolerance on `| |s| - 1 |` accepted by sphere operations.
pub const UNIT_TOL: f64 = 1e-8;

/// A C² function on the unit circle parameterised by angle, with derivatives.
pub trait PlanarSphereFn: Send + Sync + fmt::Debug {
    fn value(&self, theta: f64) -> f64;
    fn d1(&self, theta: f64) -> f64;
    fn d2(&self, theta: f64) -> f64;
}

#[derive(Debug, Clone)]
pub enum SphereShape {
    /// Diagonal weights `m₁ … m_d` (all positive).
    Gutzwiller(Vec<f64>),
    /// Planar `Ũ(θ)` callback.
    Planar(Arc<dyn PlanarSphereFn>),
}

#[derive(Debug, Clone)]
pub struct PotentialParams {
    dim: usize,
    alpha: f64,
    shape: SphereShape,
}

impl PotentialParams {
    /// Gutzwiller potential `⟨x, M x⟩^{-α/2}`; the dimension is `weights.len()`.
    pub fn gutzwiller(alpha: f64, weights: &[f64]) -> Result<Self> {
        check_alpha(alpha)?;
        if weights.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "dimension must be at least 2, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParams(format!("weights must be positive, got {w}")));
        }
        Ok(Self {
            dim: weights.len(),
            alpha,
            shape: SphereShape::Gutzwiller(weights.to_vec()),
        })
    }

    /// Isotropic potential `|x|^{-α}` in dimension `dim` (Kepler for α = 1).
    pub fn isotropic(alpha: f64, dim: usize) -> Result<Self> {
        Self::gutzwiller(alpha, &vec![1.0; dim])
    }

    /// Planar potential with a user supplied sphere function.
    pub fn planar(alpha: f64, sphere: Arc<dyn PlanarSphereFn>) -> Result<Self> {
        check_alpha(alpha)?;
        let n = 4096;
        for k in 0..n {
            let th = TAU * k as f64 / n as f64;
            let v = sphere.value(th);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "sphere potential must be positive, got {v} at theta = {th}"
                )));
            }
        }
        Ok(Self {
            dim: 2,
            alpha,
            shape: SphereShape::Planar(sphere),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shape(&self) -> &SphereShape {
        &self.shape
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.shape {
            SphereShape::Gutzwiller(w) => Some(w),
            SphereShape::Planar(_) => None,
        }
    }

    pub fn is_gutzwiller(&self) -> bool {
        matches!(self.shape, SphereShape::Gutzwiller(_))
    }

    /// `U(x)`; `+∞` at the origin.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.shape {
            SphereShape::Gutzwiller(w) => {
                let q: f64 = w.iter().zip(x).map(|(m, xi)| m * xi * xi).sum();
                if q == 0.0 {
                    f64::INFINITY
                } else {
                    q.powf(-0.5 * self.alpha)
                }
            }
            SphereShape::Planar(g) => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    return f64::INFINITY;
                }
                r.powf(-self.alpha) * g.value(x[1].atan2(x[0]))
            }
        }
    }

    /// Writes `∇U(x)` into `out`. The caller guarantees `x ≠ 0`.
    #[inline]
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.shape {
            SphereShape::Gutzwiller(w) => {
                let q: f64 = w.iter().zip(x).map(|(m, xi)| m * xi * xi).sum();
                let c = -self.alpha * q.powf(-0.5 * self.alpha - 1.0);
                for ((o, m), xi) in out.iter_mut().zip(w).zip(x) {
                    *o = c * m * xi;
                }
            }
            SphereShape::Planar(g) => {
                let r = x[0].hypot(x[1]);
                let th = x[1].atan2(x[0]);
                let (c, s) = (th.cos(), th.sin());
                let ra = r.powf(-self.alpha - 1.0);
                let gv = g.value(th);
                let gp = g.d1(th);
                out[0] = ra * (-self.alpha * gv * c - gp * s);
                out[1] = ra * (-self.alpha * gv * s + gp * c);
            }
        }
    }

    /// `U(x)`, rejecting the singular point.
    pub fn eval_u(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.value(x))
    }

    /// `∇U(x)`, rejecting the singular point.
    pub fn grad_u(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut g = vec![0.0; self.dim];
        self.grad_into(x, &mut g);
        Ok(g)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!(
                "expected a {}-vector, got length {}",
                self.dim,
                x.len()
            )));
        }
        if x.iter().all(|v| *v == 0.0) {
            return Err(Error::Singularity);
        }
        Ok(())
    }

    /// Tangential gradient `∇U(s) − ⟨∇U(s), s⟩ s` on the unit sphere.
    pub fn sphere_grad(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_point(s)?;
        let n = norm(s);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!("|s| = {n} is not a unit vector")));
        }
        let mut g = vec![0.0; self.dim];
        self.grad_into(s, &mut g);
        let gs = dot(&g, s);
        for (gi, si) in g.iter_mut().zip(s) {
            *gi -= gs * si;
        }
        Ok(g)
    }

    /// `Ũ(θ) = U(cos θ, sin θ)` for planar potentials.
    pub fn u_theta(&self, theta: f64) -> f64 {
        self.theta_derivs(theta).0
    }

    /// `(Ũ, Ũ′, Ũ″)` at `θ` (planar only; panics for `d ≠ 2`).
    pub fn theta_derivs(&self, theta: f64) -> (f64, f64, f64) {
        assert_eq!(self.dim, 2, "angle parameterisation needs d = 2");
        match &self.shape {
            SphereShape::Gutzwiller(w) => {
                let a = self.alpha;
                let (m1, m2) = (w[0], w[1]);
                let dm = m2 - m1;
                let (s, c) = theta.sin_cos();
                let g = m1 + dm * s * s;
                let g1 = dm * 2.0 * s * c;
                let g2 = 2.0 * dm * (c * c - s * s);
                let u = g.powf(-0.5 * a);
                let u1 = -0.5 * a * g.powf(-0.5 * a - 1.0) * g1;
                let u2 = -0.5 * a * ((-0.5 * a - 1.0) * g.powf(-0.5 * a - 2.0) * g1 * g1 + g.powf(-0.5 * a - 1.0) * g2);
                (u, u1, u2)
            }
            SphereShape::Planar(g) => (g.value(theta), g.d1(theta), g.d2(theta)),
        }
    }

    /// Value of `U` at a point of the unit sphere.
    pub fn sphere_value(&self, s: &[f64]) -> f64 {
        self.value(s)
    }

    /// `max_{S} U`.
    pub fn u_max(&self) -> f64 {
        match &self.shape {
            SphereShape::Gutzwiller(w) => {
                let m = w.iter().cloned().fold(f64::INFINITY, f64::min);
                m.powf(-0.5 * self.alpha)
            }
            SphereShape::Planar(_) => self.scan_extreme(true),
        }
    }

    /// `min_{S} U`.
    pub fn u_min(&self) -> f64 {
        match &self.shape {
            SphereShape::Gutzwiller(w) => {
                let m = w.iter().cloned().fold(0.0, f64::max);
                m.powf(-0.5 * self.alpha)
            }
            SphereShape::Planar(_) => self.scan_extreme(false),
        }
    }

    fn scan_extreme(&self, max: bool) -> f64 {
        let crit = planar_critical_angles(self);
        let mut best = if max { f64::NEG_INFINITY } else { f64::INFINITY };
        for th in crit.into_iter().chain((0..720).map(|k| TAU * k as f64 / 720.0)) {
            let v = self.u_theta(th);
            best = if max { best.max(v) } else { best.min(v) };
        }
        best
    }

    /// Critical structure of `U` on the sphere.
    pub fn critical_structure(&self) -> CriticalStructure {
        match &self.shape {
            SphereShape::Gutzwiller(w) => gutzwiller_structure(self, w),
            SphereShape::Planar(_) => planar_structure(self),
        }
    }

    /// Structural condition report.
    pub fn check_conditions(&self) -> ConditionReport {
        check_conditions(self)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidParams(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    Ok(())
}

/// A connected piece of the critical set.
#[derive(Debug, Clone, PartialEq)]
pub enum CriticalComponent {
    /// `S ∩ R^{I_j}` for a group with at least two indices.
    Sphere { indices: Vec<usize> },
    /// The two points `±e_i` of a singleton group.
    Points { index: usize },
    /// An isolated critical angle of a planar general potential.
    Angle { theta: f64 },
}

#[derive(Debug, Clone)]
pub struct CriticalStructure {
    /// Coordinate groups of equal weight, in increasing weight order (0-based).
    pub partition: Vec<Vec<usize>>,
    pub components: Vec<CriticalComponent>,
    /// `±e_i` for singleton groups.
    pub isolated_points: Vec<Vec<f64>>,
    /// Global minimisers of `Ũ` in `[0, 2π)` (planar only).
    pub min_set: Vec<f64>,
    /// `Ũ″` at each element of `min_set`.
    pub min_second_derivative: Vec<f64>,
    /// `Ũ″ ≠ 0` at each element of `min_set`.
    pub nondegenerate: Vec<bool>,
    /// `U` is constant on the whole sphere.
    pub degenerate: bool,
}

impl CriticalStructure {
    /// Nearest point of the critical set to `s` and its distance.
    pub fn nearest_critical(&self, s: &[f64]) -> (Vec<f64>, f64) {
        let mut best: (Vec<f64>, f64) = (s.to_vec(), f64::INFINITY);
        let mut consider = |p: Vec<f64>| {
            let d = crate::vecops::dist(&p, s);
            if d < best.1 {
                best = (p, d);
            }
        };
        for comp in &self.components {
            match comp {
                CriticalComponent::Sphere { indices } => {
                    let mut p = vec![0.0; s.len()];
                    for &i in indices {
                        p[i] = s[i];
                    }
                    let n = norm(&p);
                    if n > 0.0 {
                        consider(p.iter().map(|v| v / n).collect());
                    } else {
                        let mut e = vec![0.0; s.len()];
                        e[indices[0]] = 1.0;
                        consider(e);
                    }
                }
                CriticalComponent::Points { index } => {
                    for sign in [1.0, -1.0] {
                        let mut e = vec![0.0; s.len()];
                        e[*index] = sign;
                        consider(e);
                    }
                }
                CriticalComponent::Angle { theta } => consider(vec![theta.cos(), theta.sin()]),
            }
        }
        best
    }

    /// Index of the partition group whose sphere slice contains `s`
    /// (within `tol`), if any.
    pub fn group_of(&self, s: &[f64], tol: f64) -> Option<usize> {
        self.partition.iter().position(|g| {
            let off: f64 = s
                .iter()
                .enumerate()
                .filter(|(i, _)| !g.contains(i))
                .map(|(_, v)| v * v)
                .sum();
            off.sqrt() <= tol
        })
    }
}

fn gutzwiller_structure(p: &PotentialParams, w: &[f64]) -> CriticalStructure {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|a, b| w[*a].total_cmp(&w[*b]).then(a.cmp(b)));
    let mut partition: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match partition.last_mut() {
            Some(g) if w[g[0]] == w[i] => g.push(i),
            _ => partition.push(vec![i]),
        }
    }
    let mut components = Vec::new();
    let mut isolated_points = Vec::new();
    for g in &partition {
        if g.len() == 1 {
            components.push(CriticalComponent::Points { index: g[0] });
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; w.len()];
                e[g[0]] = sign;
                isolated_points.push(e);
            }
        } else {
            components.push(CriticalComponent::Sphere { indices: g.clone() });
        }
    }
    let degenerate = partition.len() == 1;
    let (mut min_set, mut min_second_derivative, mut nondegenerate) = (Vec::new(), Vec::new(), Vec::new());
    if p.dim == 2 && !degenerate {
        // The largest weight gives the smallest potential.
        let top = partition.last().expect("non-empty")[0];
        let base = if top == 0 { 0.0 } else { PI / 2.0 };
        for th in [base, base + PI] {
            let (_, _, u2) = p.theta_derivs(th);
            min_set.push(th);
            min_second_derivative.push(u2);
            nondegenerate.push(u2 != 0.0);
        }
    }
    CriticalStructure {
        partition,
        components,
        isolated_points,
        min_set,
        min_second_derivative,
        nondegenerate,
        degenerate,
    }
}

/// Critical angles of a planar potential in `[0, 2π)`, from a dense scan of
/// `Ũ′` refined by bisection.
pub fn planar_critical_angles(p: &PotentialParams) -> Vec<f64> {
    let n = 3600;
    let d1 = |th: f64| p.theta_derivs(th).1;
    let mut out = Vec::new();
    let mut prev_th = 0.0;
    let mut prev = d1(0.0);
    for k in 1..=n {
        let th = TAU * k as f64 / n as f64;
        let cur = d1(th);
        if prev == 0.0 {
            out.push(prev_th);
        } else if prev * cur < 0.0 {
            let (mut a, mut b, mut fa) = (prev_th, th, prev);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let fm = d1(m);
                if fm == 0.0 || (b - a) < 1e-15 {
                    a = m;
                    b = m;
                    break;
                }
                if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            out.push((0.5 * (a + b)).rem_euclid(TAU));
        }
        prev_th = th;
        prev = cur;
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

fn planar_structure(p: &PotentialParams) -> CriticalStructure {
    let angles = planar_critical_angles(p);
    let samples: Vec<f64> = (0..720).map(|k| p.u_theta(TAU * k as f64 / 720.0)).collect();
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let degenerate = (hi - lo) <= 1e-14 * hi.abs();
    let mut min_set = Vec::new();
    let mut min_second_derivative = Vec::new();
    let mut nondegenerate = Vec::new();
    if !degenerate {
        let vals: Vec<f64> = angles.iter().map(|t| p.u_theta(*t)).collect();
        let vmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        for (t, v) in angles.iter().zip(&vals) {
            if (v - vmin).abs() <= 1e-9 * vmin.abs().max(1.0) {
                let u2 = p.theta_derivs(*t).2;
                min_set.push(*t);
                min_second_derivative.push(u2);
                nondegenerate.push(u2.abs() > 1e-12);
            }
        }
    }
    CriticalStructure {
        partition: vec![vec![0, 1]],
        components: angles.iter().map(|t| CriticalComponent::Angle { theta: *t }).collect(),
        isolated_points: Vec::new(),
        min_set,
        min_second_derivative,
        nondegenerate,
        degenerate,
    }
}

/// Three-valued verdict for conditions that may not apply to a potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    NotApplicable,
}

impl Verdict {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    }

    pub fn holds(self) -> bool {
        self == Verdict::Holds
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "true",
            Verdict::Fails => "false",
            Verdict::NotApplicable => "not applicable",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub alpha: f64,
    /// α ∈ (0, 2) and U > 0 on the sphere.
    pub u0: Verdict,
    /// Gutzwiller form.
    pub u1: Verdict,
    /// A 2-plane on which U is constant.
    pub u2: Verdict,
    /// Non-degenerate minima of Ũ (planar only).
    pub u3: Verdict,
    /// Spiral inequality on the weight ratio.
    pub u4: Verdict,
    /// `Ũ″(kπ) < −((2−α)²/8) Ũ(kπ)`.
    pub spiral_equiv: Verdict,
    /// `1 + (2−α)²/(8α)`.
    pub u4_threshold: f64,
    pub weight_ratio: Option<f64>,
    pub structure: CriticalStructure,
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "alpha = {}", g6(self.alpha))?;
        writeln!(f, "U0 = {}", self.u0)?;
        writeln!(f, "U1 = {}", self.u1)?;
        writeln!(f, "U2 = {}", self.u2)?;
        writeln!(f, "U3 = {}", self.u3)?;
        writeln!(f, "U4 = {}", self.u4)?;
        writeln!(f, "spiral_equiv = {}", self.spiral_equiv)?;
        writeln!(f, "u4_threshold = {}", g6(self.u4_threshold))?;
        if let Some(r) = self.weight_ratio {
            writeln!(f, "weight_ratio = {}", g6(r))?;
        }
        let groups: Vec<String> = self
            .structure
            .partition
            .iter()
            .map(|g| format!("{{{}}}", g.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        writeln!(f, "partition = {}", groups.join(" "))?;
        writeln!(f, "degenerate = {}", self.structure.degenerate)?;
        if self.structure.degenerate {
            writeln!(f, "note = degenerate: U constant on S")?;
        }
        let ms: Vec<String> = self.structure.min_set.iter().map(|t| g6(*t)).collect();
        writeln!(f, "min_set = {{{}}}", ms.join(", "))?;
        let d2: Vec<String> = self
            .structure
            .min_second_derivative
            .iter()
            .map(|t| g6(*t))
            .collect();
        writeln!(f, "min_second_derivative = {{{}}}", d2.join(", "))
    }
}

fn check_conditions(p: &PotentialParams) -> ConditionReport {
    let a = p.alpha;
    let structure = p.critical_structure();
    let threshold = 1.0 + (2.0 - a).powi(2) / (8.0 * a);
    let u0 = Verdict::from_bool(a > 0.0 && a < 2.0 && p.u_min() > 0.0);
    let (u1, u2, u4, ratio) = match &p.shape {
        SphereShape::Gutzwiller(w) => {
            let mut sorted = w.clone();
            sorted.sort_by(f64::total_cmp);
            let repeats = sorted.windows(2).any(|x| x[0] == x[1]);
            if p.dim == 2 {
                let r = w[1] / w[0];
                (Verdict::Holds, Verdict::from_bool(repeats), Verdict::from_bool(r > threshold), Some(r))
            } else {
                (Verdict::Holds, Verdict::from_bool(repeats), Verdict::NotApplicable, None)
            }
        }
        SphereShape::Planar(_) => (Verdict::NotApplicable, Verdict::from_bool(structure.degenerate), Verdict::NotApplicable, None),
    };
    let u3 = if p.dim == 2 {
        if structure.degenerate {
            Verdict::Fails
        } else {
            Verdict::from_bool(structure.nondegenerate.iter().all(|b| *b))
        }
    } else {
        Verdict::NotApplicable
    };
    let spiral_equiv = if p.dim == 2 {
        let ok = [0.0, PI].iter().all(|th| {
            let (u, _, u2) = p.theta_derivs(*th);
            u2 < -((2.0 - a).powi(2) / 8.0) * u
        });
        Verdict::from_bool(ok)
    } else {
        Verdict::NotApplicable
    };
    ConditionReport {
        alpha: a,
        u0,
        u1,
        u2,
        u3,
        u4,
        spiral_equiv,
        u4_threshold: threshold,
        weight_ratio: ratio,
        structure,
    }
}

/// Periodic cubic spline through `(θ_i, Ũ_i)` samples on `[0, 2π)`.
#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(thetas: &[f64], values: &[f64]) -> Result<Self> {
        let n = thetas.len();
        if n != values.len() || n < 4 {
            return Err(Error::InvalidParams("sphere table needs at least 4 (theta, value) rows".into()));
        }
        if thetas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("sphere table angles must be strictly increasing".into()));
        }
        if thetas[0] < 0.0 || thetas[n - 1] >= TAU {
            return Err(Error::InvalidParams("sphere table angles must lie in [0, 2π)".into()));
        }
        let h: Vec<f64> = (0..n)
            .map(|i| if i + 1 < n { thetas[i + 1] - thetas[i] } else { thetas[0] + TAU - thetas[n - 1] })
            .collect();
        let slope = |i: usize| (values[(i + 1) % n] - values[i]) / h[i];
        // Cyclic tridiagonal system: h_{i-1} M_{i-1} + 2(h_{i-1}+h_i) M_i + h_i M_{i+1} = rhs_i
        let sub: Vec<f64> = (0..n).map(|i| h[(i + n - 1) % n]).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 * (h[(i + n - 1) % n] + h[i])).collect();
        let sup: Vec<f64> = h.clone();
        let rhs: Vec<f64> = (0..n).map(|i| 6.0 * (slope(i) - slope((i + n - 1) % n))).collect();
        let m = solve_cyclic_tridiagonal(&sub, &diag, &sup, &rhs);
        Ok(Self {
            knots: thetas.to_vec(),
            values: values.to_vec(),
            m,
        })
    }

    /// Parses a two-column text table (`θ Ũ(θ)`, separated by whitespace or a
    /// comma). Blank lines and lines starting with `#` are skipped; a first
    /// line that does not parse as numbers is treated as a header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut th = Vec::new();
        let mut vals = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 2 => {
                    th.push(v[0]);
                    vals.push(v[1]);
                }
                Err(_) if th.is_empty() && idx == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("expected two numeric columns, got {line:?}"),
                    })
                }
            }
        }
        Self::new(&th, &vals)
    }

    fn locate(&self, theta: f64) -> (usize, f64, f64) {
        let n = self.knots.len();
        let t = theta.rem_euclid(TAU);
        let i = match self.knots.iter().rposition(|k| *k <= t) {
            Some(i) => i,
            None => n - 1,
        };
        let start = self.knots[i];
        let h = if i + 1 < n { self.knots[i + 1] - start } else { self.knots[0] + TAU - start };
        let mut dt = t - start;
        if dt < 0.0 {
            dt += TAU;
        }
        (i, dt, h)
    }
}

impl PlanarSphereFn for PeriodicSpline {
    fn value(&self, theta: f64) -> f64 {
        let (i, x, h) = self.locate(theta);
        let j = (i + 1) % self.knots.len();
        let (yi, yj, mi, mj) = (self.values[i], self.values[j], self.m[i], self.m[j]);
        let a = h - x;
        mi * a.powi(3) / (6.0 * h) + mj * x.powi(3) / (6.0 * h) + (yi / h - mi * h / 6.0) * a + (yj / h - mj * h / 6.0) * x
    }

    fn d1(&self, theta: f64) -> f64 {
        let (i, x, h) = self.locate(theta);
        let j = (i + 1) % self.knots.len();
        let (yi, yj, mi, mj) = (self.values[i], self.values[j], self.m[i], self.m[j]);
        let a = h - x;
        -mi * a * a / (2.0 * h) + mj * x * x / (2.0 * h) - (yi / h - mi * h / 6.0) + (yj / h - mj * h / 6.0)
    }

    fn d2(&self, theta: f64) -> f64 {
        let (i, x, h) = self.locate(theta);
        let j = (i + 1) % self.knots.len();
        (self.m[i] * (h - x) + self.m[j] * x) / h
    }
}

/// Sherman–Morrison solve of a cyclic tridiagonal system.
fn solve_cyclic_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let alpha = sup[n - 1]; // A[n-1][0]
    let beta = sub[0]; // A[0][n-1]
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= alpha * beta / gamma;
    let x = thomas(sub, &b, sup, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(sub, &b, sup, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// Thomas algorithm; `sub[0]` and `sup[n-1]` are ignored.
pub(crate) fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / den } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
