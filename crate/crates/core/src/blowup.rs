//! Blow-up scaling, zero-energy homothetic collision paths, and the local
//! deformation that lowers their action.
//!
//! A collision-ejection path `x̄(t) = (κ|t|)^{2/(2+α)} s±` is pushed off the
//! origin by `f_ε(t)·σ`, where `f_ε` holds the value `ε` on a tiny plateau
//! around the collision and ramps to zero with unit slope. The action
//! difference splits into kinetic terms on the ramps (`A₁`, `B₁`), potential
//! terms on the plateau (`A₂`, `B₂`) and potential terms on the ramps
//! (`A₃`, `B₃`); the first pair is `O(ε)` while the plateau terms are
//! negative and of order `ε^{(2−α)/2}`, which wins for small `ε`.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numfmt::{g6, g6_vec};
use crate::paths::Path;
use crate::potential::PotentialParams;
use crate::quad;
use crate::vecops::{dot, norm, normalized};

/// `t ↦ λ^{−2/(2+α)} γ(λt)` on the rescaled domain.
pub fn blow_up(path: &Path, lambda: f64, alpha: f64) -> Result<Path> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("blow-up factor must be positive, got {lambda}")));
    }
    let f = lambda.powf(-2.0 / (2.0 + alpha));
    let nodes = path.flat_nodes().iter().map(|v| v * f).collect();
    path.map_times(0.0, 1.0 / lambda)?.with_nodes(nodes)
}

/// Exponent `e` in `A(blow_up(γ, λ)) = λ^e A(γ)`.
pub fn action_scaling_exponent(alpha: f64) -> f64 {
    -(2.0 - alpha) / (2.0 + alpha)
}

/// Tolerance on the tangential gradient for a direction to count as critical.
pub const CRITICAL_TOL: f64 = 1e-8;

/// Nodes per branch of the sampled homothetic path.
const HOMOTHETIC_NODES: usize = 2048;

/// Zero-energy collision-ejection solution `x̄`.
#[derive(Debug, Clone)]
pub struct HomotheticSpec {
    pub s_plus: Vec<f64>,
    pub s_minus: Vec<f64>,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub alpha: f64,
    pub horizon: f64,
}

impl HomotheticSpec {
    fn p(&self) -> f64 {
        2.0 / (2.0 + self.alpha)
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        let p = self.p();
        if t >= 0.0 {
            let r = (self.kappa_plus * t).powf(p);
            self.s_plus.iter().map(|v| r * v).collect()
        } else {
            let r = (-self.kappa_minus * t).powf(p);
            self.s_minus.iter().map(|v| r * v).collect()
        }
    }

    /// Velocity for `t ≠ 0`.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let p = self.p();
        if t > 0.0 {
            let c = p * self.kappa_plus.powf(p) * t.powf(p - 1.0);
            self.s_plus.iter().map(|v| c * v).collect()
        } else {
            let c = -p * self.kappa_minus.powf(p) * (-t).powf(p - 1.0);
            self.s_minus.iter().map(|v| c * v).collect()
        }
    }

    /// `½|ẋ̄|² − U(x̄)` at `t ≠ 0`; zero up to roundoff.
    pub fn energy(&self, params: &PotentialParams, t: f64) -> f64 {
        let v = self.velocity(t);
        0.5 * dot(&v, &v) - params.value(&self.position(t))
    }
}

fn check_critical(params: &PotentialParams, s: &[f64], name: &str) -> Result<f64> {
    if s.len() != params.dim() {
        return Err(Error::InvalidParams(format!("{name} needs {} components", params.dim())));
    }
    let g = params.sphere_grad(s)?;
    let beta = params.value(s);
    if norm(&g) > CRITICAL_TOL * (1.0 + beta) {
        return Err(Error::Domain(format!(
            "{name} is not a critical direction (tangential gradient {:.3e})",
            norm(&g)
        )));
    }
    Ok(beta)
}

/// Builds `x̄` from critical directions and samples it on `[−T, T]` with
/// nodes graded towards the collision node at `t = 0`.
pub fn make_homothetic(params: &PotentialParams, s_plus: &[f64], s_minus: &[f64], horizon: f64) -> Result<(HomotheticSpec, Path)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let beta_plus = check_critical(params, s_plus, "s_plus")?;
    let beta_minus = check_critical(params, s_minus, "s_minus")?;
    let alpha = params.alpha();
    let kappa = |b: f64| 0.5 * (2.0 + alpha) * (2.0 * b).sqrt();
    let spec = HomotheticSpec {
        s_plus: s_plus.to_vec(),
        s_minus: s_minus.to_vec(),
        kappa_plus: kappa(beta_plus),
        kappa_minus: kappa(beta_minus),
        beta_plus,
        beta_minus,
        alpha,
        horizon,
    };
    let n = HOMOTHETIC_NODES;
    let mut times: Vec<f64> = (1..=n).rev().map(|j| -horizon * (j as f64 / n as f64).powi(3)).collect();
    times.push(0.0);
    times.extend((1..=n).map(|j| horizon * (j as f64 / n as f64).powi(3)));
    let pts: Vec<Vec<f64>> = times.iter().map(|t| spec.position(*t)).collect();
    let path = Path::from_points(times, &pts)?.with_collision(n)?;
    Ok((spec, path))
}

/// The deformation `x̄ + f_ε σ`.
#[derive(Debug, Clone)]
pub struct DeformationSpec {
    pub sigma: Vec<f64>,
    pub epsilon: f64,
    pub alpha: f64,
}

impl DeformationSpec {
    pub fn new(sigma: &[f64], epsilon: f64, alpha: f64) -> Result<Self> {
        if (norm(sigma) - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("sigma must be a unit vector".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0, 2), got {alpha}")));
        }
        Ok(Self {
            sigma: sigma.to_vec(),
            epsilon,
            alpha,
        })
    }

    /// Half-width `ε^{(2+α)/2}` of the plateau.
    pub fn plateau(&self) -> f64 {
        self.epsilon.powf(0.5 * (2.0 + self.alpha))
    }

    /// Half-width of the support.
    pub fn support(&self) -> f64 {
        self.plateau() + self.epsilon
    }

    pub fn f(&self, t: f64) -> f64 {
        let a = self.plateau();
        let u = t.abs();
        if u <= a {
            self.epsilon
        } else if u < a + self.epsilon {
            self.epsilon + a - u
        } else {
            0.0
        }
    }

    pub fn f_dot(&self, t: f64) -> f64 {
        let a = self.plateau();
        let u = t.abs();
        if u > a && u < a + self.epsilon {
            -t.signum()
        } else {
            0.0
        }
    }
}

/// Action difference of the deformation, split into its six pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationTerms {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub total: f64,
    /// `A(x̄^ε) − A(x̄)` by direct quadrature of the Lagrangian difference.
    pub direct_diff: f64,
}

const QUAD_ABS: f64 = 1e-15;
const QUAD_REL: f64 = 1e-13;

fn gutzwiller_weights(params: &PotentialParams) -> Result<&[f64]> {
    params
        .weights()
        .ok_or_else(|| Error::InvalidParams("the deformation analysis needs a Gutzwiller potential".into()))
}

fn wdot(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    m.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// `A₁, A₂, A₃` for one branch (rate `κ`, direction `s`).
fn branch_terms(m: &[f64], kappa: f64, s: &[f64], def: &DeformationSpec) -> Result<(f64, f64, f64)> {
    let alpha = def.alpha;
    let p = 2.0 / (2.0 + alpha);
    let eps = def.epsilon;
    let a = def.plateau();
    let sigma = &def.sigma;
    let c = dot(sigma, s);
    let cm = wdot(m, sigma, s);
    let sm2 = wdot(m, s, s);
    let sig2 = wdot(m, sigma, sigma);
    let kp = kappa.powf(p);

    let t1 = eps / 2.0 - kp * c * ((a + eps).powf(p) - a.powf(p));

    // Plateau term in τ = ε^{-1} t^p, then τ = u^{2/(2−α)}.
    let e = 2.0 / (2.0 - alpha);
    let sub_term = kappa.powf(-alpha * p) * sm2.powf(-0.5 * alpha);
    let g = |u: f64| {
        let tau = u.powf(e);
        let q = kp * kp * sm2 * tau * tau + 2.0 * kp * cm * tau + sig2;
        e * (u.powf(2.0 * alpha / (2.0 - alpha)) * q.powf(-0.5 * alpha) - sub_term)
    };
    let i2 = quad::integrate(g, 0.0, 1.0, QUAD_ABS, QUAD_REL)?;
    let t2 = 0.5 * (2.0 + alpha) * eps.powf(0.5 * (2.0 - alpha)) * i2;

    // Ramp potential term; the difference is formed through expm1/ln1p.
    let h = |t: f64| {
        let f = eps + a - t;
        let x2 = (kappa * t).powf(2.0 * p) * sm2;
        let dq = f * f * sig2 + 2.0 * (kappa * t).powf(p) * f * cm;
        x2.powf(-0.5 * alpha) * (-0.5 * alpha * (dq / x2).ln_1p()).exp_m1()
    };
    let t3 = quad::integrate(h, a, a + eps, QUAD_ABS, QUAD_REL)?;
    Ok((t1, t2, t3))
}

/// Integrates `f` over `[lo, hi]` where `f` may have an integrable
/// `|t|^{−2α/(2+α)}` singularity at whichever endpoint is zero.
fn integrate_near_collision<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, alpha: f64) -> Result<f64> {
    let k = (2.0 + alpha) / (2.0 - alpha);
    if lo == 0.0 {
        quad::integrate(|u| f(hi * u.powf(k)) * hi * k * u.powf(k - 1.0), 0.0, 1.0, QUAD_ABS, QUAD_REL)
    } else if hi == 0.0 {
        quad::integrate(|u| f(lo * u.powf(k)) * (-lo) * k * u.powf(k - 1.0), 0.0, 1.0, QUAD_ABS, QUAD_REL)
    } else {
        quad::integrate(f, lo, hi, QUAD_ABS, QUAD_REL)
    }
}

/// Lagrangian difference `L(x + χ, v + χ') − L(x, v)`.
fn lagrangian_diff(params: &PotentialParams, x: &[f64], v: &[f64], chi: &[f64], chi_dot: &[f64]) -> f64 {
    let xe: Vec<f64> = x.iter().zip(chi).map(|(a, b)| a + b).collect();
    let ve: Vec<f64> = v.iter().zip(chi_dot).map(|(a, b)| a + b).collect();
    0.5 * (dot(&ve, &ve) - dot(v, v)) + params.value(&xe) - params.value(x)
}

/// Terms of `A(x̄^ε) − A(x̄)` on `[−T, T]`.
pub fn deformation_terms(params: &PotentialParams, hom: &HomotheticSpec, def: &DeformationSpec, horizon: f64) -> Result<DeformationTerms> {
    let m = gutzwiller_weights(params)?;
    if def.sigma.len() != params.dim() {
        return Err(Error::InvalidParams("sigma has the wrong dimension".into()));
    }
    if (def.alpha - params.alpha()).abs() > 0.0 || (hom.alpha - params.alpha()).abs() > 0.0 {
        return Err(Error::InvalidParams("alpha differs between potential and deformation".into()));
    }
    let a = def.plateau();
    let s = def.support();
    if !(s < horizon) {
        return Err(Error::Domain(format!("deformation support {s:.3e} must lie inside (−T, T) with T = {horizon}")));
    }
    let (a1, a2, a3) = branch_terms(m, hom.kappa_plus, &hom.s_plus, def)?;
    let (b1, b2, b3) = branch_terms(m, hom.kappa_minus, &hom.s_minus, def)?;
    let sigma = &def.sigma;
    let diff = |t: f64| {
        let chi: Vec<f64> = sigma.iter().map(|v| def.f(t) * v).collect();
        let chi_dot: Vec<f64> = sigma.iter().map(|v| def.f_dot(t) * v).collect();
        lagrangian_diff(params, &hom.position(t), &hom.velocity(t), &chi, &chi_dot)
    };
    let breaks = [-s, -a, 0.0, a, s];
    let mut direct = 0.0;
    for w in breaks.windows(2) {
        direct += integrate_near_collision(diff, w[0], w[1], def.alpha)?;
    }
    Ok(DeformationTerms {
        a1,
        a2,
        a3,
        b1,
        b2,
        b3,
        total: a1 + a2 + a3 + b1 + b2 + b3,
        direct_diff: direct,
    })
}

/// Which branch of the case analysis picked the deformation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeformationCase {
    /// `s⁻` and `s⁺` lie in different equal-weight groups; `σ = s⁻`.
    DifferentGroups,
    /// Both lie in the same one-index group `{i₀}`; `σ = e_{i₁}`.
    SingletonGroup,
    /// Both lie in the same group of two or more indices.
    SharedGroup,
}

impl fmt::Display for DeformationCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DeformationCase::DifferentGroups => "different-groups",
            DeformationCase::SingletonGroup => "singleton-group",
            DeformationCase::SharedGroup => "shared-group",
        };
        f.write_str(s)
    }
}

/// Deformation direction for a Gutzwiller homothetic path.
pub fn deformation_direction(params: &PotentialParams, s_minus: &[f64], s_plus: &[f64]) -> Result<(DeformationCase, Vec<f64>)> {
    gutzwiller_weights(params)?;
    let st = params.critical_structure();
    let gm = st
        .group_of(s_minus, 1e-8)
        .ok_or_else(|| Error::Domain("s_minus is not a critical direction".into()))?;
    let gp = st
        .group_of(s_plus, 1e-8)
        .ok_or_else(|| Error::Domain("s_plus is not a critical direction".into()))?;
    let d = params.dim();
    if gm != gp {
        return Ok((DeformationCase::DifferentGroups, normalized(s_minus)));
    }
    let group = &st.partition[gm];
    if group.len() == 1 {
        let i0 = group[0];
        let i1 = (0..d).find(|i| *i != i0).expect("d ≥ 2");
        let mut e = vec![0.0; d];
        e[i1] = 1.0;
        return Ok((DeformationCase::SingletonGroup, e));
    }
    let sum: Vec<f64> = s_minus.iter().zip(s_plus).map(|(a, b)| a + b).collect();
    if norm(&sum) > 1e-12 {
        return Ok((DeformationCase::SharedGroup, normalized(&sum)));
    }
    // s⁺ = −s⁻: any unit vector of the group orthogonal to s⁺
    let mut best: Option<Vec<f64>> = None;
    for &i in group {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let c = dot(&e, s_plus);
        for j in 0..d {
            e[j] -= c * s_plus[j];
        }
        if best.as_ref().map_or(true, |b| norm(&e) > norm(b) + 1e-12) {
            best = Some(e);
        }
    }
    Ok((DeformationCase::SharedGroup, normalized(&best.expect("group is non-empty"))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimalityVerdict {
    /// The deformation lowers the action on the whole grid.
    NotMinimizer,
    /// The sign of the difference is not negative throughout.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct MinimalityReport {
    pub case: DeformationCase,
    pub sigma: Vec<f64>,
    /// `(ε, terms)` in grid order.
    pub rows: Vec<(f64, DeformationTerms)>,
    pub verdict: MinimalityVerdict,
    /// Least-squares slope of `ln|A(x̄^ε) − A(x̄)|` against `ln ε`.
    pub slope: Option<f64>,
}

impl MinimalityReport {
    /// Per-term table, one row per `ε`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,A1,A2,A3,B1,B2,B3,total,direct_diff\n");
        for (e, t) in &self.rows {
            let vals = [*e, t.a1, t.a2, t.a3, t.b1, t.b2, t.b3, t.total, t.direct_diff];
            let cells: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for MinimalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.verdict {
            MinimalityVerdict::NotMinimizer => "not a local minimizer",
            MinimalityVerdict::Inconclusive => "inconclusive",
        };
        writeln!(f, "verdict = {verdict}")?;
        writeln!(f, "case = {}", self.case)?;
        writeln!(f, "sigma = {}", g6_vec(&self.sigma))?;
        if let Some(k) = self.slope {
            writeln!(f, "slope = {}", g6(k))?;
        }
        for (e, t) in &self.rows {
            writeln!(f, "epsilon = {}: difference = {}, term_sum = {}", g6(*e), g6(t.direct_diff), g6(t.total))?;
        }
        Ok(())
    }
}

/// Applies the case-selected deformation on a grid of `ε` values.
pub fn test_minimality(params: &PotentialParams, hom: &HomotheticSpec, horizon: f64, eps_grid: &[f64]) -> Result<MinimalityReport> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidParams("empty epsilon grid".into()));
    }
    let (case, sigma) = deformation_direction(params, &hom.s_minus, &hom.s_plus)?;
    let rows: Vec<(f64, DeformationTerms)> = eps_grid
        .par_iter()
        .map(|&e| {
            let def = DeformationSpec::new(&sigma, e, params.alpha())?;
            Ok((e, deformation_terms(params, hom, &def, horizon)?))
        })
        .collect::<Result<_>>()?;
    let negative = rows.iter().all(|(_, t)| t.direct_diff < 0.0 && t.total < 0.0);
    let slope = log_log_slope(&rows);
    Ok(MinimalityReport {
        case,
        sigma,
        rows,
        verdict: if negative { MinimalityVerdict::NotMinimizer } else { MinimalityVerdict::Inconclusive },
        slope,
    })
}

fn log_log_slope(rows: &[(f64, DeformationTerms)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, t)| t.direct_diff != 0.0)
        .map(|(e, t)| (e.ln(), t.direct_diff.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Default number of ramp steps per unit time in the gluing cut-off.
pub const DEFAULT_N_GLUE: usize = 1000;

/// Radius below which a node counts as a collision.
pub const COLLISION_RADIUS: f64 = 1e-10;

/// Largest allowed distance between a path's collision directions and the
/// critical set.
pub const GLUE_DIRECTION_TOL: f64 = 1e-2;

/// Result of [`glue_comparison`].
#[derive(Debug, Clone)]
pub struct GlueComparison {
    /// The comparison path, equal to the original outside `[−λT, λT]`.
    pub path: Path,
    /// `A(comparison) − A(original)`.
    pub difference: f64,
    /// The same difference in blown-up time.
    pub blown_difference: f64,
    /// `λ^{(2−α)/(2+α)}·(A(x̄^ε) − A(x̄))`, the small-`λ` limit.
    pub predicted: Option<f64>,
    pub homothetic: HomotheticSpec,
}

/// Glues the deformation of the blow-up limit into a path with an isolated
/// collision at `t = 0` and returns the un-blown comparison path.
pub fn glue_comparison(
    params: &PotentialParams,
    path: &Path,
    lambda: f64,
    horizon: f64,
    n_glue: usize,
    deformation: Option<&DeformationSpec>,
) -> Result<GlueComparison> {
    let alpha = params.alpha();
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Domain(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    if !(horizon > 0.0) || n_glue == 0 || 1.0 / n_glue as f64 >= horizon {
        return Err(Error::InvalidParams("need T > 0 and a ramp width 1/N below T".into()));
    }
    if path.dim() != params.dim() {
        return Err(Error::InvalidParams("path dimension differs from the potential".into()));
    }
    if let Some(d) = deformation {
        if d.support() >= horizon - 1.0 / n_glue as f64 {
            return Err(Error::Domain("deformation support overlaps the gluing ramps".into()));
        }
    }
    let radii = path.radii();
    let k = match path.collision() {
        Some(k) => k,
        None => {
            let (k, r) = path.min_radius();
            if r > COLLISION_RADIUS {
                return Err(Error::Domain(format!("no collision node (minimum radius {r:.3e})")));
            }
            k
        }
    };
    if k == 0 || k + 1 == path.len() {
        return Err(Error::Domain("collision at a boundary time".into()));
    }
    let times = path.times();
    if times[k].abs() > 1e-12 * (1.0 + path.duration()) {
        return Err(Error::Domain(format!("collision at t = {:.3e}, expected t = 0", times[k])));
    }
    let window = lambda * horizon;
    if window > -path.t_start() || window > path.t_end() {
        return Err(Error::Domain("λT exceeds the path's time domain".into()));
    }
    for (j, (t, r)) in times.iter().zip(&radii).enumerate() {
        if j != k && t.abs() <= window && *r <= COLLISION_RADIUS {
            return Err(Error::Domain(format!("collision at t = {t:.3e} is not isolated")));
        }
    }
    let st = params.critical_structure();
    let snap = |x: &[f64], name: &str| -> Result<Vec<f64>> {
        let (c, dist) = st.nearest_critical(&normalized(x));
        if dist > GLUE_DIRECTION_TOL {
            return Err(Error::Domain(format!("{name} direction is {dist:.3e} away from the critical set")));
        }
        Ok(c)
    };
    let s_plus = snap(path.node(k + 1), "ejection")?;
    let s_minus = snap(path.node(k - 1), "collision")?;
    let (hom, _) = make_homothetic(params, &s_plus, &s_minus, horizon)?;

    let p = 2.0 / (2.0 + alpha);
    let lp = lambda.powf(-p);
    let ramp_w = 1.0 / n_glue as f64;
    let nn = n_glue as f64;
    let ramp = |tau: f64| {
        let u = horizon - tau.abs();
        if u >= ramp_w {
            (1.0, 0.0)
        } else {
            (nn * u, -nn * tau.signum())
        }
    };
    // χ = φ + ψ in blown-up time, with x^λ and its velocity
    let chi = |tau: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = path.eval(lambda * tau, alpha).iter().map(|v| lp * v).collect();
        let v: Vec<f64> = path.velocity(lambda * tau, alpha).iter().map(|v| lp * lambda * v).collect();
        let (r, dr) = ramp(tau);
        let xb = hom.position(tau);
        let vb = if tau == 0.0 { vec![0.0; x.len()] } else { hom.velocity(tau) };
        let mut c: Vec<f64> = (0..x.len()).map(|i| r * (xb[i] - x[i])).collect();
        let mut cd: Vec<f64> = (0..x.len()).map(|i| dr * (xb[i] - x[i]) + r * (vb[i] - v[i])).collect();
        if let Some(d) = deformation {
            let (f, fd) = (d.f(tau), d.f_dot(tau));
            for i in 0..x.len() {
                c[i] += f * d.sigma[i];
                cd[i] += fd * d.sigma[i];
            }
        }
        (x, v, c, cd)
    };
    let integrand = |tau: f64| {
        let (x, v, c, cd) = chi(tau);
        lagrangian_diff(params, &x, &v, &c, &cd)
    };
    let mut breaks: Vec<f64> = vec![-horizon, -horizon + ramp_w, 0.0, horizon - ramp_w, horizon];
    if let Some(d) = deformation {
        breaks.extend([-d.support(), -d.plateau(), d.plateau(), d.support()]);
    }
    breaks.extend(times.iter().filter(|t| t.abs() < window).map(|t| t / lambda));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * horizon);
    let mut blown = 0.0;
    for w in breaks.windows(2) {
        blown += integrate_near_collision(integrand, w[0], w[1], alpha)
            .map_err(|e| Error::Quadrature(format!("{e} on [{:.6e}, {:.6e}]", w[0], w[1])))?;
    }
    let difference = lambda.powf(-action_scaling_exponent(alpha)) * blown;
    let predicted = match deformation {
        Some(d) => Some(lambda.powf(-action_scaling_exponent(alpha)) * deformation_terms(params, &hom, d, horizon)?.direct_diff),
        None => None,
    };

    // Sample the comparison path: original nodes outside the window,
    // dense nodes inside.
    let mut new_t: Vec<f64> = times.iter().cloned().filter(|t| t.abs() >= window).collect();
    let m = 4000;
    new_t.extend((1..m).map(|j| -window + 2.0 * window * j as f64 / m as f64));
    new_t.extend(breaks.iter().map(|b| b * lambda).filter(|t| t.abs() < window));
    new_t.extend((1..200).map(|j| window * (j as f64 / 200.0).powi(4)));
    new_t.extend((1..200).map(|j| -window * (j as f64 / 200.0).powi(4)));
    new_t.push(0.0);
    new_t.sort_by(f64::total_cmp);
    new_t.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + window));
    let pts: Vec<Vec<f64>> = new_t
        .iter()
        .map(|&t| {
            if t.abs() >= window {
                path.eval(t, alpha)
            } else {
                let (x, _, c, _) = chi(t / lambda);
                let lam_p = lambda.powf(p);
                (0..x.len()).map(|i| lam_p * (x[i] + c[i])).collect()
            }
        })
        .collect();
    let zero = new_t.iter().position(|t| *t == 0.0);
    let mut out = Path::from_points(new_t, &pts)?;
    if let Some(z) = zero {
        if norm(out.node(z)) == 0.0 && z > 0 && z + 1 < out.len() {
            out = out.with_collision(z)?;
        }
    }
    Ok(GlueComparison {
        path: out,
        difference,
        blown_difference: blown,
        predicted,
        homothetic: hom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blow_up_identity_and_factor() {
        let p = Path::from_fn(Path::uniform_times(-1.0, 1.0, 8), |t| vec![1.0 + t, 2.0 - t * t]).unwrap();
        let q = blow_up(&p, 1.0, 1.0).unwrap();
        assert_eq!(q.flat_nodes(), p.flat_nodes());
        let q = blow_up(&p, 8.0, 1.0).unwrap();
        assert!((q.node(3)[0] - 0.25 * p.node(3)[0]).abs() < 1e-15);
        assert!((q.duration() - p.duration() / 8.0).abs() < 1e-15);
        assert!(blow_up(&p, 0.0, 1.0).is_err());
    }

    #[test]
    fn kappa_examples() {
        let k = PotentialParams::isotropic(1.0, 2).unwrap();
        let (h, _) = make_homothetic(&k, &[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        assert!((h.kappa_plus - 2.1213203).abs() < 1e-7);
        let g = PotentialParams::gutzwiller(1.0, &[1.0, 2.0]).unwrap();
        let (h, path) = make_homothetic(&g, &[0.0, 1.0], &[0.0, 1.0], 1.0).unwrap();
        assert!((h.kappa_plus - 1.7838106).abs() < 1e-7);
        assert!((h.beta_plus - 0.5f64.sqrt()).abs() < 1e-15);
        // s⁺ = s⁻ gives an even path
        for j in 0..path.len() {
            let t = path.times()[j];
            let (a, b) = (h.position(t), h.position(-t));
            assert!((a[1] - b[1]).abs() < 1e-14);
        }
        assert!(make_homothetic(&g, &[0.6, 0.8], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn zero_energy_branches() {
        let g = PotentialParams::gutzwiller(0.7, &[1.0, 2.0, 2.0]).unwrap();
        let (h, _) = make_homothetic(&g, &[1.0, 0.0, 0.0], &[0.0, 0.6, 0.8], 1.0).unwrap();
        for t in [-0.9, -1e-3, 1e-6, 0.2, 1.0] {
            let v = h.velocity(t);
            let scale = 0.5 * dot(&v, &v);
            assert!(h.energy(&g, t).abs() <= 1e-8 * scale.max(1.0), "t = {t}");
        }
    }

    #[test]
    fn f_eps_profile() {
        let d = DeformationSpec::new(&[0.0, 1.0], 1e-2, 1.0).unwrap();
        let a = d.plateau();
        assert!((a - 1e-3).abs() < 1e-15);
        assert_eq!(d.f(0.0), 1e-2);
        assert_eq!(d.f(-a), 1e-2);
        assert!((d.f(a + 5e-3) - 5e-3).abs() < 1e-15);
        assert_eq!(d.f(a + 1e-2 + 1e-9), 0.0);
        assert_eq!(d.f(0.3), d.f(-0.3));
        assert_eq!(d.f_dot(a + 1e-3), -1.0);
        assert_eq!(d.f_dot(-a - 1e-3), 1.0);
    }

    #[test]
    fn orthogonal_case_terms() {
        let g = PotentialParams::gutzwiller(1.0, &[1.0, 2.0]).unwrap();
        let (h, _) = make_homothetic(&g, &[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        let mut c1 = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let d = DeformationSpec::new(&[0.0, 1.0], eps, 1.0).unwrap();
            let t = deformation_terms(&g, &h, &d, 1.0).unwrap();
            assert!((t.a1 - eps / 2.0).abs() < 1e-15, "{}", t.a1);
            assert!(t.a3 < 0.0);
            assert!(t.a2 < 0.0);
            c1.push(-t.a2 / eps.powf(0.5));
            assert!((t.total - t.direct_diff).abs() <= 1e-8 * (1.0 + t.direct_diff.abs()));
        }
        // C₁ is stable across ε
        assert!((c1[0] - c1[2]).abs() < 1e-6 * c1[0], "{c1:?}");
    }

    #[test]
    fn case_selection() {
        let g = PotentialParams::gutzwiller(1.0, &[1.0, 2.0]).unwrap();
        let (c, s) = deformation_direction(&g, &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_eq!((c, s), (DeformationCase::DifferentGroups, vec![0.0, 1.0]));
        let (c, s) = deformation_direction(&g, &[-1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!((c, s), (DeformationCase::SingletonGroup, vec![0.0, 1.0]));
        let k = PotentialParams::isotropic(1.0, 2).unwrap();
        let (c, s) = deformation_direction(&k, &[-1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(c, DeformationCase::SharedGroup);
        assert!(s[0].abs() < 1e-15 && (s[1].abs() - 1.0).abs() < 1e-15);
    }
}
