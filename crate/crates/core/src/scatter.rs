//! Hyperbolic and bi-hyperbolic solutions as limits of free-time
//! minimisers with receding endpoints, plus escape diagnostics.
//!
//! Each stage `n` minimises between endpoints at radius `R_n`; the next stage
//! is warm-started from the previous one extended radially. A run is
//! accepted when consecutive stages agree on a common time window and the
//! escape diagnostics are consistent.

use std::f64::consts::PI;
use std::fmt;

use crate::dynamics::{monitor_point, State, Trajectory};
use crate::error::{Error, Result};
use crate::numfmt::{g6, g6_vec};
use crate::minimize::{
    self, exclusion_case, free_time_from_seeds, minimize_constrained_from_seeds, node_velocities, spiral_seeds, FreeSeed,
    MinimizeOptions, MinimizeResult, PhiBound,
};
use crate::paths::{self, Path};
use crate::potential::{PotentialParams, SphereShape};
use crate::vecops::{dist, dot, norm, normalized};

/// Right-hand side of the tail estimate for `∫_{t1}^{t2} |ṡ| dt` on an
/// outgoing branch that started at `t0` with radius `r0`:
/// `(2/α)·√(2h r0^α + 2U_max)/(2h)^{(2+α)/4}·(t1 − t0)^{−α/2}`.
///
/// Requires `h > 0`, `r0 > 0` and `t1 > t0`; otherwise the result is NaN.
pub fn sdot_tail_bound(params: &PotentialParams, h: f64, r0: f64, t0: f64, t1: f64) -> f64 {
    if !(h > 0.0 && r0 > 0.0 && t1 > t0) {
        return f64::NAN;
    }
    let a = params.alpha();
    let num = (2.0 * h * r0.powf(a) + 2.0 * params.u_max()).sqrt();
    2.0 / a * num / (2.0 * h).powf(0.25 * (2.0 + a)) * (t1 - t0).powf(-0.5 * a)
}

/// Asymptotic escape diagnostics of one outgoing branch.
#[derive(Debug, Clone)]
pub struct EscapeData {
    /// Direction `s` at the final sample.
    pub s_escape: Vec<f64>,
    /// Unit velocity at the final sample (asymptote estimate).
    pub velocity_direction: Vec<f64>,
    /// Slope of a least-squares fit of `r` against `t` on the outer half.
    pub radial_rate: f64,
    /// `sup |s(t) − s_escape|` over the outer half.
    pub direction_residual: f64,
    /// Tail estimate at the start of the outer half.
    pub tail_bound: f64,
    /// `Γ` non-increasing on the outgoing samples.
    pub gamma_monotone: bool,
}

impl EscapeData {
    pub fn escape_angle(&self) -> f64 {
        self.s_escape[1].atan2(self.s_escape[0])
    }
}

/// Escape fit on an outgoing sequence of states (time increasing).
pub fn escape_fit_states(params: &PotentialParams, states: &[State], h: f64) -> Result<EscapeData> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {h}")));
    }
    if states.len() < 8 {
        return Err(Error::Fit("need at least 8 samples".into()));
    }
    let radii: Vec<f64> = states.iter().map(State::radius).collect();
    let imin = radii.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let rmin = radii[imin];
    let rend = *radii.last().unwrap();
    if !(rend >= 10.0 * rmin) {
        return Err(Error::Fit(format!("trajectory too short: r grows only from {rmin:.3e} to {rend:.3e}")));
    }
    // first outgoing sample
    let t0_idx = states
        .iter()
        .position(|s| dot(&s.x, &s.v) >= 0.0)
        .unwrap_or(imin)
        .max(imin);
    let t_end = states.last().unwrap().t;
    let t_mid = 0.5 * (states[t0_idx].t + t_end);
    let outer: Vec<&State> = states.iter().filter(|s| s.t >= t_mid).collect();
    if outer.len() < 3 {
        return Err(Error::Fit("too few samples on the outer half".into()));
    }
    let n = outer.len() as f64;
    let (mut st, mut sr, mut stt, mut str_) = (0.0, 0.0, 0.0, 0.0);
    for s in &outer {
        let r = s.radius();
        st += s.t;
        sr += r;
        stt += s.t * s.t;
        str_ += s.t * r;
    }
    let radial_rate = (n * str_ - st * sr) / (n * stt - st * st);
    let last = states.last().unwrap();
    let s_escape = normalized(&last.x);
    let velocity_direction = normalized(&last.v);
    let direction_residual = outer
        .iter()
        .map(|s| dist(&normalized(&s.x), &s_escape))
        .fold(0.0, f64::max);
    let t_start = states[t0_idx].t;
    let tail_bound = if outer[0].t > t_start {
        sdot_tail_bound(params, h, radii[t0_idx], t_start, outer[0].t)
    } else {
        f64::INFINITY
    };
    let gammas: Vec<f64> = states[t0_idx..].iter().filter_map(|s| monitor_point(params, s).map(|m| m[3])).collect();
    let gscale = gammas.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let gamma_monotone = gammas.windows(2).all(|w| w[1] <= w[0] + 1e-9 * gscale);
    Ok(EscapeData {
        s_escape,
        velocity_direction,
        radial_rate,
        direction_residual,
        tail_bound,
        gamma_monotone,
    })
}

/// Escape fit on an integrated trajectory.
pub fn escape_fit(params: &PotentialParams, traj: &Trajectory, h: f64) -> Result<EscapeData> {
    escape_fit_states(params, &traj.states, h)
}

/// States at the nodes of a minimiser path, with discrete Legendre velocities.
pub fn path_states(params: &PotentialParams, path: &Path) -> Vec<State> {
    let v = node_velocities(params, path);
    (0..path.len())
        .map(|k| State::new(path.times()[k], path.node(k).to_vec(), v[k].clone()))
        .collect()
}

/// Geometric radius schedule and acceptance tolerances.
#[derive(Debug, Clone)]
pub struct ScheduleSpec {
    pub r1: f64,
    pub ratio: f64,
    pub stages: usize,
    /// Relative sup-distance allowed between the last two stages on the
    /// shared window (hyperbolic runs).
    pub stage_tol: f64,
    /// Same for bi-hyperbolic runs, whose stages converge more slowly.
    pub bi_stage_tol: f64,
    /// Relative spread allowed in `ρ_n` over the last three stages.
    pub rho_tol: f64,
    /// Allowed error of the escape angles (bi-hyperbolic runs).
    pub angle_tol: f64,
    /// Allowed relative error of the radial escape rate.
    pub rate_tol: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            r1: 10.0,
            ratio: 2.0,
            stages: 6,
            stage_tol: 1e-4,
            bi_stage_tol: 1e-3,
            rho_tol: 1e-2,
            angle_tol: 1e-2,
            rate_tol: 1e-2,
        }
    }
}

impl ScheduleSpec {
    pub fn radii(&self) -> Vec<f64> {
        (0..self.stages).map(|k| self.r1 * self.ratio.powi(k as i32)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages < 3 {
            return Err(Error::InvalidParams(format!("need at least 3 stages, got {}", self.stages)));
        }
        if !(self.r1 > 0.0 && self.ratio > 1.0) {
            return Err(Error::InvalidParams("radii must be positive and strictly increasing".into()));
        }
        if !(self.stage_tol > 0.0 && self.bi_stage_tol > 0.0 && self.rho_tol > 0.0 && self.angle_tol > 0.0 && self.rate_tol > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one continuation stage.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub radius: f64,
    pub result: MinimizeResult,
    /// Time-shifted path (bi-hyperbolic: minimum radius at `t = 0`).
    pub path: Path,
    pub escape_plus: Option<EscapeData>,
    pub escape_minus: Option<EscapeData>,
    /// Interpolated minimum radius (bi-hyperbolic runs).
    pub rho: Option<f64>,
    /// Relative sup-distance to the previous stage on the shared window.
    pub shared_diff: Option<f64>,
    /// Duration bound `T⁺ ≥ (R − ρ)²/(C₁ + C₂R)` holds (bi-hyperbolic runs).
    pub duration_bound_ok: Option<bool>,
    /// `İ` increasing along the path.
    pub idot_increasing: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ContinuationSchedule {
    pub radii: Vec<f64>,
    pub stages: Vec<StageReport>,
}

impl ContinuationSchedule {
    pub fn rhos(&self) -> Vec<f64> {
        self.stages.iter().filter_map(|s| s.rho).collect()
    }
}

/// Outcome of a continuation run.
#[derive(Debug, Clone)]
pub struct ScatterOutcome {
    pub accepted: bool,
    pub result: MinimizeResult,
    /// Final-stage path (time-shifted in bi-hyperbolic mode; with the
    /// ejection piece prepended when the start is the origin).
    pub path: Path,
    pub escape_plus: EscapeData,
    pub escape_minus: Option<EscapeData>,
    pub schedule: ContinuationSchedule,
    pub warnings: Vec<String>,
    /// Why the run was not accepted (empty when accepted).
    pub failures: Vec<String>,
}

impl fmt::Display for ScatterOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accepted = {}", self.accepted)?;
        for w in &self.warnings {
            writeln!(f, "warning = {w}")?;
        }
        for w in &self.failures {
            writeln!(f, "failure = {w}")?;
        }
        for (k, s) in self.schedule.stages.iter().enumerate() {
            write!(
                f,
                "stage {k}: R = {}, value = {}, T = {}, energy = {}, min_radius = {}",
                g6(s.radius),
                g6(s.result.value),
                g6(s.result.duration()),
                g6(s.result.energy_of_path.unwrap_or(f64::NAN)),
                g6(s.result.min_radius)
            )?;
            if let Some(r) = s.rho {
                write!(f, ", rho = {}", g6(r))?;
            }
            if let Some(d) = s.shared_diff {
                write!(f, ", shared_diff = {}", g6(d))?;
            }
            writeln!(f)?;
        }
        let e = &self.escape_plus;
        writeln!(f, "s_plus = {}", g6_vec(&e.s_escape))?;
        writeln!(f, "velocity_direction_plus = {}", g6_vec(&e.velocity_direction))?;
        writeln!(f, "radial_rate_plus = {}", g6(e.radial_rate))?;
        writeln!(f, "direction_residual_plus = {}", g6(e.direction_residual))?;
        writeln!(f, "tail_bound_plus = {}", g6(e.tail_bound))?;
        if let Some(e) = &self.escape_minus {
            writeln!(f, "s_minus = {}", g6_vec(&e.s_escape))?;
            writeln!(f, "velocity_direction_minus = {}", g6_vec(&e.velocity_direction))?;
            writeln!(f, "radial_rate_minus = {}", g6(e.radial_rate))?;
            writeln!(f, "direction_residual_minus = {}", g6(e.direction_residual))?;
        }
        Ok(())
    }
}


/// Relative sup-distance between two paths on `[a, b]`.
pub fn window_distance(p: &Path, q: &Path, a: f64, b: f64, alpha: f64, samples: usize) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for k in 0..=samples {
        let t = a + (b - a) * k as f64 / samples as f64;
        let (x, y) = (p.eval(t, alpha), q.eval(t, alpha));
        num = num.max(dist(&x, &y));
        den = den.max(norm(&x));
    }
    num / den.max(1e-300)
}

/// The last shared-window distance must be below `tol` and the last three
/// must decrease.
fn stage_agreement(stages: &[StageReport], tol: f64, failures: &mut Vec<String>) {
    let diffs: Vec<f64> = stages.iter().filter_map(|s| s.shared_diff).collect();
    if let Some(&dv) = diffs.last() {
        if !(dv <= tol) {
            failures.push(format!("last stages differ by {dv:.3e} > {tol:.1e} on the shared window"));
        }
    }
    let k = diffs.len();
    if k >= 3 && !(diffs[k - 1] < diffs[k - 2] && diffs[k - 2] < diffs[k - 3]) {
        failures.push(format!("stage distances not decreasing: {:?}", &diffs[k - 3..]));
    }
}

/// Dense straight leg from `a` to `b` (excluding `a`).
fn leg(a: &[f64], b: &[f64], pieces: usize) -> Vec<Vec<f64>> {
    (1..=pieces).map(|k| crate::vecops::lerp(a, b, k as f64 / pieces as f64)).collect()
}

fn idot_increasing(states: &[State]) -> bool {
    let id: Vec<f64> = states.iter().map(|s| 2.0 * dot(&s.x, &s.v)).collect();
    let scale = id.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    id.windows(2).all(|w| w[1] >= w[0] - 1e-6 * scale)
}

/// Start of the stage problems when `x0` is the origin: `ε^{2/(2+α)} s`.
pub const EJECTION_TIME: f64 = 1e-2;

/// Runs the hyperbolic continuation and returns the outcome whether or not
/// it is accepted.
pub fn hyperbolic_run(
    params: &PotentialParams,
    x0: &[f64],
    s_target: &[f64],
    h: f64,
    spec: &ScheduleSpec,
    opts: &MinimizeOptions,
) -> Result<ScatterOutcome> {
    spec.validate()?;
    opts.validate()?;
    let d = params.dim();
    if x0.len() != d || s_target.len() != d {
        return Err(Error::InvalidParams(format!("x0 and s_target need {d} components")));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {h}")));
    }
    if (norm(s_target) - 1.0).abs() > 1e-8 {
        return Err(Error::Domain("s_target must be a unit vector".into()));
    }
    let alpha = params.alpha();
    let from_origin = norm(x0) == 0.0;
    let p_exp = 2.0 / (2.0 + alpha);
    let start: Vec<f64> = if from_origin {
        s_target.iter().map(|v| v * EJECTION_TIME.powf(p_exp)).collect()
    } else {
        x0.to_vec()
    };
    let radii = spec.radii();
    if radii[0] <= 2.0 * norm(&start) {
        return Err(Error::InvalidParams("first radius must exceed twice |x0|".into()));
    }
    let speed = (2.0 * h).sqrt();
    let mut stages: Vec<StageReport> = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        let end: Vec<f64> = s_target.iter().map(|v| v * r).collect();
        let mut seeds = Vec::new();
        let fresh = {
            let pieces = 8 * opts.nodes;
            let mut curve = vec![start.clone()];
            curve.extend(leg(&start, &end, pieces));
            FreeSeed::from_curve(&curve, speed, opts.nodes)
        };
        if let Some(prev) = stages.last() {
            let pts = prev.result.path.points();
            let mut curve = pts.clone();
            curve.extend(leg(pts.last().unwrap(), &end, 4 * opts.nodes));
            seeds.push(FreeSeed::from_curve(&curve, speed, opts.nodes));
            // keep the previous timing on the old part
            let t_prev = prev.result.path.duration();
            let mut times: Vec<f64> = prev.result.path.times().to_vec();
            let extra = dist(pts.last().unwrap(), &end) / speed;
            let add = 4 * opts.nodes;
            for j in 1..=add {
                times.push(t_prev + extra * j as f64 / add as f64);
            }
            let warm = Path::from_points(times, &curve)?;
            seeds.insert(0, FreeSeed::from_path(&warm, opts.nodes));
        } else {
            seeds.push(fresh.clone());
        }
        if opts.restarts > 0 && k == 0 {
            for j in 1..=opts.restarts {
                let dense = perturbed_line(&start, &end, 8 * opts.nodes, j, opts.seed);
                seeds.push(FreeSeed::from_curve(&dense, speed, opts.nodes));
            }
        }
        let result = free_time_from_seeds(params, h, seeds, opts)?;
        let path = result.path.clone();
        let states = path_states(params, &path);
        let escape_plus = escape_fit_states(params, &states, h).ok();
        let shared_diff = stages.last().map(|prev| {
            let w = 0.5 * stages[0].result.duration();
            window_distance(&path, &prev.path, 0.0, w, alpha, 400)
        });
        stages.push(StageReport {
            radius: r,
            idot_increasing: idot_increasing(&states),
            result,
            path,
            escape_plus,
            escape_minus: None,
            rho: None,
            shared_diff,
            duration_bound_ok: None,
        });
    }
    let last = stages.last().unwrap();
    let mut failures = Vec::new();
    let escape_plus = match &last.escape_plus {
        Some(e) => e.clone(),
        None => return Err(Error::Continuation("escape fit failed on the final stage".into())),
    };
    if !last.result.converged {
        failures.push(format!(
            "final stage not converged (el_residual {:.3e}, energy {:?})",
            last.result.el_residual, last.result.energy_of_path
        ));
    }
    stage_agreement(&stages, spec.stage_tol, &mut failures);
    let rate_err = (escape_plus.radial_rate - speed).abs() / speed;
    if rate_err > spec.rate_tol {
        failures.push(format!("radial rate {:.6e} differs from √(2h) by {rate_err:.3e}", escape_plus.radial_rate));
    }
    let mut path = last.path.clone();
    if from_origin {
        path = prepend_ejection(&path, s_target, alpha)?;
    }
    Ok(ScatterOutcome {
        accepted: failures.is_empty(),
        result: last.result.clone(),
        path,
        escape_plus,
        escape_minus: None,
        schedule: ContinuationSchedule { radii, stages },
        warnings: Vec::new(),
        failures,
    })
}

fn perturbed_line(a: &[f64], b: &[f64], pieces: usize, index: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000 + index as u64));
    let d = a.len();
    let scale = 0.2 * dist(a, b);
    let amp: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
    (0..=pieces)
        .map(|k| {
            let u = k as f64 / pieces as f64;
            let s = (PI * u).sin();
            (0..d).map(|i| a[i] + u * (b[i] - a[i]) + s * amp[i]).collect()
        })
        .collect()
}

/// Prepends `t ↦ t^{2/(2+α)} s` on `[0, ε]` (collision node at `t = 0`).
fn prepend_ejection(path: &Path, s: &[f64], alpha: f64) -> Result<Path> {
    let p = 2.0 / (2.0 + alpha);
    let mut times = vec![0.0];
    let mut pts = vec![vec![0.0; s.len()]];
    let m = 16;
    for j in 1..=m {
        let t = EJECTION_TIME * (j as f64 / m as f64).powi(3);
        times.push(t);
        pts.push(s.iter().map(|v| v * t.powf(p)).collect());
    }
    let head = Path::from_points(times, &pts)?.with_collision(0)?;
    let tail = path.shift_time(EJECTION_TIME - path.t_start());
    // join exactly
    let mut tail_pts = tail.points();
    tail_pts[0] = head.end().to_vec();
    let tail = Path::from_points(tail.times().to_vec(), &tail_pts)?;
    head.concat(&tail)
}

/// Runs [`hyperbolic_run`] and turns a rejected run into an error.
pub fn hyperbolic_solve(
    params: &PotentialParams,
    x0: &[f64],
    s_target: &[f64],
    h: f64,
    spec: &ScheduleSpec,
    opts: &MinimizeOptions,
) -> Result<ScatterOutcome> {
    let out = hyperbolic_run(params, x0, s_target, h, spec, opts)?;
    if out.accepted {
        Ok(out)
    } else {
        Err(Error::Continuation(format!("{}\n{}", out.failures.join("; "), out)))
    }
}

/// Escape-direction case for planar Gutzwiller bi-hyperbolic problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeCase {
    /// `s⁺ ≠ −s⁻`, `s₁⁻ ≠ ±1`, `s₂⁻ s₂⁺ ≤ 0`.
    I,
    /// `s⁺ ≠ −s⁻`, `s₁⁻ = ±1`.
    II,
}

const DIR_EPS: f64 = 1e-12;

/// Classifies `(s⁻, s⁺) = (e^{iθ₋}, e^{iθ₊})`, trying the reflections
/// across both axes when the raw pair matches neither case.
pub fn escape_case(theta_minus: f64, theta_plus: f64) -> Option<(EscapeCase, bool, bool)> {
    for rr in [false, true] {
        for ri in [false, true] {
            let map = |t: f64| {
                let (mut c, mut s) = (t.cos(), t.sin());
                if rr {
                    s = -s;
                }
                if ri {
                    c = -c;
                }
                (c, s)
            };
            let (m1, m2) = map(theta_minus);
            let (p1, p2) = map(theta_plus);
            let antipodal = (m1 + p1).abs() < DIR_EPS && (m2 + p2).abs() < DIR_EPS;
            if antipodal {
                continue;
            }
            let axis = (m1.abs() - 1.0).abs() < DIR_EPS;
            if !axis && m2 * p2 <= DIR_EPS {
                return Some((EscapeCase::I, rr, ri));
            }
            if axis {
                return Some((EscapeCase::II, rr, ri));
            }
        }
    }
    None
}

/// Time of the minimum of `|γ|` by quadratic interpolation around the
/// smallest node, and the interpolated radius.
pub fn periapsis(path: &Path) -> (f64, f64) {
    let r = path.radii();
    let t = path.times();
    let (k, rk) = path.min_radius();
    if k == 0 || k + 1 == r.len() {
        return (t[k], rk);
    }
    let (t0, t1, t2) = (t[k - 1], t[k], t[k + 1]);
    let (r0, r1, r2) = (r[k - 1], r[k], r[k + 1]);
    // Lagrange parabola through the three samples
    let d0 = r0 / ((t0 - t1) * (t0 - t2));
    let d1 = r1 / ((t1 - t0) * (t1 - t2));
    let d2 = r2 / ((t2 - t0) * (t2 - t1));
    let a = d0 + d1 + d2;
    let b = -(d0 * (t1 + t2) + d1 * (t0 + t2) + d2 * (t0 + t1));
    if !(a > 0.0) {
        return (t1, r1);
    }
    let tm = (-b / (2.0 * a)).clamp(t0, t2);
    let c = d0 * t1 * t2 + d1 * t0 * t2 + d2 * t0 * t1;
    let rm = (a * tm * tm + b * tm + c).min(r1);
    (tm, rm)
}

/// Options specific to bi-hyperbolic runs.
#[derive(Debug, Clone, Default)]
pub struct BiOptions {
    /// Silences the warning about the unknown threshold on `α` for
    /// non-Gutzwiller potentials.
    pub assume_alpha_bar_ok: bool,
}

/// Runs the bi-hyperbolic continuation and returns the outcome whether or
/// not it is accepted.
pub fn bihyperbolic_run(
    params: &PotentialParams,
    theta_minus: f64,
    theta_plus: f64,
    h: f64,
    spec: &ScheduleSpec,
    opts: &MinimizeOptions,
    bi: &BiOptions,
) -> Result<ScatterOutcome> {
    spec.validate()?;
    opts.validate()?;
    if params.dim() != 2 {
        return Err(Error::InvalidParams("bi-hyperbolic runs are planar".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {h}")));
    }
    if !((theta_plus - theta_minus).abs() > PI) {
        return Err(Error::Domain(format!(
            "need |θ₊ − θ₋| > π strictly, got {:.17}",
            (theta_plus - theta_minus).abs()
        )));
    }
    let mut warnings = Vec::new();
    let gutz = matches!(params.shape(), SphereShape::Gutzwiller(_));
    if gutz {
        let report = params.check_conditions();
        if !report.u4.holds() {
            warnings.push("spiral condition fails; running without the collision-exclusion guarantee".into());
        }
        if escape_case(theta_minus, theta_plus).is_none() {
            warnings.push("escape directions match neither admissible case".into());
        }
        if exclusion_case(theta_minus, theta_plus).is_none() {
            warnings.push("angle pair outside the collision-exclusion cases".into());
        }
    } else if !bi.assume_alpha_bar_ok {
        warnings.push("alpha may lie below the unknown existence threshold; pass the assume flag to silence".into());
    }
    let alpha = params.alpha();
    let speed = (2.0 * h).sqrt();
    let radii = spec.radii();
    let mut stages: Vec<StageReport> = Vec::new();
    let dir = |t: f64| vec![t.cos(), t.sin()];
    for &r in radii.iter() {
        let a: Vec<f64> = dir(theta_minus).iter().map(|v| v * r).collect();
        let b: Vec<f64> = dir(theta_plus).iter().map(|v| v * r).collect();
        let mut seeds = Vec::new();
        if let Some(prev) = stages.last() {
            let pts = prev.result.path.points();
            let mut curve = vec![a.clone()];
            let pieces = 4 * opts.nodes;
            let mut inward = leg(&a, &pts[0], pieces);
            inward.pop();
            curve.extend(inward);
            curve.extend(pts.iter().cloned());
            curve.extend(leg(pts.last().unwrap(), &b, pieces));
            let extra = dist(&a, &pts[0]) / speed;
            let mut times: Vec<f64> = (0..pieces).map(|j| extra * j as f64 / pieces as f64).collect();
            let t0 = prev.result.path.t_start();
            times.extend(prev.result.path.times().iter().map(|t| t - t0 + extra));
            let t_end = *times.last().unwrap();
            let extra2 = dist(pts.last().unwrap(), &b) / speed;
            for j in 1..=pieces {
                times.push(t_end + extra2 * j as f64 / pieces as f64);
            }
            let warm = Path::from_points(times, &curve)?;
            seeds.push(FreeSeed::from_path(&warm, opts.nodes));
            let sopts = MinimizeOptions { restarts: 0, ..opts.clone() };
            let mut extra_seeds = spiral_seeds(params, r, theta_minus, r, theta_plus, h, &sopts);
            extra_seeds.truncate(1);
            seeds.extend(extra_seeds);
        } else {
            seeds = spiral_seeds(params, r, theta_minus, r, theta_plus, h, opts);
        }
        let result = minimize_constrained_from_seeds(params, theta_minus, theta_plus, h, seeds, opts)?;
        let (tm, rho) = periapsis(&result.path);
        let path = result.path.shift_time(-tm);
        let states = path_states(params, &path);
        let fwd: Vec<State> = states.iter().filter(|s| s.t >= 0.0).cloned().collect();
        let bwd: Vec<State> = states
            .iter()
            .rev()
            .filter(|s| s.t <= 0.0)
            .map(|s| State::new(-s.t, s.x.clone(), s.v.iter().map(|v| -v).collect()))
            .collect();
        let escape_plus = escape_fit_states(params, &fwd, h).ok();
        let escape_minus = escape_fit_states(params, &bwd, h).ok();
        let shared_diff = stages.last().map(|prev| {
            let w = 0.25 * stages[0].result.duration();
            window_distance(&path, &prev.path, -w, w, alpha, 800)
        });
        let duration_bound_ok = Some(duration_bound(params, h, rho, r, path.t_end()));
        stages.push(StageReport {
            radius: r,
            idot_increasing: idot_increasing(&states),
            result,
            path,
            escape_plus,
            escape_minus,
            rho: Some(rho),
            shared_diff,
            duration_bound_ok,
        });
    }
    let rhos: Vec<f64> = stages.iter().filter_map(|s| s.rho).collect();
    if rhos.windows(2).all(|w| w[1] > 1.5 * w[0]) {
        return Err(Error::LostCoercivity(rhos));
    }
    let last = stages.last().unwrap();
    let mut failures = Vec::new();
    let (Some(ep), Some(em)) = (last.escape_plus.clone(), last.escape_minus.clone()) else {
        return Err(Error::Continuation("escape fit failed on the final stage".into()));
    };
    let k = rhos.len();
    let tail = &rhos[k - 3..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    if (hi - lo) / hi > spec.rho_tol {
        failures.push(format!("ρ_n not stabilised over the last three stages: {tail:?}"));
    }
    let ang_err = |s: &[f64], target: f64| {
        let a = s[1].atan2(s[0]);
        let d = (a - target).rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    };
    let (ep_err, em_err) = (ang_err(&ep.s_escape, theta_plus), ang_err(&em.s_escape, theta_minus));
    if ep_err > spec.angle_tol || em_err > spec.angle_tol {
        failures.push(format!("escape angles off by {ep_err:.3e} / {em_err:.3e}"));
    }
    stage_agreement(&stages, spec.bi_stage_tol, &mut failures);
    if !last.result.converged {
        failures.push(format!(
            "final stage not converged (el_residual {:.3e}, energy {:?})",
            last.result.el_residual, last.result.energy_of_path
        ));
    }
    if last.result.collision_suspect {
        failures.push(format!("final stage approaches the origin ({:.3e})", last.result.min_radius));
    }
    Ok(ScatterOutcome {
        accepted: failures.is_empty(),
        result: last.result.clone(),
        path: last.path.clone(),
        escape_plus: ep,
        escape_minus: Some(em),
        schedule: ContinuationSchedule { radii, stages },
        warnings,
        failures,
    })
}

/// Runs [`bihyperbolic_run`] and turns a rejected run into an error.
pub fn bihyperbolic_solve(
    params: &PotentialParams,
    theta_minus: f64,
    theta_plus: f64,
    h: f64,
    spec: &ScheduleSpec,
    opts: &MinimizeOptions,
    bi: &BiOptions,
) -> Result<ScatterOutcome> {
    let out = bihyperbolic_run(params, theta_minus, theta_plus, h, spec, opts, bi)?;
    if out.accepted {
        Ok(out)
    } else {
        Err(Error::Continuation(format!("{}\n{}", out.failures.join("; "), out)))
    }
}

/// `T ≥ (R − ρ)²/(C₁ + C₂R)` with `C₁` from the arc bound at radius `ρ` and
/// `C₂` from the radial bound linearised at `ρ`.
pub fn duration_bound(params: &PotentialParams, h: f64, rho: f64, r: f64, t_plus: f64) -> bool {
    let a = params.alpha();
    let umax = params.u_max();
    let c1 = minimize::phi_h_bound(params, &PhiBound::SphereArc { radius: rho, angle: PI }, h).unwrap_or(f64::INFINITY);
    let v = (2.0 * h).sqrt();
    let c2 = v + umax * rho.powf(-a) / v;
    t_plus >= (r - rho).powi(2) / (c1 + c2 * r)
}

/// Plot data `t, r, θ, Γ, I` at the nodes of a path.
pub fn plot_data(params: &PotentialParams, path: &Path) -> String {
    let mut out = String::from("t,r,theta,Gamma,I\n");
    let states = path_states(params, path);
    let mut theta_prev: Option<(Vec<f64>, f64)> = None;
    for s in &states {
        let r = s.radius();
        let theta = if s.x.len() == 2 {
            match &theta_prev {
                Some((x, th)) if r > 0.0 && norm(x) > 0.0 => th + paths::angle_increment(x, &s.x),
                _ => s.x[1].atan2(s.x[0]),
            }
        } else {
            f64::NAN
        };
        let gamma = monitor_point(params, s).map(|m| m[3]).unwrap_or(f64::NAN);
        out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n", s.t, r, theta, gamma, r * r));
        theta_prev = Some((s.x.clone(), theta));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_bound_example() {
        let k = PotentialParams::isotropic(1.0, 2).unwrap();
        let b = sdot_tail_bound(&k, 0.5, 1.0, 0.0, 100.0);
        assert!((b - 2.0 * 3f64.sqrt() / 10.0).abs() < 1e-12, "{b}");
        let b2 = sdot_tail_bound(&k, 0.5, 1.0, 0.0, 400.0);
        assert!((b / b2 - 2.0).abs() < 1e-12);
        assert!(sdot_tail_bound(&k, -1.0, 1.0, 0.0, 1.0).is_nan());
    }

    #[test]
    fn escape_cases() {
        let (c, _, _) = escape_case(3.0 * PI / 4.0, -PI / 2.0).unwrap();
        assert_eq!(c, EscapeCase::I);
        assert_eq!(escape_case(0.0, 2.0).unwrap().0, EscapeCase::II);
        // antipodal pair matches nothing
        assert!(escape_case(0.3, 0.3 + PI).is_none());
    }

    #[test]
    fn periapsis_interpolation() {
        let p = Path::from_fn(Path::uniform_times(-1.0, 1.3, 23), |t| vec![1.0 + (t - 0.123).powi(2), 0.0]).unwrap();
        let (t, r) = periapsis(&p);
        assert!((t - 0.123).abs() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_escape_has_zero_direction_residual() {
        let k = PotentialParams::gutzwiller(1.0, &[1.0, 2.0]).unwrap();
        let states: Vec<State> = (0..100)
            .map(|j| {
                let t = j as f64;
                State::new(t, vec![0.0, 1.0 + t], vec![0.0, 1.0])
            })
            .collect();
        let e = escape_fit_states(&k, &states, 0.5).unwrap();
        assert_eq!(e.direction_residual, 0.0);
        assert!((e.radial_rate - 1.0).abs() < 1e-12);
    }
}
