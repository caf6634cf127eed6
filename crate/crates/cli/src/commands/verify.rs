//! Built-in invariant suites. `quick` uses short horizons and coarse grids
//! and finishes in seconds; `full` uses the sizes of the acceptance runs.

use std::f64::consts::PI;

use anisokepler::blowup::{self, make_homothetic, test_minimality, MinimalityVerdict};
use anisokepler::dynamics::{self, Formulation, IntegrateOptions, State, Termination};
use anisokepler::minimize::{free_time_minimize, MinimizeOptions};
use anisokepler::numfmt::g6;
use anisokepler::paths::{self, Path};
use anisokepler::potential::Verdict;
use anisokepler::scatter::{escape_fit, sdot_tail_bound};
use anisokepler::{PotentialParams, Result};

use crate::config::RunConfig;
use crate::output::{Artifacts, KeyValues};
use crate::{CliError, CliResult, Outcome};

#[derive(Debug, Clone, Copy)]
struct Sizes {
    horizon: f64,
    nodes: usize,
    eps: &'static [f64],
}

const QUICK: Sizes = Sizes {
    horizon: 100.0,
    nodes: 64,
    eps: &[1e-2, 1e-3],
};

const FULL: Sizes = Sizes {
    horizon: 1000.0,
    nodes: 256,
    eps: &[1e-2, 1e-3, 1e-4],
};

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn gutz() -> Result<PotentialParams> {
    PotentialParams::gutzwiller(1.0, &[1.0, 2.0])
}

const SAMPLE_POINTS: [[f64; 2]; 4] = [[1.0, 0.3], [-0.4, 2.0], [0.05, -0.7], [-3.0, -1.5]];

/// State at `x` with speed fixed by the energy `h`.
fn state_with_energy(params: &PotentialParams, x: &[f64], dir: &[f64], h: f64) -> State {
    let speed = (2.0 * (h + params.value(x))).sqrt();
    let n = dir[0].hypot(dir[1]);
    State::new(0.0, x.to_vec(), dir.iter().map(|c| c * speed / n).collect())
}

fn potential_checks(out: &mut Vec<Check>) {
    out.push(check("potential.homogeneity", || {
        let p = gutz()?;
        let worst = SAMPLE_POINTS
            .iter()
            .flat_map(|x| [0.1, 3.0, 17.0].map(|l| rel(p.value(&[l * x[0], l * x[1]]), l.powf(-1.0) * p.value(x))))
            .fold(0.0, f64::max);
        Ok((worst <= 1e-12, format!("max relative error {}", g6(worst))))
    }));
    out.push(check("potential.euler_identity", || {
        let p = PotentialParams::gutzwiller(0.7, &[1.0, 2.0, 3.5])?;
        let mut worst: f64 = 0.0;
        for x in SAMPLE_POINTS {
            let x = [x[0], x[1], 0.5];
            let g = p.grad_u(&x)?;
            let lhs: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
            worst = worst.max(rel(lhs, -0.7 * p.value(&x)));
        }
        Ok((worst <= 1e-12, format!("max relative error {}", g6(worst))))
    }));
    out.push(check("potential.gradient", || {
        let p = gutz()?;
        let mut worst: f64 = 0.0;
        for x in SAMPLE_POINTS {
            let g = p.grad_u(&x)?;
            for i in 0..2 {
                let step = 1e-6 * (1.0 + x[i].abs());
                let (mut a, mut b) = (x, x);
                a[i] += step;
                b[i] -= step;
                let fd = (p.value(&a) - p.value(&b)) / (2.0 * step);
                worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
            }
        }
        Ok((worst <= 1e-6, format!("max scaled error {}", g6(worst))))
    }));
    out.push(check("potential.spiral_condition", || {
        let r = gutz()?.check_conditions();
        let ms = &r.structure.min_set;
        let ok = r.u4 == Verdict::Holds
            && ms.len() == 2
            && (ms[0] - PI / 2.0).abs() < 1e-9
            && (ms[1] - 1.5 * PI).abs() < 1e-9
            && PotentialParams::gutzwiller(1.0, &[1.0, 1.1])?.check_conditions().u4 == Verdict::Fails;
        Ok((ok, format!("U4 {}, min_set {:?}", r.u4, ms.iter().map(|t| g6(*t)).collect::<Vec<_>>())))
    }));
}

/// Largest relative gap between the closed-form `Ï` and the centred second
/// difference of `I` with step `dt`, over the given times. The integrator
/// lands exactly on every stencil point, so no interpolation error enters.
fn lagrange_jacobi_error(p: &PotentialParams, times: &[f64], dt: f64) -> Result<f64> {
    let s0 = state_with_energy(p, &[1.0, 0.3], &[0.2, 1.0], 1.0);
    let mut opts = IntegrateOptions::with_tol(1e-13);
    opts.stop_times = times.iter().flat_map(|t| [t - dt, *t, t + dt]).collect();
    let t_end = times.iter().copied().fold(0.0, f64::max) + 2.0 * dt;
    let tr = dynamics::integrate(p, &s0, t_end, &opts)?;
    let find = |t: f64| tr.states.iter().find(|s| s.t == t).cloned();
    let mut worst: f64 = 0.0;
    for &t in times {
        let (Some(a), Some(b), Some(c)) = (find(t - dt), find(t), find(t + dt)) else {
            return Err(anisokepler::Error::Integration(format!("no state at the stencil around t = {t}")));
        };
        let i = |s: &State| s.radius().powi(2);
        let fd = (i(&a) - 2.0 * i(&b) + i(&c)) / (dt * dt);
        let closed = dynamics::monitor_point(p, &b).map_or(f64::NAN, |m| m[2]);
        worst = worst.max(rel(fd, closed));
    }
    Ok(worst)
}

fn dynamics_checks(out: &mut Vec<Check>, sz: Sizes) {
    let traj = gutz().and_then(|p| {
        let s0 = state_with_energy(&p, &[1.0, 0.3], &[0.2, 1.0], 1.0);
        let opts = IntegrateOptions::with_tol(1e-12);
        dynamics::integrate(&p, &s0, sz.horizon, &opts)
    });
    out.push(check("dynamics.energy_conservation", || {
        let tr = traj.clone()?;
        let drift = tr.max_energy_drift(&gutz()?);
        let ok = drift <= 1e-8 && tr.termination == Termination::Horizon;
        Ok((ok, format!("drift {} over t = {}", g6(drift), g6(sz.horizon))))
    }));
    out.push(check("dynamics.lagrange_jacobi", || {
        let p = gutz()?;
        let worst = lagrange_jacobi_error(&p, &[0.5, 1.0, 2.0, 3.0, 5.0], 1e-3)?;
        Ok((worst <= 1e-6, format!("max relative error {}", g6(worst))))
    }));
    out.push(check("dynamics.gamma_monotone", || {
        let tr = traj.clone()?;
        let m = dynamics::monitors(&gutz()?, &tr);
        let ok = m.first_outgoing().is_some() && m.gamma_nonincreasing_after_outgoing(1e-12);
        Ok((ok, format!("{} samples", m.t.len())))
    }));
    out.push(check("dynamics.collision_fit", || {
        let mut worst_exp: f64 = 0.0;
        let mut worst_beta: f64 = 0.0;
        for alpha in [0.5, 1.0, 1.5] {
            let p = PotentialParams::gutzwiller(alpha, &[1.0, 2.0])?;
            let s0 = State::new(0.0, vec![1.0, 0.0], vec![-(2.0 * p.value(&[1.0, 0.0])).sqrt(), 0.0]);
            let opts = IntegrateOptions::default().formulation(Formulation::Sundman);
            let tr = dynamics::integrate(&p, &s0, 10.0, &opts)?;
            let fit = dynamics::fit_collision(&p, &tr)?;
            worst_exp = worst_exp.max(rel(fit.fit_exponent, 2.0 / (2.0 + alpha)));
            worst_beta = worst_beta.max(fit.consistency);
        }
        Ok((
            worst_exp <= 1e-2 && worst_beta <= 2e-2,
            format!("exponent error {}, beta mismatch {}", g6(worst_exp), g6(worst_beta)),
        ))
    }));
}

/// A planar test path bending around the origin.
fn arc_path(n: usize) -> Result<Path> {
    let times = Path::uniform_times(0.0, 2.0, n);
    Path::from_fn(times, |t| {
        let a = 0.3 + 1.2 * t;
        let r = 1.0 + 0.4 * (t * 2.0).sin();
        vec![r * a.cos(), r * a.sin()]
    })
}

fn path_checks(out: &mut Vec<Check>, sz: Sizes) {
    out.push(check("paths.csv_roundtrip", || {
        let p = gutz()?;
        let path = arc_path(sz.nodes)?;
        let back = paths::from_csv(&paths::to_csv(&path))?;
        let e = rel(paths::action(&p, &back)?, paths::action(&p, &path)?);
        Ok((e <= 1e-10, format!("relative action change {}", g6(e))))
    }));
    out.push(check("paths.time_rescaling", || {
        let p = gutz()?;
        let path = arc_path(sz.nodes)?;
        let delta = 2.5;
        let k = path.kinetic(p.alpha());
        let pot = paths::action(&p, &path)? - k;
        let scaled = paths::action(&p, &paths::rescale_time(&path, delta)?)?;
        let e = rel(scaled, k / delta + delta * pot);
        Ok((e <= 1e-10, format!("relative error {}", g6(e))))
    }));
    out.push(check("blowup.action_scaling", || {
        let mut worst: f64 = 0.0;
        for alpha in [0.5, 1.0] {
            let p = PotentialParams::gutzwiller(alpha, &[1.0, 2.0])?;
            let path = arc_path(sz.nodes)?;
            let a0 = paths::action(&p, &path)?;
            for lambda in [2.0, 8.0] {
                let a1 = paths::action(&p, &blowup::blow_up(&path, lambda, alpha)?)?;
                worst = worst.max(rel(a1, lambda.powf(blowup::action_scaling_exponent(alpha)) * a0));
            }
        }
        Ok((worst <= 1e-10, format!("max relative error {}", g6(worst))))
    }));
}

/// `∫_{r1}^{r2} √(2h + 2/r) dr` for the Kepler potential.
fn radial_jacobi_length(r1: f64, r2: f64, h: f64) -> f64 {
    let c = 1.0 / h;
    let prim = |r: f64| (r * (r + c)).sqrt() + c * (r.sqrt() + (r + c).sqrt()).ln();
    (2.0 * h).sqrt() * (prim(r2) - prim(r1))
}

fn solver_checks(out: &mut Vec<Check>, sz: Sizes) {
    out.push(check("minimize.radial_free_time", || {
        let k = PotentialParams::isotropic(1.0, 2)?;
        let opts = MinimizeOptions {
            nodes: sz.nodes,
            restarts: 0,
            ..Default::default()
        };
        let r = free_time_minimize(&k, &[1.0, 0.0], &[3.0, 0.0], 0.5, &opts)?;
        let exact = radial_jacobi_length(1.0, 3.0, 0.5);
        let e = rel(r.value, exact);
        Ok((r.converged && e <= 1e-4, format!("value {} against {}", g6(r.value), g6(exact))))
    }));
    out.push(check("scatter.tail_bound", || {
        let k = PotentialParams::isotropic(1.0, 2)?;
        let b = sdot_tail_bound(&k, 0.5, 1.0, 0.0, 100.0);
        let e = rel(b, 2.0 * 3f64.sqrt() / 10.0);
        Ok((e <= 1e-12, format!("bound {}", g6(b))))
    }));
    out.push(check("scatter.radial_escape", || {
        let k = PotentialParams::isotropic(1.0, 2)?;
        let h = 0.5;
        let s0 = state_with_energy(&k, &[1.0, 0.0], &[1.0, 0.0], h);
        // the radial rate approaches √(2h) only logarithmically
        let tr = dynamics::integrate(&k, &s0, 1e3 * sz.horizon, &IntegrateOptions::default())?;
        let e = escape_fit(&k, &tr, h)?;
        let rate = rel(e.radial_rate, (2.0 * h).sqrt());
        Ok((
            e.direction_residual <= 1e-8 && rate <= 1e-2,
            format!("direction residual {}, rate error {}", g6(e.direction_residual), g6(rate)),
        ))
    }));
    out.push(check("blowup.deformation", || {
        let p = gutz()?;
        let (hom, _) = make_homothetic(&p, &[1.0, 0.0], &[0.0, 1.0], 1.0)?;
        let rep = test_minimality(&p, &hom, 1.0, sz.eps)?;
        let negative = rep.rows.iter().all(|(_, t)| t.direct_diff < 0.0);
        let sums = rep
            .rows
            .iter()
            .all(|(_, t)| (t.total - t.direct_diff).abs() <= 1e-8 * t.direct_diff.abs());
        let slope_ok = rep.slope.is_some_and(|k| rel(k, 0.5) <= 0.05);
        let ok = rep.verdict == MinimalityVerdict::NotMinimizer && negative && sums && slope_ok;
        Ok((ok, format!("slope {}", rep.slope.map(g6).unwrap_or_else(|| "n/a".into()))))
    }));
}

pub fn run(cfg: &RunConfig) -> CliResult<Outcome> {
    let sz = match cfg.problem.suite.as_deref().unwrap_or("quick") {
        "quick" => QUICK,
        "full" => FULL,
        other => return Err(CliError::Param(format!("unknown suite '{other}' (quick or full)"))),
    };
    let mut checks = Vec::new();
    potential_checks(&mut checks);
    dynamics_checks(&mut checks, sz);
    path_checks(&mut checks, sz);
    solver_checks(&mut checks, sz);

    let mut summary = KeyValues::default();
    for c in &checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        summary.put(c.name, format!("{status} ({})", c.detail));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    summary.put("passed", format!("{}/{}", checks.len() - failed.len(), checks.len()));
    let rejected = (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", ")));
    Ok(Outcome {
        artifacts: Artifacts::default(),
        summary: summary.finish(),
        rejected,
    })
}
