use anisokepler::dynamics::{self, fit_collision, Formulation, IntegrateOptions, State, Termination, Trajectory};
use anisokepler::numfmt::{g17, g6, g6_vec};

use super::vec17;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, KeyValues};
use crate::Outcome;

fn formulation(cfg: &RunConfig) -> CliResult<Formulation> {
    match cfg.problem.formulation.as_deref().unwrap_or("cartesian") {
        "cartesian" => Ok(Formulation::Cartesian),
        "polar" => Ok(Formulation::Polar),
        "sundman" => Ok(Formulation::Sundman),
        other => Err(cfg.bad_value("formulation", format!("expected cartesian, polar or sundman, got '{other}'"))),
    }
}

pub fn run(cfg: &RunConfig) -> CliResult<Outcome> {
    let params = cfg.potential()?;
    let d = params.dim();
    let pb = &cfg.problem;
    let x0 = cfg.vector("x0", &pb.x0, d)?;
    let v0 = cfg.vector("v0", &pb.v0, d)?;
    let t_end = pb.t_end.ok_or_else(|| CliError::Param("t_end is required (--t-end or problem.t_end)".into()))?;
    if !t_end.is_finite() || t_end == 0.0 {
        return Err(cfg.bad_value("t_end", "must be finite and non-zero"));
    }
    let tol = pb.tol.unwrap_or(1e-10);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(cfg.bad_value("tol", format!("must lie in (0, 1), got {tol}")));
    }
    let mut opts = IntegrateOptions::with_tol(tol).formulation(formulation(cfg)?);
    if let Some(r) = pb.r_min {
        if !(r > 0.0) {
            return Err(cfg.bad_value("r_min", "must be positive"));
        }
        opts.r_min = r;
    }
    opts.r_max = pb.r_max;

    let traj = dynamics::integrate(&params, &State::new(0.0, x0, v0), t_end, &opts)?;
    let states = match cfg.output.sample_dt {
        Some(dt) if dt > 0.0 => traj.sample_uniform(dt),
        Some(_) => return Err(cfg.bad_value("sample_dt", "must be positive")),
        None => traj.states.clone(),
    };

    let mut artifacts = Artifacts::default();
    artifacts.add("trajectory.csv", Trajectory::states_csv(&params, &states));

    let h0 = dynamics::energy(&params, traj.first())?;
    let drift = traj.max_energy_drift(&params);
    let rel_drift = traj.max_relative_energy_drift(&params);
    let last = traj.last();
    let mut summary = KeyValues::default();
    let mut report = KeyValues::default();
    summary
        .put("termination", &traj.termination)
        .put("steps", traj.len())
        .put("t_final", g6(last.t))
        .put("r_final", g6(last.radius()))
        .put("energy", g6(h0))
        .put("max_energy_drift", g6(drift))
        .put("max_relative_energy_drift", g6(rel_drift));
    report
        .put("termination", &traj.termination)
        .put("steps", traj.len())
        .put("t_final", g17(last.t))
        .put("x_final", vec17(&last.x))
        .put("v_final", vec17(&last.v))
        .put("energy", g17(h0))
        .put("max_energy_drift", g17(drift))
        .put("max_relative_energy_drift", g17(rel_drift));
    if traj.termination == Termination::Collision {
        match fit_collision(&params, &traj) {
            Ok(fit) => {
                summary
                    .put("collision_time", g6(fit.t0))
                    .put("collision_kappa", g6(fit.kappa))
                    .put("collision_beta", g6(fit.beta))
                    .put("collision_exponent", g6(fit.fit_exponent))
                    .put("collision_direction", g6_vec(&fit.limit_direction))
                    .put("collision_direction_distance", g6(fit.limit_distance))
                    .put("collision_consistency", g6(fit.consistency));
                report
                    .put("collision_time", g17(fit.t0))
                    .put("collision_kappa", g17(fit.kappa))
                    .put("collision_beta", g17(fit.beta))
                    .put("collision_exponent", g17(fit.fit_exponent))
                    .put("collision_direction", vec17(&fit.limit_direction))
                    .put("collision_direction_distance", g17(fit.limit_distance))
                    .put("collision_consistency", g17(fit.consistency))
                    .put("collision_samples", fit.samples);
            }
            Err(e) => {
                summary.put("collision_fit", format!("unavailable ({e})"));
                report.put("collision_fit", "unavailable");
            }
        }
    }
    artifacts.add("report.txt", report.finish());
    let rejected = match &traj.termination {
        Termination::Error(m) => Some(format!("integration stopped early: {m}")),
        _ => None,
    };
    Ok(Outcome {
        artifacts,
        summary: summary.finish(),
        rejected,
    })
}
