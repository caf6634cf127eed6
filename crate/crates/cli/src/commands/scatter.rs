use anisokepler::numfmt::{g17, g6};
use anisokepler::paths;
use anisokepler::scatter::{self, BiOptions, EscapeData, ScatterOutcome};
use anisokepler::PotentialParams;

use super::{put_result, vec17};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, KeyValues};
use crate::Outcome;

pub fn hyperbolic(cfg: &RunConfig) -> CliResult<Outcome> {
    let params = cfg.potential()?;
    let d = params.dim();
    let x0 = cfg.vector("x0", &cfg.problem.x0, d)?;
    let s = cfg.direction("s_target", &cfg.problem.s_target, d)?;
    let h = cfg.energy()?;
    let spec = cfg.schedule()?;
    let opts = cfg.minimize_options()?;
    let out = scatter::hyperbolic_run(&params, &x0, &s, h, &spec, &opts)?;
    Ok(package(&params, "hyperbolic", h, &out))
}

pub fn bihyperbolic(cfg: &RunConfig) -> CliResult<Outcome> {
    let params = cfg.potential()?;
    let pb = &cfg.problem;
    let tm = pb.theta_minus.ok_or_else(|| CliError::Param("theta_minus is required".into()))?;
    let tp = pb.theta_plus.ok_or_else(|| CliError::Param("theta_plus is required".into()))?;
    let h = cfg.energy()?;
    let spec = cfg.schedule()?;
    let opts = cfg.minimize_options()?;
    let bi = BiOptions {
        assume_alpha_bar_ok: pb.assume_alpha_bar_ok.unwrap_or(false),
    };
    let out = scatter::bihyperbolic_run(&params, tm, tp, h, &spec, &opts, &bi)?;
    Ok(package(&params, "bihyperbolic", h, &out))
}

fn put_escape(kv: &mut KeyValues, side: &str, e: &EscapeData) {
    kv.put(&format!("s_{side}"), vec17(&e.s_escape))
        .put(&format!("escape_angle_{side}"), g17(e.escape_angle()))
        .put(&format!("velocity_direction_{side}"), vec17(&e.velocity_direction))
        .put(&format!("radial_rate_{side}"), g17(e.radial_rate))
        .put(&format!("direction_residual_{side}"), g17(e.direction_residual))
        .put(&format!("tail_bound_{side}"), g17(e.tail_bound))
        .put(&format!("gamma_monotone_{side}"), e.gamma_monotone);
}

fn package(params: &PotentialParams, kind: &str, h: f64, out: &ScatterOutcome) -> Outcome {
    let mut artifacts = Artifacts::default();
    let mut report = KeyValues::default();
    report.put("kind", kind).put("h", g17(h)).put("accepted", out.accepted);
    for w in &out.warnings {
        report.put("warning", w);
    }
    for f in &out.failures {
        report.put("failure", f);
    }
    for (k, st) in out.schedule.stages.iter().enumerate() {
        let name = format!("stage_{k:02}.csv");
        artifacts.add(name.clone(), paths::to_csv(&st.path));
        let pre = format!("stage_{k:02}_");
        report.put(&format!("{pre}file"), &name).put(&format!("{pre}radius"), g17(st.radius));
        put_result(&mut report, &pre, &st.result);
        if let Some(r) = st.rho {
            report.put(&format!("{pre}rho"), g17(r));
        }
        if let Some(dd) = st.shared_diff {
            report.put(&format!("{pre}shared_diff"), g17(dd));
        }
        if let Some(b) = st.duration_bound_ok {
            report.put(&format!("{pre}duration_bound_ok"), b);
        }
        report.put(&format!("{pre}idot_increasing"), st.idot_increasing);
    }
    put_result(&mut report, "final_", &out.result);
    put_escape(&mut report, "plus", &out.escape_plus);
    if let Some(e) = &out.escape_minus {
        put_escape(&mut report, "minus", e);
    }
    artifacts.add("path.csv", paths::to_csv(&out.path));
    artifacts.add("plot.csv", scatter::plot_data(params, &out.path));
    artifacts.add("report.txt", report.finish());

    let mut summary = KeyValues::default();
    summary.put("kind", kind).put("h", g6(h)).put("stages", out.schedule.stages.len());
    summary.raw(&out.to_string());
    let rejected = (!out.accepted).then(|| format!("{kind} run not accepted: {}", out.failures.join("; ")));
    Outcome {
        artifacts,
        summary: summary.finish(),
        rejected,
    }
}
