use std::f64::consts::TAU;

use anisokepler::minimize::{free_time_minimize, minimize_constrained, minimize_fixed_time};
use anisokepler::numfmt::g6;
use anisokepler::paths;

use super::put_result;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, KeyValues};
use crate::Outcome;

/// Distance between two angles modulo 2π.
fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn run(cfg: &RunConfig) -> CliResult<Outcome> {
    let params = cfg.potential()?;
    let d = params.dim();
    let pb = &cfg.problem;
    let p = cfg.vector("p", &pb.p, d)?;
    let q = cfg.vector("q", &pb.q, d)?;
    let opts = cfg.minimize_options()?;

    let (mode, result) = match (pb.fixed_time, pb.h, pb.theta_minus, pb.theta_plus) {
        (Some(_), Some(_), _, _) => return Err(CliError::Param("give either a fixed time or an energy, not both".into())),
        (None, None, _, _) => return Err(CliError::Param("one of --fixed-time or --energy is required".into())),
        (Some(_), None, Some(_), _) | (Some(_), None, _, Some(_)) => {
            return Err(CliError::Param("winding constraints need --energy".into()));
        }
        (Some(t), None, None, None) => {
            if !(t > 0.0) || !t.is_finite() {
                return Err(cfg.bad_value("fixed_time", format!("must be positive, got {t}")));
            }
            ("fixed-time", minimize_fixed_time(&params, &p, &q, t, &opts)?)
        }
        (None, Some(_), None, None) => ("free-time", free_time_minimize(&params, &p, &q, cfg.energy()?, &opts)?),
        (None, Some(_), Some(tm), Some(tp)) => {
            if d != 2 {
                return Err(CliError::Param("winding constraints need a planar potential".into()));
            }
            let (r1, r2) = (p[0].hypot(p[1]), q[0].hypot(q[1]));
            if !(r1 > 0.0 && r2 > 0.0) {
                return Err(CliError::Param("constrained endpoints must avoid the origin".into()));
            }
            if angle_gap(p[1].atan2(p[0]), tm) > 1e-9 {
                return Err(cfg.bad_value("theta_minus", "does not match the direction of p"));
            }
            if angle_gap(q[1].atan2(q[0]), tp) > 1e-9 {
                return Err(cfg.bad_value("theta_plus", "does not match the direction of q"));
            }
            ("constrained", minimize_constrained(&params, r1, tm, r2, tp, cfg.energy()?, &opts)?)
        }
        (None, Some(_), _, _) => return Err(CliError::Param("give both theta_minus and theta_plus".into())),
    };

    let mut artifacts = Artifacts::default();
    artifacts.add("path.csv", paths::to_csv(&result.path));
    let mut report = KeyValues::default();
    report.put("mode", mode);
    if let Some(h) = pb.h {
        report.put("h", anisokepler::numfmt::g17(h));
    }
    put_result(&mut report, "", &result);
    artifacts.add("report.txt", report.finish());

    let mut summary = KeyValues::default();
    summary.put("mode", mode).put("nodes", result.path.segments());
    if let Some(h) = pb.h {
        summary.put("h", g6(h));
    }
    summary.raw(&result.to_string());
    let rejected = (!result.converged).then(|| {
        format!(
            "minimiser did not converge (el_residual {}, energy {})",
            g6(result.el_residual),
            result.energy_of_path.map(g6).unwrap_or_else(|| "n/a".into())
        )
    });
    Ok(Outcome {
        artifacts,
        summary: summary.finish(),
        rejected,
    })
}
