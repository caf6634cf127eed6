use anisokepler::blowup::{make_homothetic, test_minimality, MinimalityVerdict};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, KeyValues};
use crate::Outcome;

/// Default deformation amplitudes.
pub const DEFAULT_EPS_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];

pub fn run(cfg: &RunConfig) -> CliResult<Outcome> {
    let params = cfg.potential()?;
    if !params.is_gutzwiller() {
        return Err(CliError::Param("collision-test needs a Gutzwiller potential (weights)".into()));
    }
    let d = params.dim();
    let pb = &cfg.problem;
    let s_minus = cfg.direction("s_minus", &pb.s_minus, d)?;
    let s_plus = cfg.direction("s_plus", &pb.s_plus, d)?;
    let eps = pb.eps_grid.clone().unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec());
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(cfg.bad_value("eps_grid", "amplitudes must lie in (0, 1)"));
    }
    let horizon = pb.horizon.unwrap_or(1.0);
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(cfg.bad_value("horizon", format!("must be positive, got {horizon}")));
    }
    let (hom, _) = make_homothetic(&params, &s_plus, &s_minus, horizon)?;
    let report = test_minimality(&params, &hom, horizon, &eps)?;
    let all_negative = report.rows.iter().all(|(_, t)| t.direct_diff < 0.0);

    let mut artifacts = Artifacts::default();
    artifacts.add("terms.csv", report.to_csv());
    let mut summary = KeyValues::default();
    summary.raw(&report.to_string()).put("all_differences_negative", all_negative);
    let rejected = match report.verdict {
        MinimalityVerdict::NotMinimizer => None,
        MinimalityVerdict::Inconclusive => Some("deformation test inconclusive".to_string()),
    };
    Ok(Outcome {
        artifacts,
        summary: summary.finish(),
        rejected,
    })
}
