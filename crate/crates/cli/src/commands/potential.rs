use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::Artifacts;
use crate::Outcome;

pub fn run(cfg: &RunConfig) -> CliResult<Outcome> {
    let params = cfg.potential()?;
    let report = params.check_conditions();
    Ok(Outcome {
        artifacts: Artifacts::default(),
        summary: report.to_string(),
        rejected: None,
    })
}
