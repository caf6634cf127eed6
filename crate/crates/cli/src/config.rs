//! Run configuration: a JSON document with `potential`, `problem`,
//! `solver`, `output` and `seed` entries. Every field is optional so that
//! flags can fill in or override any of them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anisokepler::minimize::MinimizeOptions;
use anisokepler::potential::PeriodicSpline;
use anisokepler::scatter::ScheduleSpec;
use anisokepler::PotentialParams;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ANISOKEPLER_OUT";
/// Output directory used when neither flag, config nor environment set one.
pub const DEFAULT_OUT_DIR: &str = "anisokepler-out";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub potential: PotentialBlock,
    #[serde(default)]
    pub problem: ProblemBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    pub seed: Option<u64>,
    /// Where the config came from, for error messages.
    #[serde(skip)]
    pub source: Option<Source>,
}

#[derive(Debug, Clone)]
pub struct Source {
    pub file: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    pub alpha: Option<f64>,
    pub weights: Option<Vec<f64>>,
    /// Two-column `θ, Ũ(θ)` table, relative paths resolved against the
    /// config file.
    pub sphere_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub h: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub tol: Option<f64>,
    pub formulation: Option<String>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub fixed_time: Option<f64>,
    pub theta_minus: Option<f64>,
    pub theta_plus: Option<f64>,
    pub s_target: Option<Vec<f64>>,
    pub s_minus: Option<Vec<f64>>,
    pub s_plus: Option<Vec<f64>>,
    pub eps_grid: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub assume_alpha_bar_ok: Option<bool>,
    pub suite: Option<String>,
    #[serde(default)]
    pub schedule: ScheduleBlock,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    pub r1: Option<f64>,
    pub ratio: Option<f64>,
    pub stages: Option<usize>,
    pub stage_tol: Option<f64>,
    pub bi_stage_tol: Option<f64>,
    pub rho_tol: Option<f64>,
    pub angle_tol: Option<f64>,
    pub rate_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub nodes: Option<usize>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub barrier_radius: Option<f64>,
    pub restarts: Option<usize>,
    pub energy_tol: Option<f64>,
    pub remesh_passes: Option<usize>,
    pub t_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    /// Uniform sampling step for trajectory CSVs (accepted steps if unset).
    pub sample_dt: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            file: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, file: &str) -> CliResult<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config {
            file: file.to_string(),
            line: e.line(),
            msg: strip_position(&e.to_string()),
        })?;
        cfg.source = Some(Source {
            file: file.to_string(),
            text: text.to_string(),
        });
        Ok(cfg)
    }

    /// An error about `key`, pointing at the line where the config sets it
    /// or at the flag when the config does not mention it.
    pub fn bad_value(&self, key: &str, msg: impl Into<String>) -> CliError {
        let msg = msg.into();
        if let Some(src) = &self.source {
            let needle = format!("\"{key}\"");
            if let Some(pos) = src.text.find(&needle) {
                let line = src.text[..pos].matches('\n').count() + 1;
                return CliError::Config {
                    file: src.file.clone(),
                    line,
                    msg: format!("{key}: {msg}"),
                };
            }
        }
        CliError::Param(format!("{key}: {msg}"))
    }

    fn base_dir(&self) -> PathBuf {
        self.source
            .as_ref()
            .and_then(|s| Path::new(&s.file).parent().map(Path::to_path_buf))
            .unwrap_or_default()
    }

    /// Builds the potential after range checks.
    pub fn potential(&self) -> CliResult<PotentialParams> {
        let p = &self.potential;
        let alpha = p.alpha.ok_or_else(|| CliError::Param("alpha is required (--alpha or potential.alpha)".into()))?;
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(self.bad_value("alpha", format!("must lie in (0, 2), got {alpha}")));
        }
        match (&p.weights, &p.sphere_table) {
            (Some(_), Some(_)) => Err(self.bad_value("sphere_table", "give either weights or sphere_table, not both")),
            (None, None) => Err(CliError::Param("the potential needs weights or a sphere_table".into())),
            (Some(w), None) => {
                if w.len() < 2 {
                    return Err(self.bad_value("weights", "need at least two weights"));
                }
                if w.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
                    return Err(self.bad_value("weights", "weights must be positive and finite"));
                }
                Ok(PotentialParams::gutzwiller(alpha, w)?)
            }
            (None, Some(file)) => {
                let full = if file.is_absolute() { file.clone() } else { self.base_dir().join(file) };
                let text = std::fs::read_to_string(&full).map_err(|e| self.bad_value("sphere_table", format!("{}: {e}", full.display())))?;
                let spline = PeriodicSpline::parse(&text).map_err(|e| match e {
                    anisokepler::Error::Parse { line, msg } => CliError::Config {
                        file: full.display().to_string(),
                        line,
                        msg,
                    },
                    other => CliError::Core(other),
                })?;
                Ok(PotentialParams::planar(alpha, Arc::new(spline))?)
            }
        }
    }

    pub fn minimize_options(&self) -> CliResult<MinimizeOptions> {
        let s = &self.solver;
        let d = MinimizeOptions::default();
        let opts = MinimizeOptions {
            nodes: s.nodes.unwrap_or(d.nodes),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            grad_tol: s.grad_tol.unwrap_or(d.grad_tol),
            barrier_radius: s.barrier_radius.unwrap_or(d.barrier_radius),
            restarts: s.restarts.unwrap_or(d.restarts),
            seed: self.seed.unwrap_or(d.seed),
            energy_tol: s.energy_tol.unwrap_or(d.energy_tol),
            remesh_passes: s.remesh_passes.unwrap_or(d.remesh_passes),
            t_range: s.t_range.unwrap_or(d.t_range),
        };
        opts.validate().map_err(|e| CliError::Param(format!("solver options: {e}")))?;
        Ok(opts)
    }

    pub fn schedule(&self) -> CliResult<ScheduleSpec> {
        let b = &self.problem.schedule;
        let d = ScheduleSpec::default();
        let spec = ScheduleSpec {
            r1: b.r1.unwrap_or(d.r1),
            ratio: b.ratio.unwrap_or(d.ratio),
            stages: b.stages.unwrap_or(d.stages),
            stage_tol: b.stage_tol.unwrap_or(d.stage_tol),
            bi_stage_tol: b.bi_stage_tol.unwrap_or(d.bi_stage_tol),
            rho_tol: b.rho_tol.unwrap_or(d.rho_tol),
            angle_tol: b.angle_tol.unwrap_or(d.angle_tol),
            rate_tol: b.rate_tol.unwrap_or(d.rate_tol),
        };
        spec.validate().map_err(|e| self.bad_value("schedule", e.to_string()))?;
        Ok(spec)
    }

    /// Positive energy from `problem.h`.
    pub fn energy(&self) -> CliResult<f64> {
        let h = self
            .problem
            .h
            .ok_or_else(|| CliError::Param("energy is required (--energy or problem.h)".into()))?;
        if !(h > 0.0) || !h.is_finite() {
            return Err(self.bad_value("h", format!("energy must be positive, got {h}")));
        }
        Ok(h)
    }

    /// Flag, then config, then environment, then the built-in default.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output.dir {
            return d.clone();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => PathBuf::from(DEFAULT_OUT_DIR),
        }
    }

    /// A vector parameter of the given dimension.
    pub fn vector(&self, key: &str, v: &Option<Vec<f64>>, dim: usize) -> CliResult<Vec<f64>> {
        let v = v.as_ref().ok_or_else(|| CliError::Param(format!("{key} is required")))?;
        if v.len() != dim {
            return Err(self.bad_value(key, format!("expected {dim} components, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.bad_value(key, "components must be finite"));
        }
        Ok(v.clone())
    }

    /// A unit vector, normalising the input.
    pub fn direction(&self, key: &str, v: &Option<Vec<f64>>, dim: usize) -> CliResult<Vec<f64>> {
        let v = self.vector(key, v, dim)?;
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(self.bad_value(key, "direction must be non-zero"));
        }
        Ok(v.iter().map(|x| x / n).collect())
    }
}

/// serde_json appends " at line L column C"; the line is reported
/// separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(k) => msg[..k].to_string(),
        None => msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_errors_carry_the_line() {
        let err = RunConfig::parse("{\n  \"potential\": {\n    \"alpha\": 1,,\n  }\n}", "cfg.json").unwrap_err();
        match err {
            CliError::Config { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("{\"potential\": {\"alpha\": 1, \"mass\": 2}}", "c").unwrap_err();
        assert!(err.to_string().contains("mass"), "{err}");
    }

    #[test]
    fn range_errors_point_at_the_key() {
        let cfg = RunConfig::parse("{\n\"potential\": {\n\"weights\": [1, 2],\n\"alpha\": 2.5\n}\n}", "c").unwrap();
        match cfg.potential().unwrap_err() {
            CliError::Config { line, msg, .. } => {
                assert_eq!(line, 4);
                assert!(msg.contains("(0, 2)"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn directions_are_normalised() {
        let cfg = RunConfig::default();
        let s = cfg.direction("s", &Some(vec![3.0, 4.0]), 2).unwrap();
        assert!((s[0] - 0.6).abs() < 1e-15 && (s[1] - 0.8).abs() < 1e-15);
        assert!(cfg.direction("s", &Some(vec![0.0, 0.0]), 2).is_err());
    }
}
