//! Command-line flags. Each flag overrides the matching config entry.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "anisokepler", version, about = "Positive-energy orbits of the anisotropic Kepler problem")]
pub struct Cli {
    /// JSON run configuration; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $ANISOKEPLER_OUT, then ./anisokepler-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for the randomised restart paths.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report the structural conditions of a potential.
    Potential(PotentialArgs),
    /// Integrate the equations of motion from an initial state.
    Integrate(IntegrateArgs),
    /// Fixed-time, free-time or winding-constrained action minimisation.
    Minimize(MinimizeArgs),
    /// Hyperbolic orbit from a point with a prescribed escape direction.
    Hyperbolic(HyperbolicArgs),
    /// Bi-hyperbolic orbit with prescribed incoming and outgoing angles.
    Bihyperbolic(BihyperbolicArgs),
    /// Deformation test of a homothetic collision.
    CollisionTest(CollisionArgs),
    /// Run the built-in invariant suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Default)]
pub struct PotentialArgs {
    /// Homogeneity degree α in (0, 2).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Gutzwiller weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Two-column θ, Ũ(θ) table for a planar potential.
    #[arg(long)]
    pub sphere_table: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    /// Number of path segments.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Iteration cap per L-BFGS run.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Target for the scaled force-balance residual.
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Soft floor on node radii during the search.
    #[arg(long)]
    pub barrier_radius: Option<f64>,
    /// Extra randomised starting paths.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Allowed deviation of the path energy from h.
    #[arg(long)]
    pub energy_tol: Option<f64>,
    /// Grid regrading passes in free-time mode.
    #[arg(long)]
    pub remesh_passes: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ScheduleArgs {
    /// First continuation radius.
    #[arg(long)]
    pub r1: Option<f64>,
    /// Growth factor between successive radii.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Number of continuation stages.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Relative agreement required between the last two hyperbolic stages.
    #[arg(long)]
    pub stage_tol: Option<f64>,
    /// The same for bi-hyperbolic stages.
    #[arg(long)]
    pub bi_stage_tol: Option<f64>,
    /// Allowed relative spread of the impact ratio over the last three stages.
    #[arg(long)]
    pub rho_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    /// Start position, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Start velocity, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v0: Option<Vec<f64>>,
    /// Final time (negative integrates backwards).
    #[arg(long, allow_hyphen_values = true)]
    pub t_end: Option<f64>,
    /// Local error tolerance of the integrator.
    #[arg(long)]
    pub tol: Option<f64>,
    /// cartesian, polar or sundman.
    #[arg(long)]
    pub formulation: Option<String>,
    /// Stop when |x| falls below this radius.
    #[arg(long)]
    pub r_min: Option<f64>,
    /// Stop when |x| exceeds this radius.
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Uniform output step; accepted steps are written when unset.
    #[arg(long)]
    pub sample_dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MinimizeArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Start point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p: Option<Vec<f64>>,
    /// End point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q: Option<Vec<f64>>,
    /// Duration for the fixed-time mode.
    #[arg(long, conflicts_with = "energy")]
    pub fixed_time: Option<f64>,
    /// Energy h > 0.
    #[arg(long)]
    pub energy: Option<f64>,
    /// Lifted start angle for the winding-constrained mode.
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true, requires = "theta_plus")]
    pub theta_minus: Option<f64>,
    /// Lifted end angle for the winding-constrained mode.
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true, requires = "theta_minus")]
    pub theta_plus: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HyperbolicArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Start position, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Escape direction (normalised on input).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub s_target: Option<Vec<f64>>,
    /// Energy h > 0.
    #[arg(long)]
    pub energy: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BihyperbolicArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    pub theta_minus: Option<f64>,
    /// Lifted end angle for the winding-constrained mode.
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    pub theta_plus: Option<f64>,
    /// Energy h > 0.
    #[arg(long)]
    pub energy: Option<f64>,
    /// Treat α as above the (uncomputable) coercivity threshold and drop
    /// the corresponding warning.
    #[arg(long)]
    pub assume_alpha_bar_ok: bool,
}

#[derive(Debug, Args)]
pub struct CollisionArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    /// Incoming collision direction.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub s_minus: Option<Vec<f64>>,
    /// Outgoing ejection direction.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub s_plus: Option<Vec<f64>>,
    /// Deformation amplitudes in (0, 1), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps_grid: Option<Vec<f64>>,
    /// Half-width `T` of the homothetic time window.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// quick or full.
    #[arg(long)]
    pub suite: Option<String>,
}

/// Accepts plain numbers and multiples of π such as `pi`, `-pi/2`,
/// `3pi/4` or `1.5*pi`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi");
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    let bad = || format!("cannot read '{s}' as an angle");
    let Some(k) = t.find("pi") else { return Err(bad()) };
    let (num, rest) = (&t[..k], &t[k + 2..]);
    let num = num.trim_end_matches('*');
    let factor = match num {
        "" | "+" => 1.0,
        "-" => -1.0,
        n => n.parse::<f64>().map_err(|_| bad())?,
    };
    let div = match rest.strip_prefix('/') {
        Some(d) => d.parse::<f64>().map_err(|_| bad())?,
        None if rest.is_empty() => 1.0,
        None => return Err(bad()),
    };
    if div == 0.0 {
        return Err(bad());
    }
    Ok(factor * std::f64::consts::PI / div)
}

fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

impl PotentialArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.potential;
        set(&mut p.alpha, &self.alpha);
        // a flag for one kind of potential replaces the other kind
        if self.weights.is_some() {
            p.weights.clone_from(&self.weights);
            p.sphere_table = None;
        }
        if self.sphere_table.is_some() {
            p.sphere_table.clone_from(&self.sphere_table);
            p.weights = None;
        }
    }
}

impl SolverArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.solver;
        set(&mut s.nodes, &self.nodes);
        set(&mut s.max_iters, &self.max_iters);
        set(&mut s.grad_tol, &self.grad_tol);
        set(&mut s.barrier_radius, &self.barrier_radius);
        set(&mut s.restarts, &self.restarts);
        set(&mut s.energy_tol, &self.energy_tol);
        set(&mut s.remesh_passes, &self.remesh_passes);
    }
}

impl ScheduleArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.problem.schedule;
        set(&mut s.r1, &self.r1);
        set(&mut s.ratio, &self.ratio);
        set(&mut s.stages, &self.stages);
        set(&mut s.stage_tol, &self.stage_tol);
        set(&mut s.bi_stage_tol, &self.bi_stage_tol);
        set(&mut s.rho_tol, &self.rho_tol);
    }
}

impl Cli {
    /// Folds the flags into the config.
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.output.dir, &self.out);
        set(&mut cfg.seed, &self.seed);
        let pb = &mut cfg.problem;
        match &self.command {
            Command::Potential(a) => a.apply(cfg),
            Command::Integrate(a) => {
                set(&mut pb.x0, &a.x0);
                set(&mut pb.v0, &a.v0);
                set(&mut pb.t_end, &a.t_end);
                set(&mut pb.tol, &a.tol);
                set(&mut pb.formulation, &a.formulation);
                set(&mut pb.r_min, &a.r_min);
                set(&mut pb.r_max, &a.r_max);
                set(&mut cfg.output.sample_dt, &a.sample_dt);
                a.potential.apply(cfg);
            }
            Command::Minimize(a) => {
                set(&mut pb.p, &a.p);
                set(&mut pb.q, &a.q);
                // the two modes exclude each other across layers too
                if a.fixed_time.is_some() {
                    pb.fixed_time = a.fixed_time;
                    pb.h = None;
                }
                if a.energy.is_some() {
                    pb.h = a.energy;
                    pb.fixed_time = None;
                }
                set(&mut pb.theta_minus, &a.theta_minus);
                set(&mut pb.theta_plus, &a.theta_plus);
                a.potential.apply(cfg);
                a.solver.apply(cfg);
            }
            Command::Hyperbolic(a) => {
                set(&mut pb.x0, &a.x0);
                set(&mut pb.s_target, &a.s_target);
                set(&mut pb.h, &a.energy);
                a.potential.apply(cfg);
                a.solver.apply(cfg);
                a.schedule.apply(cfg);
            }
            Command::Bihyperbolic(a) => {
                set(&mut pb.theta_minus, &a.theta_minus);
                set(&mut pb.theta_plus, &a.theta_plus);
                set(&mut pb.h, &a.energy);
                if a.assume_alpha_bar_ok {
                    pb.assume_alpha_bar_ok = Some(true);
                }
                a.potential.apply(cfg);
                a.solver.apply(cfg);
                a.schedule.apply(cfg);
            }
            Command::CollisionTest(a) => {
                set(&mut pb.s_minus, &a.s_minus);
                set(&mut pb.s_plus, &a.s_plus);
                set(&mut pb.eps_grid, &a.eps_grid);
                set(&mut pb.horizon, &a.horizon);
                a.potential.apply(cfg);
            }
            Command::Verify(a) => set(&mut pb.suite, &a.suite),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("0.25").unwrap(), 0.25);
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert_eq!(parse_angle("-pi/2").unwrap(), -PI / 2.0);
        assert_eq!(parse_angle("3pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(parse_angle("1.5*pi").unwrap(), 1.5 * PI);
        assert_eq!(parse_angle("3π/4").unwrap(), 3.0 * PI / 4.0);
        assert!(parse_angle("pie").is_err());
        assert!(parse_angle("pi/0").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = RunConfig::parse(r#"{"potential": {"alpha": 1, "weights": [1, 2]}, "seed": 4}"#, "c").unwrap();
        let cli = Cli::try_parse_from(["anisokepler", "potential", "--alpha", "0.5", "--seed", "9"]).unwrap();
        cli.apply(&mut cfg);
        assert_eq!(cfg.potential.alpha, Some(0.5));
        assert_eq!(cfg.potential.weights, Some(vec![1.0, 2.0]));
        assert_eq!(cfg.seed, Some(9));
    }

    #[test]
    fn energy_flag_replaces_fixed_time_from_config() {
        let mut cfg = RunConfig::parse(r#"{"problem": {"fixed_time": 2}}"#, "c").unwrap();
        let cli = Cli::try_parse_from(["anisokepler", "minimize", "--energy", "0.5"]).unwrap();
        cli.apply(&mut cfg);
        assert_eq!(cfg.problem.h, Some(0.5));
        assert_eq!(cfg.problem.fixed_time, None);
    }
}
