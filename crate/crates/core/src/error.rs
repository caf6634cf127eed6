use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singularity: position at the origin")]
    Singularity,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("winding lift ambiguous at segment {segment} (|dtheta| = {increment:.6})")]
    LiftAmbiguous { segment: usize, increment: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("no bracket for f(T) on [{t_lo}, {t_hi}]; samples: {samples:?}")]
    Bracket {
        t_lo: f64,
        t_hi: f64,
        samples: Vec<(f64, f64)>,
    },

    #[error("topological constraint could not be maintained: {0}")]
    Constraint(String),

    #[error("continuation failed: {0}")]
    Continuation(String),

    #[error("lost coercivity: periapsis radii keep growing {0:?}")]
    LostCoercivity(Vec<f64>),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
