use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative numerical routine (quadrature, root finding) did not reach its tolerance.
    #[error("numeric error: {what} (achieved tolerance {achieved:e})")]
    Numeric { what: String, achieved: f64 },

    /// The N-function violates the structural condition 0 < a0 <= t a'(t)/a(t) <= a1.
    #[error("structural condition violated: {0}")]
    Structural(String),

    /// A sampled inequality from the N-function toolbox failed beyond tolerance.
    #[error("inequality {name} violated at s={s:e}, t={t:e}: relative violation {violation:e}")]
    InequalityViolated {
        name: String,
        s: f64,
        t: f64,
        violation: f64,
    },

    /// Fields or problems that must share a grid (or data) do not.
    #[error("mismatched instances: {0}")]
    Mismatch(String),

    /// The obstacle problem has an empty constraint set.
    #[error("infeasible problem: {0}")]
    Infeasible(String),

    /// A solver exhausted its iteration budget.
    #[error(
        "{method} did not converge after {iterations} iterations (last residual {last_residual:e})"
    )]
    NotConverged {
        method: String,
        iterations: usize,
        last_residual: f64,
        residual_history: Vec<f64>,
    },

    /// The analysis needs finer resolution than the grid provides.
    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
