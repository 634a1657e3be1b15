use eqforward_lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, msg: String },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("value error: {0}")]
    Value(String),
    #[error("empty sample")]
    EmptySample,
    #[error("agent {agent}: {msg}")]
    KindMismatch { agent: String, msg: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("problem is unbounded: {0}")]
    Unbounded(String),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("excess supply does not change sign on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("solver: {0}")]
    Solver(#[from] LpError),
    #[error("solver stopped: {0}")]
    IterationLimit(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
