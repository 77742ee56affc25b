use std::fmt;

/// One of the constraints of the energy-minimisation problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum Constraint {
    /// Offloading flags are binary.
    C1,
    /// Allocation fractions lie in `[0, 1]` on the slice grid.
    C2,
    /// Caching flags are binary.
    C3,
    /// Allocation fractions sum to one.
    C4,
    /// Cache capacity.
    C5,
    /// Completion-time limit.
    C6,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::C1 => "C1",
            Constraint::C2 => "C2",
            Constraint::C3 => "C3",
            Constraint::C4 => "C4",
            Constraint::C5 => "C5",
            Constraint::C6 => "C6",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible decision (violates {})", fmt_violations(.0))]
    Infeasible(Vec<Constraint>),

    #[error("size guard exceeded: {0}")]
    Size(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("numeric consistency check failed: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

fn fmt_violations(v: &[Constraint]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
}

impl Error {
    /// Wraps the error with a description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error beneath any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by user-supplied configuration or plan values.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            Error::Config(_) | Error::Precondition(_) | Error::Dimension(_) | Error::Size(_)
        )
    }

    /// True for errors raised by numerical failure during a run.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.root(),
            Error::Diverged { .. } | Error::Numeric(_) | Error::Domain(_) | Error::Infeasible(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
