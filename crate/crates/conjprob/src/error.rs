//! Crate-wide error type.
//!
//! Variants fall into three groups: contract violations (caller passed
//! arguments outside a documented precondition), numerical failures (an
//! algorithm could not reach its tolerance or hit a degenerate value), and
//! resource limits (a computation would exceed a configured budget).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // contract violations
    #[error("algebra mismatch: ({0} vars, order {1}) vs ({2} vars, order {3})")]
    AlgebraMismatch(usize, u32, usize, u32),
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("{0} variables exceeds the supported maximum of {max}", max = crate::poly::MAX_VARS)]
    TooManyVariables(usize),
    #[error("order {0} exceeds the supported maximum of {max}", max = crate::poly::MAX_ORDER)]
    OrderTooLarge(u32),
    #[error("exponent {exp} of variable {var} exceeds polynomial order {order}")]
    ExponentOverflow { var: usize, exp: u32, order: u32 },
    #[error("composition argument {0} has a nonzero constant term")]
    NonzeroConstantArg(usize),
    #[error("map is not square: {components} components in {nvars} variables")]
    MapNotSquare { components: usize, nvars: usize },
    #[error("map is not origin-preserving: component {0} has constant term {1:e}")]
    NotOriginPreserving(usize, f64),
    #[error("argument count {got} does not match variable count {want}")]
    ArgCountMismatch { got: usize, want: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // numerical failures
    #[error("linear part of the map is singular and cannot be inverted")]
    SingularLinearPart,
    #[error("series expansion requires a positive constant term, got {0:e}")]
    NonpositiveSeriesBase(f64),
    #[error("step size underflow at t = {0} (requested tolerance too tight)")]
    StepSizeUnderflow(f64),
    #[error("root bracketing failed: {0}")]
    BracketingFailed(String),
    #[error("no closest approach found within the search window [{0} s, {1} s]")]
    NoClosestApproach(f64, f64),
    #[error("special function did not converge: {0}")]
    SpecFunDivergence(String),
    #[error(
        "transversality {0:e} km^2/s^2 is too close to zero: the encounter is \
         grazing and the event-time expansion is unreliable"
    )]
    Transversality(f64),
    #[error("degenerate moment sequence: {0}")]
    DegenerateMoments(String),
    #[error("moment sequence fails positivity: {0}")]
    MomentsNotPositive(String),
    #[error("reference distribution fit failed: {0}")]
    ReferenceFit(String),

    // resource limits
    #[error("term budget exceeded: computation needs {needed} monomials, budget is {budget}")]
    TermBudget { needed: u128, budget: u128 },

    // pipeline stage tagging
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    // io / formats
    #[error("dataset parse error at line {line}: {message}")]
    DatasetParse { line: usize, message: String },
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("report error: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
