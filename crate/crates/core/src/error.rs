use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
///
/// Vertex and party numbers carried in messages are 1-indexed, matching the
/// external JSON and CLI conventions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Parse(String),

    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),

    #[error("vertex {vertex} out of range 1..={n}")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("vertex {0} is isolated")]
    IsolatedVertex(usize),

    #[error("graph must have at least one vertex")]
    EmptyGraph,

    #[error("unsupported builtin graph: {kind} with n = {n}")]
    UnsupportedBuiltin { kind: String, n: usize },

    #[error("not a permutation of 1..={0}")]
    NotAPermutation(usize),

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("state is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("{what} with n = {n} exceeds the limit of {limit}")]
    Guard {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("angle {value} outside {range}")]
    AngleOutOfRange { value: f64, range: &'static str },

    #[error("invalid substitution set: vertices {0} and {1} {2}")]
    InvalidSubstitution(usize, usize, &'static str),

    #[error("substitution set must contain the pivot vertex {0}")]
    PivotNotSubstituted(usize),

    #[error("no closed form for expression family `{0}`; use an oracle")]
    NoClosedForm(String),

    #[error("operator is not Hermitian (imaginary residue {0:e})")]
    NonHermitian(f64),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("graph is disconnected; self-testing requires a connected graph")]
    Disconnected,

    #[error("slope search failed to bracket a valid bound in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("invalid observables: {0}")]
    InvalidObservables(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for resource-guard violations (problem too large for the requested method).
    pub fn is_guard(&self) -> bool {
        matches!(self, Error::Guard { .. })
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::SelfLoop(_) => "self_loop",
            Error::DuplicateEdge(..) => "duplicate_edge",
            Error::VertexOutOfRange { .. } => "vertex_out_of_range",
            Error::IsolatedVertex(_) => "isolated_vertex",
            Error::EmptyGraph => "empty_graph",
            Error::UnsupportedBuiltin { .. } => "unsupported_builtin",
            Error::NotAPermutation(_) => "not_a_permutation",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::NotNormalized(_) => "not_normalized",
            Error::Guard { .. } => "resource_guard",
            Error::AngleOutOfRange { .. } => "angle_out_of_range",
            Error::InvalidSubstitution(..) => "invalid_substitution",
            Error::PivotNotSubstituted(_) => "pivot_not_substituted",
            Error::NoClosedForm(_) => "no_closed_form",
            Error::NonHermitian(_) => "non_hermitian",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Disconnected => "disconnected",
            Error::BracketFailure { .. } => "bracket_failure",
            Error::InvalidObservables(_) => "invalid_observables",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io(_) => "io",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
