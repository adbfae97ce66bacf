use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("agent index {index} out of range (n = {n})")]
    AgentOutOfRange { index: usize, n: usize },

    #[error("self-loop on agent {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("edge ({src}, {dst}) crosses subnetworks {src_subnet} and {dst_subnet}")]
    CrossSubnetwork {
        src: usize,
        dst: usize,
        src_subnet: usize,
        dst_subnet: usize,
    },

    #[error("group label {label} of agent {agent} is outside 0..{n_groups}")]
    GroupOutOfRange {
        agent: usize,
        label: usize,
        n_groups: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite latent index for agent {0}")]
    NonFiniteIndex(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cut-point index {r} out of range 0..={max}")]
    CutIndex { r: usize, max: usize },

    #[error("NaN produced by equilibrium iteration {0}")]
    NanIteration(usize),

    #[error("equilibrium did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("singular resolvent (I - D A) in subnetwork {0}")]
    SingularResolvent(usize),

    #[error("unknown data-generating process {0:?}")]
    UnknownDgp(String),

    #[error("no fit converged over the switch grid")]
    NoConvergedFit,

    #[error("NaN in belief vector at NPL iteration {0}")]
    NanBeliefs(usize),

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("unknown column {found:?}; expected {expected}")]
    Schema { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
