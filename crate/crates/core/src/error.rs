use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{matrix} matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        matrix: &'static str,
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("negative delay at ({0},{1})")]
    NegativeDelay(usize, usize),
    #[error("non-positive bandwidth at ({0},{1})")]
    NonPositiveBandwidth(usize, usize),
    #[error("non-finite {matrix} entry at ({row},{col})")]
    NonFinite {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("invalid scenario spec: {0}")]
    Scenario(String),

    #[error("invalid workload: {0}")]
    Workload(String),
    #[error("d_pp·d_dp = {d_pp}·{d_dp} = {product} does not match {devices} devices")]
    DegreeMismatch {
        d_pp: usize,
        d_dp: usize,
        product: usize,
        devices: usize,
    },

    #[error("device {0} is out of range for {1} devices")]
    DeviceOutOfRange(usize, usize),
    #[error("edge cost needs two distinct devices, got {0} twice")]
    SameDevice(usize),

    #[error("invalid cost matrix: {0}")]
    CostMatrix(String),
    #[error(
        "exact open-loop TSP supports at most {max} nodes, got {got}; use the heuristic solver"
    )]
    TspTooLarge { got: usize, max: usize },

    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("brute-force search supports at most {max} devices, got {got}")]
    TooManyDevices { got: usize, max: usize },

    #[error("invalid schedule config: {0}")]
    Config(String),
    #[error("devices {0} and {1} are in the same group")]
    SameGroup(usize, usize),

    #[error("duplicate device {0}")]
    DuplicateDevice(usize),
    #[error("missing device {0}")]
    MissingDevice(usize),
    #[error("assignment shape mismatch: {0}")]
    AssignmentShape(String),
}
