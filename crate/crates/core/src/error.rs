use thiserror::Error;

/// Errors produced by catalog loading, scenario generation, file parsing and
/// the monitoring engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("catalog: {0}")]
    Catalog(String),

    #[error("empty catalog")]
    EmptyCatalog,

    #[error("duplicate activity id `{0}`")]
    DuplicateActivity(String),

    #[error("cyclic relation graph")]
    CyclicRelationGraph,

    #[error("x-update matrix shape mismatch: expected {expected}, got {got}")]
    MatrixShape { expected: String, got: String },

    #[error("unknown activity id `{0}`")]
    UnknownActivity(String),

    #[error("sub-score exceeds window capacity: {sub_score} > {capacity}")]
    SubScoreOverflow { sub_score: u32, capacity: f64 },

    #[error("expected {expected} activity scores, got {got}")]
    ScoreCount { expected: usize, got: usize },

    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),

    #[error("infeasible constraints: minimum required time {required_s} s exceeds hard cap {cap_s} s")]
    InfeasibleConstraints { required_s: u64, cap_s: u64 },

    #[error("absorbing state: no admissible transition from `{0}`")]
    AbsorbingState(String),

    #[error("transition matrix `{id}`: row {row} sums to {sum}, not 1")]
    NotRowStochastic { id: String, row: usize, sum: f64 },

    #[error("profile schedule gap/overlap at month {0}")]
    ScheduleGap(u32),

    #[error("anomaly spec: no occurrence of `{activity}` on day {day}")]
    NoOccurrence { activity: String, day: u32 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsorted scenario at t={0} s")]
    UnsortedScenario(u64),

    #[error("horizon {horizon_s} s ends before last event at {last_end_s} s")]
    HorizonTooShort { horizon_s: u64, last_end_s: u64 },

    #[error("negative or inconsistent duration: active={active_s}, tx={tx_s}")]
    BadWindowCost { active_s: f64, tx_s: f64 },

    #[error("continuous ledger total is zero, savings undefined")]
    ZeroBaseline,

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
