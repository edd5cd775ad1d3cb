use crate::mesh::BoundaryTag;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate extent [{0}, {1}]")]
    DegenerateExtent(f64, f64),

    #[error("porosity {0} outside (0, 1]")]
    PorosityOutOfRange(f64),

    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("dof {dof} constrained twice with conflicting values {first} and {second}")]
    ConflictingConstraint { dof: usize, first: f64, second: f64 },

    #[error("slip boundary edge ({0}, {1}) is not axis aligned")]
    UnsupportedSlipEdge(usize, usize),

    #[error("pressure gauge requested but the boundary has {0:?} edges fixing the pressure level")]
    GaugeWithOutflow(BoundaryTag),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("step kind mismatch: expected {expected:?}, history provides {found:?}")]
    StepKindMismatch {
        expected: crate::assembly::StepKind,
        found: crate::assembly::StepKind,
    },

    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },

    #[error("time step {tau} exceeds final time {t_final}: no steps to run")]
    NoTimeSteps { tau: f64, t_final: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
