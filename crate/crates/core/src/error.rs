use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("value {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("interval [{lo}, {hi}] not contained in domain [{dom_lo}, {dom_hi}]")]
    SubInterval {
        lo: f64,
        hi: f64,
        dom_lo: f64,
        dom_hi: f64,
    },

    #[error("basis index {k} out of range for degree {n}")]
    BasisIndex { k: usize, n: usize },

    #[error("invalid polynomial: {0}")]
    InvalidPoly(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("input dimension {dim}: [{lo}, {hi}] escapes input domain [{dom_lo}, {dom_hi}]")]
    InputEscape {
        dim: usize,
        lo: f64,
        hi: f64,
        dom_lo: f64,
        dom_hi: f64,
    },

    #[error(
        "layer {layer} neuron {neuron}: pre-activation [{lo}, {hi}] escapes domain [{dom_lo}, {dom_hi}]"
    )]
    DomainEscape {
        layer: usize,
        neuron: usize,
        lo: f64,
        hi: f64,
        dom_lo: f64,
        dom_hi: f64,
    },

    #[error("reach step {step}: {source}")]
    StepEscape { step: usize, source: Box<Error> },

    #[error("invalid network: {0}")]
    InvalidNet(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("formula needs {needed} steps from t={t} but the trace horizon is {horizon}")]
    Horizon {
        needed: usize,
        t: usize,
        horizon: usize,
    },

    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{line}:{column}: unknown signal `{name}`")]
    UnknownSignal {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("gadget input {diff} escapes [-{bound}, {bound}]")]
    GadgetDomain { diff: f64, bound: f64 },

    #[error("path {path} is infeasible within the state box")]
    InfeasiblePath { path: usize },

    #[error("linear program is unbounded; declare a finite state box")]
    Unbounded,

    #[error("no program path accepts state {state:?} at step {step}")]
    PartitionHole { step: usize, state: Vec<f64> },

    #[error("invalid argument: {0}")]
    Argument(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
