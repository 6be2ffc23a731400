use alloc::string::String;

use crate::lifecycle::{LifecycleEvent, LifecycleState};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid price `{0}`: expected a non-negative decimal with at most 6 fractional digits")]
    InvalidPrice(String),
    #[error("illegal transition: event `{event}` is not allowed in state {state}")]
    IllegalTransition {
        state: LifecycleState,
        event: LifecycleEvent,
    },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("need at least two classes, found {0}")]
    SingleClass(usize),
    #[error("not enough data: have {have} examples, need {need}")]
    NotEnoughData { have: usize, need: usize },
    #[error("shadow window size must be positive")]
    EmptyWindow,
    #[error("no candidate models")]
    NoCandidates,
    #[error("label `{0}` is not in the label map")]
    UnknownLabel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}
