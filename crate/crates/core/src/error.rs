use thiserror::Error;

use crate::rewards::ActionType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpotError {
    #[error("no reward weight configured for action type {0:?}")]
    MissingWeight(ActionType),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty dynamic action space")]
    EmptyActionSpace,

    #[error("replay buffer has no sampleable experience")]
    EmptyBuffer,

    #[error("experience out of order: {0}")]
    Ordering(String),

    #[error("unknown trial id {0}")]
    UnknownTrial(u64),

    #[error("environment is terminal; reset before stepping")]
    TerminalStep,

    #[error("action id {action} out of range for {num_actions} actions")]
    ActionOutOfRange { action: usize, num_actions: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("layout error: {0}")]
    Layout(String),
}

pub type Result<T> = std::result::Result<T, SpotError>;
