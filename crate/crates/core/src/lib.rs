//! Situation-removal reward shaping, trial rewards, and SPOT-Q masked
//! Q-learning with prioritized replay, plus two small seedable environments.

pub mod blockworld;
pub mod env;
pub mod error;
pub mod gridworld;
pub mod presets;
pub mod qfunction;
mod ranked;
pub mod replay;
pub mod rewards;
pub mod spotq;
pub mod trainer;

pub use env::{EnvStep, Environment, Termination};
pub use error::{Result, SpotError};
pub use qfunction::{Featurizer, LinearQ, StateKey, TabularQ};
pub use replay::{Experience, ReplayBuffer, ReplayConfig};
pub use rewards::{ActionType, RewardConfig, RewardKind, StepOutcome, TrialInner};
pub use spotq::{ActionMask, QFunction};
pub use trainer::{AgentConfig, EvalSummary, TrainingOutput, TrialRecord};
