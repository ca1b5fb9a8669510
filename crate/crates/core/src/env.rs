use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SpotError};
use crate::rewards::{self, ActionType, RewardConfig, StepOutcome};
use crate::spotq::ActionMask;

/// How a trial ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Complete,
    ActionLimit,
    SituationRemoval,
    LavaDeath,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Complete => "complete",
            Termination::ActionLimit => "action_limit",
            Termination::SituationRemoval => "situation_removal",
            Termination::LavaDeath => "lava_death",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Termination {
    type Err = SpotError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Termination::Complete,
            Termination::ActionLimit,
            Termination::SituationRemoval,
            Termination::LavaDeath,
        ]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| SpotError::Parse(format!("unknown termination `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub outcome: StepOutcome,
    /// Set exactly when the step ended the trial.
    pub termination: Option<Termination>,
}

/// A seedable episodic task with a discrete action space.
pub trait Environment {
    /// Complete observable state.
    type State: Clone;

    fn num_actions(&self) -> usize;

    fn state(&self) -> Self::State;

    fn action_type(&self, action: usize) -> ActionType;

    /// Actions not certain to fail in `state`.
    fn mask_of(state: &Self::State) -> ActionMask;

    fn mask(&self) -> ActionMask {
        Self::mask_of(&self.state())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep>;

    fn is_terminal(&self) -> bool;

    fn progress(&self) -> f64;

    /// Minimal action count that completes the trial from its reset state.
    fn ideal_actions(&self) -> u32;

    /// Whether training should end the trial with zero reward after this step.
    fn situation_removal(&self, outcome: &StepOutcome) -> bool {
        outcome.progress_after < outcome.progress_before
    }

    fn reward(&self, outcome: &StepOutcome, cfg: &RewardConfig) -> Result<f64> {
        rewards::instant_reward(outcome, cfg)
    }
}
