//! Tuned agent settings and ablation cells for the two built-in environments.

use std::fmt;
use std::str::FromStr;

use crate::blockworld::BlockFeatures;
use crate::error::SpotError;
use crate::gridworld::LookAhead;
use crate::qfunction::LinearQ;
use crate::rewards::{RewardConfig, RewardKind, TrialInner};
use crate::trainer::AgentConfig;

/// One row of an ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub use_mask: bool,
    pub use_spotq: bool,
    pub reward_kind: RewardKind,
}

impl Cell {
    pub const fn new(use_mask: bool, use_spotq: bool, reward_kind: RewardKind) -> Cell {
        Cell {
            use_mask,
            use_spotq,
            reward_kind,
        }
    }

    /// Short label such as `mask+spotq+progress`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.use_mask {
            parts.push("mask".to_string());
        }
        if self.use_spotq {
            parts.push("spotq".to_string());
        }
        parts.push(self.reward_kind.to_string());
        parts.join("+")
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses labels such as `mask+spotq+trial`; `none` is the unmasked base row.
/// The reward part defaults to `base`.
impl FromStr for Cell {
    type Err = SpotError;

    fn from_str(s: &str) -> Result<Cell, SpotError> {
        let mut cell = Cell::new(false, false, RewardKind::Base);
        let mut reward_seen = false;
        for part in s.trim().split('+').map(str::trim) {
            match part.to_ascii_lowercase().as_str() {
                "none" => {}
                "mask" => cell.use_mask = true,
                "spotq" | "spot-q" => cell.use_spotq = true,
                other if !reward_seen => {
                    cell.reward_kind = other.parse()?;
                    reward_seen = true;
                }
                other => return Err(SpotError::Parse(format!("cell `{s}` names two rewards (`{other}`)"))),
            }
        }
        if cell.use_spotq && !cell.use_mask {
            return Err(SpotError::Config(format!("cell `{s}`: SPOT-Q requires the action mask")));
        }
        Ok(cell)
    }
}

/// Grid world rows: no mask, mask, mask with SPOT-Q, and the same with progress reward.
pub const GRID_CELLS: [Cell; 4] = [
    Cell::new(false, false, RewardKind::Base),
    Cell::new(true, false, RewardKind::Base),
    Cell::new(true, true, RewardKind::Base),
    Cell::new(true, true, RewardKind::Progress),
];

/// Block world rows, from the plain baselines up to the full method.
pub const BLOCK_CELLS: [Cell; 8] = [
    Cell::new(false, false, RewardKind::Discounted),
    Cell::new(false, false, RewardKind::Base),
    Cell::new(false, false, RewardKind::SituationRemoval),
    Cell::new(false, false, RewardKind::Progress),
    Cell::new(false, false, RewardKind::Trial(TrialInner::Progress)),
    Cell::new(true, false, RewardKind::Trial(TrialInner::Progress)),
    Cell::new(true, true, RewardKind::Trial(TrialInner::Progress)),
    Cell::new(true, true, RewardKind::Progress),
];

pub const GRID_BUDGET: u64 = 200_000;
pub const BLOCK_BUDGET: u64 = 20_000;

pub const GRID_LEARNING_RATE: f64 = 0.5;
pub const BLOCK_LEARNING_RATE: f64 = 0.2;
/// A cycle of grasping a lone block and dropping it on the table pays
/// `P(s')` every second action, so its value `P / (1 - γ²)` overtakes
/// completing a tall stack unless the learning discount stays small.
pub const BLOCK_LEARN_DISCOUNT: f64 = 0.2;
pub const ABLATION_PER_EXPONENT: f64 = 0.5;

pub fn grid_agent(cell: Cell, seed: u64) -> AgentConfig {
    let mut cfg = AgentConfig::new(RewardConfig::grid_world(cell.reward_kind));
    apply(&mut cfg, cell, seed);
    cfg.learning_rate = GRID_LEARNING_RATE;
    cfg.training_action_budget = GRID_BUDGET;
    cfg
}

pub fn block_agent(cell: Cell, seed: u64) -> AgentConfig {
    let mut reward = RewardConfig::block_world(cell.reward_kind);
    reward.learn_discount = BLOCK_LEARN_DISCOUNT;
    let mut cfg = AgentConfig::new(reward);
    apply(&mut cfg, cell, seed);
    cfg.learning_rate = BLOCK_LEARNING_RATE;
    cfg.training_action_budget = BLOCK_BUDGET;
    cfg
}

fn apply(cfg: &mut AgentConfig, cell: Cell, seed: u64) {
    cfg.use_mask = cell.use_mask;
    cfg.use_spotq = cell.use_spotq;
    cfg.seed = seed;
    cfg.replay.per_exponent = ABLATION_PER_EXPONENT;
}

pub fn grid_q() -> LinearQ<LookAhead> {
    LinearQ::new(3, LookAhead::default())
}

/// Sized for the default 4×4 table.
pub fn block_q() -> LinearQ<BlockFeatures> {
    LinearQ::new(96, BlockFeatures)
}
