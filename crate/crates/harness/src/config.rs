//! Flat `key = value` settings shared by every subcommand.
//!
//! A settings file is read first, then command-line flags are folded in as
//! the same keys, so flags always win.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spot_core::blockworld::{BlockConfig, Task, ToppleModel, SLOTS_PER_CELL};
use spot_core::gridworld::{GridConfig, NUM_ACTIONS as GRID_ACTIONS};
use spot_core::presets::{self, Cell, BLOCK_CELLS, GRID_CELLS};
use spot_core::{ActionType, AgentConfig, RewardKind};

use crate::error::{invalid, Result};

pub type KeyValues = BTreeMap<String, String>;

pub const OUTPUT_ENV: &str = "SPOT_OUTPUT_DIR";
pub const DEFAULT_OUTPUT: &str = "runs";

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str, origin: &str) -> Result<KeyValues> {
    let mut map = KeyValues::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("{origin}:{}: expected key = value, got `{line}`", i + 1)))?;
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(invalid(format!("{origin}:{}: empty key", i + 1)));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(invalid(format!("{origin}:{}: `{key}` set twice", i + 1)));
        }
    }
    Ok(map)
}

pub fn read_key_values(path: &Path) -> Result<KeyValues> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_key_values(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Grid,
    Block,
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "grid" | "gridworld" => Ok(EnvKind::Grid),
            "block" | "blockworld" => Ok(EnvKind::Block),
            _ => Err(format!("unknown environment `{s}` (gridworld or blockworld)")),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Grid => "gridworld",
            EnvKind::Block => "blockworld",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QKind {
    /// One-hot features over an abstraction of the state.
    Linear,
    /// One entry per exact state.
    Tabular,
}

impl FromStr for QKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(QKind::Linear),
            "tabular" => Ok(QKind::Tabular),
            _ => Err(format!("unknown q function `{s}` (linear or tabular)")),
        }
    }
}

impl fmt::Display for QKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QKind::Linear => "linear",
            QKind::Tabular => "tabular",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum World {
    Grid(GridConfig),
    Block(BlockConfig),
}

impl World {
    pub fn num_actions(&self) -> usize {
        match self {
            World::Grid(_) => GRID_ACTIONS,
            World::Block(b) => b.width * b.height * SLOTS_PER_CELL,
        }
    }
}

const AGENT_KEYS: &[&str] = &[
    "budget",
    "learning_rate",
    "learn_discount",
    "trial_discount",
    "epsilon_start",
    "epsilon_end",
    "epsilon_decay_steps",
    "train_steps_per_action",
    "per_exponent",
    "type_filter_prob",
    "capacity",
    "validation_every",
    "validation_trials",
    "record_steps",
];

const OTHER_KEYS: &[&str] = &[
    "env",
    "task",
    "width",
    "height",
    "blocks",
    "action_limit",
    "topple_per_level",
    "topple_cap",
    "mask",
    "spotq",
    "reward",
    "cells",
    "seeds",
    "eval_trials",
    "q",
    "out",
];

/// Everything a run needs, resolved from the merged key/value map.
#[derive(Debug, Clone)]
pub struct Settings {
    pub env: EnvKind,
    pub world: World,
    pub cells: Vec<Cell>,
    pub seeds: Vec<u64>,
    pub eval_trials: u32,
    pub q: QKind,
    pub out: Option<PathBuf>,
    agent_keys: KeyValues,
    record_steps_default: bool,
}

fn value<T: FromStr>(map: &KeyValues, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| invalid(format!("{key} = {v}: {e}"))))
        .transpose()
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| invalid(format!("bad seed `{s}`"))))
        .collect()
}

impl Settings {
    /// `record_steps_default` applies when the map has no `record_steps` key.
    pub fn from_map(map: &KeyValues, record_steps_default: bool) -> Result<Settings> {
        for key in map.keys() {
            let known = AGENT_KEYS.contains(&key.as_str())
                || OTHER_KEYS.contains(&key.as_str())
                || key.strip_prefix("weight.").is_some_and(|t| t.parse::<ActionType>().is_ok());
            if !known {
                return Err(invalid(format!("unknown setting `{key}`")));
            }
        }
        let env: EnvKind = value(map, "env")?.unwrap_or(EnvKind::Grid);
        let world = match env {
            EnvKind::Grid => {
                let mut g = GridConfig::default();
                g.width = value(map, "width")?.unwrap_or(g.width);
                g.height = value(map, "height")?.unwrap_or(g.height);
                g.action_limit = value(map, "action_limit")?.unwrap_or(g.action_limit);
                for key in ["task", "blocks", "topple_per_level", "topple_cap"] {
                    if map.contains_key(key) {
                        return Err(invalid(format!("`{key}` only applies to the block world")));
                    }
                }
                World::Grid(g)
            }
            EnvKind::Block => {
                let task: Task = value(map, "task")?.unwrap_or(Task::StackOf(4));
                let mut b = BlockConfig::new(task);
                b.width = value(map, "width")?.unwrap_or(b.width);
                b.height = value(map, "height")?.unwrap_or(b.height);
                b.num_blocks = value(map, "blocks")?.unwrap_or(b.num_blocks);
                b.action_limit = value(map, "action_limit")?.unwrap_or(b.action_limit);
                b.topple = ToppleModel {
                    per_level: value(map, "topple_per_level")?.unwrap_or(b.topple.per_level),
                    cap: value(map, "topple_cap")?.unwrap_or(b.topple.cap),
                };
                b.validate()?;
                World::Block(b)
            }
        };
        if let World::Grid(g) = world {
            // Surfaces layout errors now rather than inside a worker.
            spot_core::gridworld::GridWorld::generate_with(0, &g)?;
        }

        let single = ["mask", "spotq", "reward"].iter().any(|k| map.contains_key(*k));
        let cells = match map.get("cells") {
            Some(_) if single => return Err(invalid("give either `cells` or mask/spotq/reward, not both")),
            Some(list) if list.trim() == "table" => default_cells(env),
            Some(list) => list
                .split(',')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(|c| c.parse::<Cell>().map_err(|e| invalid(format!("cells: {e}"))))
                .collect::<Result<Vec<_>>>()?,
            None if single => {
                let cell = Cell::new(
                    value(map, "mask")?.unwrap_or(false),
                    value(map, "spotq")?.unwrap_or(false),
                    value(map, "reward")?.unwrap_or(RewardKind::Base),
                );
                if cell.use_spotq && !cell.use_mask {
                    return Err(invalid("spotq requires mask"));
                }
                vec![cell]
            }
            None => default_cells(env),
        };
        if cells.is_empty() {
            return Err(invalid("no ablation cells given"));
        }

        let seeds = match map.get("seeds") {
            Some(text) => parse_seeds(text)?,
            None => vec![1],
        };
        if seeds.is_empty() {
            return Err(invalid("the seed list is empty"));
        }
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != seeds.len() {
            return Err(invalid("the seed list repeats a seed"));
        }

        let default_trials = match env {
            EnvKind::Grid => 1000,
            EnvKind::Block => 100,
        };
        let eval_trials = value(map, "eval_trials")?.unwrap_or(default_trials);
        if eval_trials == 0 {
            return Err(invalid("eval_trials must be positive"));
        }
        let settings = Settings {
            env,
            world,
            cells,
            seeds,
            eval_trials,
            q: value(map, "q")?.unwrap_or(QKind::Linear),
            out: map.get("out").map(PathBuf::from),
            agent_keys: map
                .iter()
                .filter(|(k, _)| AGENT_KEYS.contains(&k.as_str()) || k.starts_with("weight."))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            record_steps_default,
        };
        for &cell in &settings.cells {
            settings.agent(cell, settings.seeds[0])?;
        }
        Ok(settings)
    }

    /// Output root: the `out` setting, then the environment variable, then `runs`.
    pub fn output_root(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
    }

    /// Tuned defaults for the environment with this settings' overrides applied.
    pub fn agent(&self, cell: Cell, seed: u64) -> Result<AgentConfig> {
        let mut cfg = match self.env {
            EnvKind::Grid => presets::grid_agent(cell, seed),
            EnvKind::Block => presets::block_agent(cell, seed),
        };
        cfg.record_steps = self.record_steps_default;
        let m = &self.agent_keys;
        let set = |key: &str, slot: &mut f64| -> Result<()> {
            if let Some(v) = value(m, key)? {
                *slot = v;
            }
            Ok(())
        };
        set("learning_rate", &mut cfg.learning_rate)?;
        set("learn_discount", &mut cfg.reward.learn_discount)?;
        set("trial_discount", &mut cfg.reward.trial_discount)?;
        set("epsilon_start", &mut cfg.epsilon_start)?;
        set("epsilon_end", &mut cfg.epsilon_end)?;
        set("per_exponent", &mut cfg.replay.per_exponent)?;
        set("type_filter_prob", &mut cfg.replay.type_filter_prob)?;
        if let Some(v) = value(m, "epsilon_decay_steps")? {
            cfg.epsilon_decay_steps = Some(v);
        }
        if let Some(v) = value(m, "budget")? {
            cfg.training_action_budget = v;
        }
        if let Some(v) = value(m, "train_steps_per_action")? {
            cfg.train_steps_per_action = v;
        }
        if let Some(v) = value(m, "capacity")? {
            cfg.replay.capacity = v;
        }
        if let Some(v) = value(m, "validation_every")? {
            cfg.validation_every = v;
        }
        if let Some(v) = value(m, "validation_trials")? {
            cfg.validation_trials = v;
        }
        if let Some(v) = value(m, "record_steps")? {
            cfg.record_steps = v;
        }
        for (k, v) in m {
            if let Some(t) = k.strip_prefix("weight.") {
                let t: ActionType = t.parse()?;
                let w = v.parse().map_err(|_| invalid(format!("{k} = {v}: not a number")))?;
                cfg.reward.weights.insert(t, w);
            }
        }
        if !(cfg.replay.per_exponent.is_finite() && cfg.replay.per_exponent >= 0.0) {
            return Err(invalid("per_exponent must be a non-negative number"));
        }
        if !(0.0..=1.0).contains(&cfg.replay.type_filter_prob) {
            return Err(invalid("type_filter_prob must lie in [0, 1]"));
        }
        if cfg.replay.capacity == 0 {
            return Err(invalid("capacity must be positive"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_cells(env: EnvKind) -> Vec<Cell> {
    match env {
        EnvKind::Grid => GRID_CELLS.to_vec(),
        EnvKind::Block => BLOCK_CELLS.to_vec(),
    }
}
