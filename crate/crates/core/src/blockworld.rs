//! Abstract tabletop with stackable blocks.
//!
//! Blocks sit in stacks on a small grid of cells. A gripper grasps the top
//! block of a cell, places a held block on top of a cell, or pushes a lone
//! block one cell over. Placing onto a tall stack can topple it, scattering
//! its blocks and undoing earlier progress.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvStep, Environment, Termination};
use crate::error::{Result, SpotError};
use crate::qfunction::{Featurizer, StableHasher, StateKey};
use crate::replay::StateCodec;
use crate::rewards::{ActionType, StepOutcome};
use crate::spotq::ActionMask;

/// Action slots per cell: grasp, place, then push north/east/south/west.
pub const SLOTS_PER_CELL: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    StackOf(u8),
    RowOf(u8),
    ClearAll,
}

impl Task {
    /// Per-trial action budget.
    pub fn default_action_limit(self) -> u32 {
        match self {
            Task::StackOf(_) | Task::RowOf(_) => 50,
            Task::ClearAll => 30,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::StackOf(k) => write!(f, "stack{k}"),
            Task::RowOf(k) => write!(f, "row{k}"),
            Task::ClearAll => f.write_str("clear"),
        }
    }
}

impl FromStr for Task {
    type Err = SpotError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SpotError::Parse(format!("unknown task `{s}`"));
        let s = s.to_ascii_lowercase();
        if s == "clear" || s == "clearall" {
            return Ok(Task::ClearAll);
        }
        if let Some(k) = s.strip_prefix("stack") {
            return k.parse().map(Task::StackOf).map_err(|_| bad());
        }
        if let Some(k) = s.strip_prefix("row") {
            return k.parse().map(Task::RowOf).map_err(|_| bad());
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::East, Direction::South, Direction::West];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockAction {
    pub kind: ActionType,
    pub x: usize,
    pub y: usize,
    /// Present iff `kind` is push.
    pub direction: Option<Direction>,
}

impl BlockAction {
    pub fn decode(action: usize, width: usize) -> BlockAction {
        let cell = action / SLOTS_PER_CELL;
        let slot = action % SLOTS_PER_CELL;
        let (kind, direction) = match slot {
            0 => (ActionType::Grasp, None),
            1 => (ActionType::Place, None),
            d => (ActionType::Push, Some(Direction::ALL[d - 2])),
        };
        BlockAction {
            kind,
            x: cell % width,
            y: cell / width,
            direction,
        }
    }

    pub fn encode(&self, width: usize) -> usize {
        let slot = match (self.kind, self.direction) {
            (ActionType::Grasp, _) => 0,
            (ActionType::Place, _) => 1,
            (_, Some(d)) => 2 + d as usize,
            (kind, None) => panic!("{kind} action without a direction"),
        };
        (self.y * width + self.x) * SLOTS_PER_CELL + slot
    }
}

/// Topple hazard when placing onto a stack of height `h`:
/// `min(per_level · (h − 1), cap)` for `h ≥ 2`, otherwise zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToppleModel {
    pub per_level: f64,
    pub cap: f64,
}

impl Default for ToppleModel {
    fn default() -> Self {
        ToppleModel {
            per_level: 0.1,
            cap: 0.5,
        }
    }
}

impl ToppleModel {
    pub const NEVER: ToppleModel = ToppleModel {
        per_level: 0.0,
        cap: 0.0,
    };

    pub fn probability(&self, height: usize) -> f64 {
        if height < 2 {
            0.0
        } else {
            (self.per_level * (height - 1) as f64).min(self.cap)
        }
    }
}

/// Full observable state. Stacks are listed bottom to top.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockState {
    pub width: usize,
    pub height: usize,
    pub stacks: Vec<Vec<u8>>,
    pub gripper: Option<u8>,
    pub removed: Vec<u8>,
    pub task: Task,
}

impl BlockState {
    pub fn num_blocks(&self) -> usize {
        self.stacks.iter().map(Vec::len).sum::<usize>() + usize::from(self.gripper.is_some()) + self.removed.len()
    }

    pub fn stack(&self, x: usize, y: usize) -> &[u8] {
        &self.stacks[y * self.width + x]
    }

    pub fn cell_height(&self, x: usize, y: usize) -> usize {
        self.stack(x, y).len()
    }

    pub fn max_height(&self) -> usize {
        self.stacks.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn num_actions(&self) -> usize {
        self.width * self.height * SLOTS_PER_CELL
    }

    fn in_grid(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Longest run of consecutive single-block cells along any row or column.
    pub fn longest_row(&self) -> usize {
        let single = |x: usize, y: usize| self.cell_height(x, y) == 1;
        let mut best = 0;
        for y in 0..self.height {
            let mut run = 0;
            for x in 0..self.width {
                run = if single(x, y) { run + 1 } else { 0 };
                best = best.max(run);
            }
        }
        for x in 0..self.width {
            let mut run = 0;
            for y in 0..self.height {
                run = if single(x, y) { run + 1 } else { 0 };
                best = best.max(run);
            }
        }
        best
    }

    /// Longest line run through `(x, y)` if that cell held exactly one block.
    pub fn run_through(&self, x: usize, y: usize) -> usize {
        let single = |cx: i64, cy: i64| self.in_grid(cx, cy) && self.cell_height(cx as usize, cy as usize) == 1;
        let count = |dx: i64, dy: i64| {
            let mut n = 0;
            let (mut cx, mut cy) = (x as i64 + dx, y as i64 + dy);
            while single(cx, cy) {
                n += 1;
                cx += dx;
                cy += dy;
            }
            n
        };
        let horizontal = 1 + count(-1, 0) + count(1, 0);
        let vertical = 1 + count(0, -1) + count(0, 1);
        horizontal.max(vertical)
    }

    pub fn progress(&self) -> f64 {
        match self.task {
            Task::StackOf(k) => (self.max_height() as f64 / f64::from(k)).min(1.0),
            Task::RowOf(k) => (self.longest_row() as f64 / f64::from(k)).min(1.0),
            Task::ClearAll => {
                let n = self.num_blocks();
                if n == 0 {
                    1.0
                } else {
                    self.removed.len() as f64 / n as f64
                }
            }
        }
    }

    /// Grasp needs an empty gripper and a block; place needs a held block;
    /// push needs an empty gripper, a block, and either a stack to topple
    /// or a free on-grid cell to slide into.
    pub fn mask(&self) -> ActionMask {
        let mut allowed = vec![false; self.num_actions()];
        let holding = self.gripper.is_some();
        for y in 0..self.height {
            for x in 0..self.width {
                let base = (y * self.width + x) * SLOTS_PER_CELL;
                let h = self.cell_height(x, y);
                allowed[base] = !holding && h > 0;
                allowed[base + 1] = holding;
                for (i, d) in Direction::ALL.into_iter().enumerate() {
                    let (dx, dy) = d.delta();
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    let slides = self.in_grid(nx, ny) && self.cell_height(nx as usize, ny as usize) == 0;
                    allowed[base + 2 + i] = !holding && (h >= 2 || (h == 1 && slides));
                }
            }
        }
        ActionMask::from_vec(allowed)
    }

    /// `cell x y: [ids]` per occupied cell, then `gripper:`; `size:` and
    /// `removed:` lines are written when they carry information.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if (self.width, self.height) != (4, 4) {
            out.push_str(&format!("size: {} {}\n", self.width, self.height));
        }
        for y in 0..self.height {
            for x in 0..self.width {
                let s = self.stack(x, y);
                if !s.is_empty() {
                    out.push_str(&format!("cell {x} {y}: {}\n", id_list(s)));
                }
            }
        }
        if !self.removed.is_empty() {
            out.push_str(&format!("removed: {}\n", id_list(&self.removed)));
        }
        match self.gripper {
            Some(b) => out.push_str(&format!("gripper: {b}\n")),
            None => out.push_str("gripper: empty\n"),
        }
        out
    }

    pub fn parse(text: &str, task: Task) -> Result<BlockState> {
        let (mut width, mut height) = (4, 4);
        let mut cells: Vec<(usize, usize, Vec<u8>)> = Vec::new();
        let mut gripper = None;
        let mut seen_gripper = false;
        let mut removed = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (head, rest) = line
                .split_once(':')
                .ok_or_else(|| SpotError::Parse(format!("expected `key: value`, got `{line}`")))?;
            let rest = rest.trim();
            let words: Vec<&str> = head.split_whitespace().collect();
            match words.as_slice() {
                ["size"] => {
                    let dims: Vec<usize> = rest
                        .split_whitespace()
                        .map(|v| v.parse().map_err(|_| SpotError::Parse(format!("bad size `{rest}`"))))
                        .collect::<Result<_>>()?;
                    let [w, h] = dims[..] else {
                        return Err(SpotError::Parse(format!("bad size `{rest}`")));
                    };
                    width = w;
                    height = h;
                }
                ["cell", x, y] => {
                    let x = x.parse().map_err(|_| SpotError::Parse(format!("bad cell x in `{line}`")))?;
                    let y = y.parse().map_err(|_| SpotError::Parse(format!("bad cell y in `{line}`")))?;
                    cells.push((x, y, parse_id_list(rest)?));
                }
                ["removed"] => removed = parse_id_list(rest)?,
                ["gripper"] => {
                    seen_gripper = true;
                    gripper = match rest {
                        "empty" => None,
                        id => Some(id.parse().map_err(|_| SpotError::Parse(format!("bad gripper `{id}`")))?),
                    };
                }
                _ => return Err(SpotError::Parse(format!("unknown line `{line}`"))),
            }
        }
        if !seen_gripper {
            return Err(SpotError::Parse("missing `gripper:` line".into()));
        }
        let mut stacks = vec![Vec::new(); width * height];
        for (x, y, ids) in cells {
            if x >= width || y >= height {
                return Err(SpotError::Parse(format!("cell {x} {y} outside {width}x{height} grid")));
            }
            stacks[y * width + x] = ids;
        }
        let state = BlockState {
            width,
            height,
            stacks,
            gripper,
            removed,
            task,
        };
        let mut ids: Vec<u8> = state
            .stacks
            .iter()
            .flatten()
            .chain(state.gripper.iter())
            .chain(state.removed.iter())
            .copied()
            .collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SpotError::Parse("a block id appears twice".into()));
        }
        Ok(state)
    }
}

fn id_list(ids: &[u8]) -> String {
    let inner: Vec<String> = ids.iter().map(u8::to_string).collect();
    format!("[{}]", inner.join(" "))
}

fn parse_id_list(text: &str) -> Result<Vec<u8>> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| SpotError::Parse(format!("expected `[ids]`, got `{text}`")))?;
    inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| SpotError::Parse(format!("bad block id `{t}`"))))
        .collect()
}

impl StateKey for BlockState {
    /// Block identities are irrelevant: cell heights plus the gripper flag.
    fn state_key(&self) -> u64 {
        let mut h = StableHasher::default();
        h.write_u64(self.width as u64);
        h.write(&self.stacks.iter().map(|s| s.len() as u8).collect::<Vec<_>>());
        h.write(&[u8::from(self.gripper.is_some()), self.removed.len() as u8]);
        h.finish()
    }
}

/// Minimal action count for a task, used as the efficiency numerator.
pub fn ideal_actions(task: Task, num_blocks: usize) -> Result<u32> {
    match task {
        Task::StackOf(k) if k >= 1 && usize::from(k) <= num_blocks => Ok(2 * (u32::from(k) - 1)),
        Task::RowOf(k) if k >= 1 && usize::from(k) <= num_blocks => Ok(u32::from(k)),
        Task::ClearAll => Ok(num_blocks as u32),
        other => Err(SpotError::Config(format!("task {other} is not achievable with {num_blocks} blocks"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub width: usize,
    pub height: usize,
    pub num_blocks: usize,
    pub task: Task,
    pub action_limit: u32,
    pub topple: ToppleModel,
}

impl BlockConfig {
    pub fn new(task: Task) -> Self {
        BlockConfig {
            width: 4,
            height: 4,
            num_blocks: 4,
            task,
            action_limit: task.default_action_limit(),
            topple: ToppleModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 || self.num_blocks > self.width * self.height || self.num_blocks > 255 {
            return Err(SpotError::Config(format!(
                "{} blocks do not fit a {}x{} table",
                self.num_blocks, self.width, self.height
            )));
        }
        if let Task::RowOf(k) = self.task {
            if usize::from(k) > self.width.max(self.height) {
                return Err(SpotError::Config(format!("a row of {k} does not fit the table")));
            }
        }
        ideal_actions(self.task, self.num_blocks).map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct BlockWorld {
    state: BlockState,
    topple: ToppleModel,
    step_count: u32,
    action_limit: u32,
    terminal: bool,
    rng: ChaCha8Rng,
}

impl BlockWorld {
    /// Blocks on distinct random cells, gripper empty. Layouts that already
    /// satisfy the task are redrawn.
    pub fn reset(seed: u64, cfg: &BlockConfig) -> Result<BlockWorld> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = cfg.width * cfg.height;
        loop {
            let mut order: Vec<usize> = (0..cells).collect();
            order.shuffle(&mut rng);
            let mut stacks = vec![Vec::new(); cells];
            for (id, &cell) in order.iter().take(cfg.num_blocks).enumerate() {
                stacks[cell].push(id as u8);
            }
            let state = BlockState {
                width: cfg.width,
                height: cfg.height,
                stacks,
                gripper: None,
                removed: Vec::new(),
                task: cfg.task,
            };
            if state.progress() < 1.0 {
                return Ok(BlockWorld::from_state(state, cfg, rng));
            }
        }
    }

    pub fn from_state(state: BlockState, cfg: &BlockConfig, rng: ChaCha8Rng) -> BlockWorld {
        let terminal = state.progress() >= 1.0;
        BlockWorld {
            state,
            topple: cfg.topple,
            step_count: 0,
            action_limit: cfg.action_limit,
            terminal,
            rng,
        }
    }

    pub fn block_state(&self) -> &BlockState {
        &self.state
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    /// Scatters every block of a cell onto distinct empty cells, nearest
    /// rings first, in random order within a ring.
    fn topple_cell(&mut self, x: usize, y: usize) {
        let w = self.state.width;
        let blocks = std::mem::take(&mut self.state.stacks[y * w + x]);
        let mut targets: Vec<usize> = Vec::with_capacity(blocks.len());
        let max_ring = self.state.width.max(self.state.height);
        for ring in 1..=max_ring {
            let mut ring_cells: Vec<usize> = Vec::new();
            for cy in 0..self.state.height {
                for cx in 0..self.state.width {
                    let d = cx.abs_diff(x).max(cy.abs_diff(y));
                    if d == ring && self.state.stacks[cy * w + cx].is_empty() {
                        ring_cells.push(cy * w + cx);
                    }
                }
            }
            ring_cells.shuffle(&mut self.rng);
            targets.extend(ring_cells);
            if targets.len() >= blocks.len() {
                break;
            }
        }
        for (block, cell) in blocks.into_iter().zip(targets) {
            self.state.stacks[cell].push(block);
        }
    }

    fn apply(&mut self, a: BlockAction) -> bool {
        let w = self.state.width;
        let idx = a.y * w + a.x;
        match a.kind {
            ActionType::Grasp => {
                if self.state.gripper.is_some() {
                    return false;
                }
                let Some(block) = self.state.stacks[idx].pop() else {
                    return false;
                };
                if self.state.task == Task::ClearAll {
                    self.state.removed.push(block);
                } else {
                    self.state.gripper = Some(block);
                }
                true
            }
            ActionType::Place => {
                let Some(block) = self.state.gripper.take() else {
                    return false;
                };
                let before = self.state.progress();
                let h = self.state.stacks[idx].len();
                self.state.stacks[idx].push(block);
                let p = self.topple.probability(h);
                if p > 0.0 && self.rng.gen::<f64>() < p {
                    self.topple_cell(a.x, a.y);
                    return false;
                }
                self.state.progress() > before
            }
            _ => {
                if self.state.gripper.is_some() || self.state.stacks[idx].is_empty() {
                    return false;
                }
                if self.state.stacks[idx].len() >= 2 {
                    self.topple_cell(a.x, a.y);
                    return true;
                }
                let (dx, dy) = a.direction.expect("push has a direction").delta();
                let (nx, ny) = (a.x as i64 + dx, a.y as i64 + dy);
                if !self.state.in_grid(nx, ny) {
                    return false;
                }
                let target = ny as usize * w + nx as usize;
                if !self.state.stacks[target].is_empty() {
                    return false;
                }
                let block = self.state.stacks[idx].pop().expect("non-empty cell");
                self.state.stacks[target].push(block);
                true
            }
        }
    }
}

impl Environment for BlockWorld {
    type State = BlockState;

    fn num_actions(&self) -> usize {
        self.state.num_actions()
    }

    fn state(&self) -> BlockState {
        self.state.clone()
    }

    fn action_type(&self, action: usize) -> ActionType {
        BlockAction::decode(action, self.state.width).kind
    }

    fn mask_of(state: &BlockState) -> ActionMask {
        state.mask()
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if self.terminal {
            return Err(SpotError::TerminalStep);
        }
        let num_actions = self.num_actions();
        if action >= num_actions {
            return Err(SpotError::ActionOutOfRange { action, num_actions });
        }
        let a = BlockAction::decode(action, self.state.width);
        let before = self.state.progress();
        let success = self.apply(a);
        let after = self.state.progress();
        self.step_count += 1;
        let termination = if after >= 1.0 {
            Some(Termination::Complete)
        } else if self.step_count >= self.action_limit {
            Some(Termination::ActionLimit)
        } else {
            None
        };
        self.terminal = termination.is_some();
        Ok(EnvStep {
            outcome: StepOutcome {
                action_type: a.kind,
                success,
                progress_before: before,
                progress_after: after,
                terminal: self.terminal,
                task_complete: termination == Some(Termination::Complete),
            },
            termination,
        })
    }

    fn is_terminal(&self) -> bool {
        self.terminal
    }

    fn progress(&self) -> f64 {
        self.state.progress()
    }

    fn ideal_actions(&self) -> u32 {
        ideal_actions(self.state.task, self.state.num_blocks()).expect("validated at reset")
    }
}

impl fmt::Display for BlockWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.state.to_text())
    }
}

/// Lines of [`BlockState::to_text`] joined with `;`.
#[derive(Debug, Clone, Copy)]
pub struct BlockCodec {
    pub task: Task,
}

impl StateCodec for BlockCodec {
    type State = BlockState;

    fn encode(&self, state: &BlockState) -> String {
        state.to_text().trim_end().replace('\n', ";")
    }

    fn decode(&self, text: &str) -> Result<BlockState> {
        BlockState::parse(&text.replace(';', "\n"), self.task)
    }
}

/// One-hot abstraction of a state-action pair for the linear Q-function.
///
/// Drops cell positions and block identities so experience transfers across
/// random layouts: what matters is the primitive, the local stack height,
/// whether it is the tallest stack, the overall best height or row length,
/// and whether the gripper holds a block.
#[derive(Debug, Clone, Copy, Default)]
pub struct BlockFeatures;

impl BlockFeatures {
    pub const NAME: &'static str = "block-abstract";
}

impl Featurizer<BlockState> for BlockFeatures {
    fn name(&self) -> &'static str {
        BlockFeatures::NAME
    }

    fn features(&self, s: &BlockState, action: usize, out: &mut Vec<u64>) {
        let a = BlockAction::decode(action, s.width);
        let slot = action % SLOTS_PER_CELL;
        let h = s.cell_height(a.x, a.y);
        let holding = s.gripper.is_some();
        let dest = a.direction.map(|d| {
            let (dx, dy) = d.delta();
            let (nx, ny) = (a.x as i64 + dx, a.y as i64 + dy);
            if !s.in_grid(nx, ny) {
                (0u8, 0usize)
            } else {
                let (nx, ny) = (nx as usize, ny as usize);
                let occupied = s.cell_height(nx, ny) > 0;
                (1 + u8::from(occupied), s.run_through(nx, ny))
            }
        });
        // Pushes share weights across directions.
        let kind = slot.min(2) as u64;
        let mut key = StableHasher::default();
        key.write_u64(kind);
        key.write_u64(u64::from(holding));
        match s.task {
            Task::StackOf(k) => {
                let max_h = s.max_height();
                key.write_u64(h.min(usize::from(k)) as u64);
                key.write_u64(u64::from(h > 0 && h == max_h));
                key.write_u64(max_h.min(usize::from(k)) as u64);
                key.write_u64(dest.map_or(9, |(status, _)| u64::from(status)));
            }
            Task::RowOf(k) => {
                let k = usize::from(k);
                let longest = s.longest_row().min(k);
                let through = if h == 1 || h == 0 { s.run_through(a.x, a.y).min(k) } else { 0 };
                key.write_u64(h.min(2) as u64);
                key.write_u64(longest as u64);
                key.write_u64(through as u64);
                let (status, dest_run) = dest.unwrap_or((9, 0));
                key.write_u64(u64::from(status));
                key.write_u64(dest_run.min(k) as u64);
            }
            Task::ClearAll => {
                key.write_u64(h.min(4) as u64);
                key.write_u64(dest.map_or(9, |(status, _)| u64::from(status)));
            }
        }
        out.push(key.finish());
    }
}
