//! Lava-crossing grid world.
//!
//! The agent moves forward or turns in place on a walled grid, must reach the
//! goal without stepping into lava, and has a fixed action budget per trial.
//! Task progress comes from a BFS distance field grown out of the goal.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvStep, Environment, Termination};
use crate::error::{Result, SpotError};
use crate::qfunction::{Featurizer, StableHasher, StateKey};
use crate::replay::StateCodec;
use crate::rewards::{ActionType, RewardConfig, RewardKind, StepOutcome};
use crate::spotq::ActionMask;

pub const FORWARD: usize = 0;
pub const TURN_LEFT: usize = 1;
pub const TURN_RIGHT: usize = 2;
pub const NUM_ACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Wall,
    Lava,
    Goal,
}

impl Cell {
    pub fn passable(self) -> bool {
        matches!(self, Cell::Empty | Cell::Goal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn left(self) -> Heading {
        Heading::ALL[(self as usize + 3) % 4]
    }

    pub fn right(self) -> Heading {
        Heading::ALL[(self as usize + 1) % 4]
    }

    fn glyph(self) -> char {
        match self {
            Heading::North => '^',
            Heading::East => '>',
            Heading::South => 'v',
            Heading::West => '<',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub heading: Heading,
}

/// Static cells of a grid; exactly one goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    goal: (usize, usize),
    fingerprint: u64,
}

impl Layout {
    pub fn new(width: usize, height: usize, cells: Vec<Cell>) -> Result<Self> {
        if width == 0 || height == 0 || cells.len() != width * height {
            return Err(SpotError::Layout(format!(
                "{} cells do not fill a {width}x{height} grid",
                cells.len()
            )));
        }
        let goals: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == Cell::Goal).collect();
        if goals.len() != 1 {
            return Err(SpotError::Layout(format!("expected one goal, found {}", goals.len())));
        }
        let goal = (goals[0] % width, goals[0] / width);
        let mut h = StableHasher::default();
        h.write_u64(width as u64);
        h.write_u64(height as u64);
        h.write(&cells.iter().map(|c| *c as u8).collect::<Vec<_>>());
        Ok(Layout {
            width,
            height,
            cells,
            goal,
            fingerprint: h.finish(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    /// Cell at an integer offset; off-grid reads as wall.
    pub fn cell_at(&self, x: i64, y: i64) -> Cell {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            Cell::Wall
        } else {
            self.cell(x as usize, y as usize)
        }
    }

    pub fn facing(&self, pose: Pose) -> (i64, i64) {
        let (dx, dy) = pose.heading.delta();
        (pose.x as i64 + dx, pose.y as i64 + dy)
    }

    /// Text form: `.` empty, `#` wall, `L` lava, `G` goal, agent as `^>v<`.
    pub fn render(&self, agent: Option<Pose>) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let c = match agent {
                    Some(p) if p.x == x && p.y == y => p.heading.glyph(),
                    _ => match self.cell(x, y) {
                        Cell::Empty => '.',
                        Cell::Wall => '#',
                        Cell::Lava => 'L',
                        Cell::Goal => 'G',
                    },
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`render`](Layout::render) output; the agent glyph is required.
    pub fn parse(text: &str) -> Result<(Layout, Pose)> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut cells = Vec::with_capacity(width * height);
        let mut agent = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(SpotError::Layout(format!("row {y} is not {width} cells wide")));
            }
            for (x, ch) in row.chars().enumerate() {
                let cell = match ch {
                    '.' => Cell::Empty,
                    '#' => Cell::Wall,
                    'L' => Cell::Lava,
                    'G' => Cell::Goal,
                    '^' | '>' | 'v' | '<' => {
                        if agent.is_some() {
                            return Err(SpotError::Layout("more than one agent".into()));
                        }
                        let heading = Heading::ALL.into_iter().find(|h| h.glyph() == ch).expect("agent glyph");
                        agent = Some(Pose { x, y, heading });
                        Cell::Empty
                    }
                    other => return Err(SpotError::Layout(format!("unknown cell `{other}`"))),
                };
                cells.push(cell);
            }
        }
        let layout = Layout::new(width, height, cells)?;
        let agent = agent.ok_or_else(|| SpotError::Layout("no agent in layout".into()))?;
        Ok((layout, agent))
    }
}

/// BFS distance to the goal over passable 4-neighbours; `None` if unreachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    dist: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn get(&self, x: usize, y: usize) -> Option<u32> {
        self.dist[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[Option<u32>] {
        &self.dist
    }
}

pub fn wavefront(layout: &Layout) -> DistanceField {
    let (w, h) = (layout.width, layout.height);
    let mut dist = vec![None; w * h];
    let (gx, gy) = layout.goal;
    dist[gy * w + gx] = Some(0);
    let mut frontier = VecDeque::from([(gx, gy)]);
    while let Some((x, y)) = frontier.pop_front() {
        let d = dist[y * w + x].expect("frontier cells are labelled");
        for heading in Heading::ALL {
            let (dx, dy) = heading.delta();
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if !layout.cell_at(nx, ny).passable() {
                continue;
            }
            let idx = ny as usize * w + nx as usize;
            if dist[idx].is_none() {
                dist[idx] = Some(d + 1);
                frontier.push_back((nx as usize, ny as usize));
            }
        }
    }
    DistanceField { width: w, dist }
}

/// `1 − remaining / initial` distance, clamped to `[0, 1]`.
pub fn progress(field: &DistanceField, start: Pose, at: Pose) -> f64 {
    let initial = field.get(start.x, start.y).unwrap_or(0);
    if initial == 0 {
        return 1.0;
    }
    match field.get(at.x, at.y) {
        Some(d) => (1.0 - f64::from(d) / f64::from(initial)).clamp(0.0, 1.0),
        None => 0.0,
    }
}

/// Fewest actions from `start` to the goal: shortest path first, then fewest
/// turns along it. `None` when the goal cannot be reached without lava.
pub fn ideal_action_count(layout: &Layout, start: Pose) -> Option<u32> {
    let key = |p: Pose| (p.y * layout.width + p.x) * 4 + p.heading as usize;
    let mut best: Vec<Option<(u32, u32)>> = vec![None; layout.width * layout.height * 4];
    let mut heap = BinaryHeap::new();
    best[key(start)] = Some((0, 0));
    heap.push(Reverse(((0u32, 0u32), start.x, start.y, start.heading)));
    while let Some(Reverse((cost, x, y, heading))) = heap.pop() {
        let pose = Pose { x, y, heading };
        if best[key(pose)] != Some(cost) {
            continue;
        }
        if (x, y) == layout.goal {
            return Some(cost.0 + cost.1);
        }
        let (fx, fy) = layout.facing(pose);
        let mut next = vec![
            (Pose { heading: heading.left(), ..pose }, (cost.0, cost.1 + 1)),
            (Pose { heading: heading.right(), ..pose }, (cost.0, cost.1 + 1)),
        ];
        if layout.cell_at(fx, fy).passable() {
            let moved = Pose {
                x: fx as usize,
                y: fy as usize,
                heading,
            };
            next.push((moved, (cost.0 + 1, cost.1)));
        }
        for (p, c) in next {
            let k = key(p);
            if best[k].is_none_or(|b| c < b) {
                best[k] = Some(c);
                heap.push(Reverse((c, p.x, p.y, p.heading)));
            }
        }
    }
    None
}

/// Full observable state: the layout plus the agent's pose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridState {
    pub layout: Arc<Layout>,
    pub pose: Pose,
}

impl StateKey for GridState {
    fn state_key(&self) -> u64 {
        let mut h = StableHasher::default();
        h.write_u64(self.layout.fingerprint);
        h.write_u64(self.pose.x as u64);
        h.write_u64(self.pose.y as u64);
        h.write_u64(self.pose.heading as u64);
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub action_limit: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            width: 9,
            height: 9,
            action_limit: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    layout: Arc<Layout>,
    field: Arc<DistanceField>,
    start: Pose,
    pose: Pose,
    consecutive_turns: u32,
    step_count: u32,
    action_limit: u32,
    terminal: bool,
}

impl GridWorld {
    pub fn generate(seed: u64) -> GridWorld {
        GridWorld::generate_with(seed, &GridConfig::default()).expect("default grid config is valid")
    }

    /// Walled grid with two full-height lava columns, each with one gap at a
    /// seeded row. Start in the top-left interior corner facing east, goal in
    /// the bottom-right interior corner.
    pub fn generate_with(seed: u64, cfg: &GridConfig) -> Result<GridWorld> {
        let (w, h) = (cfg.width, cfg.height);
        if w < 7 || h < 4 {
            return Err(SpotError::Layout(format!("{w}x{h} is too small for two lava columns")));
        }
        let interior = w - 2;
        let lava_columns = [1 + interior / 3, 1 + 2 * interior / 3];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let mut cells = vec![Cell::Empty; w * h];
            for y in 0..h {
                for x in 0..w {
                    if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                        cells[y * w + x] = Cell::Wall;
                    }
                }
            }
            for &col in &lava_columns {
                let gap = rng.gen_range(1..h - 1);
                for y in 1..h - 1 {
                    if y != gap {
                        cells[y * w + col] = Cell::Lava;
                    }
                }
            }
            cells[(h - 2) * w + (w - 2)] = Cell::Goal;
            let layout = Layout::new(w, h, cells)?;
            let start = Pose {
                x: 1,
                y: 1,
                heading: Heading::East,
            };
            if let Ok(world) = GridWorld::from_layout(layout, start, cfg.action_limit) {
                return Ok(world);
            }
        }
    }

    pub fn from_layout(layout: Layout, start: Pose, action_limit: u32) -> Result<GridWorld> {
        if !layout.cell(start.x, start.y).passable() {
            return Err(SpotError::Layout("agent starts on an impassable cell".into()));
        }
        let field = wavefront(&layout);
        if field.get(start.x, start.y).is_none() {
            return Err(SpotError::Layout("goal unreachable from start".into()));
        }
        let terminal = (start.x, start.y) == layout.goal;
        Ok(GridWorld {
            layout: Arc::new(layout),
            field: Arc::new(field),
            start,
            pose: start,
            consecutive_turns: 0,
            step_count: 0,
            action_limit,
            terminal,
        })
    }

    pub fn from_text(text: &str, action_limit: u32) -> Result<GridWorld> {
        let (layout, pose) = Layout::parse(text)?;
        GridWorld::from_layout(layout, pose, action_limit)
    }

    pub fn to_text(&self) -> String {
        self.layout.render(Some(self.pose))
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn field(&self) -> &DistanceField {
        &self.field
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn start(&self) -> Pose {
        self.start
    }

    pub fn consecutive_turns(&self) -> u32 {
        self.consecutive_turns
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    fn progress_at(&self, pose: Pose) -> f64 {
        progress(&self.field, self.start, pose)
    }

    /// Reset-with-zero-reward rule used in training: progress went down, or
    /// the agent has turned more than twice in a row.
    pub fn situation_removal_check(&self, progress_before: f64, progress_after: f64) -> bool {
        progress_after < progress_before || self.consecutive_turns > 2
    }
}

impl Environment for GridWorld {
    type State = GridState;

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn state(&self) -> GridState {
        GridState {
            layout: Arc::clone(&self.layout),
            pose: self.pose,
        }
    }

    fn action_type(&self, action: usize) -> ActionType {
        match action {
            FORWARD => ActionType::Forward,
            TURN_LEFT => ActionType::TurnLeft,
            _ => ActionType::TurnRight,
        }
    }

    /// Forward is ruled out when it would enter lava or bump a wall.
    fn mask_of(state: &GridState) -> ActionMask {
        let (fx, fy) = state.layout.facing(state.pose);
        let ahead = state.layout.cell_at(fx, fy);
        let mut mask = ActionMask::all(NUM_ACTIONS);
        mask.set(FORWARD, !matches!(ahead, Cell::Lava | Cell::Wall));
        mask
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if self.terminal {
            return Err(SpotError::TerminalStep);
        }
        if action >= NUM_ACTIONS {
            return Err(SpotError::ActionOutOfRange {
                action,
                num_actions: NUM_ACTIONS,
            });
        }
        let before = self.progress_at(self.pose);
        let mut termination = None;
        let mut after = before;
        match action {
            FORWARD => {
                self.consecutive_turns = 0;
                let (fx, fy) = self.layout.facing(self.pose);
                match self.layout.cell_at(fx, fy) {
                    Cell::Wall => {}
                    Cell::Lava => {
                        self.pose.x = fx as usize;
                        self.pose.y = fy as usize;
                        termination = Some(Termination::LavaDeath);
                    }
                    cell => {
                        self.pose.x = fx as usize;
                        self.pose.y = fy as usize;
                        after = self.progress_at(self.pose);
                        if cell == Cell::Goal {
                            after = 1.0;
                            termination = Some(Termination::Complete);
                        }
                    }
                }
            }
            TURN_LEFT => {
                self.pose.heading = self.pose.heading.left();
                self.consecutive_turns += 1;
            }
            _ => {
                self.pose.heading = self.pose.heading.right();
                self.consecutive_turns += 1;
            }
        }
        self.step_count += 1;
        if termination.is_none() && self.step_count >= self.action_limit {
            termination = Some(Termination::ActionLimit);
        }
        self.terminal = termination.is_some();
        Ok(EnvStep {
            outcome: StepOutcome {
                action_type: self.action_type(action),
                success: after > before,
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
        self.progress_at(self.pose)
    }

    fn ideal_actions(&self) -> u32 {
        ideal_action_count(&self.layout, self.start).expect("generated layouts are solvable")
    }

    fn situation_removal(&self, outcome: &StepOutcome) -> bool {
        self.situation_removal_check(outcome.progress_before, outcome.progress_after)
    }

    /// The built-in reward pays 1 on reaching the goal and nothing else.
    fn reward(&self, outcome: &StepOutcome, cfg: &RewardConfig) -> Result<f64> {
        match cfg.reward_kind {
            RewardKind::Base => Ok(if outcome.task_complete { 1.0 } else { 0.0 }),
            _ => crate::rewards::instant_reward(outcome, cfg),
        }
    }
}

impl fmt::Display for GridWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// One-hot key over the pose and a window of columns starting at the
/// agent's own.
///
/// Lava walls already crossed, and walls beyond the window, drop out of the
/// key, so what is learned near one wall is shared by every layout that
/// differs only elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct LookAhead {
    pub columns: usize,
}

impl LookAhead {
    pub const NAME: &'static str = "grid-lookahead";
}

/// Sees every column ahead of the agent.
impl Default for LookAhead {
    fn default() -> Self {
        LookAhead { columns: usize::MAX }
    }
}

impl Featurizer<GridState> for LookAhead {
    fn name(&self) -> &'static str {
        LookAhead::NAME
    }

    fn features(&self, s: &GridState, action: usize, out: &mut Vec<u64>) {
        let Pose { x, y, heading } = s.pose;
        let mut h = StableHasher::default();
        h.write(&[x as u8, y as u8, heading as u8, action as u8]);
        let end = x.saturating_add(self.columns).min(s.layout.width());
        for cx in x..end {
            for cy in 0..s.layout.height() {
                h.write(&[s.layout.cell(cx, cy) as u8]);
            }
        }
        out.push(h.finish());
    }
}

/// Grid rows joined with `/`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GridCodec;

impl StateCodec for GridCodec {
    type State = GridState;

    fn encode(&self, state: &GridState) -> String {
        state.layout.render(Some(state.pose)).trim_end().replace('\n', "/")
    }

    fn decode(&self, text: &str) -> Result<GridState> {
        let (layout, pose) = Layout::parse(&text.replace('/', "\n"))?;
        Ok(GridState {
            layout: Arc::new(layout),
            pose,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_grid(w: usize, h: usize) -> Layout {
        let mut cells = vec![Cell::Empty; w * h];
        cells[w * h - 1] = Cell::Goal;
        Layout::new(w, h, cells).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = GridWorld::generate(42);
        let b = GridWorld::generate(42);
        assert_eq!(a.layout(), b.layout());
        assert_eq!(a.pose(), b.pose());
    }

    #[test]
    fn thousand_seeds_all_solvable() {
        for seed in 0..1000 {
            let g = GridWorld::generate(seed);
            assert!(g.field().get(g.start().x, g.start().y).is_some(), "seed {seed}");
            assert_eq!(g.layout().cells.iter().filter(|c| **c == Cell::Goal).count(), 1);
        }
    }

    #[test]
    fn seeds_vary_gap_positions() {
        let mut layouts: Vec<String> = (0..10).map(|s| GridWorld::generate(s).to_text()).collect();
        layouts.sort();
        layouts.dedup();
        assert!(layouts.len() >= 2);
    }

    #[test]
    fn wavefront_examples() {
        let g = GridWorld::generate(3);
        let (gx, gy) = g.layout().goal();
        assert_eq!(g.field().get(gx, gy), Some(0));
        assert_eq!(g.field().get(gx - 1, gy), Some(1));
        assert_eq!(g.field().get(gx, gy - 1), Some(1));
        let open = open_grid(9, 9);
        assert_eq!(wavefront(&open).get(0, 0), Some(16));
        // Walls and lava are unreachable.
        assert_eq!(g.field().get(0, 0), None);
    }

    #[test]
    fn progress_examples() {
        let open = open_grid(9, 9);
        let field = wavefront(&open);
        let start = Pose {
            x: 0,
            y: 0,
            heading: Heading::East,
        };
        assert_eq!(progress(&field, start, start), 0.0);
        assert_eq!(progress(&field, start, Pose { x: 8, y: 8, ..start }), 1.0);
        assert_eq!(progress(&field, start, Pose { x: 4, y: 4, ..start }), 0.5);
    }

    fn corridor(text: &str) -> GridWorld {
        GridWorld::from_text(text, 100).unwrap()
    }

    #[test]
    fn forward_into_goal_completes() {
        let mut g = corridor("#####\n#.>G#\n#####\n");
        let step = g.step(FORWARD).unwrap();
        assert_eq!(step.termination, Some(Termination::Complete));
        assert!(step.outcome.task_complete && step.outcome.terminal);
        assert_eq!(step.outcome.progress_after, 1.0);
        assert_eq!(g.step(FORWARD), Err(SpotError::TerminalStep));
    }

    #[test]
    fn forward_into_lava_dies_without_reward() {
        let mut g = corridor("######\n#>L.G#\n#....#\n######\n");
        let step = g.step(FORWARD).unwrap();
        assert_eq!(step.termination, Some(Termination::LavaDeath));
        assert!(!step.outcome.success && !step.outcome.task_complete);
        let cfg = RewardConfig::grid_world(RewardKind::Progress);
        assert_eq!(g.reward(&step.outcome, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn action_limit_ends_trial() {
        let mut g = GridWorld::generate(0);
        for i in 0..100 {
            let step = g.step(TURN_LEFT).unwrap();
            if i < 99 {
                assert!(step.termination.is_none());
            } else {
                assert_eq!(step.termination, Some(Termination::ActionLimit));
                assert!(!step.outcome.task_complete);
            }
        }
    }

    #[test]
    fn wall_bump_is_a_noop() {
        let mut g = corridor("#####\n#..G#\n#<..#\n#####\n");
        let before = g.pose();
        let step = g.step(FORWARD).unwrap();
        assert_eq!(g.pose(), before);
        assert!(!step.outcome.success);
    }

    #[test]
    fn situation_removal_examples() {
        let mut g = GridWorld::generate(1);
        for _ in 0..2 {
            g.step(TURN_LEFT).unwrap();
            assert!(!g.situation_removal_check(0.0, 0.0));
        }
        g.step(TURN_LEFT).unwrap();
        assert!(g.situation_removal_check(0.0, 0.0));
        assert!(g.situation_removal_check(0.5, 0.4));

        let mut g = GridWorld::generate(1);
        let step = g.step(FORWARD).unwrap();
        assert!(step.outcome.success);
        assert_eq!(g.consecutive_turns(), 0);
        assert!(!g.situation_removal(&step.outcome));
    }

    #[test]
    fn mask_examples() {
        let lava = corridor("######\n#>L.G#\n#....#\n######\n");
        assert_eq!(lava.mask().as_slice(), &[false, true, true]);
        let open = corridor("######\n#>..G#\n######\n");
        assert_eq!(open.mask().as_slice(), &[true, true, true]);
        let wall = corridor("######\n#<..G#\n######\n");
        assert_eq!(wall.mask().as_slice(), &[false, true, true]);
    }

    #[test]
    fn builtin_reward_is_terminal_only() {
        let mut g = corridor("######\n#>..G#\n######\n");
        let cfg = RewardConfig::grid_world(RewardKind::Base);
        let s1 = g.step(FORWARD).unwrap();
        assert!(s1.outcome.success);
        assert_eq!(g.reward(&s1.outcome, &cfg).unwrap(), 0.0);
        g.step(FORWARD).unwrap();
        let s3 = g.step(FORWARD).unwrap();
        assert_eq!(g.reward(&s3.outcome, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn ideal_count_on_corridor() {
        let g = corridor("#####\n#>.G#\n#####\n");
        assert_eq!(g.ideal_actions(), 2);
        // Must turn around first.
        let g = corridor("#####\n#<.G#\n#####\n");
        assert_eq!(g.ideal_actions(), 4);
    }

    #[test]
    fn text_round_trip() {
        let g = GridWorld::generate(9);
        let text = g.to_text();
        let back = GridWorld::from_text(&text, 100).unwrap();
        assert_eq!(back.layout(), g.layout());
        assert_eq!(back.pose(), g.pose());
        let codec = GridCodec;
        let s = g.state();
        assert_eq!(codec.decode(&codec.encode(&s)).unwrap(), s);
    }

    #[test]
    fn bad_layouts_rejected() {
        assert!(Layout::parse("#.#\n#>#\n").is_err()); // no goal
        assert!(Layout::parse("G.G\n.>.\n").is_err()); // two goals
        assert!(Layout::parse("G..\n...\n").is_err()); // no agent
        assert!(Layout::parse("G.x\n.>.\n").is_err());
        assert!(GridWorld::from_text("G#.\n##>\n", 10).is_err()); // unreachable
    }
}
