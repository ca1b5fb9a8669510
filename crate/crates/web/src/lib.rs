//! WebAssembly bindings for the static demo page in `www/`.

use spot_core::gridworld::{self, GridCodec, GridWorld};
use spot_core::presets::{self, Cell, GRID_CELLS};
use spot_core::replay::StateCodec;
use spot_core::rewards::{self, DEFAULT_DISCOUNT};
use spot_core::spotq::argmax_allowed;
use spot_core::trainer::{self, env_seed, run_training, SeedDomain};
use spot_core::{ActionMask, Environment, QFunction};
use wasm_bindgen::prelude::*;

/// A generated grid layout with its distance-to-goal field.
#[wasm_bindgen]
pub struct GridView {
    world: GridWorld,
}

#[wasm_bindgen]
impl GridView {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> GridView {
        GridView {
            world: GridWorld::generate(u64::from(seed)),
        }
    }

    pub fn width(&self) -> usize {
        self.world.layout().width()
    }

    pub fn height(&self) -> usize {
        self.world.layout().height()
    }

    /// Rows of the layout; `#` wall, `L` lava, `G` goal, arrow for the agent.
    pub fn text(&self) -> String {
        self.world.to_text()
    }

    /// Row-major steps to the goal, `-1` where unreachable.
    pub fn distances(&self) -> Vec<i32> {
        self.world
            .field()
            .as_slice()
            .iter()
            .map(|d| d.map_or(-1, |d| d as i32))
            .collect()
    }

    pub fn ideal_actions(&self) -> u32 {
        self.world.ideal_actions()
    }
}

/// Trial rewards for a sequence of instant rewards, discount `gamma`.
#[wasm_bindgen]
pub fn trial_rewards(instants: Vec<f64>, completed: bool, gamma: f64) -> Result<Vec<f64>, String> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(format!("gamma must lie in [0, 1], got {gamma}"));
    }
    if instants.iter().any(|r| !r.is_finite()) {
        return Err("rewards must be finite numbers".into());
    }
    Ok(rewards::trial_backfill(&instants, completed, gamma))
}

#[wasm_bindgen]
pub fn default_discount() -> f64 {
    DEFAULT_DISCOUNT
}

/// Labels of the grid ablation cells, in the order `train_grid` accepts.
#[wasm_bindgen]
pub fn grid_cells() -> Vec<String> {
    GRID_CELLS.iter().map(Cell::label).collect()
}

/// Outcome of a browser training run.
#[wasm_bindgen]
pub struct TrainReport {
    completion_rate: f64,
    mean_efficiency: f64,
    convergence: Option<u64>,
    trials: usize,
    frames: Vec<String>,
}

#[wasm_bindgen]
impl TrainReport {
    pub fn completion_rate(&self) -> f64 {
        self.completion_rate
    }

    pub fn mean_efficiency(&self) -> f64 {
        self.mean_efficiency
    }

    /// Training actions to full validation completion, `-1` if never.
    pub fn convergence(&self) -> f64 {
        self.convergence.map_or(-1.0, |c| c as f64)
    }

    pub fn training_trials(&self) -> usize {
        self.trials
    }

    /// Layout snapshots of one greedy test trial, rows joined with `/`.
    pub fn frames(&self) -> Vec<String> {
        self.frames.clone()
    }
}

/// Trains a grid cell from `grid_cells()` and evaluates it on `eval_trials`
/// held-out layouts.
#[wasm_bindgen]
pub fn train_grid(cell: &str, seed: u32, budget: u32, eval_trials: u32) -> Result<TrainReport, String> {
    let cell: Cell = cell.parse().map_err(|e: spot_core::SpotError| e.to_string())?;
    if eval_trials == 0 {
        return Err("eval_trials must be positive".into());
    }
    let (seed, budget) = (u64::from(seed), u64::from(budget));
    let mut cfg = presets::grid_agent(cell, seed);
    cfg.training_action_budget = budget;
    cfg.record_steps = false;
    cfg.validation_every = (budget / 10).max(1);
    cfg.validation_trials = 20;
    let out = run_training(|s| Ok(GridWorld::generate(s)), presets::grid_q(), &cfg).map_err(|e| e.to_string())?;
    let eval = trainer::evaluate(&out.q, |s| Ok(GridWorld::generate(s)), eval_trials, seed, cell.use_mask)
        .map_err(|e| e.to_string())?;
    let frames = greedy_frames(&out.q, seed, cell.use_mask).map_err(|e| e.to_string())?;
    Ok(TrainReport {
        completion_rate: eval.completion_rate,
        mean_efficiency: eval.mean_efficiency,
        convergence: out.convergence_action,
        trials: out.trials.len(),
        frames,
    })
}

fn greedy_frames<Q: QFunction<gridworld::GridState>>(q: &Q, seed: u64, use_mask: bool) -> spot_core::Result<Vec<String>> {
    let mut env = GridWorld::generate(env_seed(SeedDomain::Test, seed, 0));
    let mut rng = trainer::Streams::new(seed).action_ties;
    let mut frames = vec![GridCodec.encode(&env.state())];
    loop {
        let mask = if use_mask {
            env.mask()
        } else {
            ActionMask::all(env.num_actions())
        };
        let a = argmax_allowed(&q.values(&env.state()), &mask, &mut rng)?;
        let step = env.step(a)?;
        frames.push(GridCodec.encode(&env.state()));
        if step.termination.is_some() {
            return Ok(frames);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_view_matches_the_layout() {
        let g = GridView::new(3);
        let d = g.distances();
        assert_eq!(d.len(), g.width() * g.height());
        assert_eq!(d.iter().filter(|&&v| v == 0).count(), 1);
        assert_eq!(g.text().lines().count(), g.height());
        assert!(g.ideal_actions() > 0);
    }

    #[test]
    fn trial_rewards_follow_the_backfill() {
        let r = trial_rewards(vec![1.0, 0.0, 1.0], true, 0.5).unwrap();
        assert_eq!(r, vec![1.0, 0.0, 2.0]);
        let r = trial_rewards(vec![1.0, 1.0], true, 0.5).unwrap();
        assert_eq!(r, vec![2.0, 2.0]);
        assert!(trial_rewards(vec![1.0], true, 1.5).is_err());
        assert!(trial_rewards(vec![f64::NAN], true, 0.5).is_err());
    }

    #[test]
    fn small_training_run() {
        let cells = grid_cells();
        assert_eq!(cells.len(), 4);
        let r = train_grid(&cells[3], 1, 2000, 5).unwrap();
        assert!((0.0..=1.0).contains(&r.completion_rate()));
        assert!(r.frames().len() >= 2);
        assert!(train_grid("spotq", 1, 10, 1).is_err());
        assert!(train_grid("base", 1, 10, 0).is_err());
    }
}
