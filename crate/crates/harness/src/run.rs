//! One training run per (cell, seed): train, evaluate on held-out seeds and
//! write the per-run artifacts.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spot_core::blockworld::{BlockCodec, BlockFeatures, BlockState, BlockWorld};
use spot_core::gridworld::{GridCodec, GridWorld, LookAhead};
use spot_core::presets::Cell;
use spot_core::qfunction::model_header;
use spot_core::replay::StateCodec;
use spot_core::spotq::argmax_allowed;
use spot_core::trainer::{self, env_seed, run_training, SeedDomain, StepRecord, Validation};
use spot_core::{ActionMask, AgentConfig, Environment, LinearQ, QFunction, TabularQ, TrialRecord};

use crate::config::{QKind, Settings, World};
use crate::error::{invalid, HarnessError, Result};

/// What a finished run reports back to the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub completion_rate: f64,
    pub mean_efficiency: f64,
    /// Training actions when validation first reached full completion.
    pub convergence_actions: Option<u64>,
    pub training_trials: usize,
    pub training_actions: u64,
}

#[derive(Debug, Serialize)]
struct TrialRow<'a> {
    trial_id: u64,
    seed: u64,
    completed: bool,
    actions: u32,
    ideal: u32,
    efficiency: f64,
    termination: &'a str,
}

impl<'a> From<&'a TrialRecord> for TrialRow<'a> {
    fn from(t: &'a TrialRecord) -> Self {
        TrialRow {
            trial_id: t.trial_id,
            seed: t.seed,
            completed: t.completed,
            actions: t.actions_taken,
            ideal: t.ideal_actions,
            efficiency: t.efficiency(),
            termination: t.termination.name(),
        }
    }
}

#[derive(Debug, Serialize)]
struct StepRow<'a> {
    run_id: &'a str,
    trial_id: u64,
    step: u32,
    action_type: &'a str,
    action_id: usize,
    masked_policy_flag: bool,
    success: bool,
    instant_reward: f64,
    trial_reward: Option<f64>,
    progress: f64,
    epsilon: f64,
}

#[derive(Debug, Serialize)]
struct ValidationRow {
    actions: u64,
    completion_rate: f64,
}

#[derive(Debug, Serialize)]
struct TraceRow<'a> {
    step: u32,
    action_type: &'a str,
    action_id: usize,
    success: bool,
    progress: f64,
    termination: &'a str,
    state: String,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::io(path, std::io::Error::other(e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes a header even when there are no rows.
fn write_trials(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    if trials.is_empty() {
        return fs::write(path, "trial_id,seed,completed,actions,ideal,efficiency,termination\n")
            .map_err(|e| HarnessError::io(path, e));
    }
    write_csv(path, trials.iter().map(TrialRow::from))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| invalid(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn save_model(path: &Path, save: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    save(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

fn write_steps(path: &Path, run_id: &str, steps: &[StepRecord]) -> Result<()> {
    write_csv(
        path,
        steps.iter().map(|s| StepRow {
            run_id,
            trial_id: s.trial_id,
            step: s.step,
            action_type: s.action_type.name(),
            action_id: s.action_id,
            masked_policy_flag: s.masked_policy,
            success: s.success,
            instant_reward: s.instant_reward,
            trial_reward: s.trial_reward,
            progress: s.progress,
            epsilon: s.epsilon,
        }),
    )
}

fn train_one<E, Q, F>(
    factory: F,
    q: Q,
    cfg: &AgentConfig,
    eval_trials: u32,
    dir: &Path,
    run_id: &str,
    save: impl FnOnce(&Q, &mut dyn Write) -> std::io::Result<()>,
) -> Result<RunSummary>
where
    E: Environment,
    Q: QFunction<E::State>,
    F: Fn(u64) -> spot_core::Result<E>,
{
    let out = run_training(&factory, q, cfg)?;
    let eval = trainer::evaluate(&out.q, &factory, eval_trials, cfg.seed, cfg.use_mask)?;
    create_dir(dir)?;
    if cfg.record_steps {
        write_steps(&dir.join("steps.csv"), run_id, &out.steps)?;
    }
    write_trials(&dir.join("trials.csv"), &out.trials)?;
    write_trials(&dir.join("eval_trials.csv"), &eval.trials)?;
    write_validations(&dir.join("validations.csv"), &out.validations)?;
    save_model(&dir.join("model.txt"), |w| save(&out.q, w))?;
    Ok(RunSummary {
        seed: cfg.seed,
        completion_rate: eval.completion_rate,
        mean_efficiency: eval.mean_efficiency,
        convergence_actions: out.convergence_action,
        training_trials: out.trials.len(),
        training_actions: out.actions_taken,
    })
}

fn write_validations(path: &Path, validations: &[Validation]) -> Result<()> {
    if validations.is_empty() {
        return fs::write(path, "actions,completion_rate\n").map_err(|e| HarnessError::io(path, e));
    }
    write_csv(
        path,
        validations.iter().map(|v| ValidationRow {
            actions: v.actions,
            completion_rate: v.completion_rate,
        }),
    )
}

/// Trains `cell` with `seed` and writes everything under `dir`.
pub fn train_run(settings: &Settings, cell: Cell, seed: u64, dir: &Path) -> Result<RunSummary> {
    let cfg = settings.agent(cell, seed)?;
    let run_id = format!("{}/seed-{seed}", cell.label());
    let n = settings.eval_trials;
    let actions = settings.world.num_actions();
    match (settings.world, settings.q) {
        (World::Grid(g), QKind::Linear) => train_one(
            move |s| GridWorld::generate_with(s, &g),
            LinearQ::new(actions, LookAhead::default()),
            &cfg,
            n,
            dir,
            &run_id,
            |q, w| q.write_to(w, LookAhead::NAME),
        ),
        (World::Grid(g), QKind::Tabular) => train_one(
            move |s| GridWorld::generate_with(s, &g),
            TabularQ::new(actions),
            &cfg,
            n,
            dir,
            &run_id,
            |q, w| q.write_to(w),
        ),
        (World::Block(b), QKind::Linear) => train_one(
            move |s| BlockWorld::reset(s, &b),
            LinearQ::new(actions, BlockFeatures),
            &cfg,
            n,
            dir,
            &run_id,
            |q, w| q.write_to(w, BlockFeatures::NAME),
        ),
        (World::Block(b), QKind::Tabular) => train_one(
            move |s| BlockWorld::reset(s, &b),
            TabularQ::new(actions),
            &cfg,
            n,
            dir,
            &run_id,
            |q, w| q.write_to(w),
        ),
    }
}

/// A fixed start for evaluation instead of generated layouts.
#[derive(Debug, Clone)]
pub enum Start {
    Generated,
    GridText(String),
    BlockText(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub env: String,
    pub seed: u64,
    pub trials: usize,
    pub use_mask: bool,
    pub completion_rate: f64,
    pub mean_efficiency: f64,
    pub type_success: std::collections::BTreeMap<String, f64>,
}

fn read_model_header(path: &Path) -> Result<(String, usize, Option<String>)> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or("");
    model_header(first).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn open_model(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load<T>(path: &Path, read: impl FnOnce(BufReader<File>) -> spot_core::Result<T>) -> Result<T> {
    read(open_model(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Greedy evaluation of a saved model plus a step trace of its first trial.
pub fn eval_model(settings: &Settings, model: &Path, start: &Start, use_mask: bool, out: &Path) -> Result<EvalReport> {
    let (kind, actions, features) = read_model_header(model)?;
    let seed = settings.seeds[0];
    let n = settings.eval_trials;
    let expected = settings.world.num_actions();
    if actions != expected {
        return Err(invalid(format!(
            "the model has {actions} actions but the {} settings give {expected}",
            settings.env
        )));
    }
    let want_features = match settings.world {
        World::Grid(_) => LookAhead::NAME,
        World::Block(_) => BlockFeatures::NAME,
    };
    match (kind.as_str(), features.as_deref()) {
        ("linear", Some(f)) if f == want_features => {}
        ("linear", f) => {
            return Err(invalid(format!(
                "the model uses features {} but {} needs {want_features}",
                f.unwrap_or("(none)"),
                settings.env
            )))
        }
        ("tabular", _) => {}
        (k, _) => return Err(invalid(format!("unknown model kind `{k}`"))),
    }
    let tabular = kind == "tabular";
    create_dir(out)?;
    let (summary, trace) = match (settings.world, start) {
        (World::Grid(g), Start::Generated) => {
            let f = move |s| GridWorld::generate_with(s, &g);
            if tabular {
                eval_with(&load(model, TabularQ::read_from)?, f, n, seed, use_mask, GridCodec)?
            } else {
                let q = load(model, |r| LinearQ::read_from(r, LookAhead::default()))?;
                eval_with(&q, f, n, seed, use_mask, GridCodec)?
            }
        }
        (World::Grid(g), Start::GridText(text)) => {
            let world = GridWorld::from_text(text, g.action_limit)?;
            let f = move |_| Ok(world.clone());
            if tabular {
                eval_with(&load(model, TabularQ::read_from)?, f, n, seed, use_mask, GridCodec)?
            } else {
                let q = load(model, |r| LinearQ::read_from(r, LookAhead::default()))?;
                eval_with(&q, f, n, seed, use_mask, GridCodec)?
            }
        }
        (World::Block(b), Start::Generated) => {
            let f = move |s| BlockWorld::reset(s, &b);
            let codec = BlockCodec { task: b.task };
            if tabular {
                eval_with(&load(model, TabularQ::read_from)?, f, n, seed, use_mask, codec)?
            } else {
                let q = load(model, |r| LinearQ::read_from(r, BlockFeatures))?;
                eval_with(&q, f, n, seed, use_mask, codec)?
            }
        }
        (World::Block(b), Start::BlockText(text)) => {
            let state = BlockState::parse(text, b.task)?;
            if (state.width, state.height) != (b.width, b.height) {
                return Err(invalid(format!(
                    "the state is {}x{} but the settings give {}x{}",
                    state.width, state.height, b.width, b.height
                )));
            }
            let f = move |s| Ok(BlockWorld::from_state(state.clone(), &b, ChaCha8Rng::seed_from_u64(s)));
            let codec = BlockCodec { task: b.task };
            if tabular {
                eval_with(&load(model, TabularQ::read_from)?, f, n, seed, use_mask, codec)?
            } else {
                let q = load(model, |r| LinearQ::read_from(r, BlockFeatures))?;
                eval_with(&q, f, n, seed, use_mask, codec)?
            }
        }
        (World::Grid(_), Start::BlockText(_)) => return Err(invalid("--state applies to the block world")),
        (World::Block(_), Start::GridText(_)) => return Err(invalid("--layout applies to the grid world")),
    };
    write_trials(&out.join("eval_trials.csv"), &summary.trials)?;
    write_csv(&out.join("trace.csv"), trace.iter().map(TraceRow::from))?;
    let report = EvalReport {
        model: model.display().to_string(),
        env: settings.env.to_string(),
        seed,
        trials: summary.trials.len(),
        use_mask,
        completion_rate: summary.completion_rate,
        mean_efficiency: summary.mean_efficiency,
        type_success: summary.type_success.iter().map(|(t, v)| (t.name().to_string(), *v)).collect(),
    };
    write_json(&out.join("eval.json"), &report)?;
    Ok(report)
}

struct TraceStep {
    step: u32,
    action_type: &'static str,
    action_id: usize,
    success: bool,
    progress: f64,
    termination: &'static str,
    state: String,
}

impl<'a> From<&'a TraceStep> for TraceRow<'a> {
    fn from(t: &'a TraceStep) -> Self {
        TraceRow {
            step: t.step,
            action_type: t.action_type,
            action_id: t.action_id,
            success: t.success,
            progress: t.progress,
            termination: t.termination,
            state: t.state.clone(),
        }
    }
}

fn eval_with<E, Q, F, C>(
    q: &Q,
    factory: F,
    n: u32,
    seed: u64,
    use_mask: bool,
    codec: C,
) -> Result<(trainer::EvalSummary, Vec<TraceStep>)>
where
    E: Environment,
    Q: QFunction<E::State>,
    F: Fn(u64) -> spot_core::Result<E>,
    C: StateCodec<State = E::State>,
{
    let summary = trainer::evaluate(q, &factory, n, seed, use_mask)?;
    let trace = trace_first(q, &factory, seed, use_mask, &codec)?;
    Ok((summary, trace))
}

/// Replays the first evaluation trial step by step. It uses the same
/// environment seed and tie-breaking stream as the evaluation, so it matches
/// row 0 of `eval_trials.csv`.
fn trace_first<E, Q, F, C>(q: &Q, factory: &F, seed: u64, use_mask: bool, codec: &C) -> Result<Vec<TraceStep>>
where
    E: Environment,
    Q: QFunction<E::State>,
    F: Fn(u64) -> spot_core::Result<E>,
    C: StateCodec<State = E::State>,
{
    let mut tie_rng = ChaCha8Rng::seed_from_u64(seed);
    tie_rng.set_stream(5);
    let mut env = factory(env_seed(SeedDomain::Test, seed, 0))?;
    let mut rows = vec![TraceStep {
        step: 0,
        action_type: "",
        action_id: 0,
        success: false,
        progress: env.progress(),
        termination: "",
        state: codec.encode(&env.state()),
    }];
    for step in 1.. {
        let state = env.state();
        let mask = if use_mask {
            env.mask()
        } else {
            ActionMask::all(env.num_actions())
        };
        let a = argmax_allowed(&q.values(&state), &mask, &mut tie_rng)?;
        let s = env.step(a)?;
        rows.push(TraceStep {
            step,
            action_type: s.outcome.action_type.name(),
            action_id: a,
            success: s.outcome.success,
            progress: env.progress(),
            termination: s.termination.map_or("", |t| t.name()),
            state: codec.encode(&env.state()),
        });
        if s.termination.is_some() {
            break;
        }
    }
    Ok(rows)
}

pub fn seed_dir(cell_dir: &Path, seed: u64) -> PathBuf {
    cell_dir.join(format!("seed-{seed}"))
}
