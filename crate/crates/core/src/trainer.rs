//! Agent loop: ε-greedy acting, per-action learning, prioritized replay,
//! periodic greedy validation, and evaluation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Environment, Termination};
use crate::error::{Result, SpotError};
use crate::qfunction::StableHasher;
use crate::replay::{learn_from, train_step, Experience, ReplayBuffer, ReplayConfig};
use crate::rewards::{self, ActionType, RewardConfig};
use crate::spotq::{argmax_allowed, max_value, ActionMask, QFunction};

/// Disjoint seed ranges, told apart by the top two bits of the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedDomain {
    Train = 0,
    Validation = 1,
    Test = 2,
}

impl SeedDomain {
    pub fn of(seed: u64) -> SeedDomain {
        match seed >> 62 {
            0 => SeedDomain::Train,
            1 => SeedDomain::Validation,
            _ => SeedDomain::Test,
        }
    }
}

const LOW_BITS: u64 = (1 << 62) - 1;

/// Seed of the `index`-th environment instance in a domain.
pub fn env_seed(domain: SeedDomain, run_seed: u64, index: u64) -> u64 {
    let mut h = StableHasher::default();
    h.write_u64(run_seed);
    h.write_u64(index);
    ((domain as u64) << 62) | (h.finish() & LOW_BITS)
}

/// Independent random streams of one training run.
#[derive(Debug, Clone)]
pub struct Streams {
    pub explore: ChaCha8Rng,
    pub action_ties: ChaCha8Rng,
    pub replay: ChaCha8Rng,
    pub target_ties: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Streams {
        let stream = |n: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n);
            rng
        };
        Streams {
            explore: stream(1),
            action_ties: stream(2),
            replay: stream(3),
            target_ties: stream(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Actions over which ε decays linearly; `None` means 20% of the budget.
    pub epsilon_decay_steps: Option<f64>,
    pub learning_rate: f64,
    pub train_steps_per_action: u32,
    pub use_mask: bool,
    pub use_spotq: bool,
    pub reward: RewardConfig,
    pub replay: ReplayConfig,
    pub seed: u64,
    pub training_action_budget: u64,
    pub validation_every: u64,
    pub validation_trials: u32,
    /// Keep a per-action record of training.
    pub record_steps: bool,
}

impl AgentConfig {
    pub fn new(reward: RewardConfig) -> AgentConfig {
        AgentConfig {
            epsilon_start: 0.5,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            learning_rate: 0.5,
            train_steps_per_action: 1,
            use_mask: true,
            use_spotq: true,
            reward,
            replay: ReplayConfig::default(),
            seed: 0,
            training_action_budget: 10_000,
            validation_every: 1_000,
            validation_trials: 30,
            record_steps: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.use_spotq && !self.use_mask {
            return Err(SpotError::Config("SPOT-Q requires the action mask".into()));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(SpotError::Config(format!("{name} must lie in [0, 1], got {e}")));
            }
        }
        if let Some(d) = self.epsilon_decay_steps {
            if !(d >= 0.0) {
                return Err(SpotError::Config(format!("epsilon_decay_steps must be non-negative, got {d}")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(SpotError::Config(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.validation_every == 0 {
            return Err(SpotError::Config("validation_every must be positive".into()));
        }
        self.reward.validate()
    }

    pub fn epsilon(&self, actions_taken: u64) -> f64 {
        let decay = self
            .epsilon_decay_steps
            .unwrap_or(0.2 * self.training_action_budget as f64);
        if decay <= 0.0 || actions_taken as f64 >= decay {
            return self.epsilon_end;
        }
        let frac = actions_taken as f64 / decay;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Attempts and successes of one action type within a trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TypeCount {
    pub attempts: u32,
    pub successes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub seed: u64,
    pub completed: bool,
    pub actions_taken: u32,
    pub ideal_actions: u32,
    pub per_type: BTreeMap<ActionType, TypeCount>,
    pub termination: Termination,
}

impl TrialRecord {
    /// `ideal / actual` clamped to 1; zero for incomplete trials.
    pub fn efficiency(&self) -> f64 {
        if !self.completed || self.actions_taken == 0 {
            return 0.0;
        }
        (f64::from(self.ideal_actions) / f64::from(self.actions_taken)).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub trial_id: u64,
    pub step: u32,
    pub action_type: ActionType,
    pub action_id: usize,
    /// The mask excluded every unrestricted greedy action at this state.
    pub masked_policy: bool,
    pub success: bool,
    pub instant_reward: f64,
    /// Filled when the trial is finalized under a trial-reward kind.
    pub trial_reward: Option<f64>,
    pub progress: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub actions: u64,
    pub completion_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutput<Q> {
    pub q: Q,
    pub trials: Vec<TrialRecord>,
    pub steps: Vec<StepRecord>,
    pub validations: Vec<Validation>,
    pub convergence_action: Option<u64>,
    pub actions_taken: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub trials: Vec<TrialRecord>,
    pub completion_rate: f64,
    /// Over completed trials only; zero when none completed.
    pub mean_efficiency: f64,
    pub type_success: BTreeMap<ActionType, f64>,
}

impl EvalSummary {
    pub fn from_trials(trials: Vec<TrialRecord>) -> EvalSummary {
        let n = trials.len();
        let completed: Vec<&TrialRecord> = trials.iter().filter(|t| t.completed).collect();
        let completion_rate = if n == 0 { 0.0 } else { completed.len() as f64 / n as f64 };
        let mean_efficiency = if completed.is_empty() {
            0.0
        } else {
            completed.iter().map(|t| t.efficiency()).sum::<f64>() / completed.len() as f64
        };
        let mut totals: BTreeMap<ActionType, TypeCount> = BTreeMap::new();
        for t in &trials {
            for (k, c) in &t.per_type {
                let e = totals.entry(*k).or_default();
                e.attempts += c.attempts;
                e.successes += c.successes;
            }
        }
        let type_success = totals
            .into_iter()
            .filter(|(_, c)| c.attempts > 0)
            .map(|(k, c)| (k, f64::from(c.successes) / f64::from(c.attempts)))
            .collect();
        EvalSummary {
            trials,
            completion_rate,
            mean_efficiency,
            type_success,
        }
    }
}

/// ε-greedy choice. Returns the action and whether the mask excluded every
/// unrestricted greedy action.
///
/// Exploration draws uniformly over the allowed set; the greedy branch breaks
/// value ties with `tie_rng`.
pub fn select_action<S, Q, R1, R2>(
    q: &Q,
    state: &S,
    mask: &ActionMask,
    epsilon: f64,
    explore_rng: &mut R1,
    tie_rng: &mut R2,
) -> Result<(usize, bool)>
where
    Q: QFunction<S>,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    let values = q.values(state);
    let allowed_max = values
        .iter()
        .enumerate()
        .filter(|&(a, _)| mask.allows(a))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let masked_policy = max_value(&values) > allowed_max;
    if epsilon > 0.0 && explore_rng.gen::<f64>() < epsilon {
        let allowed = mask.allowed_actions();
        if allowed.is_empty() {
            return Err(SpotError::EmptyActionSpace);
        }
        return Ok((allowed[explore_rng.gen_range(0..allowed.len())], masked_policy));
    }
    Ok((argmax_allowed(&values, mask, tie_rng)?, masked_policy))
}

fn policy_mask<E: Environment>(env: &E, use_mask: bool) -> ActionMask {
    if use_mask {
        env.mask()
    } else {
        ActionMask::all(env.num_actions())
    }
}

fn count(per_type: &mut BTreeMap<ActionType, TypeCount>, t: ActionType, success: bool) {
    let c = per_type.entry(t).or_default();
    c.attempts += 1;
    c.successes += u32::from(success);
}

/// Greedy rollouts without learning or situation-removal resets. The mask
/// restricts the policy iff `use_mask`.
pub fn evaluate<E, Q, F>(q: &Q, env_factory: F, n_trials: u32, seed: u64, use_mask: bool) -> Result<EvalSummary>
where
    E: Environment,
    Q: QFunction<E::State>,
    F: Fn(u64) -> Result<E>,
{
    evaluate_in(q, &env_factory, n_trials, seed, use_mask, SeedDomain::Test)
}

fn evaluate_in<E, Q, F>(
    q: &Q,
    env_factory: &F,
    n_trials: u32,
    seed: u64,
    use_mask: bool,
    domain: SeedDomain,
) -> Result<EvalSummary>
where
    E: Environment,
    Q: QFunction<E::State>,
    F: Fn(u64) -> Result<E>,
{
    let mut tie_rng = ChaCha8Rng::seed_from_u64(seed);
    tie_rng.set_stream(5);
    let mut trials = Vec::with_capacity(n_trials as usize);
    for i in 0..u64::from(n_trials) {
        let env_seed = env_seed(domain, seed, i);
        let mut env = env_factory(env_seed)?;
        let ideal = env.ideal_actions();
        let mut per_type = BTreeMap::new();
        let mut actions = 0;
        let termination = loop {
            let state = env.state();
            let mask = policy_mask(&env, use_mask);
            let a = argmax_allowed(&q.values(&state), &mask, &mut tie_rng)?;
            let step = env.step(a)?;
            actions += 1;
            count(&mut per_type, step.outcome.action_type, step.outcome.success);
            if let Some(t) = step.termination {
                break t;
            }
        };
        trials.push(TrialRecord {
            trial_id: i,
            seed: env_seed,
            completed: termination == Termination::Complete,
            actions_taken: actions,
            ideal_actions: ideal,
            per_type,
            termination,
        });
    }
    Ok(EvalSummary::from_trials(trials))
}

/// Trains `q` for `cfg.training_action_budget` actions.
///
/// Each action is learned from immediately with its instant reward, pushed
/// to replay, then followed by `k` prioritized replay updates. Trials end on
/// environment termination, on situation removal (reward kinds that use it),
/// or when the budget runs out.
pub fn run_training<E, Q, F>(env_factory: F, q: Q, cfg: &AgentConfig) -> Result<TrainingOutput<Q>>
where
    E: Environment,
    Q: QFunction<E::State>,
    F: Fn(u64) -> Result<E>,
{
    cfg.validate()?;
    let mut q = q;
    let mut streams = Streams::new(cfg.seed);
    let mut buf: ReplayBuffer<E::State> = ReplayBuffer::new(cfg.replay.clone(), cfg.reward.reward_kind);
    let env_mask = |s: &E::State| E::mask_of(s);
    let mask_fn: Option<&dyn Fn(&E::State) -> ActionMask> = cfg.use_spotq.then_some(&env_mask);
    let kind = cfg.reward.reward_kind;
    let gamma = cfg.reward.learn_discount;

    let mut out = TrainingOutput {
        q: q.clone(),
        trials: Vec::new(),
        steps: Vec::new(),
        validations: Vec::new(),
        convergence_action: None,
        actions_taken: 0,
    };
    let mut actions: u64 = 0;
    let mut trial_id: u64 = 0;

    while actions < cfg.training_action_budget {
        let seed = env_seed(SeedDomain::Train, cfg.seed, trial_id);
        let mut env = env_factory(seed)?;
        let ideal = env.ideal_actions();
        let mut per_type = BTreeMap::new();
        let mut instants = Vec::new();
        let first_step_record = out.steps.len();
        let mut step_index: u32 = 0;

        let termination = loop {
            let state = env.state();
            let mask = policy_mask(&env, cfg.use_mask);
            let epsilon = cfg.epsilon(actions);
            let (a, masked_policy) = select_action(
                &q,
                &state,
                &mask,
                epsilon,
                &mut streams.explore,
                &mut streams.action_ties,
            )?;
            let predicted_q = q.value(&state, a);
            let step = env.step(a)?;
            actions += 1;
            let outcome = step.outcome;
            let mut reward = env.reward(&outcome, &cfg.reward)?;
            let mut termination = step.termination;
            if kind.situation_removal() && termination != Some(Termination::Complete) && env.situation_removal(&outcome)
            {
                reward = 0.0;
                termination = Some(Termination::SituationRemoval);
            }
            count(&mut per_type, outcome.action_type, outcome.success);
            instants.push(reward);

            let exp = Experience {
                state,
                action: a,
                action_type: outcome.action_type,
                instant_reward: reward,
                trial_reward: None,
                predicted_q,
                success: outcome.success,
                trial_id,
                step_index,
                next_state: env.state(),
                terminal: termination.is_some(),
            };
            learn_from(&exp, reward, &mut q, mask_fn, gamma, cfg.learning_rate, &mut streams.target_ties);
            buf.push(exp)?;
            for _ in 0..cfg.train_steps_per_action {
                match train_step(
                    &mut buf,
                    &mut q,
                    mask_fn,
                    &cfg.reward,
                    cfg.learning_rate,
                    &mut streams.replay,
                    &mut streams.target_ties,
                ) {
                    Ok(_) | Err(SpotError::EmptyBuffer) => {}
                    Err(e) => return Err(e),
                }
            }

            if cfg.record_steps {
                out.steps.push(StepRecord {
                    trial_id,
                    step: step_index,
                    action_type: outcome.action_type,
                    action_id: a,
                    masked_policy,
                    success: outcome.success,
                    instant_reward: reward,
                    trial_reward: None,
                    progress: outcome.progress_after,
                    epsilon,
                });
            }
            step_index += 1;

            if out.convergence_action.is_none() && actions.is_multiple_of(cfg.validation_every) && cfg.validation_trials > 0 {
                let summary = evaluate_in(
                    &q,
                    &env_factory,
                    cfg.validation_trials,
                    cfg.seed ^ actions,
                    cfg.use_mask,
                    SeedDomain::Validation,
                )?;
                if summary.completion_rate >= 1.0 {
                    out.convergence_action = Some(actions);
                }
                out.validations.push(Validation {
                    actions,
                    completion_rate: summary.completion_rate,
                });
            }

            if let Some(t) = termination {
                break t;
            }
            if actions >= cfg.training_action_budget {
                break Termination::ActionLimit;
            }
        };

        let completed = termination == Termination::Complete;
        buf.finalize_trial(trial_id, completed, &cfg.reward)?;
        if cfg.record_steps && kind.uses_trial_reward() {
            let backfilled = rewards::backfill(&instants, completed, &cfg.reward);
            for (rec, r) in out.steps[first_step_record..].iter_mut().zip(backfilled) {
                rec.trial_reward = Some(r);
            }
        }
        out.trials.push(TrialRecord {
            trial_id,
            seed,
            completed,
            actions_taken: step_index,
            ideal_actions: ideal,
            per_type,
            termination,
        });
        trial_id += 1;
    }

    out.q = q;
    out.actions_taken = actions;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{GridWorld, FORWARD};
    use crate::qfunction::TabularQ;
    use crate::rewards::RewardKind;

    #[test]
    fn seed_domains_are_disjoint() {
        for i in 0..1000 {
            assert_eq!(SeedDomain::of(env_seed(SeedDomain::Train, 7, i)), SeedDomain::Train);
            assert_eq!(SeedDomain::of(env_seed(SeedDomain::Validation, 7, i)), SeedDomain::Validation);
            assert_eq!(SeedDomain::of(env_seed(SeedDomain::Test, 7, i)), SeedDomain::Test);
        }
    }

    #[test]
    fn epsilon_schedule() {
        let mut cfg = AgentConfig::new(RewardConfig::grid_world(RewardKind::Base));
        cfg.training_action_budget = 1000;
        assert_eq!(cfg.epsilon(0), 0.5);
        assert!((cfg.epsilon(100) - 0.275).abs() < 1e-12);
        assert_eq!(cfg.epsilon(200), 0.05);
        assert_eq!(cfg.epsilon(999), 0.05);
    }

    #[test]
    fn config_invariants() {
        let mut cfg = AgentConfig::new(RewardConfig::grid_world(RewardKind::Base));
        cfg.use_mask = false;
        assert!(cfg.validate().is_err());
        cfg.use_spotq = false;
        assert!(cfg.validate().is_ok());
        cfg.epsilon_start = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_budget_is_empty() {
        let mut cfg = AgentConfig::new(RewardConfig::grid_world(RewardKind::Progress));
        cfg.training_action_budget = 0;
        let out = run_training(|s| Ok(GridWorld::generate(s)), TabularQ::new(3), &cfg).unwrap();
        assert!(out.trials.is_empty());
        assert_eq!(out.convergence_action, None);
    }

    #[test]
    fn select_action_respects_mask_and_epsilon() {
        let mut q = TabularQ::new(3);
        q.set(&1u64, 0, 5.0);
        let mut mask = ActionMask::all(3);
        mask.set(0, false);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let (a, flagged) = select_action(&q, &1u64, &mask, 0.0, &mut r1, &mut r2).unwrap();
        assert_ne!(a, 0);
        assert!(flagged);
        let mut seen = [0u32; 3];
        for _ in 0..3000 {
            let (a, _) = select_action(&q, &1u64, &mask, 1.0, &mut r1, &mut r2).unwrap();
            seen[a] += 1;
        }
        assert_eq!(seen[0], 0);
        assert!(seen[1] > 1300 && seen[2] > 1300);
        let all = ActionMask::all(3);
        assert_eq!(select_action(&q, &1u64, &all, 0.0, &mut r1, &mut r2).unwrap(), (0, false));
        let none = ActionMask::from_vec(vec![false; 3]);
        assert_eq!(
            select_action(&q, &1u64, &none, 1.0, &mut r1, &mut r2),
            Err(SpotError::EmptyActionSpace)
        );
    }

    #[test]
    fn situation_removal_ends_trial() {
        let mut cfg = AgentConfig::new(RewardConfig::grid_world(RewardKind::Progress));
        cfg.training_action_budget = 400;
        cfg.record_steps = true;
        let out = run_training(|s| Ok(GridWorld::generate(s)), TabularQ::new(3), &cfg).unwrap();
        let removed: Vec<_> = out
            .trials
            .iter()
            .filter(|t| t.termination == Termination::SituationRemoval)
            .collect();
        assert!(!removed.is_empty());
        for t in removed {
            assert!(!t.completed);
            let last = out.steps.iter().rfind(|s| s.trial_id == t.trial_id).unwrap();
            assert_eq!(last.instant_reward, 0.0);
        }
        let ids: Vec<u64> = out.trials.iter().map(|t| t.trial_id).collect();
        assert_eq!(ids, (0..ids.len() as u64).collect::<Vec<_>>());
        assert_eq!(out.trials.iter().map(|t| u64::from(t.actions_taken)).sum::<u64>(), 400);
    }

    #[test]
    fn training_is_deterministic() {
        let mut cfg = AgentConfig::new(RewardConfig::grid_world(RewardKind::Trial(rewards::TrialInner::Progress)));
        cfg.training_action_budget = 3000;
        cfg.record_steps = true;
        let run = || run_training(|s| Ok(GridWorld::generate(s)), TabularQ::new(3), &cfg).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.q, b.q);
    }

    #[test]
    fn evaluation_counts() {
        let q = TabularQ::new(3);
        let summary = evaluate(&q, |s| Ok(GridWorld::generate(s)), 5, 3, true).unwrap();
        assert_eq!(summary.trials.len(), 5);
        for t in &summary.trials {
            assert_eq!(SeedDomain::of(t.seed), SeedDomain::Test);
            assert!(t.efficiency() <= 1.0);
            assert_eq!(t.completed, t.termination == Termination::Complete);
            assert_ne!(t.termination, Termination::LavaDeath);
        }
        let _ = FORWARD;
    }

    #[test]
    fn eval_summary_arithmetic() {
        let rec = |completed, actions| TrialRecord {
            trial_id: 0,
            seed: 0,
            completed,
            actions_taken: actions,
            ideal_actions: 6,
            per_type: BTreeMap::new(),
            termination: if completed {
                Termination::Complete
            } else {
                Termination::ActionLimit
            },
        };
        let s = EvalSummary::from_trials(vec![rec(true, 6), rec(true, 12), rec(false, 50)]);
        assert!((s.completion_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.mean_efficiency - 0.75).abs() < 1e-12);
        let none = EvalSummary::from_trials(vec![rec(false, 50)]);
        assert_eq!((none.completion_rate, none.mean_efficiency), (0.0, 0.0));
    }
}
