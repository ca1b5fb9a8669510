//! Trial-aware experience replay with surprise-ranked sampling.
//!
//! Sampleable experiences are kept sorted by surprise `|reward − predicted|`
//! (largest first) both globally and per `(action type, success)` group. A
//! draw picks a rank from a power law over that order, so the most
//! surprising transitions dominate while every transition keeps some mass.
//! Priorities are fixed once recorded; they only change when a trial is
//! finalized and its trial rewards become the training signal.

use std::cmp::Reverse;
use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};

use ordered_float::OrderedFloat;
use rand::Rng;

use crate::error::{Result, SpotError};
use crate::ranked::RankedSet;
use crate::rewards::{self, ActionType, RewardConfig, RewardKind};
use crate::spotq::{huber_loss, spotq_targets, ActionMask, QFunction};

/// One transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience<S> {
    pub state: S,
    pub action: usize,
    pub action_type: ActionType,
    pub instant_reward: f64,
    /// Filled in when the trial is finalized.
    pub trial_reward: Option<f64>,
    /// `Q(state, action)` when the action was chosen.
    pub predicted_q: f64,
    pub success: bool,
    pub trial_id: u64,
    pub step_index: u32,
    pub next_state: S,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub per_exponent: f64,
    pub type_filter_prob: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: 100_000,
            per_exponent: 2.0,
            type_filter_prob: 0.95,
        }
    }
}

/// Rank sampler with `P(rank r) ∝ (r + 1)^(−exponent)` over `0..n`.
#[derive(Debug, Clone)]
pub struct PowerLawRanks {
    exponent: f64,
    cumulative: Vec<f64>,
}

impl PowerLawRanks {
    pub fn new(exponent: f64) -> Self {
        PowerLawRanks {
            exponent,
            cumulative: Vec::new(),
        }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    fn ensure(&mut self, n: usize) {
        let mut total = self.cumulative.last().copied().unwrap_or(0.0);
        for r in self.cumulative.len()..n {
            total += ((r + 1) as f64).powf(-self.exponent);
            self.cumulative.push(total);
        }
    }

    /// Normalized probabilities of ranks `0..n`.
    pub fn pmf(&self, n: usize) -> Vec<f64> {
        let weights: Vec<f64> = (0..n).map(|r| ((r + 1) as f64).powf(-self.exponent)).collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R, n: usize) -> usize {
        assert!(n > 0, "sampling a rank from an empty list");
        self.ensure(n);
        let u = rng.gen::<f64>() * self.cumulative[n - 1];
        self.cumulative[..n].partition_point(|&c| c <= u).min(n - 1)
    }
}

type SurpriseOrder = RankedSet<(Reverse<OrderedFloat<f64>>, u64)>;

#[derive(Debug, Clone)]
struct TrialSpan {
    trial_id: u64,
    start: u64,
    len: usize,
    finalized: bool,
}

/// Experience store for one training run.
///
/// Ids returned by [`sample`](ReplayBuffer::sample) are absolute push
/// counters; they stay valid until the experience is evicted.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<S> {
    config: ReplayConfig,
    use_trial_reward: bool,
    entries: VecDeque<Experience<S>>,
    keys: VecDeque<Option<OrderedFloat<f64>>>,
    front_id: u64,
    trials: VecDeque<TrialSpan>,
    all: SurpriseOrder,
    groups: HashMap<(ActionType, bool), SurpriseOrder>,
    ranks: PowerLawRanks,
    last: Option<(ActionType, bool)>,
    max_trial: Option<u64>,
}

impl<S> ReplayBuffer<S> {
    /// With trial-style reward kinds only finalized trials are sampled, and
    /// they are ranked by their backfilled rewards.
    pub fn new(config: ReplayConfig, reward_kind: RewardKind) -> Self {
        let ranks = PowerLawRanks::new(config.per_exponent);
        ReplayBuffer {
            config,
            use_trial_reward: reward_kind.uses_trial_reward(),
            entries: VecDeque::new(),
            keys: VecDeque::new(),
            front_id: 0,
            trials: VecDeque::new(),
            all: RankedSet::default(),
            groups: HashMap::new(),
            ranks,
            last: None,
            max_trial: None,
        }
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of experiences eligible for sampling.
    pub fn sampleable(&self) -> usize {
        self.all.len()
    }

    pub fn get(&self, id: u64) -> Option<&Experience<S>> {
        let offset = id.checked_sub(self.front_id)?;
        self.entries.get(usize::try_from(offset).ok()?)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Experience<S>)> {
        self.entries.iter().enumerate().map(|(i, e)| (self.front_id + i as u64, e))
    }

    /// Action type and success flag of the most recent push.
    pub fn last_outcome(&self) -> Option<(ActionType, bool)> {
        self.last
    }

    pub fn is_finalized(&self, trial_id: u64) -> Option<bool> {
        self.trials.iter().find(|t| t.trial_id == trial_id).map(|t| t.finalized)
    }

    /// The reward replay trains on for this experience.
    pub fn training_reward(&self, id: u64) -> Option<f64> {
        let e = self.get(id)?;
        if self.use_trial_reward {
            e.trial_reward
        } else {
            Some(e.instant_reward)
        }
    }

    /// Surprise rank key of an experience, if it is sampleable.
    pub fn surprise(&self, id: u64) -> Option<f64> {
        let offset = usize::try_from(id.checked_sub(self.front_id)?).ok()?;
        self.keys.get(offset).copied().flatten().map(|k| k.0)
    }

    pub fn push(&mut self, mut e: Experience<S>) -> Result<()> {
        if let Some(max) = self.max_trial {
            if e.trial_id < max {
                return Err(SpotError::Ordering(format!(
                    "trial {} pushed after trial {max}",
                    e.trial_id
                )));
            }
        }
        let id = self.front_id + self.entries.len() as u64;
        match self.trials.back_mut() {
            Some(span) if span.trial_id == e.trial_id => {
                if span.finalized {
                    return Err(SpotError::Ordering(format!("trial {} is already finalized", e.trial_id)));
                }
                let prev = &self.entries[self.entries.len() - 1];
                if e.step_index <= prev.step_index {
                    return Err(SpotError::Ordering(format!(
                        "step {} follows step {} in trial {}",
                        e.step_index, prev.step_index, e.trial_id
                    )));
                }
                span.len += 1;
            }
            _ => self.trials.push_back(TrialSpan {
                trial_id: e.trial_id,
                start: id,
                len: 1,
                finalized: false,
            }),
        }
        e.trial_reward = None;
        self.max_trial = Some(e.trial_id);
        self.last = Some((e.action_type, e.success));
        let key = (!self.use_trial_reward).then(|| OrderedFloat((e.instant_reward - e.predicted_q).abs()));
        if let Some(k) = key {
            self.insert_order(id, k, e.action_type, e.success);
        }
        self.entries.push_back(e);
        self.keys.push_back(key);
        while self.entries.len() > self.config.capacity {
            self.evict();
        }
        Ok(())
    }

    fn insert_order(&mut self, id: u64, key: OrderedFloat<f64>, t: ActionType, success: bool) {
        self.all.insert((Reverse(key), id));
        self.groups.entry((t, success)).or_default().insert((Reverse(key), id));
    }

    fn evict(&mut self) {
        // Whole trials first; a single oversized trial loses its oldest steps.
        let whole = self.trials.len() > 1;
        let count = if whole { self.trials[0].len } else { 1 };
        for _ in 0..count {
            let e = self.entries.pop_front().expect("evicting from an empty buffer");
            if let Some(k) = self.keys.pop_front().flatten() {
                self.all.remove(&(Reverse(k), self.front_id));
                if let Some(g) = self.groups.get_mut(&(e.action_type, e.success)) {
                    g.remove(&(Reverse(k), self.front_id));
                }
            }
            self.front_id += 1;
        }
        if whole {
            self.trials.pop_front();
        } else if let Some(span) = self.trials.front_mut() {
            span.start += 1;
            span.len -= 1;
            if span.len == 0 {
                self.trials.pop_front();
            }
        }
    }

    /// Backfills trial rewards for a fully pushed trial.
    ///
    /// Finalizing twice is a no-op, as is finalizing a trial that never
    /// received a step. Trials older than the buffer's contents are unknown.
    pub fn finalize_trial(&mut self, trial_id: u64, completed: bool, cfg: &RewardConfig) -> Result<()> {
        let Some(idx) = self.trials.iter().rposition(|t| t.trial_id == trial_id) else {
            return match self.max_trial {
                Some(max) if trial_id <= max => Err(SpotError::UnknownTrial(trial_id)),
                _ => Ok(()),
            };
        };
        if self.trials[idx].finalized {
            return Ok(());
        }
        let span = self.trials[idx].clone();
        let offset = (span.start - self.front_id) as usize;
        let instants: Vec<f64> = (offset..offset + span.len)
            .map(|i| self.entries[i].instant_reward)
            .collect();
        let values = rewards::backfill(&instants, completed, cfg);
        self.apply_trial_rewards(idx, &values);
        Ok(())
    }

    fn apply_trial_rewards(&mut self, span_idx: usize, values: &[f64]) {
        let span = self.trials[span_idx].clone();
        let offset = (span.start - self.front_id) as usize;
        for (i, &v) in values.iter().enumerate() {
            let e = &mut self.entries[offset + i];
            e.trial_reward = Some(v);
            if self.use_trial_reward {
                let key = OrderedFloat((v - e.predicted_q).abs());
                let (t, s) = (e.action_type, e.success);
                self.keys[offset + i] = Some(key);
                self.insert_order(span.start + i as u64, key, t, s);
            }
        }
        self.trials[span_idx].finalized = true;
    }

    /// Draws one experience id.
    ///
    /// With probability `type_filter_prob` the draw is restricted to
    /// experiences of `last_type` whose success flag differs from
    /// `last_success`; an empty restriction falls back to everything.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R, last_type: ActionType, last_success: bool) -> Result<u64> {
        if self.all.is_empty() {
            return Err(SpotError::EmptyBuffer);
        }
        let filter = rng.gen::<f64>() < self.config.type_filter_prob;
        let order = if filter {
            self.groups
                .get(&(last_type, !last_success))
                .filter(|g| !g.is_empty())
                .unwrap_or(&self.all)
        } else {
            &self.all
        };
        let rank = self.ranks.sample(rng, order.len());
        let (_, id) = order.nth(rank).expect("rank within order");
        Ok(id)
    }

    /// Sampleable ids in surprise order, most surprising first.
    pub fn surprise_order(&self) -> Vec<u64> {
        self.all.iter().map(|(_, id)| *id).collect()
    }
}

/// Applies the (SPOT-)Q update for one experience and returns its loss.
///
/// Targets are computed from the values before either update is applied.
pub fn learn_from<S, Q, R>(
    exp: &Experience<S>,
    reward: f64,
    q: &mut Q,
    mask_fn: Option<&dyn Fn(&S) -> ActionMask>,
    learn_discount: f64,
    learning_rate: f64,
    tie_rng: &mut R,
) -> f64
where
    Q: QFunction<S>,
    R: Rng + ?Sized,
{
    let targets = spotq_targets(exp, reward, q, mask_fn, learn_discount, tie_rng);
    let mut loss = huber_loss(q.value(&exp.state, exp.action), targets.executed_target);
    if let Some(m) = targets.masked {
        loss += huber_loss(q.value(&exp.state, m.action), m.target);
    }
    q.update(&exp.state, exp.action, targets.executed_target, learning_rate);
    if let Some(m) = targets.masked {
        q.update(&exp.state, m.action, m.target, learning_rate);
    }
    loss
}

/// One prioritized replay update. Returns the summed Huber loss.
pub fn train_step<S, Q, R1, R2>(
    buf: &mut ReplayBuffer<S>,
    q: &mut Q,
    mask_fn: Option<&dyn Fn(&S) -> ActionMask>,
    cfg: &RewardConfig,
    learning_rate: f64,
    sample_rng: &mut R1,
    tie_rng: &mut R2,
) -> Result<f64>
where
    Q: QFunction<S>,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    let (last_type, last_success) = buf.last_outcome().ok_or(SpotError::EmptyBuffer)?;
    let id = buf.sample(sample_rng, last_type, last_success)?;
    let reward = buf.training_reward(id).expect("sampled experience has a training reward");
    let exp = buf.get(id).expect("sampled id is live");
    Ok(learn_from(exp, reward, q, mask_fn, cfg.learn_discount, learning_rate, tie_rng))
}

/// Single-line text encoding of environment states for buffer dumps.
pub trait StateCodec {
    type State;

    /// Must not contain tabs or newlines.
    fn encode(&self, state: &Self::State) -> String;

    fn decode(&self, text: &str) -> Result<Self::State>;
}

impl<S> ReplayBuffer<S> {
    /// One tab-separated line per experience, fields in declaration order.
    /// A missing trial reward is written as `-`.
    pub fn dump<W: Write, C: StateCodec<State = S>>(&self, mut w: W, codec: &C) -> std::io::Result<()> {
        for e in &self.entries {
            let trial = e.trial_reward.map_or_else(|| "-".to_string(), |v| v.to_string());
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                codec.encode(&e.state),
                e.action,
                e.action_type,
                e.instant_reward,
                trial,
                e.predicted_q,
                u8::from(e.success),
                e.trial_id,
                e.step_index,
                codec.encode(&e.next_state),
                u8::from(e.terminal),
            )?;
        }
        Ok(())
    }

    /// Rebuilds a buffer from [`dump`](ReplayBuffer::dump) output. Trials whose
    /// every step carries a trial reward come back finalized.
    pub fn restore<Rd: BufRead, C: StateCodec<State = S>>(
        config: ReplayConfig,
        reward_kind: RewardKind,
        reader: Rd,
        codec: &C,
    ) -> Result<Self> {
        let mut buf = ReplayBuffer::new(config, reward_kind);
        let mut pending: Vec<Option<f64>> = Vec::new();
        let mut current: Option<u64> = None;
        for line in reader.lines() {
            let line = line.map_err(|e| SpotError::Parse(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 11 {
                return Err(SpotError::Parse(format!("expected 11 fields, found {}", f.len())));
            }
            let trial_reward = match f[4] {
                "-" => None,
                v => Some(parse(v, "trial reward")?),
            };
            let e = Experience {
                state: codec.decode(f[0])?,
                action: parse(f[1], "action")?,
                action_type: f[2].parse()?,
                instant_reward: parse(f[3], "instant reward")?,
                trial_reward: None,
                predicted_q: parse(f[5], "predicted q")?,
                success: parse_flag(f[6])?,
                trial_id: parse(f[7], "trial id")?,
                step_index: parse(f[8], "step index")?,
                next_state: codec.decode(f[9])?,
                terminal: parse_flag(f[10])?,
            };
            if current != Some(e.trial_id) {
                buf.finish_restored_trial(&mut pending);
                current = Some(e.trial_id);
            }
            pending.push(trial_reward);
            buf.push(e)?;
        }
        buf.finish_restored_trial(&mut pending);
        Ok(buf)
    }

    fn finish_restored_trial(&mut self, pending: &mut Vec<Option<f64>>) {
        let values: Option<Vec<f64>> = pending.drain(..).collect();
        if let Some(values) = values.filter(|v| !v.is_empty()) {
            let idx = self.trials.len() - 1;
            // The front trial may have lost steps to eviction.
            let keep = self.trials[idx].len;
            self.apply_trial_rewards(idx, &values[values.len() - keep..]);
        }
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| SpotError::Parse(format!("bad {what} `{s}`")))
}

fn parse_flag(s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(SpotError::Parse(format!("bad flag `{s}`"))),
    }
}
