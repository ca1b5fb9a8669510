//! Reward functions over step outcomes.
//!
//! Everything here is a pure function of [`StepOutcome`] histories and a
//! [`RewardConfig`]; no environment internals leak in, so any environment
//! that reports success and task progress can use them.
//!
//! The instant rewards nest: `base ≥ situation_removal ≥ progress ≥ 0`.
//! Trial rewards are computed after the fact by walking a finished trial
//! backwards; a zero instant reward cuts propagation from later steps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SpotError};

/// Sub-task tag carried by every action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionType {
    Grasp,
    Push,
    Place,
    Forward,
    TurnLeft,
    TurnRight,
}

impl ActionType {
    pub const ALL: [ActionType; 6] = [
        ActionType::Grasp,
        ActionType::Push,
        ActionType::Place,
        ActionType::Forward,
        ActionType::TurnLeft,
        ActionType::TurnRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionType::Grasp => "grasp",
            ActionType::Push => "push",
            ActionType::Place => "place",
            ActionType::Forward => "forward",
            ActionType::TurnLeft => "turn_left",
            ActionType::TurnRight => "turn_right",
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionType {
    type Err = SpotError;

    fn from_str(s: &str) -> Result<Self> {
        ActionType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| SpotError::Parse(format!("unknown action type `{s}`")))
    }
}

/// Instant reward used inside a trial reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialInner {
    SituationRemoval,
    Progress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    Base,
    SituationRemoval,
    Progress,
    Trial(TrialInner),
    Discounted,
}

impl RewardKind {
    /// Whether replay trains on backfilled trial values rather than instant ones.
    pub fn uses_trial_reward(self) -> bool {
        matches!(self, RewardKind::Trial(_) | RewardKind::Discounted)
    }

    /// Whether training resets the environment on progress reversal.
    pub fn situation_removal(self) -> bool {
        !matches!(self, RewardKind::Base | RewardKind::Discounted)
    }

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Base => "base",
            RewardKind::SituationRemoval => "sr",
            RewardKind::Progress => "progress",
            RewardKind::Trial(TrialInner::Progress) => "trial",
            RewardKind::Trial(TrialInner::SituationRemoval) => "trial-sr",
            RewardKind::Discounted => "discounted",
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardKind {
    type Err = SpotError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "base" => RewardKind::Base,
            "sr" | "situation-removal" => RewardKind::SituationRemoval,
            "progress" => RewardKind::Progress,
            "trial" | "trial-progress" => RewardKind::Trial(TrialInner::Progress),
            "trial-sr" => RewardKind::Trial(TrialInner::SituationRemoval),
            "discounted" => RewardKind::Discounted,
            other => return Err(SpotError::Parse(format!("unknown reward kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub weights: BTreeMap<ActionType, f64>,
    pub trial_discount: f64,
    pub learn_discount: f64,
    pub reward_kind: RewardKind,
}

pub const DEFAULT_DISCOUNT: f64 = 0.65;

impl RewardConfig {
    pub fn new(
        weights: BTreeMap<ActionType, f64>,
        trial_discount: f64,
        learn_discount: f64,
        reward_kind: RewardKind,
    ) -> Result<Self> {
        let cfg = RewardConfig {
            weights,
            trial_discount,
            learn_discount,
            reward_kind,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Push 0.1, grasp 1, place 1.
    pub fn block_world(reward_kind: RewardKind) -> Self {
        let weights = [
            (ActionType::Push, 0.1),
            (ActionType::Grasp, 1.0),
            (ActionType::Place, 1.0),
        ];
        RewardConfig {
            weights: weights.into_iter().collect(),
            trial_discount: DEFAULT_DISCOUNT,
            learn_discount: DEFAULT_DISCOUNT,
            reward_kind,
        }
    }

    pub fn grid_world(reward_kind: RewardKind) -> Self {
        let weights = [
            (ActionType::Forward, 1.0),
            (ActionType::TurnLeft, 1.0),
            (ActionType::TurnRight, 1.0),
        ];
        RewardConfig {
            weights: weights.into_iter().collect(),
            trial_discount: DEFAULT_DISCOUNT,
            learn_discount: DEFAULT_DISCOUNT,
            reward_kind,
        }
    }

    pub fn with_learn_discount(mut self, gamma: f64) -> Result<Self> {
        self.learn_discount = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (t, w) in &self.weights {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(SpotError::Config(format!("weight for {t} must be finite and >= 0, got {w}")));
            }
        }
        for (name, g) in [("trial_discount", self.trial_discount), ("learn_discount", self.learn_discount)] {
            if !(g > 0.0 && g < 1.0) {
                return Err(SpotError::Config(format!("{name} must lie in (0, 1), got {g}")));
            }
        }
        Ok(())
    }

    pub fn weight(&self, t: ActionType) -> Result<f64> {
        self.weights.get(&t).copied().ok_or(SpotError::MissingWeight(t))
    }
}

/// What the environment reports about one executed action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub action_type: ActionType,
    pub success: bool,
    pub progress_before: f64,
    pub progress_after: f64,
    pub terminal: bool,
    pub task_complete: bool,
}

/// `W(φ)·1[success]`.
pub fn base_reward(o: &StepOutcome, cfg: &RewardConfig) -> Result<f64> {
    let w = cfg.weight(o.action_type)?;
    Ok(if o.success { w } else { 0.0 })
}

/// 1 unless the step reversed task progress.
pub fn sr_indicator(o: &StepOutcome) -> u8 {
    u8::from(o.progress_after >= o.progress_before)
}

pub fn sr_reward(o: &StepOutcome, cfg: &RewardConfig) -> Result<f64> {
    let base = base_reward(o, cfg)?;
    Ok(if sr_indicator(o) == 1 { base } else { 0.0 })
}

pub fn progress_reward(o: &StepOutcome, cfg: &RewardConfig) -> Result<f64> {
    Ok(o.progress_after * sr_reward(o, cfg)?)
}

/// The instant reward selected by `cfg.reward_kind`.
///
/// Trial kinds return their inner instant reward. The discounted kind only
/// pays progress reward at the terminal step of a trial.
pub fn instant_reward(o: &StepOutcome, cfg: &RewardConfig) -> Result<f64> {
    match cfg.reward_kind {
        RewardKind::Base => base_reward(o, cfg),
        RewardKind::SituationRemoval | RewardKind::Trial(TrialInner::SituationRemoval) => sr_reward(o, cfg),
        RewardKind::Progress | RewardKind::Trial(TrialInner::Progress) => progress_reward(o, cfg),
        RewardKind::Discounted => {
            if o.terminal {
                progress_reward(o, cfg)
            } else {
                Ok(0.0)
            }
        }
    }
}

/// Backfills trial rewards for one finished trial.
///
/// A zero instant reward stays zero and blocks everything after it from
/// propagating back. The last step is doubled only when the trial completed
/// the task.
pub fn trial_backfill(instants: &[f64], completed: bool, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; instants.len()];
    let mut next: Option<f64> = None;
    for (t, &r) in instants.iter().enumerate().rev() {
        let value = if r == 0.0 {
            0.0
        } else {
            match next {
                None if completed => 2.0 * r,
                None => r,
                Some(v) => r + gamma * v,
            }
        };
        out[t] = value;
        next = Some(value);
    }
    out
}

/// Conventional discounting of the terminal reward: `R_t = γ·R_{t+1}`.
pub fn discounted_backfill(instants: &[f64], gamma: f64) -> Vec<f64> {
    let Some(&terminal) = instants.last() else {
        return Vec::new();
    };
    let mut out = vec![0.0; instants.len()];
    let mut value = terminal;
    for slot in out.iter_mut().rev() {
        *slot = value;
        value *= gamma;
    }
    out
}

/// Dispatches to [`trial_backfill`] or [`discounted_backfill`] per the config.
pub fn backfill(instants: &[f64], completed: bool, cfg: &RewardConfig) -> Vec<f64> {
    match cfg.reward_kind {
        RewardKind::Discounted => discounted_backfill(instants, cfg.trial_discount),
        _ => trial_backfill(instants, completed, cfg.trial_discount),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(t: ActionType, success: bool, before: f64, after: f64) -> StepOutcome {
        StepOutcome {
            action_type: t,
            success,
            progress_before: before,
            progress_after: after,
            terminal: false,
            task_complete: false,
        }
    }

    fn cfg() -> RewardConfig {
        RewardConfig::block_world(RewardKind::Progress)
    }

    #[test]
    fn base_reward_examples() {
        let c = cfg();
        assert_eq!(base_reward(&outcome(ActionType::Grasp, true, 0.25, 0.25), &c).unwrap(), 1.0);
        assert_eq!(base_reward(&outcome(ActionType::Push, false, 0.25, 0.25), &c).unwrap(), 0.0);
        assert_eq!(base_reward(&outcome(ActionType::Push, true, 0.25, 0.25), &c).unwrap(), 0.1);
    }

    #[test]
    fn missing_weight_is_config_error() {
        let c = cfg();
        let err = base_reward(&outcome(ActionType::Forward, true, 0.0, 0.5), &c).unwrap_err();
        assert_eq!(err, SpotError::MissingWeight(ActionType::Forward));
    }

    #[test]
    fn sr_indicator_examples() {
        assert_eq!(sr_indicator(&outcome(ActionType::Place, true, 0.5, 0.75)), 1);
        assert_eq!(sr_indicator(&outcome(ActionType::Place, true, 0.75, 0.25)), 0);
        assert_eq!(sr_indicator(&outcome(ActionType::Place, true, 0.5, 0.5)), 1);
    }

    #[test]
    fn sr_and_progress_examples() {
        let c = cfg();
        assert_eq!(sr_reward(&outcome(ActionType::Grasp, true, 0.25, 0.5), &c).unwrap(), 1.0);
        assert_eq!(sr_reward(&outcome(ActionType::Place, true, 0.75, 0.25), &c).unwrap(), 0.0);
        assert_eq!(sr_reward(&outcome(ActionType::Grasp, false, 0.5, 0.5), &c).unwrap(), 0.0);

        assert_eq!(progress_reward(&outcome(ActionType::Place, true, 0.25, 0.5), &c).unwrap(), 0.5);
        let mut done = outcome(ActionType::Place, true, 0.75, 1.0);
        done.terminal = true;
        done.task_complete = true;
        assert_eq!(progress_reward(&done, &c).unwrap(), 1.0);
        assert_eq!(progress_reward(&outcome(ActionType::Place, true, 0.75, 0.5), &c).unwrap(), 0.0);
    }

    #[test]
    fn trial_backfill_examples() {
        let got = trial_backfill(&[1.0, 0.0, 1.0, 1.0], true, 0.65);
        let want = [1.0, 0.0, 2.3, 2.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
        assert_eq!(trial_backfill(&[0.0, 0.0, 0.0], true, 0.65), vec![0.0; 3]);
        assert_eq!(trial_backfill(&[0.0, 0.0, 0.0], false, 0.65), vec![0.0; 3]);
        assert_eq!(*trial_backfill(&[0.3, 0.7], true, 0.65).last().unwrap(), 1.4);
        assert!(trial_backfill(&[], true, 0.65).is_empty());
    }

    #[test]
    fn no_terminal_bonus_without_completion() {
        assert_eq!(trial_backfill(&[0.5], false, 0.65), vec![0.5]);
        assert_eq!(trial_backfill(&[0.5], true, 0.65), vec![1.0]);
    }

    #[test]
    fn discounted_backfill_examples() {
        let got = discounted_backfill(&[0.0, 0.0, 1.0], 0.9);
        for (g, w) in got.iter().zip([0.81, 0.9, 1.0]) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
        assert_eq!(discounted_backfill(&[0.0, 0.0, 0.0], 0.9), vec![0.0; 3]);
        assert_eq!(discounted_backfill(&[0.7], 0.9), vec![0.7]);
    }

    #[test]
    fn discount_range_is_validated() {
        let c = RewardConfig::block_world(RewardKind::Base);
        assert!(c.clone().with_learn_discount(1.0).is_err());
        assert!(c.clone().with_learn_discount(0.0).is_err());
        assert!(c.with_learn_discount(0.5).is_ok());
        let mut w = BTreeMap::new();
        w.insert(ActionType::Grasp, -1.0);
        assert!(RewardConfig::new(w, 0.65, 0.65, RewardKind::Base).is_err());
    }

    #[test]
    fn reward_kind_names_round_trip() {
        for k in [
            RewardKind::Base,
            RewardKind::SituationRemoval,
            RewardKind::Progress,
            RewardKind::Trial(TrialInner::Progress),
            RewardKind::Trial(TrialInner::SituationRemoval),
            RewardKind::Discounted,
        ] {
            assert_eq!(k.name().parse::<RewardKind>().unwrap(), k);
        }
        assert!("bogus".parse::<RewardKind>().is_err());
    }

    fn arb_outcome() -> impl Strategy<Value = StepOutcome> {
        (0usize..3, any::<bool>(), 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(t, success, before, after)| {
            let t = [ActionType::Grasp, ActionType::Push, ActionType::Place][t];
            outcome(t, success, before, after)
        })
    }

    proptest! {
        #[test]
        fn instant_rewards_nest(o in arb_outcome()) {
            let c = cfg();
            let base = base_reward(&o, &c).unwrap();
            let sr = sr_reward(&o, &c).unwrap();
            let p = progress_reward(&o, &c).unwrap();
            prop_assert!(0.0 <= sr && sr <= base);
            prop_assert!(0.0 <= p && p <= sr);
        }

        #[test]
        fn sr_indicator_shift_invariant(o in arb_outcome(), shift in -0.5f64..0.5) {
            // Dyadic shifts keep the comparison exact in floating point.
            let shift = (shift * 1024.0).round() / 1024.0;
            let before = (o.progress_before * 1024.0).round() / 1024.0;
            let after = (o.progress_after * 1024.0).round() / 1024.0;
            let a = StepOutcome { progress_before: before, progress_after: after, ..o };
            let b = StepOutcome { progress_before: before + shift, progress_after: after + shift, ..o };
            prop_assert_eq!(sr_indicator(&a), sr_indicator(&b));
        }

        #[test]
        fn zero_instant_cuts_propagation(
            instants in prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..2.0], 1..30),
            completed in any::<bool>(),
        ) {
            let out = trial_backfill(&instants, completed, 0.65);
            prop_assert_eq!(out.len(), instants.len());
            for (r, v) in instants.iter().zip(&out) {
                if *r == 0.0 {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }

        #[test]
        fn discounted_and_trial_agree_at_uncompleted_terminal(n in 1usize..20, r in 0.01f64..2.0) {
            let mut instants = vec![0.0; n - 1];
            instants.push(r);
            let trial = trial_backfill(&instants, false, 0.65);
            let disc = discounted_backfill(&instants, 0.65);
            prop_assert_eq!(trial.last(), disc.last());
            let doubled = trial_backfill(&instants, true, 0.65);
            prop_assert_eq!(*doubled.last().unwrap(), 2.0 * r);
        }
    }
}
