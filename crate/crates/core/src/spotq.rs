//! Dynamic action spaces and the SPOT-Q target.
//!
//! A mask marks which actions are not certain to fail in a state. Acting is
//! restricted to the allowed set, and whenever the unrestricted greedy action
//! is masked out, learning gets one extra zero-reward sample for it.

use rand::Rng;

use crate::error::{Result, SpotError};
use crate::replay::Experience;

/// Which actions are worth exploring in a state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionMask {
    allowed: Vec<bool>,
}

impl ActionMask {
    pub fn all(num_actions: usize) -> Self {
        ActionMask {
            allowed: vec![true; num_actions],
        }
    }

    pub fn from_vec(allowed: Vec<bool>) -> Self {
        ActionMask { allowed }
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn allows(&self, action: usize) -> bool {
        self.allowed.get(action).copied().unwrap_or(false)
    }

    pub fn set(&mut self, action: usize, allowed: bool) {
        self.allowed[action] = allowed;
    }

    pub fn any(&self) -> bool {
        self.allowed.iter().any(|&a| a)
    }

    pub fn count(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }

    pub fn allowed_actions(&self) -> Vec<usize> {
        self.allowed
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.allowed
    }
}

/// An action-value function over states `S` and a fixed discrete action set.
///
/// Values are deterministic between updates. Readers that must not observe
/// in-flight updates work on a [`snapshot`](QFunction::snapshot).
pub trait QFunction<S>: Clone {
    fn num_actions(&self) -> usize;

    fn value(&self, state: &S, action: usize) -> f64;

    fn values(&self, state: &S) -> Vec<f64> {
        (0..self.num_actions()).map(|a| self.value(state, a)).collect()
    }

    /// Moves `Q(state, action)` toward `target` with step size `learning_rate`.
    fn update(&mut self, state: &S, action: usize, target: f64, learning_rate: f64);

    fn snapshot(&self) -> Self {
        self.clone()
    }
}

/// Index of the largest value among `candidates`, exact ties broken uniformly.
///
/// The rng is only consulted when more than one candidate ties.
fn argmax_over<R: Rng + ?Sized>(
    values: &[f64],
    candidates: impl Iterator<Item = usize>,
    rng: &mut R,
) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut tied: Vec<usize> = Vec::new();
    for a in candidates {
        let v = values[a];
        if v > best {
            best = v;
            tied.clear();
            tied.push(a);
        } else if v == best {
            tied.push(a);
        }
    }
    match tied.len() {
        0 => None,
        1 => Some(tied[0]),
        n => Some(tied[rng.gen_range(0..n)]),
    }
}

/// Unrestricted greedy action.
pub fn argmax<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    argmax_over(values, 0..values.len(), rng).expect("argmax over an empty action set")
}

/// Greedy action among those the mask allows.
pub fn argmax_allowed<R: Rng + ?Sized>(values: &[f64], mask: &ActionMask, rng: &mut R) -> Result<usize> {
    let allowed = (0..values.len()).filter(|&a| mask.allows(a));
    argmax_over(values, allowed, rng).ok_or(SpotError::EmptyActionSpace)
}

pub fn masked_argmax<S, Q: QFunction<S>, R: Rng + ?Sized>(
    q: &Q,
    state: &S,
    mask: &ActionMask,
    tie_rng: &mut R,
) -> Result<usize> {
    argmax_allowed(&q.values(state), mask, tie_rng)
}

/// Largest action value in a state; the bootstrap term of the Q target.
pub fn max_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotQTargets {
    pub executed_target: f64,
    pub masked: Option<MaskedTarget>,
}

/// The zero-reward sample for a greedy action the mask rules out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedTarget {
    pub action: usize,
    pub target: f64,
}

/// Targets for one replayed transition.
///
/// The executed action gets `r + γ·max_a Q(s', a)` (no bootstrap on terminal
/// transitions). With a mask function, the unrestricted greedy action at `s`
/// is computed and, if masked, gets the extra target `γ·Q(s', a_π)`.
pub fn spotq_targets<S, Q, R>(
    exp: &Experience<S>,
    reward: f64,
    q: &Q,
    mask_fn: Option<&dyn Fn(&S) -> ActionMask>,
    learn_discount: f64,
    tie_rng: &mut R,
) -> SpotQTargets
where
    Q: QFunction<S>,
    R: Rng + ?Sized,
{
    let next_values = (!exp.terminal).then(|| q.values(&exp.next_state));
    let bootstrap = next_values.as_deref().map_or(0.0, max_value);
    let executed_target = reward + learn_discount * bootstrap;

    let masked = mask_fn.and_then(|mask_fn| {
        let greedy = argmax(&q.values(&exp.state), tie_rng);
        if mask_fn(&exp.state).allows(greedy) {
            return None;
        }
        let next = next_values.as_ref().map_or(0.0, |v| v[greedy]);
        Some(MaskedTarget {
            action: greedy,
            target: learn_discount * next,
        })
    });

    SpotQTargets {
        executed_target,
        masked,
    }
}

/// Smooth L1 with unit threshold.
pub fn huber_loss(prediction: f64, target: f64) -> f64 {
    let d = (prediction - target).abs();
    if d <= 1.0 {
        0.5 * d * d
    } else {
        d - 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qfunction::TabularQ;
    use crate::rewards::ActionType;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn masked_argmax_examples() {
        let q = [5.0, 9.0, 1.0];
        let mut r = rng(0);
        let mask = ActionMask::from_vec(vec![true, false, true]);
        assert_eq!(argmax_allowed(&q, &mask, &mut r).unwrap(), 0);
        assert_eq!(argmax_allowed(&q, &ActionMask::all(3), &mut r).unwrap(), 1);
    }

    #[test]
    fn ties_break_within_tied_set_deterministically() {
        let q = [3.0, 3.0, 0.0];
        let mut seen = [false; 3];
        for seed in 0..64 {
            let a = argmax_allowed(&q, &ActionMask::all(3), &mut rng(seed)).unwrap();
            let again = argmax_allowed(&q, &ActionMask::all(3), &mut rng(seed)).unwrap();
            assert_eq!(a, again);
            seen[a] = true;
        }
        assert_eq!(seen, [true, true, false]);
    }

    #[test]
    fn all_masked_is_an_error() {
        let mask = ActionMask::from_vec(vec![false, false]);
        assert_eq!(
            argmax_allowed(&[1.0, 2.0], &mask, &mut rng(1)),
            Err(SpotError::EmptyActionSpace)
        );
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber_loss(0.5, 0.5), 0.0);
        assert!((huber_loss(0.0, 0.6) - 0.18).abs() < 1e-15);
        assert_eq!(huber_loss(0.0, 3.0), 2.5);
    }

    #[test]
    fn huber_smooth_at_threshold() {
        let eps = 1e-6;
        let at = huber_loss(0.0, 1.0);
        for d in [1.0 - eps, 1.0 + eps] {
            assert!((huber_loss(0.0, d) - at).abs() <= eps + eps * eps);
        }
    }

    fn exp(state: u64, action: usize, next: u64, terminal: bool) -> Experience<u64> {
        Experience {
            state,
            action,
            action_type: ActionType::Grasp,
            instant_reward: 0.0,
            trial_reward: None,
            predicted_q: 0.0,
            success: false,
            trial_id: 0,
            step_index: 0,
            next_state: next,
            terminal,
        }
    }

    #[test]
    fn terminal_target_has_no_bootstrap() {
        let mut q = TabularQ::new(2);
        q.set(&1, 0, 5.0);
        let t = spotq_targets(&exp(0, 0, 1, true), 1.0, &q, None, 0.65, &mut rng(0));
        assert_eq!(t.executed_target, 1.0);
        assert!(t.masked.is_none());
    }

    #[test]
    fn allowed_greedy_action_emits_no_masked_target() {
        let mut q = TabularQ::new(2);
        q.set(&0, 0, 2.0);
        let mask_fn = |_: &u64| ActionMask::from_vec(vec![true, false]);
        let t = spotq_targets(&exp(0, 0, 1, false), 0.0, &q, Some(&mask_fn), 0.65, &mut rng(0));
        assert!(t.masked.is_none());
    }

    #[test]
    fn masked_greedy_action_gets_zero_reward_target() {
        // Action 1 stands in for a grasp at an empty cell.
        let mut q = TabularQ::new(2);
        q.set(&0, 1, 3.0);
        q.set(&1, 1, 0.4);
        let mask_fn = |_: &u64| ActionMask::from_vec(vec![true, false]);
        let t = spotq_targets(&exp(0, 0, 1, false), 0.0, &q, Some(&mask_fn), 0.65, &mut rng(0));
        let m = t.masked.expect("greedy action is masked");
        assert_eq!(m.action, 1);
        assert!((m.target - 0.26).abs() < 1e-12);
        assert!((t.executed_target - 0.65 * 0.4).abs() < 1e-12);
    }

    #[test]
    fn all_true_mask_matches_plain_target() {
        let mut q = TabularQ::new(3);
        q.set(&0, 2, 1.5);
        q.set(&7, 1, 0.3);
        let e = exp(0, 0, 7, false);
        let plain = spotq_targets(&e, 0.25, &q, None, 0.65, &mut rng(3));
        let mask_fn = |_: &u64| ActionMask::all(3);
        let spot = spotq_targets(&e, 0.25, &q, Some(&mask_fn), 0.65, &mut rng(3));
        assert_eq!(plain.executed_target.to_bits(), spot.executed_target.to_bits());
        assert!(spot.masked.is_none());
    }
}
