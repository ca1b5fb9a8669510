//! Tabular and sparse-linear action-value functions.
//!
//! Both persist as sorted text records so saved models diff cleanly.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Result, SpotError};
use crate::spotq::QFunction;

/// Exact 64-bit key of a state for table lookup.
pub trait StateKey {
    fn state_key(&self) -> u64;
}

impl StateKey for u64 {
    fn state_key(&self) -> u64 {
        *self
    }
}

/// FNV-1a; stable across runs and platforms, unlike `DefaultHasher`.
#[derive(Debug, Clone, Copy)]
pub struct StableHasher(u64);

impl Default for StableHasher {
    fn default() -> Self {
        StableHasher(0xcbf2_9ce4_8422_2325)
    }
}

impl StableHasher {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    num_actions: usize,
    initial: f64,
    table: HashMap<u64, Vec<f64>>,
}

impl TabularQ {
    pub fn new(num_actions: usize) -> Self {
        TabularQ::with_initial(num_actions, 0.0)
    }

    /// Unvisited entries read as `initial`; a positive value makes greedy
    /// action selection seek out untried actions.
    pub fn with_initial(num_actions: usize, initial: f64) -> Self {
        TabularQ {
            num_actions,
            initial,
            table: HashMap::new(),
        }
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get_key(&self, key: u64, action: usize) -> f64 {
        self.table.get(&key).map_or(self.initial, |row| row[action])
    }

    pub fn set<S: StateKey>(&mut self, state: &S, action: usize, value: f64) {
        self.row_mut(state.state_key())[action] = value;
    }

    fn row_mut(&mut self, key: u64) -> &mut Vec<f64> {
        let (n, init) = (self.num_actions, self.initial);
        self.table.entry(key).or_insert_with(|| vec![init; n])
    }

    /// Sorted `(state key, action, value)` records.
    pub fn records(&self) -> Vec<(u64, usize, f64)> {
        let mut keys: Vec<_> = self.table.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter()
            .flat_map(|k| self.table[&k].iter().enumerate().map(move |(a, &v)| (k, a, v)))
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.initial == 0.0 {
            writeln!(w, "# spot-q tabular actions={}", self.num_actions)?;
        } else {
            writeln!(w, "# spot-q tabular actions={} initial={}", self.num_actions, self.initial)?;
        }
        for (k, a, v) in self.records() {
            writeln!(w, "{k}\t{a}\t{v}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = next_line(&mut lines)?;
        let num_actions = parse_header(&header, "tabular")?;
        let initial = header
            .split_whitespace()
            .find_map(|p| p.strip_prefix("initial="))
            .map_or(Ok(0.0), |v| v.parse().map_err(|_| SpotError::Parse(format!("bad initial value `{v}`"))))?;
        let mut q = TabularQ::with_initial(num_actions, initial);
        for line in lines {
            let line = line.map_err(|e| SpotError::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let key: u64 = parse_field(parts.next(), "state key")?;
            let action: usize = parse_field(parts.next(), "action")?;
            let value: f64 = parse_field(parts.next(), "value")?;
            if action >= num_actions {
                return Err(SpotError::ActionOutOfRange { action, num_actions });
            }
            q.row_mut(key)[action] = value;
        }
        Ok(q)
    }
}

impl<S: StateKey> QFunction<S> for TabularQ {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn value(&self, state: &S, action: usize) -> f64 {
        self.get_key(state.state_key(), action)
    }

    fn values(&self, state: &S) -> Vec<f64> {
        self.table
            .get(&state.state_key())
            .cloned()
            .unwrap_or_else(|| vec![self.initial; self.num_actions])
    }

    fn update(&mut self, state: &S, action: usize, target: f64, learning_rate: f64) {
        let cell = &mut self.row_mut(state.state_key())[action];
        *cell += learning_rate * (target - *cell);
    }
}

/// Maps a state-action pair to the ids of its active binary features.
pub trait Featurizer<S>: Clone {
    fn name(&self) -> &'static str;

    fn features(&self, state: &S, action: usize, out: &mut Vec<u64>);
}

/// `Q(s, a) = Σ w_f` over the active binary features of `(s, a)`.
///
/// Updates split the step evenly across the active features, so with a
/// single one-hot feature per pair this is a table over the abstraction.
#[derive(Debug, Clone)]
pub struct LinearQ<F> {
    num_actions: usize,
    featurizer: F,
    weights: HashMap<u64, f64>,
}

impl<F> LinearQ<F> {
    pub fn new(num_actions: usize, featurizer: F) -> Self {
        LinearQ {
            num_actions,
            featurizer,
            weights: HashMap::new(),
        }
    }

    pub fn featurizer(&self) -> &F {
        &self.featurizer
    }

    pub fn weight(&self, feature: u64) -> f64 {
        self.weights.get(&feature).copied().unwrap_or(0.0)
    }

    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    pub fn write_to<W: Write>(&self, mut w: W, name: &str) -> std::io::Result<()> {
        writeln!(w, "# spot-q linear actions={} features={}", self.num_actions, name)?;
        let mut keys: Vec<_> = self.weights.keys().copied().collect();
        keys.sort_unstable();
        for k in keys {
            writeln!(w, "{k}\t{}", self.weights[&k])?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R, featurizer: F) -> Result<Self> {
        let mut lines = r.lines();
        let header = next_line(&mut lines)?;
        let num_actions = parse_header(&header, "linear")?;
        let mut q = LinearQ::new(num_actions, featurizer);
        for line in lines {
            let line = line.map_err(|e| SpotError::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let key: u64 = parse_field(parts.next(), "feature")?;
            let value: f64 = parse_field(parts.next(), "weight")?;
            q.weights.insert(key, value);
        }
        Ok(q)
    }
}

impl<S, F: Featurizer<S>> QFunction<S> for LinearQ<F> {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn value(&self, state: &S, action: usize) -> f64 {
        let mut active = Vec::with_capacity(4);
        self.featurizer.features(state, action, &mut active);
        active.iter().map(|f| self.weight(*f)).sum()
    }

    fn values(&self, state: &S) -> Vec<f64> {
        let mut active = Vec::with_capacity(4);
        (0..self.num_actions)
            .map(|a| {
                active.clear();
                self.featurizer.features(state, a, &mut active);
                active.iter().map(|f| self.weight(*f)).sum()
            })
            .collect()
    }

    fn update(&mut self, state: &S, action: usize, target: f64, learning_rate: f64) {
        let mut active = Vec::with_capacity(4);
        self.featurizer.features(state, action, &mut active);
        if active.is_empty() {
            return;
        }
        let current: f64 = active.iter().map(|f| self.weight(*f)).sum();
        let step = learning_rate * (target - current) / active.len() as f64;
        for f in active {
            *self.weights.entry(f).or_insert(0.0) += step;
        }
    }
}

/// Reads just the header of a saved model: `(kind, actions, features)`.
pub fn model_header(line: &str) -> Result<(String, usize, Option<String>)> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some("#") || parts.next() != Some("spot-q") {
        return Err(SpotError::Parse(format!("not a model header: `{line}`")));
    }
    let kind = parts
        .next()
        .ok_or_else(|| SpotError::Parse("model header lacks a kind".into()))?
        .to_string();
    let mut actions = None;
    let mut features = None;
    for p in parts {
        if let Some(v) = p.strip_prefix("actions=") {
            actions = Some(v.parse().map_err(|_| SpotError::Parse(format!("bad action count `{v}`")))?);
        } else if let Some(v) = p.strip_prefix("features=") {
            features = Some(v.to_string());
        }
    }
    let actions = actions.ok_or_else(|| SpotError::Parse("model header lacks actions=".into()))?;
    Ok((kind, actions, features))
}

fn parse_header(line: &str, expect: &str) -> Result<usize> {
    let (kind, actions, _) = model_header(line)?;
    if kind != expect {
        return Err(SpotError::Parse(format!("expected a {expect} model, found {kind}")));
    }
    Ok(actions)
}

fn next_line<I: Iterator<Item = std::io::Result<String>>>(lines: &mut I) -> Result<String> {
    lines
        .next()
        .ok_or_else(|| SpotError::Parse("empty model file".into()))?
        .map_err(|e| SpotError::Parse(e.to_string()))
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    let field = field.ok_or_else(|| SpotError::Parse(format!("missing {what}")))?;
    field
        .trim()
        .parse()
        .map_err(|_| SpotError::Parse(format!("bad {what} `{field}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabular_update_rule() {
        let mut q = TabularQ::new(2);
        QFunction::<u64>::update(&mut q, &3, 1, 1.0, 0.5);
        assert_eq!(QFunction::<u64>::value(&q, &3, 1), 0.5);
        assert_eq!(QFunction::<u64>::value(&q, &3, 0), 0.0);
        assert_eq!(QFunction::<u64>::value(&q, &4, 1), 0.0);
    }

    #[test]
    fn tabular_round_trips_exactly() {
        let mut q = TabularQ::new(3);
        q.set(&9u64, 2, 0.1 + 0.2);
        q.set(&1u64, 0, -1.0 / 3.0);
        q.set(&u64::MAX, 1, 1e-300);
        let mut buf = Vec::new();
        q.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# spot-q tabular actions=3\n1\t0\t"));
        let back = TabularQ::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn wrong_model_kind_rejected() {
        let text = "# spot-q linear actions=3 features=block\n";
        assert!(TabularQ::read_from(text.as_bytes()).is_err());
        assert!(TabularQ::read_from("garbage\n".as_bytes()).is_err());
        assert!(TabularQ::read_from("# spot-q tabular actions=2\n1\t5\t0.5\n".as_bytes()).is_err());
    }

    #[derive(Clone)]
    struct Parity;

    impl Featurizer<u64> for Parity {
        fn name(&self) -> &'static str {
            "parity"
        }

        fn features(&self, state: &u64, action: usize, out: &mut Vec<u64>) {
            out.push((state % 2) * 10 + action as u64);
            out.push(100 + action as u64);
        }
    }

    #[test]
    fn linear_update_splits_step_across_features() {
        let mut q = LinearQ::new(2, Parity);
        q.update(&4u64, 1, 1.0, 0.5);
        assert_eq!(q.weight(1), 0.25);
        assert_eq!(q.weight(101), 0.25);
        assert_eq!(q.value(&4u64, 1), 0.5);
        // Shares the action feature with even states.
        assert_eq!(q.value(&3u64, 1), 0.25);
        let mut buf = Vec::new();
        q.write_to(&mut buf, "parity").unwrap();
        let back = LinearQ::read_from(buf.as_slice(), Parity).unwrap();
        assert_eq!(back.value(&4u64, 1), 0.5);
    }

    #[test]
    fn stable_hasher_is_fnv1a() {
        let mut h = StableHasher::default();
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63_dc4c_8601_ec8c);
    }
}
