//! Composite-state spaces.
//!
//! A composite state summarizes the `order` most recent slots of a trace.
//! Bit patterns are always stored most recent first: `bits[0]` is the state
//! at the current slot, `bits[order - 1]` the oldest one kept.
//!
//! Three spaces are provided:
//!
//! * **full**: every binary vector of length `order`, `2^order` states. The
//!   index reads the pattern as a big-endian integer, so the most recent bit
//!   is the most significant one.
//! * **simple**: the level of the trailing run and its length capped at
//!   `order`, `2 * order` states. State `(q, r)` has index `q * order + r - 1`.
//! * **smart**: a table of the distinct windows seen in a training trace,
//!   in order of first appearance. Patterns outside the table are resolved
//!   to the entries at minimal Hamming distance.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::Trace;

/// Largest order accepted by the full space.
pub const MAX_FULL_ORDER: usize = 24;

/// Tolerance on the total mass of a belief vector.
pub const BELIEF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Simple,
    Smart,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Simple => "simple",
            Variant::Smart => "smart",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "simple" => Ok(Variant::Simple),
            "smart" => Ok(Variant::Smart),
            other => Err(Error::invalid(format!("unknown state space {other:?}"))),
        }
    }
}

/// Probability distribution over the states of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty belief vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("belief entries must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > BELIEF_TOL * probs.len().max(1) as f64 {
            return Err(Error::invalid(format!("belief sums to {total}, expected 1")));
        }
        Ok(Belief { probs })
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Belief { probs }
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Belief { probs }
    }

    /// Uniform mass over `indices` (which must be non-empty and distinct).
    pub fn uniform_over(n: usize, indices: &[usize]) -> Self {
        let mut probs = vec![0.0; n];
        let w = 1.0 / indices.len() as f64;
        for &i in indices {
            probs[i] += w;
        }
        Belief { probs }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Indices carrying non-zero mass.
    pub fn support(&self) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SmartTable {
    patterns: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
}

impl SmartTable {
    fn new() -> Self {
        SmartTable {
            patterns: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    fn insert(&mut self, pattern: Vec<u8>) -> bool {
        if self.lookup.contains_key(&pattern) {
            return false;
        }
        self.lookup.insert(pattern.clone(), self.patterns.len());
        self.patterns.push(pattern);
        true
    }

    fn closest(&self, pattern: &[u8]) -> Vec<usize> {
        let k = pattern.len();
        let mut best = usize::MAX;
        let mut ties = Vec::new();
        for (i, p) in self.patterns.iter().enumerate() {
            let d = p[..k].iter().zip(pattern).filter(|(a, b)| a != b).count();
            if d < best {
                best = d;
                ties.clear();
            }
            if d == best {
                ties.push(i);
            }
        }
        ties
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Full,
    Simple,
    Smart(SmartTable),
}

/// An indexed set of composite states. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    order: usize,
    kind: Kind,
}

impl StateSpace {
    /// All `2^order` binary patterns.
    pub fn full(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_FULL_ORDER {
            return Err(Error::invalid(format!(
                "full state space supports orders 1..={MAX_FULL_ORDER} (got {order}); \
                 use the smart state space for long memories"
            )));
        }
        Ok(StateSpace {
            order,
            kind: Kind::Full,
        })
    }

    /// Run-length states `(level, run)` with `run` capped at `order`.
    pub fn simple(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("order must be positive"));
        }
        Ok(StateSpace {
            order,
            kind: Kind::Simple,
        })
    }

    /// Dictionary of the distinct `order`-windows of `training`, in order of
    /// first appearance, admitting at most `max_states` entries.
    pub fn smart(training: &Trace, order: usize, max_states: Option<usize>) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("order must be positive"));
        }
        if max_states == Some(0) {
            return Err(Error::invalid("the smart table needs room for at least one state"));
        }
        if training.len() < order {
            return Err(Error::TraceTooShort {
                needed: order,
                actual: training.len(),
            });
        }
        let cap = max_states.unwrap_or(usize::MAX);
        let mut table = SmartTable::new();
        for t in order - 1..training.len() {
            if table.patterns.len() >= cap {
                break;
            }
            table.insert(training.window(t, order));
        }
        Ok(StateSpace {
            order,
            kind: Kind::Smart(table),
        })
    }

    /// Smart space from an explicit list of patterns (e.g. a loaded sidecar).
    pub fn smart_from_patterns(order: usize, patterns: Vec<Vec<u8>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("order must be positive"));
        }
        if patterns.is_empty() {
            return Err(Error::invalid("the smart table needs at least one pattern"));
        }
        let mut table = SmartTable::new();
        for p in patterns {
            if p.len() != order || p.iter().any(|&b| b > 1) {
                return Err(Error::invalid(format!(
                    "pattern {p:?} is not a binary vector of length {order}"
                )));
            }
            if !table.insert(p.clone()) {
                return Err(Error::invalid(format!("duplicate pattern {p:?}")));
            }
        }
        Ok(StateSpace {
            order,
            kind: Kind::Smart(table),
        })
    }

    pub fn variant(&self) -> Variant {
        match self.kind {
            Kind::Full => Variant::Full,
            Kind::Simple => Variant::Simple,
            Kind::Smart(_) => Variant::Smart,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn size(&self) -> usize {
        match &self.kind {
            Kind::Full => 1 << self.order,
            Kind::Simple => 2 * self.order,
            Kind::Smart(t) => t.patterns.len(),
        }
    }

    /// Smart-table patterns (empty for the other variants).
    pub fn patterns(&self) -> &[Vec<u8>] {
        match &self.kind {
            Kind::Smart(t) => &t.patterns,
            _ => &[],
        }
    }

    /// Bit pattern of a full or smart state.
    pub fn pattern(&self, index: usize) -> Option<Vec<u8>> {
        match &self.kind {
            Kind::Full => Some(
                (0..self.order)
                    .map(|k| ((index >> (self.order - 1 - k)) & 1) as u8)
                    .collect(),
            ),
            Kind::Simple => None,
            Kind::Smart(t) => t.patterns.get(index).cloned(),
        }
    }

    /// `(level, run)` of a simple state.
    pub fn run_state(&self, index: usize) -> Option<(u8, usize)> {
        match self.kind {
            Kind::Simple => Some(((index / self.order) as u8, index % self.order + 1)),
            _ => None,
        }
    }

    pub fn run_index(&self, level: u8, run: usize) -> usize {
        level as usize * self.order + run - 1
    }

    pub fn describe(&self, index: usize) -> String {
        match self.run_state(index) {
            Some((q, r)) => format!("({q},{r})"),
            None => self
                .pattern(index)
                .map(|p| p.iter().map(|b| char::from(b'0' + b)).collect())
                .unwrap_or_default(),
        }
    }

    /// The level of the current slot in state `index`.
    pub fn leading_bit(&self, index: usize) -> u8 {
        match &self.kind {
            Kind::Full => ((index >> (self.order - 1)) & 1) as u8,
            Kind::Simple => (index / self.order) as u8,
            Kind::Smart(t) => t.patterns[index][0],
        }
    }

    fn full_index(bits: &[u8]) -> usize {
        bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    fn leading_run(bits: &[u8]) -> usize {
        bits.iter().take_while(|&&b| b == bits[0]).count()
    }

    fn check_pattern(&self, bits: &[u8], max_len: usize) -> Result<()> {
        if bits.is_empty() || bits.len() > max_len {
            return Err(Error::invalid(format!(
                "pattern length {} outside [1, {max_len}]",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("pattern entries must be 0 or 1"));
        }
        Ok(())
    }

    /// Exact state of a full-length window, if the space holds it.
    pub fn index_of(&self, window: &[u8]) -> Option<usize> {
        if window.len() != self.order {
            return None;
        }
        match &self.kind {
            Kind::Full => Some(Self::full_index(window)),
            Kind::Simple => Some(self.run_index(window[0], Self::leading_run(window))),
            Kind::Smart(t) => t.lookup.get(window).copied(),
        }
    }

    /// States a full-length window maps to, with weights summing to one.
    /// Only smart spaces can return more than one state (Hamming ties).
    pub fn window_states(&self, window: &[u8]) -> Vec<(usize, f64)> {
        debug_assert_eq!(window.len(), self.order);
        if let Some(i) = self.index_of(window) {
            return vec![(i, 1.0)];
        }
        let ties = match &self.kind {
            Kind::Smart(t) => t.closest(window),
            _ => unreachable!("full and simple spaces hold every window"),
        };
        let w = 1.0 / ties.len() as f64;
        ties.into_iter().map(|i| (i, w)).collect()
    }

    /// States whose most recent `sensed.len()` slots agree with `sensed`.
    /// Empty only for a smart space that never saw the pattern.
    pub fn candidates(&self, sensed: &[u8]) -> Result<Vec<usize>> {
        self.check_pattern(sensed, self.order)?;
        let m = sensed.len();
        Ok(match &self.kind {
            Kind::Full => {
                let free = self.order - m;
                let base = Self::full_index(sensed) << free;
                (base..base + (1 << free)).collect()
            }
            Kind::Simple => {
                let q = sensed[0];
                let run = Self::leading_run(sensed);
                if run < m {
                    vec![self.run_index(q, run)]
                } else {
                    // the whole sensed vector is one run: it may extend further back
                    (m..=self.order).map(|r| self.run_index(q, r)).collect()
                }
            }
            Kind::Smart(t) => t
                .patterns
                .iter()
                .enumerate()
                .filter(|(_, p)| p[..m] == *sensed)
                .map(|(i, _)| i)
                .collect(),
        })
    }

    /// Smart-table entries at minimal Hamming distance from `pattern`,
    /// measured over its `pattern.len()` most recent bits.
    pub fn match_hamming(&self, pattern: &[u8]) -> Result<Vec<usize>> {
        self.check_pattern(pattern, self.order)?;
        match &self.kind {
            Kind::Smart(t) => Ok(t.closest(pattern)),
            _ => Err(Error::invalid("Hamming matching applies to smart state spaces")),
        }
    }

    /// Uniform belief over the candidates of a sensed vector.
    pub fn encode(&self, sensed: &[u8]) -> Result<Belief> {
        self.encode_within(sensed, None)
    }

    /// Like [`encode`](Self::encode), but when `allowed` is given candidates
    /// outside it are dropped as long as at least one allowed candidate
    /// remains.
    pub fn encode_within(&self, sensed: &[u8], allowed: Option<&[bool]>) -> Result<Belief> {
        let mut cands = self.candidates(sensed)?;
        if cands.is_empty() {
            cands = self.match_hamming(sensed)?;
        }
        if let Some(mask) = allowed {
            let kept: Vec<usize> = cands.iter().copied().filter(|&i| mask[i]).collect();
            if !kept.is_empty() {
                cands = kept;
            }
        }
        Ok(Belief::uniform_over(self.size(), &cands))
    }

    /// Mass on states whose current slot is active.
    pub fn active_probability(&self, belief: &Belief) -> f64 {
        let p: f64 = belief
            .as_slice()
            .iter()
            .enumerate()
            .filter(|&(i, &p)| p > 0.0 && self.leading_bit(i) == 1)
            .map(|(_, &p)| p)
            .sum();
        p.clamp(0.0, 1.0)
    }

    /// Structural successors: for each next bit, the state reached by
    /// shifting it in (absent when a smart table lacks the shifted pattern).
    pub fn successors(&self, index: usize) -> Vec<(u8, Option<usize>)> {
        match &self.kind {
            Kind::Full => {
                let shifted = index >> 1;
                let high = 1 << (self.order - 1);
                vec![(0, Some(shifted)), (1, Some(shifted | high))]
            }
            Kind::Simple => {
                let (q, r) = self.run_state(index).expect("simple state");
                vec![
                    (q, Some(self.run_index(q, (r + 1).min(self.order)))),
                    (1 - q, Some(self.run_index(1 - q, 1))),
                ]
            }
            Kind::Smart(t) => {
                let p = &t.patterns[index];
                [0u8, 1]
                    .into_iter()
                    .map(|b| {
                        let mut next = Vec::with_capacity(self.order);
                        next.push(b);
                        next.extend_from_slice(&p[..self.order - 1]);
                        (b, t.lookup.get(&next).copied())
                    })
                    .collect()
            }
        }
    }

    /// Shifted patterns of a smart state, one per next bit.
    pub(crate) fn shifted_patterns(&self, index: usize) -> Option<[Vec<u8>; 2]> {
        let p = match &self.kind {
            Kind::Smart(t) => &t.patterns[index],
            _ => return None,
        };
        let shift = |b: u8| {
            let mut next = vec![b];
            next.extend_from_slice(&p[..self.order - 1]);
            next
        };
        Some([shift(0), shift(1)])
    }

    /// Write the smart table, one pattern per line, most recent bit first.
    pub fn save_table(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let Kind::Smart(t) = &self.kind else {
            return Err(Error::invalid("only smart state spaces have a table"));
        };
        let mut out = String::new();
        for p in &t.patterns {
            out.extend(p.iter().map(|&b| char::from(b'0' + b)));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_table(path: impl AsRef<Path>, order: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut patterns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bits = line
                .chars()
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    _ => Err(Error::Parse {
                        path: path.display().to_string(),
                        line: i + 1,
                        token: line.to_string(),
                        reason: "expected a string of 0/1".into(),
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            patterns.push(bits);
        }
        Self::smart_from_patterns(order, patterns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{generate_synthetic, SyntheticSpec};

    fn toy(n: usize) -> Trace {
        generate_synthetic(&SyntheticSpec::periodic(3, n, 1)).unwrap()
    }

    fn smart_of(order: usize, patterns: &[&[u8]]) -> StateSpace {
        StateSpace::smart_from_patterns(order, patterns.iter().map(|p| p.to_vec()).collect())
            .unwrap()
    }

    #[test]
    fn full_sizes() {
        let s = StateSpace::full(1).unwrap();
        assert_eq!(s.size(), 2);
        assert_eq!(s.pattern(0).unwrap(), vec![0]);
        assert_eq!(s.pattern(1).unwrap(), vec![1]);
        assert_eq!(StateSpace::full(3).unwrap().size(), 8);
    }

    #[test]
    fn full_rejects_large_orders() {
        let err = StateSpace::full(30).unwrap_err().to_string();
        assert!(err.contains("smart"), "{err}");
        assert!(StateSpace::full(0).is_err());
    }

    #[test]
    fn full_index_is_big_endian() {
        let s = StateSpace::full(3).unwrap();
        assert_eq!(s.index_of(&[1, 0, 0]), Some(4));
        assert_eq!(s.index_of(&[0, 0, 1]), Some(1));
        for i in 0..8 {
            assert_eq!(s.index_of(&s.pattern(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn simple_sizes_and_runs() {
        assert_eq!(StateSpace::simple(20).unwrap().size(), 40);
        assert_eq!(StateSpace::simple(1).unwrap().size(), 2);
        let s = StateSpace::simple(5).unwrap();
        let i = s.index_of(&[0, 0, 0, 1, 1]).unwrap();
        assert_eq!(s.run_state(i), Some((0, 3)));
        let sat = s.index_of(&[1, 1, 1, 1, 1]).unwrap();
        assert_eq!(s.run_state(sat), Some((1, 5)));
    }

    #[test]
    fn smart_table_sizes() {
        let s = StateSpace::smart(&toy(60), 3, None).unwrap();
        assert_eq!(s.size(), 6);
        let ones = Trace::new(vec![1; 30], "ones").unwrap();
        assert_eq!(StateSpace::smart(&ones, 5, None).unwrap().size(), 1);
        assert!(StateSpace::smart(&toy(2), 3, None).is_err());
    }

    #[test]
    fn smart_cap_is_first_come() {
        let s = StateSpace::smart(&toy(60), 3, Some(2)).unwrap();
        // windows ending at t=2 and t=3 of 111000...
        assert_eq!(s.patterns(), &[vec![1, 1, 1], vec![0, 1, 1]]);
    }

    #[test]
    fn encode_ambiguous_full() {
        let s = StateSpace::full(3).unwrap();
        let b = s.encode(&[1, 1]).unwrap();
        assert_eq!(b.support(), vec![6, 7]);
        assert_eq!(b.as_slice()[6], 0.5);
        assert_eq!(b.as_slice()[7], 0.5);
        assert_eq!(s.active_probability(&b), 1.0);
    }

    #[test]
    fn encode_exact_full_is_one_hot() {
        let s = StateSpace::full(3).unwrap();
        let b = s.encode(&[1, 0, 1]).unwrap();
        assert_eq!(b, Belief::one_hot(8, 5));
    }

    #[test]
    fn encode_smart_suffix() {
        let s = StateSpace::smart(&toy(60), 3, None).unwrap();
        // by enumeration, the six windows of 111000 are the only entries and
        // exactly two of them start with 1,1
        let expected: Vec<usize> = s
            .patterns()
            .iter()
            .enumerate()
            .filter(|(_, p)| p[0] == 1 && p[1] == 1)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(expected.len(), 2);
        let b = s.encode(&[1, 1]).unwrap();
        assert_eq!(b.support(), expected);
        for &i in &expected {
            assert_eq!(b.as_slice()[i], 0.5);
        }
    }

    #[test]
    fn encode_simple_saturated_run() {
        let s = StateSpace::simple(5).unwrap();
        let b = s.encode(&[1, 1]).unwrap();
        let runs: Vec<_> = b.support().iter().map(|&i| s.run_state(i).unwrap()).collect();
        assert_eq!(runs, vec![(1, 2), (1, 3), (1, 4), (1, 5)]);
        let exact = s.encode(&[0, 1, 1]).unwrap();
        assert_eq!(exact.support(), vec![s.run_index(0, 1)]);
    }

    #[test]
    fn encode_within_restricts_candidates() {
        let s = StateSpace::full(3).unwrap();
        let mut mask = vec![false; 8];
        mask[4] = true;
        let b = s.encode_within(&[1, 0], Some(&mask)).unwrap();
        assert_eq!(b, Belief::one_hot(8, 4));
        // nothing allowed: keep every candidate
        let none = vec![false; 8];
        let b = s.encode_within(&[1, 0], Some(&none)).unwrap();
        assert_eq!(b.support(), vec![4, 5]);
    }

    #[test]
    fn hamming_matching() {
        let s = smart_of(3, &[&[1, 1, 1], &[0, 0, 0]]);
        assert_eq!(s.match_hamming(&[1, 1, 0]).unwrap(), vec![0]);
        assert_eq!(s.match_hamming(&[1, 1, 1]).unwrap(), vec![0]);

        // 101 and 011 are each one flip away from 111
        let tie = smart_of(3, &[&[1, 0, 1], &[0, 1, 1]]);
        assert_eq!(tie.match_hamming(&[1, 1, 1]).unwrap(), vec![0, 1]);
        let b = tie.encode(&[1, 1, 1]).unwrap();
        assert_eq!(b.as_slice(), &[0.5, 0.5]);

        // short patterns only compare the overlap
        assert_eq!(tie.match_hamming(&[1]).unwrap(), vec![0]);
        assert!(StateSpace::full(3).unwrap().match_hamming(&[1]).is_err());
    }

    #[test]
    fn active_probability_cases() {
        let s = StateSpace::full(3).unwrap();
        assert_eq!(s.active_probability(&Belief::one_hot(8, 5)), 1.0);
        assert_eq!(s.active_probability(&Belief::one_hot(8, 3)), 0.0);
        // [0,1,1] and [1,1,1]
        let b = Belief::uniform_over(8, &[3, 7]);
        assert_eq!(s.active_probability(&b), 0.5);
    }

    #[test]
    fn successors_cases() {
        let full = StateSpace::full(2).unwrap();
        let i = full.index_of(&[1, 0]).unwrap();
        let succ = full.successors(i);
        assert_eq!(
            succ,
            vec![
                (0, full.index_of(&[0, 1])),
                (1, full.index_of(&[1, 1]))
            ]
        );

        let simple = StateSpace::simple(3).unwrap();
        let succ = simple.successors(simple.run_index(1, 3));
        assert_eq!(
            succ,
            vec![
                (1, Some(simple.run_index(1, 3))),
                (0, Some(simple.run_index(0, 1)))
            ]
        );

        // the six windows of 111000 are 111, 011, 001, 000, 100, 110
        let smart = StateSpace::smart(&toy(60), 3, None).unwrap();
        let i = smart.index_of(&[1, 1, 1]).unwrap();
        let succ = smart.successors(i);
        assert_eq!(succ[0], (0, smart.index_of(&[0, 1, 1])));
        assert_eq!(succ[1], (1, Some(i)));
        let j = smart.index_of(&[0, 1, 1]).unwrap();
        let succ = smart.successors(j);
        assert_eq!(succ[0], (0, smart.index_of(&[0, 0, 1])));
        assert!(succ[0].1.is_some());
        assert_eq!(succ[1], (1, None));
    }

    #[test]
    fn full_successors_form_de_bruijn_graph() {
        for order in 1..=10 {
            let s = StateSpace::full(order).unwrap();
            let n = s.size();
            let mut indegree = vec![0usize; n];
            for i in 0..n {
                let succ = s.successors(i);
                assert_eq!(succ.len(), 2);
                let p = s.pattern(i).unwrap();
                for (b, j) in succ {
                    let j = j.unwrap();
                    indegree[j] += 1;
                    let q = s.pattern(j).unwrap();
                    // edge i -> j iff j's older bits are i's newer bits
                    assert_eq!(q[0], b);
                    assert_eq!(&q[1..], &p[..order - 1]);
                }
            }
            assert!(indegree.iter().all(|&d| d == 2));
        }
    }

    #[test]
    fn table_sidecar_roundtrip() {
        let s = StateSpace::smart(&toy(60), 3, None).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        s.save_table(f.path()).unwrap();
        let back = StateSpace::load_table(f.path(), 3).unwrap();
        assert_eq!(back, s);
        assert!(StateSpace::load_table(f.path(), 4).is_err());
    }

    proptest::proptest! {
        #[test]
        fn encode_is_a_distribution_on_matching_states(
            order in 1usize..8,
            bits in proptest::collection::vec(0u8..2, 8),
            m in 1usize..8,
        ) {
            let m = m.min(order);
            let sensed = &bits[..m];
            for s in [StateSpace::full(order).unwrap(), StateSpace::simple(order).unwrap()] {
                let b = s.encode(sensed).unwrap();
                proptest::prop_assert!((b.total() - 1.0).abs() < 1e-12);
                proptest::prop_assert!((s.active_probability(&b) - sensed[0] as f64).abs() < 1e-12);
                if s.variant() == Variant::Full {
                    for i in b.support() {
                        proptest::prop_assert_eq!(&s.pattern(i).unwrap()[..m], sensed);
                    }
                }
            }
        }

        #[test]
        fn full_window_encoding_is_bijective(order in 1usize..10) {
            let s = StateSpace::full(order).unwrap();
            for i in 0..s.size() {
                let b = s.encode(&s.pattern(i).unwrap()).unwrap();
                proptest::prop_assert_eq!(b, Belief::one_hot(s.size(), i));
            }
        }

        #[test]
        fn smart_fallback_uses_minimal_distance(
            trace in proptest::collection::vec(0u8..2, 12..40),
            probe in proptest::collection::vec(0u8..2, 4),
        ) {
            let t = Trace::new(trace, "p").unwrap();
            let s = StateSpace::smart(&t, 4, None).unwrap();
            let ties = s.match_hamming(&probe).unwrap();
            let dist = |p: &[u8]| p.iter().zip(&probe).filter(|(a, b)| a != b).count();
            let best = s.patterns().iter().map(|p| dist(p)).min().unwrap();
            for (i, p) in s.patterns().iter().enumerate() {
                proptest::prop_assert_eq!(ties.contains(&i), dist(p) == best);
            }
        }
    }
}
