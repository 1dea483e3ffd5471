//! Exact checks of `Pr(union A_i) >= 1/2 min{1, sum Pr(A_i)}` for pairwise
//! independent events on a finite probability space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// How the pairwise independence of a family is established.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// Claimed, and verified by enumeration before the bound is applied.
    PairwiseIndependent,
    /// No claim; the bound is reported for information only.
    None,
}

/// A subset of `{0, .., outcomes - 1}` stored as a bitset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSet {
    pub words: Vec<u64>,
}

impl EventSet {
    pub fn empty(outcomes: usize) -> Self {
        EventSet { words: vec![0; outcomes.div_ceil(64)] }
    }

    pub fn from_indices(outcomes: usize, indices: &[usize]) -> Result<Self> {
        let mut set = EventSet::empty(outcomes);
        for &i in indices {
            if i >= outcomes {
                return Err(invalid(format!("outcome {i} outside a space of {outcomes}")));
            }
            set.insert(i);
        }
        Ok(set)
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    fn count_and(&self, other: &EventSet) -> u64 {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as u64).sum()
    }
}

/// A finite probability space with a list of events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventFamilySpec {
    pub name: String,
    pub outcomes: usize,
    /// Outcome probabilities; uniform when absent.
    pub weights: Option<Vec<f64>>,
    pub events: Vec<EventSet>,
    pub certificate: Certificate,
}

impl EventFamilySpec {
    /// `A_S = {b in {0,1}^bits : XOR_{i in S} b_i = 1}` for every nonempty `S`.
    pub fn xor(bits: u32) -> Self {
        let outcomes = 1usize << bits;
        let events = (1..outcomes)
            .map(|s| {
                let mut set = EventSet::empty(outcomes);
                for b in 0..outcomes {
                    if (b & s).count_ones() % 2 == 1 {
                        set.insert(b);
                    }
                }
                set
            })
            .collect();
        EventFamilySpec {
            name: format!("xor{bits}"),
            outcomes,
            weights: None,
            events,
            certificate: Certificate::PairwiseIndependent,
        }
    }

    /// `count` independent fair coin events.
    pub fn independent_fair(count: u32) -> Self {
        let outcomes = 1usize << count;
        let events = (0..count)
            .map(|i| {
                let mut set = EventSet::empty(outcomes);
                for b in 0..outcomes {
                    if b >> i & 1 == 1 {
                        set.insert(b);
                    }
                }
                set
            })
            .collect();
        EventFamilySpec {
            name: format!("independent{count}"),
            outcomes,
            weights: None,
            events,
            certificate: Certificate::PairwiseIndependent,
        }
    }

    fn prob(&self, set: &EventSet) -> f64 {
        match &self.weights {
            None => set.count() as f64 / self.outcomes as f64,
            Some(w) => (0..self.outcomes).filter(|&i| set.contains(i)).map(|i| w[i]).sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        let words = self.outcomes.div_ceil(64);
        if self.outcomes == 0 || self.events.iter().any(|e| e.words.len() != words) {
            return Err(invalid("events must be bitsets over the declared space"));
        }
        let spill = self.outcomes % 64;
        if spill != 0 && self.events.iter().any(|e| e.words[words - 1] >> spill != 0) {
            return Err(invalid("event contains an outcome outside the space"));
        }
        if let Some(w) = &self.weights {
            crate::types::validate_distribution(w, self.outcomes)?;
        }
        Ok(())
    }

    /// Exact check of `Pr(A_i A_j) = Pr(A_i) Pr(A_j)` for all `i < j`.
    pub fn pairwise_independent(&self) -> bool {
        let k = self.events.len();
        match &self.weights {
            None => {
                let counts: Vec<u64> = self.events.iter().map(EventSet::count).collect();
                let size = self.outcomes as u128;
                (0..k).all(|i| {
                    (i + 1..k).all(|j| {
                        self.events[i].count_and(&self.events[j]) as u128 * size == counts[i] as u128 * counts[j] as u128
                    })
                })
            }
            Some(_) => {
                let probs: Vec<f64> = self.events.iter().map(|e| self.prob(e)).collect();
                (0..k).all(|i| {
                    (i + 1..k).all(|j| {
                        let mut both = self.events[i].clone();
                        for (a, b) in both.words.iter_mut().zip(&self.events[j].words) {
                            *a &= b;
                        }
                        (self.prob(&both) - probs[i] * probs[j]).abs() <= 1e-12
                    })
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShulmanReport {
    pub name: String,
    pub events: usize,
    pub union: f64,
    pub sum: f64,
    /// `1/2 min{1, sum}`.
    pub bound: f64,
    pub independence_verified: bool,
    pub holds: bool,
}

/// Evaluates the union probability exactly and compares it with the bound.
/// A family that claims pairwise independence but lacks it is rejected.
pub fn shulman_check(spec: &EventFamilySpec) -> Result<ShulmanReport> {
    spec.validate()?;
    let verified = spec.certificate == Certificate::PairwiseIndependent;
    if verified && !spec.pairwise_independent() {
        return Err(invalid(format!("family {} is not pairwise independent", spec.name)));
    }
    let mut union = EventSet::empty(spec.outcomes);
    for e in &spec.events {
        for (a, b) in union.words.iter_mut().zip(&e.words) {
            *a |= b;
        }
    }
    let union = spec.prob(&union);
    let sum: f64 = spec.events.iter().map(|e| spec.prob(e)).sum();
    let bound = 0.5 * sum.min(1.0);
    Ok(ShulmanReport {
        name: spec.name.clone(),
        events: spec.events.len(),
        union,
        sum,
        bound,
        independence_verified: verified,
        holds: union >= bound * (1.0 - 1e-12),
    })
}

fn gf2_rank(rows: &[u32]) -> usize {
    let mut basis: Vec<u32> = Vec::new();
    for &r in rows {
        let mut v = r;
        for &b in &basis {
            v = v.min(v ^ b);
        }
        if v != 0 {
            basis.push(v);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// A random pairwise independent family on `{0,1}^bits` (uniform): event `i`
/// is `{b : L_i b in S_i}` for a random `r_i x bits` matrix `L_i` over GF(2)
/// and a random nonempty `S_i`. Any two events use jointly independent rows,
/// so their projections are independent uniform vectors.
pub fn random_linear_family(bits: u32, seed: u64) -> Result<EventFamilySpec> {
    if !(3..=16).contains(&bits) {
        return Err(invalid("random families use between 3 and 16 bits"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcomes = 1usize << bits;
    let target = rng.random_range(2..=(2 * bits as usize).min(24));
    let mut matrices: Vec<Vec<u32>> = Vec::new();
    let mut events = Vec::new();
    let mut attempts = 0;
    while matrices.len() < target && attempts < 50 * target {
        attempts += 1;
        let r = rng.random_range(1..=3u32.min(bits / 2));
        let rows: Vec<u32> = (0..r).map(|_| rng.random_range(1..(1u32 << bits))).collect();
        let fits = gf2_rank(&rows) == rows.len()
            && matrices.iter().all(|m| {
                let joint: Vec<u32> = m.iter().chain(&rows).copied().collect();
                gf2_rank(&joint) == joint.len()
            });
        if !fits {
            continue;
        }
        let images = 1u32 << r;
        let accept: Vec<bool> = loop {
            let density = rng.random_range(0.05..0.6);
            let pick: Vec<bool> = (0..images).map(|_| rng.random_bool(density)).collect();
            if pick.iter().any(|&p| p) {
                break pick;
            }
        };
        let mut set = EventSet::empty(outcomes);
        for b in 0..outcomes as u32 {
            let image = rows.iter().enumerate().fold(0u32, |acc, (k, row)| acc | (((row & b).count_ones() & 1) << k));
            if accept[image as usize] {
                set.insert(b as usize);
            }
        }
        events.push(set);
        matrices.push(rows);
    }
    Ok(EventFamilySpec {
        name: format!("linear{bits}:{seed}"),
        outcomes,
        weights: None,
        events,
        certificate: Certificate::PairwiseIndependent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_events() {
        let spec = EventFamilySpec {
            name: "disjoint".into(),
            outcomes: 10,
            weights: None,
            events: vec![EventSet::from_indices(10, &[0]).unwrap(), EventSet::from_indices(10, &[1]).unwrap()],
            certificate: Certificate::None,
        };
        let r = shulman_check(&spec).unwrap();
        assert!((r.union - 0.2).abs() < 1e-12 && (r.bound - 0.1).abs() < 1e-12 && r.holds);
        assert!(!spec.pairwise_independent());
        let claimed = EventFamilySpec { certificate: Certificate::PairwiseIndependent, ..spec };
        assert!(shulman_check(&claimed).is_err());
    }

    #[test]
    fn xor_family() {
        let spec = EventFamilySpec::xor(4);
        assert_eq!(spec.events.len(), 15);
        let r = shulman_check(&spec).unwrap();
        assert!((r.union - 15.0 / 16.0).abs() < 1e-12);
        assert!((r.sum - 7.5).abs() < 1e-12 && (r.bound - 0.5).abs() < 1e-12);
        assert!(r.holds && r.independence_verified);
    }

    #[test]
    fn independent_fair_events() {
        let r = shulman_check(&EventFamilySpec::independent_fair(3)).unwrap();
        assert!((r.union - 0.875).abs() < 1e-12 && r.holds);
    }

    #[test]
    fn weighted_space() {
        // Two independent biased coins on a 4-point product space.
        let w = vec![0.42, 0.18, 0.28, 0.12];
        let spec = EventFamilySpec {
            name: "biased".into(),
            outcomes: 4,
            weights: Some(w),
            events: vec![EventSet::from_indices(4, &[1, 3]).unwrap(), EventSet::from_indices(4, &[2, 3]).unwrap()],
            certificate: Certificate::PairwiseIndependent,
        };
        let r = shulman_check(&spec).unwrap();
        assert!((r.union - 0.58).abs() < 1e-12 && r.holds);
    }

    #[test]
    fn random_families_are_certified() {
        for seed in 0..20 {
            let spec = random_linear_family(10, seed).unwrap();
            assert!(spec.events.len() >= 2);
            assert!(spec.pairwise_independent());
            assert!(shulman_check(&spec).unwrap().holds);
        }
    }

    #[test]
    fn rank() {
        assert_eq!(gf2_rank(&[1, 2, 3]), 2);
        assert_eq!(gf2_rank(&[1, 2, 4]), 3);
    }
}
