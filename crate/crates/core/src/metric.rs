//! Reference classes of decoding metrics `{m_theta}`.
//!
//! A [`MetricFamily`] fixes the structure (alphabets, state machine); a
//! [`MetricIndex`] supplies the real parameter tensor `theta`. Scores are
//! evaluated from the family's count statistic, so two inputs in the same
//! equivalence class always receive bit-identical scores.

use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, invalid, Error, Result};
use crate::types::{class_key, mac_class_key, Sequence, Symbol};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricFamily {
    /// `m(x, y) = sum_i theta(x_i, y_i)`.
    Additive { x_alphabet: usize, y_alphabet: usize },
    /// `m(x, y) = sum_i theta(x_i, y_i, s_i)` with `s_{i+1} = g(x_i, y_i, s_i)`.
    FiniteState {
        x_alphabet: usize,
        y_alphabet: usize,
        states: usize,
        /// `g(x, y, s)` stored at `((x * |Y|) + y) * states + s`.
        next_state: Vec<usize>,
        initial: usize,
    },
    /// `m(x1, x2, y) = sum_i theta(x1_i (+) x2_i, y_i)`, addition modulo `alphabet`.
    MacXorAdditive { alphabet: usize, y_alphabet: usize },
}

impl MetricFamily {
    pub fn additive(x_alphabet: usize, y_alphabet: usize) -> Self {
        MetricFamily::Additive { x_alphabet, y_alphabet }
    }

    pub fn mac_xor_additive(alphabet: usize, y_alphabet: usize) -> Self {
        MetricFamily::MacXorAdditive { alphabet, y_alphabet }
    }

    /// Builds a finite-state family by tabulating `g`.
    pub fn finite_state(
        x_alphabet: usize,
        y_alphabet: usize,
        states: usize,
        initial: usize,
        g: impl Fn(Symbol, Symbol, usize) -> usize,
    ) -> Result<Self> {
        let mut next_state = Vec::with_capacity(x_alphabet * y_alphabet * states);
        for a in 0..x_alphabet {
            for b in 0..y_alphabet {
                for s in 0..states {
                    next_state.push(g(a as Symbol, b as Symbol, s));
                }
            }
        }
        let family = MetricFamily::FiniteState { x_alphabet, y_alphabet, states, next_state, initial };
        family.validate()?;
        Ok(family)
    }

    pub fn validate(&self) -> Result<()> {
        let (xa, ya) = self.alphabets();
        if xa == 0 || ya == 0 {
            return Err(invalid("metric family alphabets must be positive"));
        }
        if let MetricFamily::FiniteState { x_alphabet, y_alphabet, states, next_state, initial } = self {
            if *states == 0 || *initial >= *states {
                return Err(invalid("finite-state family needs a valid initial state"));
            }
            if next_state.len() != x_alphabet * y_alphabet * states {
                return Err(invalid("next-state table must be total over (x, y, s)"));
            }
            if next_state.iter().any(|&s| s >= *states) {
                return Err(invalid("next-state table maps outside the state set"));
            }
        }
        Ok(())
    }

    /// `(|X|, |Y|)`; for the MAC family `|X|` is the per-user alphabet.
    pub fn alphabets(&self) -> (usize, usize) {
        match self {
            MetricFamily::Additive { x_alphabet, y_alphabet }
            | MetricFamily::FiniteState { x_alphabet, y_alphabet, .. } => (*x_alphabet, *y_alphabet),
            MetricFamily::MacXorAdditive { alphabet, y_alphabet } => (*alphabet, *y_alphabet),
        }
    }

    /// Number of entries in a parameter tensor for this family.
    pub fn parameter_len(&self) -> usize {
        match self {
            MetricFamily::Additive { x_alphabet, y_alphabet } => x_alphabet * y_alphabet,
            MetricFamily::FiniteState { x_alphabet, y_alphabet, states, .. } => x_alphabet * y_alphabet * states,
            MetricFamily::MacXorAdditive { alphabet, y_alphabet } => alphabet * y_alphabet,
        }
    }

    pub fn is_mac(&self) -> bool {
        matches!(self, MetricFamily::MacXorAdditive { .. })
    }

    pub(crate) fn check_alphabets(&self, x: &Sequence, y: &Sequence) -> Result<()> {
        let (xa, ya) = self.alphabets();
        if x.alphabet() != xa || y.alphabet() != ya {
            return Err(invalid(format!(
                "sequences over ({}, {}) do not match family alphabets ({xa}, {ya})",
                x.alphabet(),
                y.alphabet()
            )));
        }
        Ok(())
    }

    /// State sequence `s_1, .., s_n`; all zeros for stateless families.
    pub fn state_trace(&self, x: &Sequence, y: &Sequence) -> Result<Vec<usize>> {
        check_same_len(x.len(), y.len())?;
        match self {
            MetricFamily::FiniteState { y_alphabet, states, next_state, initial, .. } => {
                let mut trace = Vec::with_capacity(x.len());
                let mut s = *initial;
                for (&a, &b) in x.symbols().iter().zip(y.symbols()) {
                    trace.push(s);
                    s = next_state[(a as usize * y_alphabet + b as usize) * states + s];
                }
                Ok(trace)
            }
            _ => Ok(vec![0; x.len()]),
        }
    }
}

/// A parameter tensor `theta`, laid out like the family's count statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricIndex {
    pub values: Vec<f64>,
}

impl MetricIndex {
    pub fn new(family: &MetricFamily, values: Vec<f64>) -> Result<Self> {
        let index = MetricIndex { values };
        index.check(family)?;
        Ok(index)
    }

    pub fn check(&self, family: &MetricFamily) -> Result<()> {
        if self.values.len() != family.parameter_len() {
            return Err(invalid(format!(
                "theta has {} entries, family expects {}",
                self.values.len(),
                family.parameter_len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("theta entries must be finite"));
        }
        Ok(())
    }

    /// `theta(x, y) = 1{x = y}` for a square additive or MAC family.
    pub fn hamming_match(family: &MetricFamily) -> Result<Self> {
        let (xa, ya) = family.alphabets();
        if xa != ya || matches!(family, MetricFamily::FiniteState { .. }) {
            return Err(Error::Unsupported("hamming-match metric needs a square stateless family".into()));
        }
        let values = (0..xa)
            .flat_map(|a| (0..ya).map(move |b| if a == b { 1.0 } else { 0.0 }))
            .collect();
        Ok(MetricIndex { values })
    }

    /// Evaluates `theta` against a count tensor of the same layout.
    pub fn dot(&self, counts: &[u64]) -> f64 {
        counts
            .iter()
            .zip(&self.values)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &t)| c as f64 * t)
            .sum()
    }
}

/// `m_theta(x, y)` for additive and finite-state families.
pub fn metric_score(family: &MetricFamily, theta: &MetricIndex, x: &Sequence, y: &Sequence) -> Result<f64> {
    theta.check(family)?;
    let key = class_key(family, x, y)?;
    Ok(theta.dot(&key.counts))
}

/// `m_theta(x1, x2, y)` for the MAC family.
pub fn mac_metric_score(
    family: &MetricFamily,
    theta: &MetricIndex,
    x1: &Sequence,
    x2: &Sequence,
    y: &Sequence,
) -> Result<f64> {
    theta.check(family)?;
    let key = mac_class_key(family, x1, x2, y)?;
    Ok(theta.dot(&key.counts))
}

/// The default binary grid: `theta = [[0, 0], [a0, a1]]` for `a0, a1` on an
/// evenly spaced `side x side` grid over `[-1, 1]`.
///
/// For binary stateless families the decision made by `m_theta` only depends
/// on `theta(1, b) - theta(0, b)`, so this grid covers the class up to scale.
/// The point `(-1, 1)` orders codewords exactly like `1{x = y}`.
pub fn binary_theta_grid(side: usize) -> Vec<MetricIndex> {
    let levels: Vec<f64> = if side <= 1 {
        vec![0.0]
    } else {
        (0..side).map(|k| -1.0 + 2.0 * k as f64 / (side - 1) as f64).collect()
    };
    let mut grid = Vec::with_capacity(side * side);
    for &a0 in &levels {
        for &a1 in &levels {
            grid.push(MetricIndex { values: vec![0.0, 0.0, a0, a1] });
        }
    }
    grid
}

/// `count` parameter tensors with entries uniform on `[-1, 1]`, from a fixed seed.
pub fn random_theta_grid(family: &MetricFamily, count: usize, seed: u64) -> Vec<MetricIndex> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| MetricIndex {
            values: (0..family.parameter_len()).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        })
        .collect()
}
