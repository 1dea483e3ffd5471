//! Random-coding distributions `Q`.
//!
//! Exact pointwise log-probabilities, exact class masses `Q[T(x|y)]`, and
//! reproducible codebook sampling. Randomness comes from ChaCha8 keyed by the
//! master seed; codeword `i` reads stream `i`, so a codebook does not depend
//! on the order in which its codewords are generated.

use std::collections::HashMap;

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, invalid, too_large, Error, Result};
use crate::metric::MetricFamily;
use crate::types::{
    log2_big, multinomial, validate_distribution, EquivalenceClassKey, KeyKind, Sequence, Symbol,
};

/// Stream reserved for shared code structure (generator matrix, dither).
const SHARED_STREAM: u64 = u64::MAX;

/// Largest number of live states in the class-mass dynamic program.
const MAX_DP_STATES: usize = 1 << 22;

/// A feedback state machine: `t_1` fixed, `t_i = g(t_{i-1}, x_{i-1}, y_{i-1})`,
/// and `x_i ~ Q(. | t_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStateMachine {
    pub states: usize,
    pub initial: usize,
    pub y_alphabet: usize,
    /// `g(t, x, y)` stored at `((t * |X|) + x) * |Y| + y`.
    pub next_state: Vec<usize>,
    /// One distribution over `X` per state.
    pub distributions: Vec<Vec<f64>>,
}

impl FeedbackStateMachine {
    pub fn new(
        x_alphabet: usize,
        y_alphabet: usize,
        initial: usize,
        distributions: Vec<Vec<f64>>,
        g: impl Fn(usize, Symbol, Symbol) -> usize,
    ) -> Result<Self> {
        let states = distributions.len();
        let mut next_state = Vec::with_capacity(states * x_alphabet * y_alphabet);
        for t in 0..states {
            for a in 0..x_alphabet {
                for b in 0..y_alphabet {
                    next_state.push(g(t, a as Symbol, b as Symbol));
                }
            }
        }
        let machine = FeedbackStateMachine { states, initial, y_alphabet, next_state, distributions };
        machine.validate(x_alphabet)?;
        Ok(machine)
    }

    pub fn validate(&self, x_alphabet: usize) -> Result<()> {
        if self.states == 0 || self.initial >= self.states || self.distributions.len() != self.states {
            return Err(invalid("feedback machine needs one distribution per state and a valid initial state"));
        }
        if self.y_alphabet == 0 || self.next_state.len() != self.states * x_alphabet * self.y_alphabet {
            return Err(invalid("feedback transition table must be total over (t, x, y)"));
        }
        if self.next_state.iter().any(|&t| t >= self.states) {
            return Err(invalid("feedback transition maps outside the state set"));
        }
        for dist in &self.distributions {
            validate_distribution(dist, x_alphabet)?;
        }
        Ok(())
    }

    pub fn next(&self, t: usize, x: Symbol, y: Symbol, x_alphabet: usize) -> usize {
        self.next_state[(t * x_alphabet + x as usize) * self.y_alphabet + y as usize]
    }

    /// `t_1, .., t_n` along `(x, y)`.
    pub fn trace(&self, x: &Sequence, y: &Sequence) -> Vec<usize> {
        let mut out = Vec::with_capacity(x.len());
        let mut t = self.initial;
        for (&a, &b) in x.symbols().iter().zip(y.symbols()) {
            out.push(t);
            t = self.next(t, a, b, x.alphabet());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleKind {
    /// `Q(x) = prod_i q(x_i)`.
    Iid { distribution: Vec<f64> },
    /// Uniform over the type class with the given composition.
    UniformOverType { composition: Vec<u64> },
    /// Uniform over `X^n`.
    Uniform,
    /// Binary `x = u G (+) d` with random `G` (`k x n`) and uniform dither `d`.
    LinearDithered { message_bits: usize },
    /// `Q(x|y) = prod_i Q(x_i | t_i)` driven by a feedback state machine.
    FeedbackTree { machine: FeedbackStateMachine },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodingEnsemble {
    pub alphabet: usize,
    pub n: usize,
    #[serde(flatten)]
    pub kind: EnsembleKind,
}

impl CodingEnsemble {
    pub fn uniform(alphabet: usize, n: usize) -> Self {
        CodingEnsemble { alphabet, n, kind: EnsembleKind::Uniform }
    }

    pub fn iid(distribution: Vec<f64>, n: usize) -> Result<Self> {
        let e = CodingEnsemble { alphabet: distribution.len(), n, kind: EnsembleKind::Iid { distribution } };
        e.validate()?;
        Ok(e)
    }

    pub fn uniform_over_type(composition: Vec<u64>) -> Result<Self> {
        let n = composition.iter().sum::<u64>() as usize;
        let e = CodingEnsemble {
            alphabet: composition.len(),
            n,
            kind: EnsembleKind::UniformOverType { composition },
        };
        e.validate()?;
        Ok(e)
    }

    pub fn linear_dithered(n: usize, message_bits: usize) -> Result<Self> {
        let e = CodingEnsemble { alphabet: 2, n, kind: EnsembleKind::LinearDithered { message_bits } };
        e.validate()?;
        Ok(e)
    }

    pub fn feedback(alphabet: usize, n: usize, machine: FeedbackStateMachine) -> Result<Self> {
        let e = CodingEnsemble { alphabet, n, kind: EnsembleKind::FeedbackTree { machine } };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet == 0 || self.n == 0 {
            return Err(invalid("ensemble needs a positive alphabet and block length"));
        }
        match &self.kind {
            EnsembleKind::Iid { distribution } => validate_distribution(distribution, self.alphabet),
            EnsembleKind::UniformOverType { composition } => {
                if composition.len() != self.alphabet || composition.iter().sum::<u64>() != self.n as u64 {
                    return Err(invalid("composition must have one entry per symbol and sum to n"));
                }
                Ok(())
            }
            EnsembleKind::Uniform => Ok(()),
            EnsembleKind::LinearDithered { message_bits } => {
                if self.alphabet != 2 {
                    return Err(invalid("linear dithered ensembles are binary"));
                }
                if *message_bits == 0 || *message_bits > 63 {
                    return Err(invalid("message length must be in 1..=63 bits"));
                }
                Ok(())
            }
            EnsembleKind::FeedbackTree { machine } => machine.validate(self.alphabet),
        }
    }

    pub fn is_feedback(&self) -> bool {
        matches!(self.kind, EnsembleKind::FeedbackTree { .. })
    }

    /// True when `Q(x')` depends on `x'` only through its composition.
    pub fn is_exchangeable(&self) -> bool {
        !self.is_feedback()
    }

    /// Per-symbol law of an i.i.d. ensemble (uniform and linear-dithered included).
    pub fn symbol_distribution(&self) -> Option<Vec<f64>> {
        match &self.kind {
            EnsembleKind::Iid { distribution } => Some(distribution.clone()),
            EnsembleKind::Uniform | EnsembleKind::LinearDithered { .. } => {
                Some(vec![1.0 / self.alphabet as f64; self.alphabet])
            }
            _ => None,
        }
    }

    fn check_sequence(&self, x: &Sequence) -> Result<()> {
        if x.alphabet() != self.alphabet || x.len() != self.n {
            return Err(invalid(format!(
                "sequence of length {} over {} symbols does not fit ensemble (n = {}, |X| = {})",
                x.len(),
                x.alphabet(),
                self.n,
                self.alphabet
            )));
        }
        Ok(())
    }

    /// `log2 Q(x)` of any sequence with this composition; `-inf` outside the support.
    pub fn log_prob_of_composition(&self, composition: &[u64]) -> Result<f64> {
        match &self.kind {
            EnsembleKind::Iid { distribution } => Ok(composition
                .iter()
                .zip(distribution)
                .filter(|(&k, _)| k > 0)
                .map(|(&k, &q)| if q > 0.0 { k as f64 * q.log2() } else { f64::NEG_INFINITY })
                .sum()),
            EnsembleKind::Uniform | EnsembleKind::LinearDithered { .. } => {
                Ok(-(self.n as f64) * (self.alphabet as f64).log2())
            }
            EnsembleKind::UniformOverType { composition: target } => {
                if composition == target.as_slice() {
                    Ok(-log2_big(&multinomial(self.n as u64, target)))
                } else {
                    Ok(f64::NEG_INFINITY)
                }
            }
            EnsembleKind::FeedbackTree { .. } => Err(Error::Unsupported(
                "feedback ensembles are not exchangeable; Q(x|y) needs y".into(),
            )),
        }
    }
}

/// `log2 Q(x)`, or `log2 Q(x|y)` for feedback ensembles.
pub fn log_prob(ensemble: &CodingEnsemble, x: &Sequence, y: Option<&Sequence>) -> Result<f64> {
    ensemble.check_sequence(x)?;
    match (&ensemble.kind, y) {
        (EnsembleKind::FeedbackTree { machine }, Some(y)) => {
            check_same_len(x.len(), y.len())?;
            if y.alphabet() != machine.y_alphabet {
                return Err(invalid("output alphabet does not match the feedback machine"));
            }
            let trace = machine.trace(x, y);
            Ok(x.symbols()
                .iter()
                .zip(&trace)
                .map(|(&a, &t)| {
                    let q = machine.distributions[t][a as usize];
                    if q > 0.0 {
                        q.log2()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .sum())
        }
        (EnsembleKind::FeedbackTree { .. }, None) => {
            Err(invalid("feedback ensemble needs the output sequence y"))
        }
        _ => ensemble.log_prob_of_composition(&x.composition()),
    }
}

/// `log2 Q[T(x|y)]` for the class identified by `key`.
///
/// Uses the closed form `Q(x) |T_{x|y}|` when `Q` is constant on the class
/// (exchangeable ensembles with additive families) and an exact dynamic
/// program over positions otherwise (finite-state families, feedback
/// ensembles).
pub fn class_probability(
    ensemble: &CodingEnsemble,
    family: &MetricFamily,
    key: &EquivalenceClassKey,
    y: &Sequence,
) -> Result<f64> {
    check_key(ensemble, family, key, y)?;
    match (key.kind, ensemble.is_exchangeable()) {
        (KeyKind::Additive, true) => {
            let joint = key.joint_type()?;
            let log_q = ensemble.log_prob_of_composition(&joint.x_marginal())?;
            if log_q == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(log_q + log2_big(&joint.conditional_class_size()))
        }
        (KeyKind::MacXor, _) => Err(Error::Unsupported(
            "MAC class masses are computed by the MAC universal metric".into(),
        )),
        _ => class_probability_dp(ensemble, family, key, y),
    }
}

fn check_key(ensemble: &CodingEnsemble, family: &MetricFamily, key: &EquivalenceClassKey, y: &Sequence) -> Result<()> {
    let (xa, ya) = family.alphabets();
    if xa != ensemble.alphabet || y.alphabet() != ya || y.len() != ensemble.n {
        return Err(invalid("ensemble, family and output disagree on alphabets or length"));
    }
    let expected_kind = match family {
        MetricFamily::Additive { .. } => KeyKind::Additive,
        MetricFamily::FiniteState { .. } => KeyKind::FiniteState,
        MetricFamily::MacXorAdditive { .. } => KeyKind::MacXor,
    };
    if key.kind != expected_kind || key.counts.len() != family.parameter_len() {
        return Err(invalid("key was not produced by this family"));
    }
    if key.joint_type()?.y_marginal() != y.composition() {
        return Err(invalid("key is inconsistent with the output sequence"));
    }
    Ok(())
}

/// Sums `Q(x'|y)` over all `x'` whose count statistic equals `key`, position by
/// position, carrying (feedback state, metric state, counts consumed so far).
fn class_probability_dp(
    ensemble: &CodingEnsemble,
    family: &MetricFamily,
    key: &EquivalenceClassKey,
    y: &Sequence,
) -> Result<f64> {
    let xa = ensemble.alphabet;
    let ya = y.alphabet();
    let (metric_states, next_metric, metric_initial) = match family {
        MetricFamily::FiniteState { states, next_state, initial, .. } => (*states, Some(next_state), *initial),
        _ => (1, None, 0),
    };
    let cell = |a: usize, b: usize, s: usize| (a * ya + b) * metric_states + s;

    // Per-symbol weights; uniform_over_type counts members and rescales at the end.
    let (machine, fixed_weights, scale) = match &ensemble.kind {
        EnsembleKind::FeedbackTree { machine } => (Some(machine), None, 0.0),
        EnsembleKind::UniformOverType { composition } => {
            let joint = key.joint_type()?;
            if joint.x_marginal() != *composition {
                return Ok(f64::NEG_INFINITY);
            }
            (None, Some(vec![1.0; xa]), -log2_big(&multinomial(ensemble.n as u64, composition)))
        }
        _ => (None, ensemble.symbol_distribution(), 0.0),
    };

    let mut layer: HashMap<(usize, usize, Vec<u32>), f64> = HashMap::new();
    let start_t = machine.map_or(0, |m| m.initial);
    layer.insert((start_t, metric_initial, vec![0; key.counts.len()]), 1.0);

    for &b in y.symbols() {
        let b = b as usize;
        let mut next_layer: HashMap<(usize, usize, Vec<u32>), f64> = HashMap::with_capacity(layer.len() * 2);
        for ((t, s, used), mass) in layer {
            for a in 0..xa {
                let c = cell(a, b, s);
                if used[c] as u64 >= key.counts[c] {
                    continue;
                }
                let w = match (machine, &fixed_weights) {
                    (Some(m), _) => m.distributions[t][a],
                    (None, Some(weights)) => weights[a],
                    (None, None) => unreachable!("every ensemble kind supplies weights"),
                };
                if w == 0.0 {
                    continue;
                }
                let t_next = machine.map_or(0, |m| m.next(t, a as Symbol, b as Symbol, xa));
                let s_next = next_metric.map_or(0, |g| g[cell(a, b, s)]);
                let mut used_next = used.clone();
                used_next[c] += 1;
                *next_layer.entry((t_next, s_next, used_next)).or_insert(0.0) += mass * w;
            }
        }
        if next_layer.len() > MAX_DP_STATES {
            return Err(too_large(format!("class-mass recursion reached {} states", next_layer.len())));
        }
        layer = next_layer;
    }

    let total: f64 = layer.values().sum();
    if total <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(total.log2() + scale)
}

/// Number of messages for rate `R`: `floor(2^{nR})`, at least 2.
pub fn messages_for_rate(n: usize, rate: f64) -> u64 {
    let exponent = n as f64 * rate;
    if exponent >= 63.0 {
        return u64::MAX / 2;
    }
    (exponent.exp2().floor() as u64).max(2)
}

/// The shared structure of a linear dithered code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearCode {
    /// `k` rows of `n` bits.
    pub generator: Vec<Vec<u8>>,
    pub dither: Vec<u8>,
}

impl LinearCode {
    pub fn sample(n: usize, k: usize, rng: &mut impl Rng) -> Self {
        let generator = (0..k).map(|_| (0..n).map(|_| rng.random_range(0..2u8)).collect()).collect();
        let dither = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        LinearCode { generator, dither }
    }

    /// `u G (+) d`, with `u` the binary expansion of `message` (bit `r` selects row `r`).
    pub fn encode(&self, message: u64) -> Sequence {
        let mut bits = self.dither.clone();
        for (r, row) in self.generator.iter().enumerate() {
            if (message >> r) & 1 == 1 {
                for (bit, &g) in bits.iter_mut().zip(row) {
                    *bit ^= g;
                }
            }
        }
        let symbols = bits.into_iter().map(Symbol::from).collect();
        Sequence::new(symbols, 2).expect("binary codeword")
    }
}

/// A set of codewords drawn from an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub codewords: Vec<Sequence>,
    /// `log2(M) / n`.
    pub rate: f64,
    pub seed: u64,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }
}

/// RNG for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn draw_symbol(distribution: &[f64], rng: &mut impl Rng) -> Symbol {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &p) in distribution.iter().enumerate() {
        acc += p;
        if u < acc {
            return a as Symbol;
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last supported symbol.
    distribution.iter().rposition(|&p| p > 0.0).unwrap_or(0) as Symbol
}

fn sample_word(ensemble: &CodingEnsemble, rng: &mut ChaCha8Rng) -> Result<Sequence> {
    let symbols: Vec<Symbol> = match &ensemble.kind {
        EnsembleKind::Iid { distribution } => (0..ensemble.n).map(|_| draw_symbol(distribution, rng)).collect(),
        EnsembleKind::Uniform => (0..ensemble.n).map(|_| rng.random_range(0..ensemble.alphabet as Symbol)).collect(),
        EnsembleKind::UniformOverType { composition } => {
            let mut word: Vec<Symbol> = composition
                .iter()
                .enumerate()
                .flat_map(|(a, &k)| std::iter::repeat_n(a as Symbol, k as usize))
                .collect();
            word.shuffle(rng);
            word
        }
        EnsembleKind::LinearDithered { .. } | EnsembleKind::FeedbackTree { .. } => {
            unreachable!("handled by the caller")
        }
    };
    Sequence::new(symbols, ensemble.alphabet)
}

/// Draws `m` pairwise independent codewords. Deterministic in `(ensemble, m, seed)`.
pub fn sample_codebook(ensemble: &CodingEnsemble, m: u64, seed: u64) -> Result<Codebook> {
    ensemble.validate()?;
    if m < 2 {
        return Err(invalid("a codebook needs at least two codewords"));
    }
    let codewords = match &ensemble.kind {
        EnsembleKind::FeedbackTree { .. } => {
            return Err(Error::Unsupported(
                "feedback codewords are trees; use sample_feedback_codebook".into(),
            ))
        }
        EnsembleKind::LinearDithered { message_bits } => {
            if *message_bits < 64 && m > 1u64 << message_bits {
                return Err(invalid(format!("{m} messages exceed 2^{message_bits}")));
            }
            let code = LinearCode::sample(ensemble.n, *message_bits, &mut stream_rng(seed, SHARED_STREAM));
            (0..m).map(|i| code.encode(i)).collect()
        }
        _ => (0..m)
            .map(|i| sample_word(ensemble, &mut stream_rng(seed, i)))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Codebook { codewords, rate: (m as f64).log2() / ensemble.n as f64, seed })
}

/// A codeword of a feedback ensemble: an independent symbol draw at every node
/// of the depth-`n` tree indexed by past outputs, `x_i ~ Q(. | t_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeedbackCodeword {
    pub seed: u64,
}

impl FeedbackCodeword {
    /// The symbol at node `y^{i-1}`, given the current feedback state.
    pub fn symbol(&self, machine: &FeedbackStateMachine, position: usize, node: u64, state: usize) -> Symbol {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(self.seed, position as u64), node));
        draw_symbol(&machine.distributions[state], &mut rng)
    }

    /// The input sequence this tree produces along output `y`.
    pub fn realize(&self, ensemble: &CodingEnsemble, y: &Sequence) -> Result<Sequence> {
        let EnsembleKind::FeedbackTree { machine } = &ensemble.kind else {
            return Err(invalid("not a feedback ensemble"));
        };
        let mut walker = TreeWalker::new(machine.initial);
        let mut symbols = Vec::with_capacity(y.len());
        for &b in y.symbols() {
            let a = walker.emit(self, machine);
            walker.observe(machine, a, b, ensemble.alphabet);
            symbols.push(a);
        }
        Sequence::new(symbols, ensemble.alphabet)
    }
}

/// Position inside a feedback tree while outputs are revealed one at a time.
#[derive(Clone, Debug)]
pub struct TreeWalker {
    position: usize,
    node: u64,
    state: usize,
}

impl TreeWalker {
    pub fn new(initial: usize) -> Self {
        TreeWalker { position: 0, node: 0x5eed, state: initial }
    }

    pub fn emit(&self, word: &FeedbackCodeword, machine: &FeedbackStateMachine) -> Symbol {
        word.symbol(machine, self.position, self.node, self.state)
    }

    pub fn observe(&mut self, machine: &FeedbackStateMachine, x: Symbol, y: Symbol, x_alphabet: usize) {
        self.state = machine.next(self.state, x, y, x_alphabet);
        self.node = mix(self.node, y as u64 + 1);
        self.position += 1;
    }
}

pub fn sample_feedback_codebook(ensemble: &CodingEnsemble, m: u64, seed: u64) -> Result<Vec<FeedbackCodeword>> {
    if !ensemble.is_feedback() {
        return Err(invalid("not a feedback ensemble"));
    }
    if m < 2 {
        return Err(invalid("a codebook needs at least two codewords"));
    }
    Ok((0..m).map(|i| FeedbackCodeword { seed: mix(seed, i) }).collect())
}

/// SplitMix64 finaliser over a pair of words.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `(x, log2 Q(x))` for all `x` in `X^n`; the ensemble must not need `y`.
pub fn enumerate_support(ensemble: &CodingEnsemble) -> Result<Vec<(Sequence, f64)>> {
    Sequence::all(ensemble.alphabet, ensemble.n)?
        .map(|x| {
            let lp = log_prob(ensemble, &x, None)?;
            Ok((x, lp))
        })
        .collect()
}

/// Total mass check helper used by audits: `sum_x 2^{log Q(x|y)}`.
pub fn total_mass(ensemble: &CodingEnsemble, y: Option<&Sequence>) -> Result<f64> {
    Sequence::all(ensemble.alphabet, ensemble.n)?
        .map(|x| log_prob(ensemble, &x, y).map(f64::exp2))
        .sum()
}

/// `|T_x|` for a composition as `f64`, for reporting.
pub fn type_class_size(composition: &[u64]) -> f64 {
    let n = composition.iter().sum();
    multinomial(n, composition).to_f64().unwrap_or(f64::INFINITY)
}
