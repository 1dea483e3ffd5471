//! Channel models used to exercise decoders.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{draw_symbol, stream_rng};
use crate::error::{check_same_len, invalid, Error, Result};
use crate::types::{validate_distribution, Sequence, Symbol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSource {
    Iid { distribution: Vec<f64> },
    /// An individual noise sequence; the channel becomes deterministic.
    Fixed { sequence: Vec<Symbol> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    /// Memoryless channel with transition matrix `W[x][y]`.
    Dmc { matrix: Vec<Vec<f64>> },
    /// `y_i = x_i + z_i mod alphabet`.
    ModAdditive { alphabet: usize, noise: NoiseSource },
    /// `y_i ~ W(. | x_i, s_i)`, `s_{i+1} = g(x_i, y_i, s_i)`.
    FiniteState {
        x_alphabet: usize,
        y_alphabet: usize,
        states: usize,
        /// `g(x, y, s)` stored at `((x * |Y|) + y) * states + s`.
        next_state: Vec<usize>,
        /// `W[s][x][y]`.
        emission: Vec<Vec<Vec<f64>>>,
        initial: usize,
    },
    /// Two-user channel acting on `x1 (+) x2` through a single-input inner channel.
    MacXor { alphabet: usize, inner: Box<ChannelModel> },
}

impl ChannelModel {
    pub fn bsc(p: f64) -> Self {
        ChannelModel::Dmc { matrix: vec![vec![1.0 - p, p], vec![p, 1.0 - p]] }
    }

    pub fn mod_additive_fixed(alphabet: usize, noise: Vec<Symbol>) -> Self {
        ChannelModel::ModAdditive { alphabet, noise: NoiseSource::Fixed { sequence: noise } }
    }

    pub fn mac_xor(alphabet: usize, inner: ChannelModel) -> Self {
        ChannelModel::MacXor { alphabet, inner: Box::new(inner) }
    }

    pub fn finite_state(
        x_alphabet: usize,
        y_alphabet: usize,
        initial: usize,
        emission: Vec<Vec<Vec<f64>>>,
        g: impl Fn(Symbol, Symbol, usize) -> usize,
    ) -> Result<Self> {
        let states = emission.len();
        let mut next_state = Vec::with_capacity(x_alphabet * y_alphabet * states);
        for a in 0..x_alphabet {
            for b in 0..y_alphabet {
                for s in 0..states {
                    next_state.push(g(a as Symbol, b as Symbol, s));
                }
            }
        }
        let ch = ChannelModel::FiniteState { x_alphabet, y_alphabet, states, next_state, emission, initial };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelModel::Dmc { matrix } => {
                let ya = matrix.first().map_or(0, Vec::len);
                if matrix.is_empty() || ya == 0 {
                    return Err(invalid("DMC matrix must be non-empty"));
                }
                for row in matrix {
                    validate_distribution(row, ya)?;
                }
                Ok(())
            }
            ChannelModel::ModAdditive { alphabet, noise } => {
                if *alphabet == 0 {
                    return Err(invalid("alphabet must be positive"));
                }
                match noise {
                    NoiseSource::Iid { distribution } => validate_distribution(distribution, *alphabet),
                    NoiseSource::Fixed { sequence } => {
                        if sequence.iter().any(|&z| z as usize >= *alphabet) {
                            return Err(invalid("noise symbol outside the alphabet"));
                        }
                        Ok(())
                    }
                }
            }
            ChannelModel::FiniteState { x_alphabet, y_alphabet, states, next_state, emission, initial } => {
                if *states == 0 || *initial >= *states || emission.len() != *states {
                    return Err(invalid("finite-state channel needs one emission table per state"));
                }
                if next_state.len() != x_alphabet * y_alphabet * states || next_state.iter().any(|&s| s >= *states) {
                    return Err(invalid("next-state function must be total and stay in the state set"));
                }
                for table in emission {
                    if table.len() != *x_alphabet {
                        return Err(invalid("emission table needs one row per input symbol"));
                    }
                    for row in table {
                        validate_distribution(row, *y_alphabet)?;
                    }
                }
                Ok(())
            }
            ChannelModel::MacXor { alphabet, inner } => {
                if inner.is_mac() {
                    return Err(invalid("inner channel of a MAC must be single-input"));
                }
                inner.validate()?;
                if inner.input_alphabet() != *alphabet {
                    return Err(invalid("inner channel input alphabet must match the users' alphabet"));
                }
                Ok(())
            }
        }
    }

    pub fn is_mac(&self) -> bool {
        matches!(self, ChannelModel::MacXor { .. })
    }

    /// True when the output is a deterministic function of the input.
    pub fn is_deterministic(&self) -> bool {
        match self {
            ChannelModel::ModAdditive { noise: NoiseSource::Fixed { .. }, .. } => true,
            ChannelModel::Dmc { matrix } => matrix.iter().all(|row| row.contains(&1.0)),
            ChannelModel::MacXor { inner, .. } => inner.is_deterministic(),
            _ => false,
        }
    }

    /// Memoryless channels (the ML metric is additive in the joint type).
    pub fn is_memoryless(&self) -> bool {
        match self {
            ChannelModel::Dmc { .. } | ChannelModel::ModAdditive { noise: NoiseSource::Iid { .. }, .. } => true,
            ChannelModel::MacXor { inner, .. } => inner.is_memoryless(),
            _ => false,
        }
    }

    pub fn input_alphabet(&self) -> usize {
        match self {
            ChannelModel::Dmc { matrix } => matrix.len(),
            ChannelModel::ModAdditive { alphabet, .. } | ChannelModel::MacXor { alphabet, .. } => *alphabet,
            ChannelModel::FiniteState { x_alphabet, .. } => *x_alphabet,
        }
    }

    pub fn output_alphabet(&self) -> usize {
        match self {
            ChannelModel::Dmc { matrix } => matrix[0].len(),
            ChannelModel::ModAdditive { alphabet, .. } => *alphabet,
            ChannelModel::FiniteState { y_alphabet, .. } => *y_alphabet,
            ChannelModel::MacXor { inner, .. } => inner.output_alphabet(),
        }
    }

    /// Per-letter transition matrix of a memoryless channel, `W[x][y]`.
    pub fn letter_matrix(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            ChannelModel::Dmc { matrix } => Some(matrix.clone()),
            ChannelModel::ModAdditive { alphabet, noise: NoiseSource::Iid { distribution } } => Some(
                (0..*alphabet)
                    .map(|a| (0..*alphabet).map(|b| distribution[(b + alphabet - a) % alphabet]).collect())
                    .collect(),
            ),
            ChannelModel::MacXor { inner, .. } => inner.letter_matrix(),
            _ => None,
        }
    }

    fn check_input(&self, x: &Sequence) -> Result<()> {
        if x.alphabet() != self.input_alphabet() {
            return Err(invalid("input alphabet does not match the channel"));
        }
        if let ChannelModel::ModAdditive { noise: NoiseSource::Fixed { sequence }, .. } = self {
            check_same_len(x.len(), sequence.len())?;
        }
        Ok(())
    }
}

/// A channel being driven one symbol at a time, so that feedback encoders can
/// react to past outputs.
pub struct ChannelRun<'a> {
    channel: &'a ChannelModel,
    rng: ChaCha8Rng,
    position: usize,
    state: usize,
    states: Vec<usize>,
}

impl<'a> ChannelRun<'a> {
    pub fn new(channel: &'a ChannelModel, seed: u64) -> Result<Self> {
        channel.validate()?;
        if channel.is_mac() {
            return Err(invalid("use mac_transmit for multiple access channels"));
        }
        let state = match channel {
            ChannelModel::FiniteState { initial, .. } => *initial,
            _ => 0,
        };
        Ok(ChannelRun { channel, rng: stream_rng(seed, 0), position: 0, state, states: Vec::new() })
    }

    pub fn step(&mut self, x: Symbol) -> Result<Symbol> {
        let y = match self.channel {
            ChannelModel::Dmc { matrix } => draw_symbol(&matrix[x as usize], &mut self.rng),
            ChannelModel::ModAdditive { alphabet, noise } => {
                let z = match noise {
                    NoiseSource::Iid { distribution } => draw_symbol(distribution, &mut self.rng),
                    NoiseSource::Fixed { sequence } => *sequence
                        .get(self.position)
                        .ok_or_else(|| invalid("input longer than the fixed noise sequence"))?,
                };
                (x + z) % *alphabet as Symbol
            }
            ChannelModel::FiniteState { y_alphabet, states, next_state, emission, .. } => {
                let s = self.state;
                let y = draw_symbol(&emission[s][x as usize], &mut self.rng);
                self.states.push(s);
                self.state = next_state[(x as usize * y_alphabet + y as usize) * states + s];
                y
            }
            ChannelModel::MacXor { .. } => unreachable!("rejected in new"),
        };
        self.position += 1;
        Ok(y)
    }

    /// States visited so far (finite-state channels only).
    pub fn states(&self) -> &[usize] {
        &self.states
    }
}

/// Passes `x` through the channel. Deterministic given `seed`; deterministic
/// channels ignore it.
pub fn transmit(channel: &ChannelModel, x: &Sequence, seed: u64) -> Result<Sequence> {
    transmit_traced(channel, x, seed).map(|(y, _)| y)
}

/// Like [`transmit`], also returning the channel state sequence used.
pub fn transmit_traced(channel: &ChannelModel, x: &Sequence, seed: u64) -> Result<(Sequence, Vec<usize>)> {
    channel.check_input(x)?;
    let mut run = ChannelRun::new(channel, seed)?;
    let symbols = x.symbols().iter().map(|&a| run.step(a)).collect::<Result<Vec<_>>>()?;
    let states = run.states().to_vec();
    Ok((Sequence::new(symbols, channel.output_alphabet())?, states))
}

/// `log2 P(y|x)`; `-inf` for impossible outputs.
pub fn log_likelihood(channel: &ChannelModel, x: &Sequence, y: &Sequence) -> Result<f64> {
    check_same_len(x.len(), y.len())?;
    channel.check_input(x)?;
    if y.alphabet() != channel.output_alphabet() {
        return Err(invalid("output alphabet does not match the channel"));
    }
    let lg = |p: f64| if p > 0.0 { p.log2() } else { f64::NEG_INFINITY };
    let pairs = x.symbols().iter().zip(y.symbols());
    let total = match channel {
        ChannelModel::Dmc { matrix } => pairs.map(|(&a, &b)| lg(matrix[a as usize][b as usize])).sum(),
        ChannelModel::ModAdditive { alphabet, noise } => {
            let q = *alphabet as Symbol;
            match noise {
                NoiseSource::Iid { distribution } => {
                    pairs.map(|(&a, &b)| lg(distribution[((b + q - a) % q) as usize])).sum()
                }
                NoiseSource::Fixed { sequence } => {
                    let consistent = pairs.zip(sequence).all(|((&a, &b), &z)| (a + z) % q == b);
                    if consistent {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                }
            }
        }
        ChannelModel::FiniteState { y_alphabet, states, next_state, emission, initial, .. } => {
            let mut s = *initial;
            let mut total = 0.0;
            for (&a, &b) in pairs {
                total += lg(emission[s][a as usize][b as usize]);
                s = next_state[(a as usize * y_alphabet + b as usize) * states + s];
            }
            total
        }
        ChannelModel::MacXor { .. } => {
            return Err(Error::Unsupported("use mac_log_likelihood for multiple access channels".into()))
        }
    };
    Ok(total)
}

/// State sequence of a finite-state channel recomputed from `(x, y)`.
pub fn channel_state_trace(channel: &ChannelModel, x: &Sequence, y: &Sequence) -> Result<Vec<usize>> {
    check_same_len(x.len(), y.len())?;
    match channel {
        ChannelModel::FiniteState { y_alphabet, states, next_state, initial, .. } => {
            let mut s = *initial;
            let mut out = Vec::with_capacity(x.len());
            for (&a, &b) in x.symbols().iter().zip(y.symbols()) {
                out.push(s);
                s = next_state[(a as usize * y_alphabet + b as usize) * states + s];
            }
            Ok(out)
        }
        _ => Err(Error::Unsupported("only finite-state channels carry a state".into())),
    }
}

fn mac_parts<'a>(channel: &'a ChannelModel, x1: &Sequence, x2: &Sequence) -> Result<(&'a ChannelModel, Sequence)> {
    match channel {
        ChannelModel::MacXor { alphabet, inner } => {
            if x1.alphabet() != *alphabet || x2.alphabet() != *alphabet {
                return Err(invalid("user inputs must use the MAC alphabet"));
            }
            Ok((inner, x1.add_mod(x2)?))
        }
        _ => Err(invalid("channel is not a multiple access channel")),
    }
}

/// `y ~ W(. | x1 (+) x2)`.
pub fn mac_transmit(channel: &ChannelModel, x1: &Sequence, x2: &Sequence, seed: u64) -> Result<Sequence> {
    let (inner, z) = mac_parts(channel, x1, x2)?;
    transmit(inner, &z, seed)
}

pub fn mac_log_likelihood(channel: &ChannelModel, x1: &Sequence, x2: &Sequence, y: &Sequence) -> Result<f64> {
    let (inner, z) = mac_parts(channel, x1, x2)?;
    log_likelihood(inner, &z, y)
}

/// Fraction of positions where two sequences differ.
pub fn flip_rate(a: &Sequence, b: &Sequence) -> f64 {
    let flips = a.symbols().iter().zip(b.symbols()).filter(|(p, q)| p != q).count();
    flips as f64 / a.len() as f64
}

/// Uniform random sequence, for tests and instance generation.
pub fn random_sequence(alphabet: usize, n: usize, rng: &mut impl Rng) -> Sequence {
    let symbols = (0..n).map(|_| rng.random_range(0..alphabet as Symbol)).collect();
    Sequence::new(symbols, alphabet).expect("valid random sequence")
}
