//! Method-of-types primitives.
//!
//! Sequences over finite integer alphabets, joint types, exact conditional
//! type-class cardinalities, empirical information measures, and the
//! equivalence-class keys `T(x|y)` induced by a family of decoding metrics.
//!
//! All logarithms are base 2 and `0 log 0 = 0`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, invalid, too_large, Error, Result};
use crate::metric::MetricFamily;

pub type Symbol = u32;

/// Largest `|X|^n` we are willing to walk exhaustively.
pub const MAX_ENUMERATION: u64 = 1 << 24;

/// A word of fixed length over `{0, .., alphabet - 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sequence {
    symbols: Vec<Symbol>,
    alphabet: usize,
}

impl Sequence {
    pub fn new(symbols: Vec<Symbol>, alphabet: usize) -> Result<Self> {
        if alphabet == 0 {
            return Err(invalid("alphabet size must be positive"));
        }
        if symbols.is_empty() {
            return Err(invalid("sequence length must be at least 1"));
        }
        if let Some(&symbol) = symbols.iter().find(|&&s| s as usize >= alphabet) {
            return Err(Error::SymbolOutOfRange { symbol, alphabet });
        }
        Ok(Self { symbols, alphabet })
    }

    pub fn binary(bits: &[Symbol]) -> Result<Self> {
        Self::new(bits.to_vec(), 2)
    }

    /// The `index`-th word in lexicographic order (first symbol most significant).
    pub fn from_index(mut index: u64, alphabet: usize, n: usize) -> Self {
        let q = alphabet as u64;
        let mut symbols = vec![0; n];
        for slot in symbols.iter_mut().rev() {
            *slot = (index % q) as Symbol;
            index /= q;
        }
        Self { symbols, alphabet }
    }

    pub fn index(&self) -> u64 {
        let q = self.alphabet as u64;
        self.symbols.iter().fold(0, |acc, &s| acc * q + s as u64)
    }

    /// Iterates over all of `alphabet^n` in lexicographic order.
    pub fn all(alphabet: usize, n: usize) -> Result<impl Iterator<Item = Sequence>> {
        let size = enumeration_size(alphabet, n)?;
        Ok((0..size).map(move |i| Sequence::from_index(i, alphabet, n)))
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn composition(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.alphabet];
        for &s in &self.symbols {
            counts[s as usize] += 1;
        }
        counts
    }

    /// Symbol-wise addition modulo the (shared) alphabet size.
    pub fn add_mod(&self, other: &Sequence) -> Result<Sequence> {
        check_same_len(self.len(), other.len())?;
        if self.alphabet != other.alphabet {
            return Err(invalid("modular addition needs equal alphabets"));
        }
        let q = self.alphabet as Symbol;
        let symbols = self
            .symbols
            .iter()
            .zip(&other.symbols)
            .map(|(&a, &b)| (a + b) % q)
            .collect();
        Ok(Sequence { symbols, alphabet: self.alphabet })
    }

    /// Symbol-wise subtraction modulo the alphabet size.
    pub fn sub_mod(&self, other: &Sequence) -> Result<Sequence> {
        check_same_len(self.len(), other.len())?;
        if self.alphabet != other.alphabet {
            return Err(invalid("modular subtraction needs equal alphabets"));
        }
        let q = self.alphabet as Symbol;
        let symbols = self
            .symbols
            .iter()
            .zip(&other.symbols)
            .map(|(&a, &b)| (a + q - b) % q)
            .collect();
        Ok(Sequence { symbols, alphabet: self.alphabet })
    }

    /// The sequence of pairs `(self_i, other_i)` over the product alphabet,
    /// encoded as `self_i * |other| + other_i`.
    pub fn pair_with(&self, other: &Sequence) -> Result<Sequence> {
        check_same_len(self.len(), other.len())?;
        let width = other.alphabet as Symbol;
        let symbols = self
            .symbols
            .iter()
            .zip(&other.symbols)
            .map(|(&a, &b)| a * width + b)
            .collect();
        Ok(Sequence { symbols, alphabet: self.alphabet * other.alphabet })
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.alphabet > 10 { "." } else { "" };
        let parts: Vec<String> = self.symbols.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join(sep))
    }
}

pub fn enumeration_size(alphabet: usize, n: usize) -> Result<u64> {
    let size = (alphabet as u64)
        .checked_pow(n as u32)
        .filter(|&s| s <= MAX_ENUMERATION)
        .ok_or_else(|| too_large(format!("{alphabet}^{n} sequences exceed the enumeration limit")))?;
    Ok(size)
}

/// Empirical joint distribution of a pair of sequences, kept as integer counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointType {
    x_alphabet: usize,
    y_alphabet: usize,
    n: u64,
    /// Row-major: `counts[a * |Y| + b]`.
    counts: Vec<u64>,
}

impl JointType {
    pub fn from_counts(x_alphabet: usize, y_alphabet: usize, counts: Vec<u64>) -> Result<Self> {
        if x_alphabet == 0 || y_alphabet == 0 {
            return Err(invalid("alphabet sizes must be positive"));
        }
        if counts.len() != x_alphabet * y_alphabet {
            return Err(invalid(format!(
                "count matrix has {} entries, expected {}x{}",
                counts.len(),
                x_alphabet,
                y_alphabet
            )));
        }
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(invalid("joint type must describe at least one symbol"));
        }
        Ok(Self { x_alphabet, y_alphabet, n, counts })
    }

    pub fn x_alphabet(&self) -> usize {
        self.x_alphabet
    }

    pub fn y_alphabet(&self) -> usize {
        self.y_alphabet
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, a: usize, b: usize) -> u64 {
        self.counts[a * self.y_alphabet + b]
    }

    pub fn x_marginal(&self) -> Vec<u64> {
        (0..self.x_alphabet)
            .map(|a| (0..self.y_alphabet).map(|b| self.count(a, b)).sum())
            .collect()
    }

    pub fn y_marginal(&self) -> Vec<u64> {
        (0..self.y_alphabet)
            .map(|b| (0..self.x_alphabet).map(|a| self.count(a, b)).sum())
            .collect()
    }

    /// `|T_{x|y}| = prod_b n_y(b)! / prod_a n(a,b)!`, exactly.
    pub fn conditional_class_size(&self) -> BigUint {
        let column_sums = self.y_marginal();
        (0..self.y_alphabet).fold(BigUint::one(), |acc, b| {
            let column: Vec<u64> = (0..self.x_alphabet).map(|a| self.count(a, b)).collect();
            acc * multinomial(column_sums[b], &column)
        })
    }

    pub fn measures(&self, reference: Option<&[f64]>) -> Result<InfoMeasures> {
        empirical_measures(self, reference)
    }
}

pub fn empirical_joint_type(x: &Sequence, y: &Sequence) -> Result<JointType> {
    check_same_len(x.len(), y.len())?;
    let width = y.alphabet();
    let mut counts = vec![0u64; x.alphabet() * width];
    for (&a, &b) in x.symbols().iter().zip(y.symbols()) {
        counts[a as usize * width + b as usize] += 1;
    }
    JointType::from_counts(x.alphabet(), width, counts)
}

/// `|T_{x|y}|` for the joint type of `(x, y)`.
pub fn conditional_class_size(joint: &JointType) -> BigUint {
    joint.conditional_class_size()
}

pub fn factorial(k: u64) -> BigUint {
    (2..=k).fold(BigUint::one(), |acc, i| acc * i)
}

/// `total! / prod parts!`. The parts must sum to `total`.
pub fn multinomial(total: u64, parts: &[u64]) -> BigUint {
    debug_assert_eq!(parts.iter().sum::<u64>(), total);
    let denominator = parts.iter().fold(BigUint::one(), |acc, &k| acc * factorial(k));
    factorial(total) / denominator
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    multinomial(n, &[k, n - k])
}

/// Base-2 logarithm of an arbitrary-precision integer; `-inf` for zero.
pub fn log2_big(value: &BigUint) -> f64 {
    if value.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = value.bits();
    if bits <= 1000 {
        return value.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    let top: BigUint = value >> shift;
    top.to_f64().unwrap_or(f64::INFINITY).log2() + shift as f64
}

/// Empirical information measures in bits per symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoMeasures {
    pub h_x: f64,
    pub h_x_given_y: f64,
    pub i_xy: f64,
    /// `D(P_x || Q)`; `+inf` when `Q` vanishes where the empirical law does not.
    pub d_x_vs_q: Option<f64>,
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

pub fn empirical_measures(joint: &JointType, reference: Option<&[f64]>) -> Result<InfoMeasures> {
    let n = joint.n() as f64;
    let px: Vec<f64> = joint.x_marginal().iter().map(|&c| c as f64 / n).collect();
    let py: Vec<f64> = joint.y_marginal().iter().map(|&c| c as f64 / n).collect();

    let h_x = -px.iter().map(|&p| plogp(p)).sum::<f64>();
    let mut h_x_given_y = 0.0;
    let mut i_xy = 0.0;
    for a in 0..joint.x_alphabet() {
        for b in 0..joint.y_alphabet() {
            let c = joint.count(a, b);
            if c == 0 {
                continue;
            }
            let p = c as f64 / n;
            h_x_given_y -= p * (p / py[b]).log2();
            i_xy += p * (p / (px[a] * py[b])).log2();
        }
    }

    let d_x_vs_q = match reference {
        None => None,
        Some(q) => {
            validate_distribution(q, joint.x_alphabet())?;
            let mut d = 0.0;
            for (&p, &qa) in px.iter().zip(q) {
                if p == 0.0 {
                    continue;
                }
                if qa == 0.0 {
                    d = f64::INFINITY;
                    break;
                }
                d += p * (p / qa).log2();
            }
            Some(d.max(0.0))
        }
    };

    Ok(InfoMeasures {
        h_x: h_x.max(0.0),
        h_x_given_y: h_x_given_y.max(0.0),
        i_xy: i_xy.max(0.0),
        d_x_vs_q,
    })
}

/// Empirical entropy of a single sequence.
pub fn empirical_entropy(x: &Sequence) -> f64 {
    let n = x.len() as f64;
    -x.composition().iter().map(|&c| plogp(c as f64 / n)).sum::<f64>()
}

pub(crate) fn validate_distribution(q: &[f64], alphabet: usize) -> Result<()> {
    if q.len() != alphabet {
        return Err(invalid(format!(
            "distribution has {} entries, alphabet has {}",
            q.len(),
            alphabet
        )));
    }
    if q.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(invalid("distribution entries must be finite and non-negative"));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("distribution sums to {total}, not 1")));
    }
    Ok(())
}

/// Which sufficient statistic a key was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyKind {
    /// Joint counts of `(x, y)`.
    Additive,
    /// Counts of `(x, y, s)` along the state trace.
    FiniteState,
    /// Joint counts of `(x1 (+) x2, y)`.
    MacXor,
}

/// Canonical identifier of an equivalence class `T(x|y)`.
///
/// The key holds the count tensor of the family's sufficient statistic in
/// row-major order. Two inputs share a key exactly when every metric of the
/// family scores them equally against the same output.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EquivalenceClassKey {
    pub kind: KeyKind,
    pub dims: Vec<usize>,
    pub counts: Vec<u64>,
}

impl EquivalenceClassKey {
    /// Length-prefixed integer list: `[len, counts...]`.
    pub fn canonical(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.counts.len() + 1);
        out.push(self.counts.len() as u64);
        out.extend_from_slice(&self.counts);
        out
    }

    /// The `(x, y)` joint type carried by (or marginalised from) this key.
    pub fn joint_type(&self) -> Result<JointType> {
        let (xa, ya) = (self.dims[0], self.dims[1]);
        let counts = match self.kind {
            KeyKind::Additive | KeyKind::MacXor => self.counts.clone(),
            KeyKind::FiniteState => {
                let states = self.dims[2];
                self.counts.chunks(states).map(|cell| cell.iter().sum()).collect()
            }
        };
        JointType::from_counts(xa, ya, counts)
    }
}

impl fmt::Display for EquivalenceClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let counts: Vec<String> = self.counts.iter().map(|c| c.to_string()).collect();
        write!(f, "{:?}[{}]:{}", self.kind, dims.join("x"), counts.join(","))
    }
}

/// Key of `T(x|y)` for a single-input family.
pub fn class_key(family: &MetricFamily, x: &Sequence, y: &Sequence) -> Result<EquivalenceClassKey> {
    check_same_len(x.len(), y.len())?;
    family.check_alphabets(x, y)?;
    match family {
        MetricFamily::Additive { x_alphabet, y_alphabet } => {
            let joint = empirical_joint_type(x, y)?;
            Ok(EquivalenceClassKey {
                kind: KeyKind::Additive,
                dims: vec![*x_alphabet, *y_alphabet],
                counts: joint.counts,
            })
        }
        MetricFamily::FiniteState { x_alphabet, y_alphabet, states, .. } => {
            let trace = family.state_trace(x, y)?;
            let mut counts = vec![0u64; x_alphabet * y_alphabet * states];
            for ((&a, &b), &s) in x.symbols().iter().zip(y.symbols()).zip(&trace) {
                counts[(a as usize * y_alphabet + b as usize) * states + s] += 1;
            }
            Ok(EquivalenceClassKey {
                kind: KeyKind::FiniteState,
                dims: vec![*x_alphabet, *y_alphabet, *states],
                counts,
            })
        }
        MetricFamily::MacXorAdditive { .. } => Err(Error::Unsupported(
            "the MAC family keys pairs of inputs; use mac_class_key".into(),
        )),
    }
}

/// Key of `T(x1, x2 | y)` for the MAC family: the joint type of `(x1 (+) x2, y)`.
pub fn mac_class_key(
    family: &MetricFamily,
    x1: &Sequence,
    x2: &Sequence,
    y: &Sequence,
) -> Result<EquivalenceClassKey> {
    match family {
        MetricFamily::MacXorAdditive { alphabet, y_alphabet } => {
            if x1.alphabet() != *alphabet || x2.alphabet() != *alphabet || y.alphabet() != *y_alphabet {
                return Err(invalid("sequence alphabets do not match the MAC family"));
            }
            check_same_len(x1.len(), y.len())?;
            let z = x1.add_mod(x2)?;
            let joint = empirical_joint_type(&z, y)?;
            Ok(EquivalenceClassKey {
                kind: KeyKind::MacXor,
                dims: vec![*alphabet, *y_alphabet],
                counts: joint.counts,
            })
        }
        _ => Err(Error::Unsupported("mac_class_key needs a mac_xor_additive family".into())),
    }
}

/// How [`count_classes`] obtains `K_n(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountStrategy {
    /// Combinatorial when the family allows it, exhaustive otherwise.
    Auto,
    /// Enumerate `X^n` and collect distinct keys.
    Exhaustive,
    /// Count joint-type matrices with prescribed column sums.
    Combinatorial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCountReport {
    pub n: usize,
    /// y-composition -> number of classes. For families whose classes depend
    /// on more than the composition of `y`, the maximum over such `y`.
    pub k_n_of_y: BTreeMap<Vec<u64>, u128>,
    pub k_n: u128,
    /// `log2(K_n) / n`.
    pub delta_n: f64,
    pub strategy: CountStrategy,
}

/// Upper limit on total key evaluations in an exhaustive count.
const MAX_EXHAUSTIVE_WORK: u64 = 1 << 28;

/// Number of classes `T(x|y)` partitioning `X^n` (or `X^n x X^n` for the MAC family)
/// for every `y`, and the maximum `K_n`.
pub fn count_classes(family: &MetricFamily, n: usize, strategy: CountStrategy) -> Result<ClassCountReport> {
    if n == 0 {
        return Err(invalid("block length must be positive"));
    }
    let (x_alphabet, y_alphabet) = family.alphabets();
    let combinatorial_ok = !matches!(family, MetricFamily::FiniteState { .. });
    let strategy = match strategy {
        CountStrategy::Auto if combinatorial_ok => CountStrategy::Combinatorial,
        CountStrategy::Auto => CountStrategy::Exhaustive,
        CountStrategy::Combinatorial if !combinatorial_ok => {
            return Err(Error::Unsupported(
                "combinatorial class counting needs an additive or MAC family".into(),
            ))
        }
        s => s,
    };

    let mut k_n_of_y = BTreeMap::new();
    match strategy {
        CountStrategy::Combinatorial => {
            for composition in weak_compositions(n as u64, y_alphabet) {
                let k = additive_classes_for_composition(x_alphabet, &composition)?;
                k_n_of_y.insert(composition, k);
            }
        }
        CountStrategy::Exhaustive => {
            let per_y = enumeration_size(x_alphabet, n)?;
            if combinatorial_ok {
                // Classes depend on y only through its composition; one representative each.
                for composition in weak_compositions(n as u64, y_alphabet) {
                    let y = representative(&composition, y_alphabet);
                    let k = exhaustive_classes_for_y(family, &y)?;
                    k_n_of_y.insert(composition, k);
                }
            } else {
                let outputs = enumeration_size(y_alphabet, n)?;
                if outputs.saturating_mul(per_y) > MAX_EXHAUSTIVE_WORK {
                    return Err(too_large(format!(
                        "exhaustive count needs {outputs} x {per_y} key evaluations"
                    )));
                }
                for y in Sequence::all(y_alphabet, n)? {
                    let k = exhaustive_classes_for_y(family, &y)?;
                    let slot = k_n_of_y.entry(y.composition()).or_insert(0);
                    *slot = (*slot).max(k);
                }
            }
        }
        CountStrategy::Auto => unreachable!("resolved above"),
    }

    let k_n = k_n_of_y.values().copied().max().unwrap_or(1);
    Ok(ClassCountReport {
        n,
        k_n_of_y,
        k_n,
        delta_n: (k_n as f64).log2() / n as f64,
        strategy,
    })
}

/// `K_n(y)` for one specific output.
pub fn classes_for_y(family: &MetricFamily, y: &Sequence) -> Result<u128> {
    match family {
        MetricFamily::FiniteState { .. } => exhaustive_classes_for_y(family, y),
        _ => {
            let (x_alphabet, y_alphabet) = family.alphabets();
            if y.alphabet() != y_alphabet {
                return Err(invalid("output alphabet does not match the family"));
            }
            additive_classes_for_composition(x_alphabet, &y.composition())
        }
    }
}

/// Number of `|X| x |Y|` count matrices with the given column sums:
/// `prod_b C(n_b + |X| - 1, |X| - 1)`.
fn additive_classes_for_composition(x_alphabet: usize, composition: &[u64]) -> Result<u128> {
    composition.iter().try_fold(1u128, |acc, &m| {
        let ways = binomial(m + x_alphabet as u64 - 1, x_alphabet as u64 - 1)
            .to_u128()
            .ok_or_else(|| too_large("class count overflows u128"))?;
        acc.checked_mul(ways).ok_or_else(|| too_large("class count overflows u128"))
    })
}

fn exhaustive_classes_for_y(family: &MetricFamily, y: &Sequence) -> Result<u128> {
    let (x_alphabet, _) = family.alphabets();
    let mut keys = HashSet::new();
    match family {
        MetricFamily::MacXorAdditive { .. } => {
            // Every z = x1 (+) x2 is reachable, so pair classes are indexed by z.
            let zero = Sequence::new(vec![0; y.len()], x_alphabet)?;
            for z in Sequence::all(x_alphabet, y.len())? {
                keys.insert(mac_class_key(family, &z, &zero, y)?);
            }
        }
        _ => {
            for x in Sequence::all(x_alphabet, y.len())? {
                keys.insert(class_key(family, &x, y)?);
            }
        }
    }
    Ok(keys.len() as u128)
}

/// All vectors of `parts` non-negative integers summing to `total`, in lexicographic order.
pub fn weak_compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    fn rec(remaining: u64, parts: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if parts == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k);
            rec(remaining - k, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

fn representative(composition: &[u64], alphabet: usize) -> Sequence {
    let symbols = composition
        .iter()
        .enumerate()
        .flat_map(|(b, &k)| std::iter::repeat_n(b as Symbol, k as usize))
        .collect();
    Sequence { symbols, alphabet }
}

/// The sequence with symbols sorted according to `composition`.
pub fn sorted_sequence(composition: &[u64]) -> Result<Sequence> {
    let alphabet = composition.len();
    let seq = representative(composition, alphabet);
    Sequence::new(seq.symbols, alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(bits: &[u32]) -> Sequence {
        Sequence::binary(bits).unwrap()
    }

    #[test]
    fn joint_type_tallies() {
        let j = empirical_joint_type(&seq(&[0, 1, 0, 1]), &seq(&[0, 0, 1, 1])).unwrap();
        assert_eq!(j.counts(), &[1, 1, 1, 1]);
        let j = empirical_joint_type(&seq(&[0, 0]), &seq(&[1, 1])).unwrap();
        assert_eq!(j.counts(), &[0, 2, 0, 0]);
        let j = empirical_joint_type(&seq(&[0, 0, 1]), &seq(&[0, 1, 1])).unwrap();
        assert_eq!(j.counts(), &[1, 1, 0, 1]);
    }

    #[test]
    fn joint_type_rejects_length_mismatch() {
        let err = empirical_joint_type(&seq(&[0, 1]), &seq(&[0])).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { left: 2, right: 1 }));
    }

    #[test]
    fn sequence_validation() {
        assert!(matches!(
            Sequence::new(vec![0, 2], 2),
            Err(Error::SymbolOutOfRange { symbol: 2, alphabet: 2 })
        ));
        assert!(Sequence::new(vec![], 2).is_err());
        assert!(Sequence::new(vec![0], 0).is_err());
        let s = Sequence::from_index(6, 2, 4);
        assert_eq!(s.symbols(), &[0, 1, 1, 0]);
        assert_eq!(s.index(), 6);
    }

    #[test]
    fn class_sizes() {
        let j = JointType::from_counts(2, 2, vec![1, 0, 1, 0]).unwrap();
        assert_eq!(j.conditional_class_size(), BigUint::from(2u32));
        let j = JointType::from_counts(2, 2, vec![2, 0, 0, 2]).unwrap();
        assert_eq!(j.conditional_class_size(), BigUint::from(1u32));
        let j = JointType::from_counts(2, 2, vec![2, 0, 1, 1]).unwrap();
        assert_eq!(j.conditional_class_size(), BigUint::from(3u32));
    }

    #[test]
    fn class_size_against_brute_force_small() {
        // Exhaustive count over x' in {0,1}^4 for y = 0001.
        let y = seq(&[0, 0, 0, 1]);
        let target = JointType::from_counts(2, 2, vec![2, 0, 1, 1]).unwrap();
        let brute = Sequence::all(2, 4)
            .unwrap()
            .filter(|x| empirical_joint_type(x, &y).unwrap() == target)
            .count();
        assert_eq!(brute, 3);
    }

    #[test]
    fn measures_examples() {
        let m = empirical_joint_type(&seq(&[0, 1, 0, 1]), &seq(&[0, 1, 0, 1]))
            .unwrap()
            .measures(None)
            .unwrap();
        assert!((m.i_xy - 1.0).abs() < 1e-12);

        let m = empirical_joint_type(&seq(&[0, 0, 1, 1]), &seq(&[0, 1, 0, 1]))
            .unwrap()
            .measures(None)
            .unwrap();
        assert!(m.i_xy.abs() < 1e-12);

        let m = empirical_joint_type(&seq(&[0, 0, 0, 1]), &seq(&[0, 0, 1, 1]))
            .unwrap()
            .measures(None)
            .unwrap();
        let h = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((m.h_x - h).abs() < 1e-12);
        assert!((m.h_x - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert!((m.h_x_given_y - 0.5).abs() < 1e-12);
        assert!((m.i_xy - (h - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn divergence_infinite_when_reference_vanishes() {
        let j = empirical_joint_type(&seq(&[0, 1]), &seq(&[0, 0])).unwrap();
        let m = j.measures(Some(&[1.0, 0.0])).unwrap();
        assert_eq!(m.d_x_vs_q, Some(f64::INFINITY));
        let m = j.measures(Some(&[0.5, 0.5])).unwrap();
        assert_eq!(m.d_x_vs_q, Some(0.0));
        assert!(j.measures(Some(&[0.5, 0.6])).is_err());
    }

    #[test]
    fn additive_keys() {
        let fam = MetricFamily::additive(2, 2);
        let key = class_key(&fam, &seq(&[0, 1]), &seq(&[0, 0])).unwrap();
        assert_eq!(key.counts, vec![1, 0, 1, 0]);
        assert_eq!(key.canonical(), vec![4, 1, 0, 1, 0]);
    }

    #[test]
    fn degenerate_finite_state_key_matches_additive() {
        let fs = MetricFamily::finite_state(2, 2, 1, 0, |_, _, _| 0).unwrap();
        let add = MetricFamily::additive(2, 2);
        for x in Sequence::all(2, 5).unwrap() {
            let y = seq(&[0, 1, 1, 0, 1]);
            assert_eq!(class_key(&fs, &x, &y).unwrap().counts, class_key(&add, &x, &y).unwrap().counts);
        }
    }

    #[test]
    fn finite_state_key_traces_state() {
        // g(x, y, s) = x, s1 = 0: states 0,0,0,1.
        let fam = MetricFamily::finite_state(2, 2, 2, 0, |x, _, _| x as usize).unwrap();
        let key = class_key(&fam, &seq(&[0, 0, 1, 1]), &seq(&[0, 1, 0, 1])).unwrap();
        // cells ((x*2)+y)*2+s: (0,0,0) (0,1,0) (1,0,0) (1,1,1)
        let mut expected = vec![0u64; 8];
        expected[0] = 1;
        expected[2] = 1;
        expected[4] = 1;
        expected[7] = 1;
        assert_eq!(key.counts, expected);
    }

    #[test]
    fn mac_family_rejected_by_single_input_key() {
        let fam = MetricFamily::mac_xor_additive(2, 2);
        assert!(matches!(
            class_key(&fam, &seq(&[0, 1]), &seq(&[0, 1])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn class_counts_binary_n2() {
        let fam = MetricFamily::additive(2, 2);
        let report = count_classes(&fam, 2, CountStrategy::Auto).unwrap();
        assert_eq!(report.k_n_of_y[&vec![1, 1]], 4);
        assert_eq!(report.k_n_of_y[&vec![2, 0]], 3);
        assert_eq!(report.k_n, 4);
        assert!(report.k_n <= 81);
        assert_eq!(classes_for_y(&fam, &seq(&[0, 0])).unwrap(), 3);
        assert_eq!(classes_for_y(&fam, &seq(&[0, 1])).unwrap(), 4);
    }

    #[test]
    fn strategies_agree() {
        let fam = MetricFamily::additive(3, 2);
        for n in 1..=6 {
            let a = count_classes(&fam, n, CountStrategy::Exhaustive).unwrap();
            let b = count_classes(&fam, n, CountStrategy::Combinatorial).unwrap();
            assert_eq!(a.k_n_of_y, b.k_n_of_y);
        }
    }

    #[test]
    fn combinatorial_rejected_for_finite_state() {
        let fam = MetricFamily::finite_state(2, 2, 2, 0, |x, _, _| x as usize).unwrap();
        assert!(count_classes(&fam, 3, CountStrategy::Combinatorial).is_err());
        let report = count_classes(&fam, 4, CountStrategy::Auto).unwrap();
        assert_eq!(report.strategy, CountStrategy::Exhaustive);
        assert!(report.k_n >= 1);
    }

    #[test]
    fn oversized_count_is_an_error() {
        let fam = MetricFamily::additive(2, 2);
        assert!(matches!(
            count_classes(&fam, 40, CountStrategy::Exhaustive),
            Err(Error::TooLarge(_))
        ));
        // The combinatorial route has no such limit.
        let report = count_classes(&fam, 40, CountStrategy::Combinatorial).unwrap();
        assert_eq!(report.k_n, 21 * 21);
    }

    #[test]
    fn log2_big_matches_f64() {
        assert_eq!(log2_big(&BigUint::from(1024u32)), 10.0);
        let huge = factorial(500);
        let approx: f64 = (2..=500).map(|k| (k as f64).log2()).sum();
        assert!((log2_big(&huge) - approx).abs() < 1e-9 * approx);
        assert_eq!(log2_big(&BigUint::zero()), f64::NEG_INFINITY);
    }
}
