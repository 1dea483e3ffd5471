//! Decoding metrics and the maximum-metric decoder.

use serde::{Deserialize, Serialize};

use crate::channel::{log_likelihood, ChannelModel};
use crate::ensemble::{class_probability, log_prob, CodingEnsemble, EnsembleKind};
use crate::error::{check_same_len, invalid, too_large, Error, Result};
use crate::lz::conditional_lz_length;
use crate::metric::{metric_score, MetricFamily, MetricIndex};
use crate::types::{
    class_key, empirical_joint_type, empirical_measures, enumeration_size, log2_big, mac_class_key, Sequence,
    MAX_ENUMERATION,
};

/// Where a score came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Metric { theta: Vec<f64> },
    UniversalExact,
    UniversalLz,
    Ml,
    Mmi,
    MinEquivocation,
    MacComposite { components: [f64; 3], r1: f64, r2: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub value: f64,
    pub provenance: Provenance,
    /// Set when a class of zero mass produced an infinite score.
    pub zero_mass: bool,
}

/// `-(1/n) log2 mass`; `+inf` with the flag set for an empty class.
fn neg_normalized(log_mass: f64, n: usize) -> (f64, bool) {
    if log_mass == f64::NEG_INFINITY {
        (f64::INFINITY, true)
    } else {
        (-log_mass / n as f64, false)
    }
}

fn check_ensemble(ensemble: &CodingEnsemble, x: &Sequence, y: &Sequence) -> Result<()> {
    check_same_len(x.len(), y.len())?;
    if x.alphabet() != ensemble.alphabet || x.len() != ensemble.n {
        return Err(invalid("codeword does not fit the ensemble"));
    }
    Ok(())
}

/// `U(x, y) = -(1/n) log2 Q[T(x|y)]`, with `Q(.|y)` for feedback ensembles.
pub fn universal_score(family: &MetricFamily, ensemble: &CodingEnsemble, x: &Sequence, y: &Sequence) -> Result<ScoreValue> {
    check_ensemble(ensemble, x, y)?;
    if family.alphabets().0 != ensemble.alphabet {
        return Err(invalid("family and ensemble alphabets differ"));
    }
    let key = class_key(family, x, y)?;
    let (value, zero_mass) = neg_normalized(class_probability(ensemble, family, &key, y)?, x.len());
    Ok(ScoreValue { value, provenance: Provenance::UniversalExact, zero_mass })
}

fn check_lz_ensemble(ensemble: &CodingEnsemble) -> Result<()> {
    match ensemble.kind {
        EnsembleKind::Uniform | EnsembleKind::UniformOverType { .. } | EnsembleKind::Iid { .. } => Ok(()),
        _ => Err(Error::Unsupported("the LZ metric needs a uniform, uniform-over-type or iid ensemble".into())),
    }
}

/// `U'(x, y) = -(1/n)[log2 Q(x) + LZ(x|y)]`.
pub fn lz_universal_score(ensemble: &CodingEnsemble, x: &Sequence, y: &Sequence) -> Result<ScoreValue> {
    check_lz_ensemble(ensemble)?;
    check_ensemble(ensemble, x, y)?;
    let lq = log_prob(ensemble, x, None)?;
    let (value, zero_mass) = neg_normalized(lq + conditional_lz_length(x, y)?, x.len());
    Ok(ScoreValue { value, provenance: Provenance::UniversalLz, zero_mass })
}

/// The three MAC class masses `(Q1 x Q2)[T(x1,x2|y)]`, `Q1[T(x1|x2,y)]`,
/// `Q2[T(x2|x1,y)]` in log2.
pub fn mac_class_masses(
    family: &MetricFamily,
    q1: &CodingEnsemble,
    q2: &CodingEnsemble,
    x1: &Sequence,
    x2: &Sequence,
    y: &Sequence,
) -> Result<[f64; 3]> {
    let MetricFamily::MacXorAdditive { alphabet, .. } = family else {
        return Err(invalid("MAC scores need a mac_xor_additive family"));
    };
    check_ensemble(q1, x1, y)?;
    check_ensemble(q2, x2, y)?;
    if q1.alphabet != *alphabet || q2.alphabet != *alphabet {
        return Err(invalid("ensemble alphabets differ from the MAC family"));
    }
    if q1.is_feedback() || q2.is_feedback() {
        return Err(Error::Unsupported("feedback ensembles are not supported for the MAC".into()));
    }
    let key = mac_class_key(family, x1, x2, y)?;
    let n = y.len();
    let uniform = |q: &CodingEnsemble| matches!(q.kind, EnsembleKind::Uniform | EnsembleKind::LinearDithered { .. });
    if uniform(q1) && uniform(q2) {
        // x1' <-> z' = x1' (+) x2 is a bijection, so every class has |T_{z|y}| members per fixed partner.
        let log_size = log2_big(&key.joint_type()?.conditional_class_size());
        let lk = n as f64 * (*alphabet as f64).log2();
        let m = log_size - lk;
        return Ok([m, m, m]);
    }
    let size = enumeration_size(*alphabet, n)?;
    if size.saturating_mul(size) > MAX_ENUMERATION {
        return Err(too_large(format!("MAC class masses over {size}^2 input pairs")));
    }
    let words: Vec<(Sequence, f64, f64)> = Sequence::all(*alphabet, n)?
        .map(|w| {
            let a = log_prob(q1, &w, None)?.exp2();
            let b = log_prob(q2, &w, None)?.exp2();
            Ok((w, a, b))
        })
        .collect::<Result<_>>()?;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (u, pu, _) in &words {
        if mac_class_key(family, u, x2, y)? == key {
            m1 += pu;
        }
        for (v, _, pv) in &words {
            if mac_class_key(family, u, v, y)? == key {
                m0 += pu * pv;
            }
        }
    }
    for (v, _, pv) in &words {
        if mac_class_key(family, x1, v, y)? == key {
            m2 += pv;
        }
    }
    let lg = |m: f64| if m > 0.0 { m.log2() } else { f64::NEG_INFINITY };
    Ok([lg(m0), lg(m1), lg(m2)])
}

fn composite(components: [f64; 3], r1: f64, r2: f64, provenance_zero: bool) -> ScoreValue {
    let value = (components[0] - r1 - r2).min(components[1] - r1).min(components[2] - r2);
    ScoreValue {
        value,
        provenance: Provenance::MacComposite { components, r1, r2 },
        zero_mass: provenance_zero,
    }
}

fn check_rates(r1: f64, r2: f64) -> Result<()> {
    if !(r1 >= 0.0 && r2 >= 0.0) {
        return Err(invalid("rates must be non-negative"));
    }
    Ok(())
}

/// `min{U0 - R1 - R2, U1 - R1, U2 - R2}` with the components recorded.
#[allow(clippy::too_many_arguments)]
pub fn mac_universal_score(
    family: &MetricFamily,
    q1: &CodingEnsemble,
    q2: &CodingEnsemble,
    x1: &Sequence,
    x2: &Sequence,
    y: &Sequence,
    r1: f64,
    r2: f64,
) -> Result<ScoreValue> {
    check_rates(r1, r2)?;
    let masses = mac_class_masses(family, q1, q2, x1, x2, y)?;
    let n = y.len();
    let mut zero = false;
    let components = masses.map(|m| {
        let (v, z) = neg_normalized(m, n);
        zero |= z;
        v
    });
    Ok(composite(components, r1, r2, zero))
}

/// The LZ form of the MAC composite metric, using `LZ(x1,x2|y)`,
/// `LZ(x1|x2,y)` and `LZ(x2|x1,y)`.
#[allow(clippy::too_many_arguments)]
pub fn mac_lz_score(
    q1: &CodingEnsemble,
    q2: &CodingEnsemble,
    x1: &Sequence,
    x2: &Sequence,
    y: &Sequence,
    r1: f64,
    r2: f64,
) -> Result<ScoreValue> {
    check_rates(r1, r2)?;
    check_lz_ensemble(q1)?;
    check_lz_ensemble(q2)?;
    check_ensemble(q1, x1, y)?;
    check_ensemble(q2, x2, y)?;
    let n = y.len() as f64;
    let (l1, l2) = (log_prob(q1, x1, None)?, log_prob(q2, x2, None)?);
    let u0 = -(l1 + l2 + conditional_lz_length(&x1.pair_with(x2)?, y)?) / n;
    let u1 = -(l1 + conditional_lz_length(x1, &x2.pair_with(y)?)?) / n;
    let u2 = -(l2 + conditional_lz_length(x2, &x1.pair_with(y)?)?) / n;
    let components = [u0, u1, u2];
    let zero = components.iter().any(|c| c.is_infinite());
    Ok(composite(components, r1, r2, zero))
}

/// A codeword scorer; larger is better.
pub trait Scorer: Sync {
    fn score(&self, x: &Sequence, y: &Sequence) -> Result<f64>;
    fn label(&self) -> String;
}

pub struct ThetaScorer {
    pub family: MetricFamily,
    pub theta: MetricIndex,
    pub name: String,
}

impl Scorer for ThetaScorer {
    fn score(&self, x: &Sequence, y: &Sequence) -> Result<f64> {
        metric_score(&self.family, &self.theta, x, y)
    }
    fn label(&self) -> String {
        self.name.clone()
    }
}

pub struct UniversalScorer {
    pub family: MetricFamily,
    pub ensemble: CodingEnsemble,
}

impl Scorer for UniversalScorer {
    fn score(&self, x: &Sequence, y: &Sequence) -> Result<f64> {
        universal_score(&self.family, &self.ensemble, x, y).map(|s| s.value)
    }
    fn label(&self) -> String {
        "universal".into()
    }
}

pub struct LzScorer {
    pub ensemble: CodingEnsemble,
}

impl Scorer for LzScorer {
    fn score(&self, x: &Sequence, y: &Sequence) -> Result<f64> {
        lz_universal_score(&self.ensemble, x, y).map(|s| s.value)
    }
    fn label(&self) -> String {
        "lz".into()
    }
}

pub struct MlScorer {
    pub channel: ChannelModel,
}

impl Scorer for MlScorer {
    fn score(&self, x: &Sequence, y: &Sequence) -> Result<f64> {
        log_likelihood(&self.channel, x, y)
    }
    fn label(&self) -> String {
        "ml".into()
    }
}

/// Empirical mutual information `I(x; y)`.
pub struct MmiScorer;

impl Scorer for MmiScorer {
    fn score(&self, x: &Sequence, y: &Sequence) -> Result<f64> {
        Ok(empirical_measures(&empirical_joint_type(x, y)?, None)?.i_xy)
    }
    fn label(&self) -> String {
        "mmi".into()
    }
}

/// Negative empirical conditional entropy `-H(x|y)`.
pub struct MinEquivocationScorer;

impl Scorer for MinEquivocationScorer {
    fn score(&self, x: &Sequence, y: &Sequence) -> Result<f64> {
        Ok(-empirical_measures(&empirical_joint_type(x, y)?, None)?.h_x_given_y)
    }
    fn label(&self) -> String {
        "min_equivocation".into()
    }
}

/// Outcome of a maximum-metric decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// 0-based index of the decoded codeword.
    pub chosen: usize,
    pub best: f64,
    pub tie: bool,
    pub tied: Vec<usize>,
}

/// Slack used when comparing scores of different classes.
pub fn score_tolerance(reference: f64) -> f64 {
    1e-12 * reference.abs().max(1.0)
}

/// `a >= b` up to [`score_tolerance`]; `-inf >= -inf` holds.
pub fn at_least(a: f64, b: f64) -> bool {
    if b == f64::NEG_INFINITY || a == f64::INFINITY {
        return true;
    }
    if !b.is_finite() || !a.is_finite() {
        return a >= b;
    }
    a >= b - score_tolerance(b)
}

/// Argmax with lowest-index tie-break. NaN counts as `-inf`.
pub fn decide(scores: &[f64]) -> Result<DecodeResult> {
    if scores.is_empty() {
        return Err(invalid("cannot decode with an empty codebook"));
    }
    let clean = |s: f64| if s.is_nan() { f64::NEG_INFINITY } else { s };
    let best = scores.iter().copied().map(clean).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..scores.len()).filter(|&i| at_least(clean(scores[i]), best)).collect();
    Ok(DecodeResult { chosen: tied[0], best, tie: tied.len() > 1, tied })
}

pub fn decode(codewords: &[Sequence], y: &Sequence, scorer: &dyn Scorer) -> Result<DecodeResult> {
    let scores = codewords.iter().map(|x| scorer.score(x, y)).collect::<Result<Vec<_>>>()?;
    decide(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::random_theta_grid;
    use crate::types::conditional_class_size;
    use std::collections::HashMap;

    fn seq(bits: &[u32]) -> Sequence {
        Sequence::binary(bits).unwrap()
    }

    fn additive() -> MetricFamily {
        MetricFamily::additive(2, 2)
    }

    #[test]
    fn universal_examples() {
        let q = CodingEnsemble::uniform(2, 2);
        let u = universal_score(&additive(), &q, &seq(&[0, 1]), &seq(&[0, 0])).unwrap();
        assert!((u.value - 0.5).abs() < 1e-12);
        assert_eq!(u.provenance, Provenance::UniversalExact);
        let u = universal_score(&additive(), &q, &seq(&[0, 0]), &seq(&[0, 0])).unwrap();
        assert!((u.value - 1.0).abs() < 1e-12);
        let q = CodingEnsemble::uniform_over_type(vec![1, 1]).unwrap();
        let u = universal_score(&additive(), &q, &seq(&[0, 1]), &seq(&[0, 1])).unwrap();
        assert!((u.value - 0.5).abs() < 1e-12);
        let u = universal_score(&additive(), &q, &seq(&[0, 0]), &seq(&[0, 1])).unwrap();
        assert!(u.zero_mass && u.value == f64::INFINITY);
    }

    #[test]
    fn lz_examples() {
        let q = CodingEnsemble::uniform(2, 4);
        let x = seq(&[0, 1, 1, 0]);
        assert_eq!(lz_universal_score(&q, &x, &x).unwrap().value, 1.0);
        assert_eq!(lz_universal_score(&q, &x, &seq(&[0, 0, 0, 0])).unwrap().value, 0.5);
        assert_eq!(lz_universal_score(&q, &seq(&[0, 1, 0, 1]), &seq(&[0, 0, 1, 1])).unwrap().value, 0.0);
        let machine = crate::ensemble::FeedbackStateMachine::new(2, 2, 0, vec![vec![0.5, 0.5]], |_, _, _| 0).unwrap();
        let fb = CodingEnsemble::feedback(2, 4, machine).unwrap();
        assert!(lz_universal_score(&fb, &x, &x).is_err());
    }

    #[test]
    fn mac_examples() {
        let family = MetricFamily::mac_xor_additive(2, 2);
        let q = CodingEnsemble::uniform(2, 2);
        let (x1, x2, y) = (seq(&[0, 0]), seq(&[0, 1]), seq(&[0, 1]));
        let s = mac_universal_score(&family, &q, &q, &x1, &x2, &y, 0.5, 0.5).unwrap();
        let Provenance::MacComposite { components, .. } = s.provenance else { panic!() };
        for c in components {
            assert!((c - 1.0).abs() < 1e-12);
        }
        assert!(s.value.abs() < 1e-12);
        let s = mac_universal_score(&family, &q, &q, &x1, &x2, &y, 0.0, 0.0).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!(mac_universal_score(&family, &q, &q, &x1, &x2, &y, -0.1, 0.0).is_err());
    }

    #[test]
    fn mac_closed_form_matches_enumeration() {
        // An iid ensemble that happens to be uniform takes the enumeration path.
        let family = MetricFamily::mac_xor_additive(2, 2);
        let uniform = CodingEnsemble::uniform(2, 3);
        let iid = CodingEnsemble::iid(vec![0.5, 0.5], 3).unwrap();
        for x1 in Sequence::all(2, 3).unwrap() {
            for x2 in Sequence::all(2, 3).unwrap() {
                for y in [seq(&[0, 1, 1]), seq(&[0, 0, 0])] {
                    let a = mac_class_masses(&family, &uniform, &uniform, &x1, &x2, &y).unwrap();
                    let b = mac_class_masses(&family, &iid, &iid, &x1, &x2, &y).unwrap();
                    for k in 0..3 {
                        assert!((a[k] - b[k]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn mac_component_identity() {
        let family = MetricFamily::mac_xor_additive(2, 2);
        let q = CodingEnsemble::uniform(2, 4);
        let skewed = CodingEnsemble::iid(vec![0.7, 0.3], 4).unwrap();
        let y = seq(&[1, 0, 1, 1]);
        for (x1, x2) in [(seq(&[0, 1, 1, 0]), seq(&[1, 1, 0, 0])), (seq(&[1, 1, 1, 1]), seq(&[0, 0, 0, 1]))] {
            for (r1, r2) in [(0.0, 0.0), (0.25, 0.5), (0.4, 0.1)] {
                for s in [
                    mac_universal_score(&family, &q, &skewed, &x1, &x2, &y, r1, r2).unwrap(),
                    mac_lz_score(&q, &skewed, &x1, &x2, &y, r1, r2).unwrap(),
                ] {
                    let Provenance::MacComposite { components: c, .. } = s.provenance else { panic!() };
                    assert_eq!(s.value, (c[0] - r1 - r2).min(c[1] - r1).min(c[2] - r2));
                }
            }
        }
    }

    #[test]
    fn decode_examples() {
        let r = decide(&[1.0, 3.0, 2.0]).unwrap();
        assert_eq!((r.chosen, r.tie), (1, false));
        let r = decide(&[2.0, 2.0]).unwrap();
        assert_eq!((r.chosen, r.tie, r.tied.clone()), (0, true, vec![0, 1]));
        let r = decide(&[f64::NEG_INFINITY; 3]).unwrap();
        assert_eq!((r.chosen, r.tie), (0, true));
        assert!(decide(&[]).is_err());
    }

    #[test]
    fn decode_is_scale_invariant() {
        let mut rng = crate::ensemble::stream_rng(9, 0);
        use rand::Rng;
        for _ in 0..500 {
            let scores: Vec<f64> = (0..8).map(|_| rng.random_range(0..5) as f64 * 0.5).collect();
            let c: f64 = rng.random_range(0.01..100.0);
            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            let (a, b) = (decide(&scores).unwrap(), decide(&scaled).unwrap());
            assert_eq!((a.chosen, a.tie, a.tied), (b.chosen, b.tie, b.tied));
        }
    }

    /// Scores agree across every class, for additive and finite-state families.
    #[test]
    fn scores_constant_on_classes() {
        let fs = MetricFamily::finite_state(2, 2, 2, 0, |a, _b, _s| a as usize).unwrap();
        for family in [additive(), fs] {
            let thetas = random_theta_grid(&family, 25, 11);
            for n in 1..=6 {
                let q = CodingEnsemble::iid(vec![0.6, 0.4], n).unwrap();
                for y in Sequence::all(2, n).unwrap() {
                    let mut seen: HashMap<Vec<u64>, (Vec<f64>, f64)> = HashMap::new();
                    for x in Sequence::all(2, n).unwrap() {
                        let key = class_key(&family, &x, &y).unwrap().canonical();
                        let scores: Vec<f64> =
                            thetas.iter().map(|t| metric_score(&family, t, &x, &y).unwrap()).collect();
                        let u = universal_score(&family, &q, &x, &y).unwrap().value;
                        if let Some((prev, pu)) = seen.get(&key) {
                            for (a, b) in prev.iter().zip(&scores) {
                                assert!((a - b).abs() < 1e-9);
                            }
                            assert_eq!(*pu, u);
                        } else {
                            seen.insert(key, (scores, u));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn uniform_over_type_ranks_by_class_size() {
        let q = CodingEnsemble::uniform_over_type(vec![3, 3]).unwrap();
        let words: Vec<Sequence> = Sequence::all(2, 6).unwrap().filter(|x| x.composition() == vec![3, 3]).collect();
        for y in Sequence::all(2, 6).unwrap() {
            let u: Vec<f64> = words.iter().map(|x| universal_score(&additive(), &q, x, &y).unwrap().value).collect();
            let t: Vec<f64> = words
                .iter()
                .map(|x| -log2_big(&conditional_class_size(&empirical_joint_type(x, &y).unwrap())))
                .collect();
            for i in 0..words.len() {
                for j in 0..words.len() {
                    assert_eq!(at_least(u[i], u[j]), at_least(t[i], t[j]));
                }
            }
        }
    }

    #[test]
    fn baseline_scorers() {
        let x = seq(&[0, 1, 0, 1]);
        assert!((MmiScorer.score(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(MinEquivocationScorer.score(&x, &x).unwrap(), 0.0);
        let ml = MlScorer { channel: ChannelModel::bsc(0.1) };
        let r = decode(&[seq(&[1, 1, 1, 1]), x.clone(), seq(&[0, 1, 0, 0])], &x, &ml).unwrap();
        assert_eq!(r.chosen, 1);
    }
}
