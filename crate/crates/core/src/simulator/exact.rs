//! Exhaustive oracles for pairwise error masses and the sandwich bounds.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::channel::{log_likelihood, ChannelModel};
use crate::decoder::{at_least, mac_class_masses, mac_universal_score, universal_score, Scorer};
use crate::ensemble::{log_prob, messages_for_rate, CodingEnsemble};
use crate::error::{invalid, too_large, Result};
use crate::metric::{mac_metric_score, MetricFamily, MetricIndex};
use crate::types::{class_key, classes_for_y, count_classes, enumeration_size, CountStrategy, Sequence, MAX_ENUMERATION};

/// Relative slack allowed on exact floating-point comparisons.
pub const TOLERANCE: f64 = 1e-9;

fn guard(alphabet: usize, n: usize, factor: u64) -> Result<()> {
    let size = enumeration_size(alphabet, n)?;
    if size.saturating_mul(factor) > MAX_ENUMERATION.saturating_mul(64) {
        return Err(too_large(format!("{alphabet}^{n} sequences times {factor}")));
    }
    Ok(())
}

/// `(x', Q(x'|y))` for every `x'` in `X^n`.
fn competitor_law(ensemble: &CodingEnsemble, y: &Sequence) -> Result<Vec<(Sequence, f64)>> {
    guard(ensemble.alphabet, ensemble.n, 1)?;
    let cond = ensemble.is_feedback().then_some(y);
    Sequence::all(ensemble.alphabet, ensemble.n)?
        .map(|w| {
            let p = log_prob(ensemble, &w, cond)?.exp2();
            Ok((w, p))
        })
        .collect()
}

fn pairwise_mass(law: &[(Sequence, f64)], scorer: &dyn Scorer, x: &Sequence, y: &Sequence) -> Result<f64> {
    let own = scorer.score(x, y)?;
    let mut total = 0.0;
    for (w, p) in law {
        if *p > 0.0 && at_least(scorer.score(w, y)?, own) {
            total += p;
        }
    }
    Ok(total)
}

/// Pairwise error mass of one scorer at one `(x, y)`, with the sandwich bounds
/// built from the universal metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseErrorReport {
    pub scorer: String,
    pub pairwise: f64,
    pub log2_pairwise: f64,
    pub universal: f64,
    /// `2^{-nU}`.
    pub lower_bound: f64,
    /// `K_n(y) 2^{-nU}`.
    pub upper_bound: f64,
    pub k_of_y: u128,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

/// Exact `sum_{x': score(x',y) >= score(x,y)} Q(x'|y)` by enumeration of `X^n`.
pub fn pairwise_error_exact(
    ensemble: &CodingEnsemble,
    family: &MetricFamily,
    scorer: &dyn Scorer,
    x: &Sequence,
    y: &Sequence,
) -> Result<PairwiseErrorReport> {
    Ok(pairwise_errors(ensemble, family, &[scorer], x, y)?.remove(0))
}

/// [`pairwise_error_exact`] for several scorers sharing one enumeration.
pub fn pairwise_errors(
    ensemble: &CodingEnsemble,
    family: &MetricFamily,
    scorers: &[&dyn Scorer],
    x: &Sequence,
    y: &Sequence,
) -> Result<Vec<PairwiseErrorReport>> {
    let law = competitor_law(ensemble, y)?;
    let n = x.len() as f64;
    let u = universal_score(family, ensemble, x, y)?.value;
    let k = classes_for_y(family, y)?;
    let lower = (-n * u).exp2();
    let upper = k as f64 * lower;
    scorers
        .iter()
        .map(|s| {
            let pairwise = pairwise_mass(&law, *s, x, y)?;
            Ok(PairwiseErrorReport {
                scorer: s.label(),
                pairwise,
                log2_pairwise: pairwise.log2(),
                universal: u,
                lower_bound: lower,
                upper_bound: upper,
                k_of_y: k,
                lower_ok: pairwise >= lower * (1.0 - TOLERANCE),
                upper_ok: pairwise <= upper * (1.0 + TOLERANCE),
            })
        })
        .collect()
}

/// Exact error probability of a decoder with `m` independent codewords when
/// ties count as errors: `E[1 - (1 - Pi(X,Y))^{m-1}]`.
pub fn exact_error_probability(
    ensemble: &CodingEnsemble,
    scorer: &dyn Scorer,
    channel: &ChannelModel,
    m: u64,
) -> Result<f64> {
    if m < 2 {
        return Err(invalid("need at least two codewords"));
    }
    if matches!(ensemble.kind, crate::ensemble::EnsembleKind::LinearDithered { .. }) {
        return Err(invalid("linear codewords are only pairwise independent"));
    }
    let ya = channel.output_alphabet();
    guard(ensemble.alphabet, ensemble.n, enumeration_size(ya, ensemble.n)?.saturating_mul(enumeration_size(ensemble.alphabet, ensemble.n)?))?;
    let mut total = 0.0;
    for y in Sequence::all(ya, ensemble.n)? {
        let law = competitor_law(ensemble, &y)?;
        for (x, q) in &law {
            if *q == 0.0 {
                continue;
            }
            let w = q * log_likelihood(channel, x, &y)?.exp2();
            if w == 0.0 {
                continue;
            }
            let pi = pairwise_mass(&law, scorer, x, &y)?.min(1.0);
            total += w * (1.0 - (1.0 - pi).powf((m - 1) as f64));
        }
    }
    Ok(total)
}

/// One pointwise sandwich check at `(x, y)` for one scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactAuditRow {
    pub x: String,
    pub y: String,
    pub scorer: String,
    pub pairwise: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactAuditReport {
    pub n: usize,
    pub rate: f64,
    pub m: u64,
    pub m_shift: u64,
    pub k_n: u128,
    pub delta_n: f64,
    pub pointwise_cases: u64,
    pub pointwise_violations: u64,
    /// Classes whose closed-form mass disagrees with the enumerated one.
    pub closed_form_mismatches: u64,
    /// `E min{1, (M-1) Pi_u}`.
    pub f_universal: f64,
    /// `E min{1, (M-1) Pi_theta}` per theta.
    pub f_theta: Vec<(String, f64)>,
    /// `E min{1, (M'-1) Pi_theta}` at `M' = floor(2^{n(R + Delta_n)})`.
    pub f_theta_shift: Vec<(String, f64)>,
    pub rate_bound_rhs: f64,
    pub shift_bound_rhs: f64,
    pub rate_bound_ok: bool,
    pub shift_bound_ok: bool,
    pub rows: Vec<ExactAuditRow>,
}

impl ExactAuditReport {
    pub fn pass(&self) -> bool {
        self.pointwise_violations == 0 && self.closed_form_mismatches == 0 && self.rate_bound_ok && self.shift_bound_ok
    }
}

struct ClassTable {
    /// Count tensor and enumerated mass per class.
    classes: Vec<(Vec<u64>, f64)>,
    /// Class index of every `x'` in enumeration order.
    member_of: Vec<usize>,
    /// `Q(x'|y)` in enumeration order.
    law: Vec<f64>,
}

fn class_table(ensemble: &CodingEnsemble, family: &MetricFamily, y: &Sequence) -> Result<ClassTable> {
    let law = competitor_law(ensemble, y)?;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut classes: Vec<(Vec<u64>, f64)> = Vec::new();
    let mut member_of = Vec::with_capacity(law.len());
    for (w, p) in &law {
        let key = class_key(family, w, y)?.counts;
        let next = classes.len();
        let c = *index.entry(key.clone()).or_insert(next);
        if c == next {
            classes.push((key, 0.0));
        }
        classes[c].1 += p;
        member_of.push(c);
    }
    Ok(ClassTable { classes, member_of, law: law.into_iter().map(|(_, p)| p).collect() })
}

/// Exact-mode audit over all `(x, y)`: the pointwise sandwich
/// `2^{-nU} <= Pi_theta` and `Pi_u <= K_n(y) 2^{-nU}` for every theta, and the
/// clipped union functionals that bracket the error probabilities.
pub fn universality_audit_exact(
    ensemble: &CodingEnsemble,
    family: &MetricFamily,
    channel: &ChannelModel,
    thetas: &[MetricIndex],
    rate: f64,
    keep_rows: bool,
) -> Result<ExactAuditReport> {
    ensemble.validate()?;
    family.validate()?;
    if thetas.is_empty() {
        return Err(invalid("the audit needs at least one theta"));
    }
    for t in thetas {
        t.check(family)?;
    }
    let n = ensemble.n;
    let (xa, ya) = family.alphabets();
    if xa != ensemble.alphabet || channel.input_alphabet() != xa || channel.output_alphabet() != ya {
        return Err(invalid("ensemble, family and channel alphabets disagree"));
    }
    guard(xa, n, enumeration_size(ya, n)?)?;
    let report = count_classes(family, n, CountStrategy::Auto)?;
    let (k_n, delta_n) = (report.k_n, report.delta_n);
    let m = messages_for_rate(n, rate);
    let m_shift = messages_for_rate(n, rate + delta_n);
    let labels: Vec<String> = thetas.iter().map(|t| super::theta_label(&t.values)).collect();

    let mut cases = 0u64;
    let mut violations = 0u64;
    let mut mismatches = 0u64;
    let mut f_u = 0.0;
    let mut f_t = vec![0.0; thetas.len()];
    let mut f_s = vec![0.0; thetas.len()];
    let mut rows = Vec::new();
    let words: Vec<Sequence> = Sequence::all(xa, n)?.collect();

    for y in Sequence::all(ya, n)? {
        let table = class_table(ensemble, family, &y)?;
        let kc = table.classes.len();
        if kc as u128 != classes_for_y(family, &y)? {
            mismatches += 1;
        }
        let u: Vec<f64> = table
            .classes
            .iter()
            .map(|(_, mass)| if *mass > 0.0 { -mass.log2() / n as f64 } else { f64::INFINITY })
            .collect();
        let pi_u: Vec<f64> = (0..kc)
            .map(|c| (0..kc).filter(|&d| at_least(u[d], u[c])).map(|d| table.classes[d].1).sum())
            .collect();
        let scores: Vec<Vec<f64>> =
            thetas.iter().map(|t| table.classes.iter().map(|(k, _)| t.dot(k)).collect()).collect();
        let pi_t: Vec<Vec<f64>> = scores
            .iter()
            .map(|s| (0..kc).map(|c| (0..kc).filter(|&d| at_least(s[d], s[c])).map(|d| table.classes[d].1).sum()).collect())
            .collect();

        let mut checked = vec![false; kc];
        for (i, x) in words.iter().enumerate() {
            let q = table.law[i];
            if q == 0.0 {
                continue;
            }
            let c = table.member_of[i];
            if !checked[c] {
                checked[c] = true;
                let closed = universal_score(family, ensemble, x, &y)?.value;
                if (closed - u[c]).abs() > TOLERANCE * u[c].abs().max(1.0) {
                    mismatches += 1;
                }
            }
            let mass = table.classes[c].1;
            let upper = kc as f64 * mass;
            let upper_ok = pi_u[c] <= upper * (1.0 + TOLERANCE);
            cases += 1;
            if !upper_ok {
                violations += 1;
            }
            if keep_rows {
                rows.push(ExactAuditRow {
                    x: x.to_string(),
                    y: y.to_string(),
                    scorer: "universal".into(),
                    pairwise: pi_u[c],
                    lower_bound: mass,
                    upper_bound: upper,
                    pass: upper_ok && pi_u[c] >= mass * (1.0 - TOLERANCE),
                });
            }
            for (t, pi) in pi_t.iter().enumerate() {
                let ok = pi[c] >= mass * (1.0 - TOLERANCE);
                cases += 1;
                if !ok {
                    violations += 1;
                }
                if keep_rows {
                    rows.push(ExactAuditRow {
                        x: x.to_string(),
                        y: y.to_string(),
                        scorer: labels[t].clone(),
                        pairwise: pi[c],
                        lower_bound: mass,
                        upper_bound: upper,
                        pass: ok,
                    });
                }
            }

            let w = q * log_likelihood(channel, x, &y)?.exp2();
            if w == 0.0 {
                continue;
            }
            let clip = |count: u64, p: f64| ((count - 1) as f64 * p).min(1.0);
            f_u += w * clip(m, pi_u[c]);
            for t in 0..thetas.len() {
                f_t[t] += w * clip(m, pi_t[t][c]);
                f_s[t] += w * clip(m_shift, pi_t[t][c]);
            }
        }
    }

    let min_t = f_t.iter().copied().fold(f64::INFINITY, f64::min);
    let min_s = f_s.iter().copied().fold(f64::INFINITY, f64::min);
    let rate_rhs = k_n as f64 * min_t;
    Ok(ExactAuditReport {
        n,
        rate,
        m,
        m_shift,
        k_n,
        delta_n,
        pointwise_cases: cases,
        pointwise_violations: violations,
        closed_form_mismatches: mismatches,
        f_universal: f_u,
        f_theta: labels.iter().cloned().zip(f_t).collect(),
        f_theta_shift: labels.into_iter().zip(f_s).collect(),
        rate_bound_rhs: rate_rhs,
        shift_bound_rhs: min_s,
        rate_bound_ok: f_u <= rate_rhs * (1.0 + TOLERANCE) + 1e-15,
        shift_bound_ok: f_u <= min_s * (1.0 + TOLERANCE) + 1e-15,
        rows,
    })
}

/// The three MAC pairwise error masses of `m_theta` at `(x1, x2, y)`:
/// both messages wrong, only user 1 wrong, only user 2 wrong.
#[allow(clippy::too_many_arguments)]
pub fn mac_pairwise_exact(
    q1: &CodingEnsemble,
    q2: &CodingEnsemble,
    score: &dyn Fn(&Sequence, &Sequence) -> Result<f64>,
    x1: &Sequence,
    x2: &Sequence,
) -> Result<[f64; 3]> {
    guard(q1.alphabet, q1.n, enumeration_size(q2.alphabet, q2.n)?)?;
    let law1: Vec<(Sequence, f64)> = Sequence::all(q1.alphabet, q1.n)?
        .map(|w| Ok((w.clone(), log_prob(q1, &w, None)?.exp2())))
        .collect::<Result<_>>()?;
    let law2: Vec<(Sequence, f64)> = Sequence::all(q2.alphabet, q2.n)?
        .map(|w| Ok((w.clone(), log_prob(q2, &w, None)?.exp2())))
        .collect::<Result<_>>()?;
    let own = score(x1, x2)?;
    let mut out = [0.0; 3];
    for (u, pu) in &law1 {
        if at_least(score(u, x2)?, own) {
            out[1] += pu;
        }
        for (v, pv) in &law2 {
            if at_least(score(u, v)?, own) {
                out[0] += pu * pv;
            }
        }
    }
    for (v, pv) in &law2 {
        if at_least(score(x1, v)?, own) {
            out[2] += pv;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MacSandwichReport {
    pub instances: u64,
    /// `(instance, theta, error type)` comparisons `2^{-nU_k} <= P^(k)_theta`.
    pub lower_cases: u64,
    pub lower_violations: u64,
    /// Comparisons `P^(k)_u <= K(y) 2^{-n(U + rate terms)}` for the composite metric.
    pub upper_cases: u64,
    pub upper_violations: u64,
}

impl MacSandwichReport {
    pub fn pass(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0
    }
}

/// Exact MAC sandwich over the given `(x1, x2, y)` instances.
#[allow(clippy::too_many_arguments)]
pub fn mac_sandwich(
    family: &MetricFamily,
    q1: &CodingEnsemble,
    q2: &CodingEnsemble,
    thetas: &[MetricIndex],
    instances: &[(Sequence, Sequence, Sequence)],
    r1: f64,
    r2: f64,
) -> Result<MacSandwichReport> {
    let MetricFamily::MacXorAdditive { alphabet, y_alphabet } = family else {
        return Err(invalid("the MAC sandwich needs a mac_xor_additive family"));
    };
    let single = MetricFamily::additive(*alphabet, *y_alphabet);
    let mut report = MacSandwichReport::default();
    for (x1, x2, y) in instances {
        let n = y.len() as f64;
        let masses = mac_class_masses(family, q1, q2, x1, x2, y)?;
        for theta in thetas {
            let score = |a: &Sequence, b: &Sequence| mac_metric_score(family, theta, a, b, y);
            let p = mac_pairwise_exact(q1, q2, &score, x1, x2)?;
            for k in 0..3 {
                report.lower_cases += 1;
                if p[k] < masses[k].exp2() * (1.0 - TOLERANCE) {
                    report.lower_violations += 1;
                }
            }
        }
        let k_y = classes_for_y(&single, y)? as f64;
        let composite = |a: &Sequence, b: &Sequence| mac_universal_score(family, q1, q2, a, b, y, r1, r2).map(|s| s.value);
        let u = composite(x1, x2)?;
        let p = mac_pairwise_exact(q1, q2, &composite, x1, x2)?;
        let caps = [
            k_y * (-n * (u + r1 + r2)).exp2(),
            k_y * (-n * (u + r1)).exp2(),
            k_y * (-n * (u + r2)).exp2(),
        ];
        for k in 0..3 {
            report.upper_cases += 1;
            if p[k] > caps[k] * (1.0 + TOLERANCE) {
                report.upper_violations += 1;
            }
        }
        report.instances += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{MlScorer, ThetaScorer, UniversalScorer};
    use crate::ensemble::FeedbackStateMachine;
    use crate::metric::binary_theta_grid;

    fn seq(bits: &[u32]) -> Sequence {
        Sequence::binary(bits).unwrap()
    }

    fn hamming() -> ThetaScorer {
        let family = MetricFamily::additive(2, 2);
        ThetaScorer { theta: MetricIndex::hamming_match(&family).unwrap(), family, name: "hamming".into() }
    }

    #[test]
    fn pairwise_examples() {
        let family = MetricFamily::additive(2, 2);
        let q = CodingEnsemble::uniform(2, 2);
        let r = pairwise_error_exact(&q, &family, &hamming(), &seq(&[0, 0]), &seq(&[0, 0])).unwrap();
        assert!((r.pairwise - 0.25).abs() < 1e-12 && (r.lower_bound - 0.25).abs() < 1e-12);
        assert!(r.lower_ok);
        let r = pairwise_error_exact(&q, &family, &hamming(), &seq(&[0, 1]), &seq(&[0, 0])).unwrap();
        assert!((r.pairwise - 0.75).abs() < 1e-12 && (r.lower_bound - 0.5).abs() < 1e-12);
        let universal = UniversalScorer { family: family.clone(), ensemble: q.clone() };
        for x in Sequence::all(2, 2).unwrap() {
            let r = pairwise_error_exact(&q, &family, &universal, &x, &seq(&[0, 0])).unwrap();
            assert_eq!(r.k_of_y, 3);
            assert!(r.lower_ok && r.upper_ok);
        }
    }

    #[test]
    fn exact_audit_n6() {
        let family = MetricFamily::additive(2, 2);
        let q = CodingEnsemble::uniform(2, 6);
        let report =
            universality_audit_exact(&q, &family, &ChannelModel::bsc(0.1), &binary_theta_grid(5), 0.25, false).unwrap();
        assert_eq!(report.pointwise_violations, 0);
        assert_eq!(report.closed_form_mismatches, 0);
        assert!(report.pass(), "{report:?}");
        assert_eq!(report.pointwise_cases, 64 * 64 * 26);
    }

    #[test]
    fn noiseless_channel_has_zero_functionals() {
        let family = MetricFamily::additive(2, 2);
        let q = CodingEnsemble::uniform(2, 4);
        let report = universality_audit_exact(&q, &family, &ChannelModel::bsc(0.0), &binary_theta_grid(3), 0.25, true).unwrap();
        assert!(report.pass());
        assert_eq!(report.rows.len() as u64, report.pointwise_cases);
    }

    #[test]
    fn feedback_audit() {
        let machine =
            FeedbackStateMachine::new(2, 2, 0, vec![vec![0.8, 0.2], vec![0.3, 0.7]], |_, _, y| y as usize).unwrap();
        let q = CodingEnsemble::feedback(2, 4, machine).unwrap();
        let family = MetricFamily::additive(2, 2);
        let report = universality_audit_exact(&q, &family, &ChannelModel::bsc(0.2), &binary_theta_grid(5), 0.25, false).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn exact_error_probability_two_codewords() {
        // M = 2, n = 1, BSC p, Hamming metric with ties as errors:
        // error iff the competitor equals y or equals x -> P = E[Q(x' matches y or x)].
        let q = CodingEnsemble::uniform(2, 1);
        let p = 0.2;
        let value = exact_error_probability(&q, &hamming(), &ChannelModel::bsc(p), 2).unwrap();
        // y = x: competitor ties only if x' = x (prob 1/2). y != x: x' = y beats, x' = x ties: prob 1.
        assert!((value - ((1.0 - p) * 0.5 + p)).abs() < 1e-12);
        let ml = MlScorer { channel: ChannelModel::bsc(p) };
        let v2 = exact_error_probability(&q, &ml, &ChannelModel::bsc(p), 2).unwrap();
        assert!((value - v2).abs() < 1e-12);
    }

    #[test]
    fn mac_sandwich_small() {
        let family = MetricFamily::mac_xor_additive(2, 2);
        let q = CodingEnsemble::uniform(2, 3);
        let thetas = binary_theta_grid(3);
        let mut instances = Vec::new();
        for x1 in Sequence::all(2, 3).unwrap().step_by(3) {
            for x2 in Sequence::all(2, 3).unwrap().step_by(2) {
                instances.push((x1.clone(), x2, seq(&[0, 1, 1])));
            }
        }
        let report = mac_sandwich(&family, &q, &q, &thetas, &instances, 0.2, 0.3).unwrap();
        assert!(report.pass(), "{report:?}");
    }
}
