//! Seeded Monte Carlo estimates of decoding error probabilities.
//!
//! Every configured decoder sees the same codebook, message and channel
//! output within a trial. Trial `t` derives all of its randomness from
//! `mix(seed, t)`, so estimates do not depend on thread count or order.
//!
//! The type-domain engine applies when codewords are i.i.d., the family is
//! additive and every decoder depends on a codeword only through its joint
//! type with `y`. Competitors then matter only through how many fall in each
//! class, and that histogram is multinomial with closed-form class masses.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::ErrorEstimate;
use super::{make_scorer, DecoderSpec, Engine, TiePolicy};
use crate::channel::{mac_log_likelihood, mac_transmit, transmit, ChannelModel, ChannelRun};
use crate::decoder::{at_least, decide, mac_lz_score, mac_universal_score, Scorer};
use crate::ensemble::{
    draw_symbol, messages_for_rate, mix, sample_codebook, sample_feedback_codebook, stream_rng, CodingEnsemble,
    EnsembleKind, TreeWalker,
};
use crate::error::{invalid, too_large, Error, Result};
use crate::metric::{mac_metric_score, MetricFamily, MetricIndex};
use crate::types::{
    count_classes, empirical_joint_type, empirical_measures, weak_compositions, CountStrategy, JointType, Sequence,
};

/// Largest number of classes tabulated for one output composition.
const MAX_TABLE_CLASSES: usize = 1 << 20;

/// Largest codebook materialised by the direct engine.
const MAX_DIRECT_CODEWORDS: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub ensemble: CodingEnsemble,
    pub family: MetricFamily,
    pub channel: ChannelModel,
    /// Expanded decoder list (no `theta_grid` entries).
    pub decoders: Vec<DecoderSpec>,
    pub rate: f64,
    pub trials: u64,
    pub seed: u64,
    pub engine: Engine,
    pub tie_policy: TiePolicy,
    /// Also estimate the theta decoders at rate `R + Delta_n` on the same trials.
    pub shifted: bool,
}

/// A bound of the form `lhs <= rhs` checked at 95% separation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    /// Point estimate of the left side.
    pub lhs: f64,
    /// Upper confidence edge of the left side.
    pub lhs_hi: f64,
    /// Right side computed from lower confidence edges.
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub n: usize,
    pub rate: f64,
    pub m: u64,
    pub m_shift: Option<u64>,
    pub k_n: Option<u128>,
    pub delta_n: Option<f64>,
    pub engine: Engine,
    pub estimates: Vec<ErrorEstimate>,
    /// Theta decoders at `R + Delta_n`.
    pub shifted: Vec<ErrorEstimate>,
    pub bounds: Vec<BoundCheck>,
    /// `P_u / P_ml` when both were estimated and `P_ml > 0`.
    pub ratio_universal_ml: Option<f64>,
    /// Trials where a decoder erred with no competitor scoring at least the truth.
    pub dominance_violations: u64,
}

impl ExperimentResult {
    pub fn estimate(&self, label: &str) -> Option<&ErrorEstimate> {
        self.estimates.iter().find(|e| e.decoder == label)
    }

    pub fn pass(&self) -> bool {
        self.dominance_violations == 0 && self.bounds.iter().all(|b| b.pass)
    }
}

struct TrialOutcome {
    errors: Vec<bool>,
    shifted: Vec<bool>,
    dominance_violation: bool,
}

fn type_domain_eligible(spec: &ExperimentSpec) -> bool {
    let iid = matches!(spec.ensemble.kind, EnsembleKind::Iid { .. } | EnsembleKind::Uniform);
    let additive = matches!(spec.family, MetricFamily::Additive { .. });
    let decoders_ok = spec.decoders.iter().all(|d| match d {
        DecoderSpec::Universal | DecoderSpec::Theta { .. } | DecoderSpec::Mmi | DecoderSpec::MinEquivocation => true,
        DecoderSpec::Ml => spec.channel.is_memoryless(),
        _ => false,
    });
    iid && additive && decoders_ok
}

/// Outcome for one decoder given the count of competitors scoring strictly
/// higher and exactly as high as the truth.
fn judge(policy: TiePolicy, greater: u64, tied: u64, u: f64) -> bool {
    match policy {
        TiePolicy::CountAsError => greater + tied > 0,
        TiePolicy::LowestIndex => greater > 0 || (tied > 0 && u >= 1.0 / (tied + 1) as f64),
    }
}

fn validate_spec(spec: &ExperimentSpec) -> Result<()> {
    spec.ensemble.validate()?;
    spec.family.validate()?;
    spec.channel.validate()?;
    if spec.channel.is_mac() || spec.family.is_mac() {
        return Err(invalid("use run_mac_experiment for multiple access channels"));
    }
    if spec.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if !(spec.rate >= 0.0) {
        return Err(invalid("rate must be non-negative"));
    }
    if spec.decoders.is_empty() {
        return Err(invalid("no decoders configured"));
    }
    let (xa, ya) = spec.family.alphabets();
    if xa != spec.ensemble.alphabet || spec.channel.input_alphabet() != xa || spec.channel.output_alphabet() != ya {
        return Err(invalid("ensemble, family and channel alphabets disagree"));
    }
    Ok(())
}

/// Runs the experiment and evaluates the applicable bounds.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    validate_spec(spec)?;
    let n = spec.ensemble.n;
    let m = messages_for_rate(n, spec.rate);
    let classes = count_classes(&spec.family, n, CountStrategy::Auto).ok();
    let (k_n, delta_n) = match &classes {
        Some(r) => (Some(r.k_n), Some(r.delta_n)),
        None => (None, None),
    };
    let has_theta = spec.decoders.iter().any(DecoderSpec::is_theta);
    let m_shift = match (spec.shifted && has_theta, delta_n) {
        (true, Some(d)) => Some(messages_for_rate(n, spec.rate + d)),
        (true, None) => return Err(too_large("class count needed for the shifted rate is unavailable")),
        _ => None,
    };

    let engine = match spec.engine {
        Engine::Auto if type_domain_eligible(spec) => Engine::TypeDomain,
        Engine::Auto => Engine::Direct,
        Engine::TypeDomain if !type_domain_eligible(spec) => {
            return Err(Error::Unsupported(
                "type-domain engine needs iid codewords, an additive family and class-determined decoders".into(),
            ))
        }
        e => e,
    };
    if engine == Engine::Direct && m_shift.unwrap_or(m) > MAX_DIRECT_CODEWORDS {
        return Err(too_large(format!("{} codewords per trial in the direct engine", m_shift.unwrap_or(m))));
    }

    let outcomes: Vec<TrialOutcome> = match engine {
        Engine::TypeDomain => {
            let ctx = TypeDomain::new(spec)?;
            (0..spec.trials)
                .into_par_iter()
                .map(|t| ctx.trial(spec, t, m, m_shift))
                .collect::<Result<Vec<_>>>()?
        }
        _ => {
            let scorers = spec
                .decoders
                .iter()
                .map(|d| make_scorer(d, &spec.family, &spec.ensemble, &spec.channel))
                .collect::<Result<Vec<_>>>()?;
            (0..spec.trials)
                .into_par_iter()
                .map(|t| direct_trial(spec, &scorers, t, m, m_shift))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let labels: Vec<String> = spec.decoders.iter().map(DecoderSpec::label).collect();
    let count = |k: usize, shifted: bool| -> u64 {
        outcomes.iter().filter(|o| if shifted { o.shifted[k] } else { o.errors[k] }).count() as u64
    };
    let estimates: Vec<ErrorEstimate> = labels
        .iter()
        .enumerate()
        .map(|(k, l)| ErrorEstimate::new(l.clone(), n, spec.rate, spec.trials, count(k, false), spec.seed))
        .collect();
    let shifted: Vec<ErrorEstimate> = match (m_shift, delta_n) {
        (Some(_), Some(d)) => spec
            .decoders
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_theta())
            .map(|(k, _)| {
                ErrorEstimate::new(format!("{}@shift", labels[k]), n, spec.rate + d, spec.trials, count(k, true), spec.seed)
            })
            .collect(),
        _ => Vec::new(),
    };
    let dominance_violations = outcomes.iter().filter(|o| o.dominance_violation).count() as u64;

    let mut result = ExperimentResult {
        n,
        rate: spec.rate,
        m,
        m_shift,
        k_n,
        delta_n,
        engine,
        estimates,
        shifted,
        bounds: Vec::new(),
        ratio_universal_ml: None,
        dominance_violations,
    };
    add_error_bounds(spec, &mut result);
    Ok(result)
}

fn add_error_bounds(spec: &ExperimentSpec, result: &mut ExperimentResult) {
    let Some(u) = result.estimate("universal").cloned() else { return };
    if let Some(ml) = result.estimate("ml") {
        if ml.estimate > 0.0 {
            result.ratio_universal_ml = Some(u.estimate / ml.estimate);
        }
    }
    let theta_lo = |list: &[ErrorEstimate]| -> Option<f64> {
        list.iter()
            .filter(|e| e.decoder.starts_with("theta["))
            .map(|e| e.ci_lo)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
    };
    if !spec.decoders.iter().any(DecoderSpec::is_theta) {
        return;
    }
    if let (Some(k), Some(lo)) = (result.k_n, theta_lo(&result.estimates)) {
        let rhs = 2.0 * k as f64 * lo;
        result.bounds.push(BoundCheck {
            name: "rate_bound".into(),
            lhs: u.estimate,
            lhs_hi: u.ci_hi,
            rhs,
            pass: u.ci_hi <= rhs,
        });
    }
    if let Some(lo) = theta_lo(&result.shifted) {
        let rhs = 2.0 * lo;
        result.bounds.push(BoundCheck {
            name: "shift_bound".into(),
            lhs: u.estimate,
            lhs_hi: u.ci_hi,
            rhs,
            pass: u.ci_hi <= rhs,
        });
    }
}

fn direct_trial(
    spec: &ExperimentSpec,
    scorers: &[Box<dyn Scorer>],
    t: u64,
    m: u64,
    m_shift: Option<u64>,
) -> Result<TrialOutcome> {
    let ts = mix(spec.seed, t);
    let mut rng = stream_rng(ts, 0);
    let total = m_shift.unwrap_or(m).max(m);
    let w = rng.random_range(0..m) as usize;
    let u: f64 = rng.random();

    let (words, y) = if spec.ensemble.is_feedback() {
        let EnsembleKind::FeedbackTree { machine } = &spec.ensemble.kind else { unreachable!() };
        let trees = sample_feedback_codebook(&spec.ensemble, total, mix(ts, 1))?;
        let mut run = ChannelRun::new(&spec.channel, mix(ts, 2))?;
        let mut walker = TreeWalker::new(machine.initial);
        let mut ys = Vec::with_capacity(spec.ensemble.n);
        for _ in 0..spec.ensemble.n {
            let a = walker.emit(&trees[w], machine);
            let b = run.step(a)?;
            walker.observe(machine, a, b, spec.ensemble.alphabet);
            ys.push(b);
        }
        let y = Sequence::new(ys, spec.channel.output_alphabet())?;
        let words = trees.iter().map(|tree| tree.realize(&spec.ensemble, &y)).collect::<Result<Vec<_>>>()?;
        (words, y)
    } else {
        let book = sample_codebook(&spec.ensemble, total, mix(ts, 1))?;
        let y = transmit(&spec.channel, &book.codewords[w], mix(ts, 2))?;
        (book.codewords, y)
    };

    let mut errors = Vec::with_capacity(scorers.len());
    let mut shifted = Vec::with_capacity(scorers.len());
    let mut dominance_violation = false;
    for (d, scorer) in scorers.iter().enumerate() {
        let limit = if spec.decoders[d].is_theta() { total } else { m } as usize;
        let scores = words[..limit].iter().map(|x| scorer.score(x, &y)).collect::<Result<Vec<_>>>()?;
        let tally = |upto: usize| {
            let own = scores[w];
            let mut greater = 0;
            let mut tied = 0;
            for (j, &s) in scores[..upto].iter().enumerate() {
                if j == w || !at_least(s, own) {
                    continue;
                }
                if at_least(own, s) {
                    tied += 1;
                } else {
                    greater += 1;
                }
            }
            (greater, tied)
        };
        let (g, tie) = tally(m as usize);
        let err = match spec.tie_policy {
            TiePolicy::CountAsError => g + tie > 0,
            TiePolicy::LowestIndex => decide(&scores[..m as usize])?.chosen != w,
        };
        if err && g + tie == 0 {
            dominance_violation = true;
        }
        errors.push(err);
        if m_shift.is_some() && spec.decoders[d].is_theta() {
            let (g, tie) = tally(total as usize);
            shifted.push(judge(spec.tie_policy, g, tie, u));
        } else {
            shifted.push(false);
        }
    }
    Ok(TrialOutcome { errors, shifted, dominance_violation })
}

/// Classes of one output composition with their masses and decoder scores.
struct ClassTable {
    probs: Vec<f64>,
    /// `sum_{k >= j} probs[k]`, summed from the tail.
    tails: Vec<f64>,
    cdf: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
    /// `scores[decoder][class]`.
    scores: Vec<Vec<f64>>,
}

struct TypeDomain {
    q: Vec<f64>,
    log_q: Vec<f64>,
    log_fact: Vec<f64>,
    log_w: Option<Vec<Vec<f64>>>,
    thetas: Vec<Option<MetricIndex>>,
    cache: Mutex<HashMap<Vec<u64>, Arc<ClassTable>>>,
}

impl TypeDomain {
    fn new(spec: &ExperimentSpec) -> Result<Self> {
        let q = spec.ensemble.symbol_distribution().ok_or_else(|| invalid("type-domain engine needs iid codewords"))?;
        let log_q = q.iter().map(|p| p.log2()).collect();
        let n = spec.ensemble.n;
        let mut log_fact = vec![0.0; n + 1];
        for k in 1..=n {
            log_fact[k] = log_fact[k - 1] + (k as f64).log2();
        }
        let log_w = spec
            .channel
            .letter_matrix()
            .map(|w| w.iter().map(|row| row.iter().map(|p| p.log2()).collect()).collect());
        let thetas = spec
            .decoders
            .iter()
            .map(|d| match d {
                DecoderSpec::Theta { values } => MetricIndex::new(&spec.family, values.clone()).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TypeDomain { q, log_q, log_fact, log_w, thetas, cache: Mutex::new(HashMap::new()) })
    }

    fn table(&self, spec: &ExperimentSpec, y_comp: &[u64]) -> Result<Arc<ClassTable>> {
        if let Some(t) = self.cache.lock().expect("cache lock").get(y_comp) {
            return Ok(t.clone());
        }
        let table = Arc::new(self.build(spec, y_comp)?);
        self.cache.lock().expect("cache lock").insert(y_comp.to_vec(), table.clone());
        Ok(table)
    }

    fn build(&self, spec: &ExperimentSpec, y_comp: &[u64]) -> Result<ClassTable> {
        let (xa, ya) = spec.family.alphabets();
        let n = spec.ensemble.n;
        let columns: Vec<Vec<Vec<u64>>> = y_comp.iter().map(|&nb| weak_compositions(nb, xa)).collect();
        let total: usize = columns.iter().map(Vec::len).product();
        if total > MAX_TABLE_CLASSES {
            return Err(too_large(format!("{total} classes for one output composition")));
        }
        let mut counts = Vec::with_capacity(total);
        let mut pick = vec![0usize; ya];
        loop {
            let mut c = vec![0u64; xa * ya];
            for b in 0..ya {
                for a in 0..xa {
                    c[a * ya + b] = columns[b][pick[b]][a];
                }
            }
            counts.push(c);
            let mut b = 0;
            while b < ya {
                pick[b] += 1;
                if pick[b] < columns[b].len() {
                    break;
                }
                pick[b] = 0;
                b += 1;
            }
            if b == ya {
                break;
            }
        }

        let log_mass = |c: &[u64]| -> f64 {
            let mut lm = 0.0;
            for b in 0..ya {
                lm += self.log_fact[y_comp[b] as usize];
                for a in 0..xa {
                    let k = c[a * ya + b];
                    if k == 0 {
                        continue;
                    }
                    if self.q[a] == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    lm += k as f64 * self.log_q[a] - self.log_fact[k as usize];
                }
            }
            lm
        };
        let log_masses: Vec<f64> = counts.iter().map(|c| log_mass(c)).collect();
        let probs: Vec<f64> = log_masses.iter().map(|l| l.exp2()).collect();
        let mut tails = vec![0.0; probs.len() + 1];
        for j in (0..probs.len()).rev() {
            tails[j] = tails[j + 1] + probs[j];
        }
        tails.pop();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }

        let mut scores = Vec::with_capacity(spec.decoders.len());
        for (d, dec) in spec.decoders.iter().enumerate() {
            let column: Vec<f64> = counts
                .iter()
                .zip(&log_masses)
                .map(|(c, &lm)| -> Result<f64> {
                    Ok(match dec {
                        DecoderSpec::Universal => {
                            if lm == f64::NEG_INFINITY {
                                f64::INFINITY
                            } else {
                                -lm / n as f64
                            }
                        }
                        DecoderSpec::Theta { .. } => self.thetas[d].as_ref().expect("theta decoder").dot(c),
                        DecoderSpec::Ml => {
                            let lw = self.log_w.as_ref().expect("memoryless channel");
                            let mut s = 0.0;
                            for a in 0..xa {
                                for b in 0..ya {
                                    let k = c[a * ya + b];
                                    if k > 0 {
                                        s += k as f64 * lw[a][b];
                                    }
                                }
                            }
                            s
                        }
                        DecoderSpec::Mmi => empirical_measures(&JointType::from_counts(xa, ya, c.clone())?, None)?.i_xy,
                        DecoderSpec::MinEquivocation => {
                            -empirical_measures(&JointType::from_counts(xa, ya, c.clone())?, None)?.h_x_given_y
                        }
                        _ => unreachable!("eligibility checked"),
                    })
                })
                .collect::<Result<_>>()?;
            scores.push(column);
        }
        let index = counts.into_iter().enumerate().map(|(i, c)| (c, i)).collect();
        Ok(ClassTable { probs, tails, cdf, index, scores })
    }

    fn trial(&self, spec: &ExperimentSpec, t: u64, m: u64, m_shift: Option<u64>) -> Result<TrialOutcome> {
        let ts = mix(spec.seed, t);
        let mut rng = stream_rng(ts, 0);
        let u: f64 = rng.random();
        let symbols = (0..spec.ensemble.n).map(|_| draw_symbol(&self.q, &mut rng)).collect();
        let x = Sequence::new(symbols, spec.ensemble.alphabet)?;
        let y = transmit(&spec.channel, &x, mix(ts, 2))?;
        let table = self.table(spec, &y.composition())?;
        let own = table.index[&empirical_joint_type(&x, &y)?.counts().to_vec()];

        let mut hist_rng = stream_rng(ts, 3);
        let base = sample_histogram(&table, m - 1, &mut hist_rng)?;
        let extra = match m_shift {
            Some(ms) if ms > m => sample_histogram(&table, ms - m, &mut hist_rng)?,
            _ => Vec::new(),
        };

        let mut errors = Vec::with_capacity(spec.decoders.len());
        let mut shifted = Vec::with_capacity(spec.decoders.len());
        for (d, dec) in spec.decoders.iter().enumerate() {
            let s = &table.scores[d];
            let tally = |hist: &[(usize, u64)]| {
                let mut greater = 0;
                let mut tied = 0;
                for &(c, k) in hist {
                    if at_least(s[c], s[own]) {
                        if at_least(s[own], s[c]) {
                            tied += k;
                        } else {
                            greater += k;
                        }
                    }
                }
                (greater, tied)
            };
            let (g, tie) = tally(&base);
            errors.push(judge(spec.tie_policy, g, tie, u));
            if m_shift.is_some() && dec.is_theta() {
                let (g2, tie2) = tally(&extra);
                shifted.push(judge(spec.tie_policy, g + g2, tie + tie2, u));
            } else {
                shifted.push(false);
            }
        }
        Ok(TrialOutcome { errors, shifted, dominance_violation: false })
    }
}

/// Class histogram of `draws` independent competitors, as sparse `(class, count)`.
fn sample_histogram(table: &ClassTable, draws: u64, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, u64)>> {
    let k = table.probs.len();
    if draws == 0 {
        return Ok(Vec::new());
    }
    if draws <= k as u64 {
        let total = *table.cdf.last().expect("nonempty table");
        let mut hits: HashMap<usize, u64> = HashMap::new();
        for _ in 0..draws {
            let target = rng.random::<f64>() * total;
            let c = table.cdf.partition_point(|&v| v <= target).min(k - 1);
            *hits.entry(c).or_insert(0) += 1;
        }
        let mut out: Vec<(usize, u64)> = hits.into_iter().collect();
        out.sort_unstable();
        return Ok(out);
    }
    let mut out = Vec::new();
    let mut remaining = draws;
    for j in 0..k {
        if remaining == 0 {
            break;
        }
        let p = table.probs[j];
        let tail = table.tails[j];
        let share = if j + 1 == k || p >= tail { 1.0 } else { p / tail };
        let got = if share >= 1.0 {
            remaining
        } else if share <= 0.0 {
            0
        } else {
            Binomial::new(remaining, share).map_err(|e| invalid(e.to_string()))?.sample(rng)
        };
        if got > 0 {
            out.push((j, got));
            remaining -= got;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacExperimentSpec {
    pub q1: CodingEnsemble,
    pub q2: CodingEnsemble,
    pub family: MetricFamily,
    pub channel: ChannelModel,
    pub decoders: Vec<DecoderSpec>,
    pub r1: f64,
    pub r2: f64,
    pub trials: u64,
    pub seed: u64,
    pub tie_policy: TiePolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacExperimentResult {
    pub n: usize,
    pub r1: f64,
    pub r2: f64,
    pub m1: u64,
    pub m2: u64,
    pub k_n: u128,
    pub estimates: Vec<ErrorEstimate>,
    /// Universal-decoder errors split into types (i), (ii), (iii).
    pub error_types: Vec<ErrorEstimate>,
    /// Constant `C` in `P_u <= C min_theta P_theta`, when `M1, M2 >= 3`.
    pub envelope_constant: Option<f64>,
    pub bounds: Vec<BoundCheck>,
}

impl MacExperimentResult {
    pub fn pass(&self) -> bool {
        self.bounds.iter().all(|b| b.pass)
    }
}

/// `C = (3K / rho^2)(2 / c)` with `rho = min((M1-1)/2^{nR1}, (M2-1)/2^{nR2})` and
/// `c = min(ceil(a/2)ceil(b/2)/(ab), floor(a/2)/a, floor(b/2)/b)`, `a = M1-1`, `b = M2-1`.
pub fn mac_envelope_constant(n: usize, r1: f64, r2: f64, m1: u64, m2: u64, k: u128) -> Option<f64> {
    if m1 < 3 || m2 < 3 {
        return None;
    }
    let (a, b) = ((m1 - 1) as f64, (m2 - 1) as f64);
    let rho = (a / (n as f64 * r1).exp2()).min(b / (n as f64 * r2).exp2());
    let c = ((a / 2.0).ceil() * (b / 2.0).ceil() / (a * b)).min((a / 2.0).floor() / a).min((b / 2.0).floor() / b);
    Some(3.0 * k as f64 / (rho * rho) * (2.0 / c))
}

type MacScoreFn<'a> = Box<dyn Fn(&Sequence, &Sequence, &Sequence) -> Result<f64> + Sync + 'a>;

fn mac_scorer<'a>(spec: &'a MacExperimentSpec, dec: &'a DecoderSpec) -> Result<MacScoreFn<'a>> {
    Ok(match dec {
        DecoderSpec::Universal => Box::new(move |a, b, y| {
            mac_universal_score(&spec.family, &spec.q1, &spec.q2, a, b, y, spec.r1, spec.r2).map(|s| s.value)
        }),
        DecoderSpec::Lz => {
            Box::new(move |a, b, y| mac_lz_score(&spec.q1, &spec.q2, a, b, y, spec.r1, spec.r2).map(|s| s.value))
        }
        DecoderSpec::Ml => Box::new(move |a, b, y| mac_log_likelihood(&spec.channel, a, b, y)),
        DecoderSpec::Mmi => Box::new(move |a, b, y| {
            Ok(empirical_measures(&empirical_joint_type(&a.pair_with(b)?, y)?, None)?.i_xy)
        }),
        DecoderSpec::MinEquivocation => Box::new(move |a, b, y| {
            Ok(-empirical_measures(&empirical_joint_type(&a.pair_with(b)?, y)?, None)?.h_x_given_y)
        }),
        DecoderSpec::Theta { values } => {
            let theta = MetricIndex::new(&spec.family, values.clone())?;
            Box::new(move |a, b, y| mac_metric_score(&spec.family, &theta, a, b, y))
        }
        DecoderSpec::ThetaGrid => return Err(invalid("theta_grid must be expanded before use")),
    })
}

/// Two-user experiment; errors are split by which messages were wrong.
pub fn run_mac_experiment(spec: &MacExperimentSpec) -> Result<MacExperimentResult> {
    spec.q1.validate()?;
    spec.q2.validate()?;
    spec.family.validate()?;
    spec.channel.validate()?;
    if !spec.channel.is_mac() || !spec.family.is_mac() {
        return Err(invalid("MAC experiments need a mac_xor channel and a mac_xor_additive family"));
    }
    if spec.q1.n != spec.q2.n || spec.trials == 0 || !(spec.r1 >= 0.0 && spec.r2 >= 0.0) {
        return Err(invalid("MAC experiment needs equal block lengths, trials >= 1 and non-negative rates"));
    }
    let n = spec.q1.n;
    let (m1, m2) = (messages_for_rate(n, spec.r1), messages_for_rate(n, spec.r2));
    if m1.saturating_mul(m2) > MAX_DIRECT_CODEWORDS {
        return Err(too_large(format!("{m1} x {m2} message pairs per trial")));
    }
    let k_n = count_classes(&spec.family, n, CountStrategy::Auto)?.k_n;
    let scorers = spec.decoders.iter().map(|d| mac_scorer(spec, d)).collect::<Result<Vec<_>>>()?;
    let universal = spec.decoders.iter().position(|d| *d == DecoderSpec::Universal);

    let outcomes: Vec<(Vec<bool>, Option<usize>)> = (0..spec.trials)
        .into_par_iter()
        .map(|t| -> Result<(Vec<bool>, Option<usize>)> {
            let ts = mix(spec.seed, t);
            let mut rng = stream_rng(ts, 0);
            let i = rng.random_range(0..m1) as usize;
            let j = rng.random_range(0..m2) as usize;
            let c1 = sample_codebook(&spec.q1, m1, mix(ts, 1))?.codewords;
            let c2 = sample_codebook(&spec.q2, m2, mix(ts, 3))?.codewords;
            let y = mac_transmit(&spec.channel, &c1[i], &c2[j], mix(ts, 2))?;
            let truth = i * m2 as usize + j;
            let mut errs = Vec::with_capacity(scorers.len());
            let mut kind = None;
            for (d, score) in scorers.iter().enumerate() {
                let mut scores = Vec::with_capacity(c1.len() * c2.len());
                for a in &c1 {
                    for b in &c2 {
                        scores.push(score(a, b, &y)?);
                    }
                }
                let wrong = match spec.tie_policy {
                    TiePolicy::CountAsError => {
                        (0..scores.len()).find(|&p| p != truth && at_least(scores[p], scores[truth]))
                    }
                    TiePolicy::LowestIndex => Some(decide(&scores)?.chosen).filter(|&p| p != truth),
                };
                errs.push(wrong.is_some());
                if Some(d) == universal {
                    kind = wrong.map(|p| {
                        let (pi, pj) = (p / m2 as usize, p % m2 as usize);
                        match (pi != i, pj != j) {
                            (true, true) => 0,
                            (true, false) => 1,
                            _ => 2,
                        }
                    });
                }
            }
            Ok((errs, kind))
        })
        .collect::<Result<Vec<_>>>()?;

    let rate = spec.r1 + spec.r2;
    let estimates: Vec<ErrorEstimate> = spec
        .decoders
        .iter()
        .enumerate()
        .map(|(d, dec)| {
            let errors = outcomes.iter().filter(|o| o.0[d]).count() as u64;
            ErrorEstimate::new(dec.label(), n, rate, spec.trials, errors, spec.seed)
        })
        .collect();
    let error_types = if universal.is_some() {
        ["type_i", "type_ii", "type_iii"]
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let errors = outcomes.iter().filter(|o| o.1 == Some(k)).count() as u64;
                ErrorEstimate::new(format!("universal:{name}"), n, rate, spec.trials, errors, spec.seed)
            })
            .collect()
    } else {
        Vec::new()
    };

    let envelope_constant = mac_envelope_constant(n, spec.r1, spec.r2, m1, m2, k_n);
    let mut bounds = Vec::new();
    if let (Some(c), Some(u)) = (envelope_constant, universal.map(|k| &estimates[k])) {
        let lo = estimates
            .iter()
            .filter(|e| e.decoder.starts_with("theta["))
            .map(|e| e.ci_lo)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
        if let Some(lo) = lo {
            bounds.push(BoundCheck {
                name: "mac_envelope".into(),
                lhs: u.estimate,
                lhs_hi: u.ci_hi,
                rhs: c * lo,
                pass: u.ci_hi <= c * lo,
            });
        }
    }
    Ok(MacExperimentResult {
        n,
        r1: spec.r1,
        r2: spec.r2,
        m1,
        m2,
        k_n,
        estimates,
        error_types,
        envelope_constant,
        bounds,
    })
}
