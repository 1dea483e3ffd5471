//! The Kraft-type condition on the LZ surrogate metric:
//! `(1/n) log2 sum_x Q(x) 2^{n U'(x,y)}` for fixed `y`.

use serde::{Deserialize, Serialize};

use crate::decoder::lz_universal_score;
use crate::ensemble::CodingEnsemble;
use crate::error::{invalid, too_large, Result};
use crate::types::{enumeration_size, Sequence};

/// Largest `|X|^n` summed over exhaustively.
const MAX_SURROGATE_SUM: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub n: usize,
    /// `(y, kappa_n(y))` per sampled output.
    pub per_y: Vec<(String, f64)>,
    pub max: f64,
}

fn log2_sum_exp2(terms: &[f64]) -> f64 {
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp2()).sum::<f64>().log2()
}

/// `kappa_n(y)` for each output in `ys`, by exhaustive summation over `x`.
pub fn surrogate_condition_check(ensemble: &CodingEnsemble, ys: &[Sequence]) -> Result<SurrogateReport> {
    let n = ensemble.n;
    if enumeration_size(ensemble.alphabet, n)? > MAX_SURROGATE_SUM {
        return Err(too_large(format!("surrogate sum over {}^{n} inputs", ensemble.alphabet)));
    }
    if ys.is_empty() {
        return Err(invalid("need at least one output sequence"));
    }
    let words: Vec<Sequence> = Sequence::all(ensemble.alphabet, n)?.collect();
    let mut per_y = Vec::with_capacity(ys.len());
    for y in ys {
        let mut terms = Vec::with_capacity(words.len());
        for x in &words {
            let lq = crate::ensemble::log_prob(ensemble, x, None)?;
            if lq == f64::NEG_INFINITY {
                continue;
            }
            let u = lz_universal_score(ensemble, x, y)?.value;
            terms.push(lq + n as f64 * u);
        }
        per_y.push((y.to_string(), log2_sum_exp2(&terms) / n as f64));
    }
    let max = per_y.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(SurrogateReport { n, per_y, max })
}

/// `count` outputs drawn uniformly from `Y^n` with a fixed seed.
pub fn sample_outputs(y_alphabet: usize, n: usize, count: usize, seed: u64) -> Vec<Sequence> {
    let mut rng = crate::ensemble::stream_rng(seed, n as u64);
    (0..count).map(|_| crate::channel::random_sequence(y_alphabet, n, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_at_least_one_term() {
        let q = CodingEnsemble::uniform(2, 8);
        let zeros = Sequence::new(vec![0; 8], 2).unwrap();
        let r = surrogate_condition_check(&q, &[zeros]).unwrap();
        assert!(r.max.is_finite() && r.max >= 0.0);
    }

    #[test]
    fn independent_of_the_ensemble_weighting() {
        // Q(x) 2^{nU'} = 2^{-LZ(x|y)}, whatever the iid law.
        let y = Sequence::binary(&[0, 1, 1, 0, 1, 0]).unwrap();
        let a = surrogate_condition_check(&CodingEnsemble::uniform(2, 6), std::slice::from_ref(&y)).unwrap();
        let b = surrogate_condition_check(&CodingEnsemble::iid(vec![0.3, 0.7], 6).unwrap(), &[y]).unwrap();
        assert!((a.max - b.max).abs() < 1e-9);
    }
}
