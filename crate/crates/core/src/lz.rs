//! Joint incremental parsing and the conditional Lempel-Ziv length.

use std::collections::{BTreeMap, HashMap};

use crate::error::{check_same_len, Result};
use crate::types::{Sequence, Symbol};

/// Incremental parsing of the pair sequence `(x_i, y_i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhraseParse {
    /// `(x-part, y-part)` of each phrase, in order.
    pub phrases: Vec<(Vec<Symbol>, Vec<Symbol>)>,
    /// Number of distinct phrases carrying each y-part. A final phrase that
    /// repeats an earlier one is already represented and adds nothing here.
    pub y_phrase_counts: BTreeMap<Vec<Symbol>, u64>,
}

impl PhraseParse {
    pub fn phrase_count(&self) -> usize {
        self.phrases.len()
    }

    /// Concatenation of the phrases.
    pub fn concat(&self) -> (Vec<Symbol>, Vec<Symbol>) {
        let x = self.phrases.iter().flat_map(|(a, _)| a.iter().copied()).collect();
        let y = self.phrases.iter().flat_map(|(_, b)| b.iter().copied()).collect();
        (x, y)
    }

    /// `sum_l c_l log2 c_l` over distinct y-phrases.
    pub fn length_bits(&self) -> f64 {
        self.y_phrase_counts.values().map(|&c| c as f64 * (c as f64).log2()).sum()
    }
}

/// Phrase boundaries of the LZ78 parse of `(x_i, y_i)`, and whether the final
/// phrase repeats an earlier one because the input ran out.
fn boundaries(x: &[Symbol], y: &[Symbol], y_alphabet: usize) -> (Vec<(usize, usize)>, bool) {
    let mut trie: HashMap<(usize, u64), usize> = HashMap::new();
    let mut out = Vec::new();
    let mut start = 0;
    let mut node = 0;
    for i in 0..x.len() {
        let letter = x[i] as u64 * y_alphabet as u64 + y[i] as u64;
        match trie.get(&(node, letter)) {
            Some(&child) => node = child,
            None => {
                let fresh = trie.len() + 1;
                trie.insert((node, letter), fresh);
                out.push((start, i + 1));
                start = i + 1;
                node = 0;
            }
        }
    }
    let repeated = start < x.len();
    if repeated {
        out.push((start, x.len()));
    }
    (out, repeated)
}

pub fn joint_parse(x: &Sequence, y: &Sequence) -> Result<PhraseParse> {
    check_same_len(x.len(), y.len())?;
    let (xs, ys) = (x.symbols(), y.symbols());
    let mut phrases = Vec::new();
    let mut y_phrase_counts = BTreeMap::new();
    let (bounds, repeated) = boundaries(xs, ys, y.alphabet());
    let fresh = bounds.len() - usize::from(repeated);
    for (k, &(s, e)) in bounds.iter().enumerate() {
        if k < fresh {
            *y_phrase_counts.entry(ys[s..e].to_vec()).or_insert(0) += 1;
        }
        phrases.push((xs[s..e].to_vec(), ys[s..e].to_vec()));
    }
    Ok(PhraseParse { phrases, y_phrase_counts })
}

/// `LZ(x|y)` in bits.
pub fn conditional_lz_length(x: &Sequence, y: &Sequence) -> Result<f64> {
    check_same_len(x.len(), y.len())?;
    let ys = y.symbols();
    let mut counts: HashMap<&[Symbol], u64> = HashMap::new();
    let (bounds, repeated) = boundaries(x.symbols(), ys, y.alphabet());
    let fresh = bounds.len() - usize::from(repeated);
    for &(s, e) in &bounds[..fresh] {
        *counts.entry(&ys[s..e]).or_insert(0) += 1;
    }
    Ok(counts.values().map(|&c| c as f64 * (c as f64).log2()).sum())
}
