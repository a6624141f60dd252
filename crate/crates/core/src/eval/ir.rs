//! Information Rate of a roll treated as a sequence of time-slice symbols.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::math::entropy_bits;
use crate::pianoroll::PianoRoll;

#[derive(Debug, Clone, PartialEq)]
pub struct IrReport {
    /// Mean over steps `1..N` of the per-step rate, in bits.
    pub average_ir: f64,
    pub n_slices: usize,
    pub vocab_size: usize,
    /// Rate at steps `1..N`, length `N - 1`.
    pub per_step_ir: Vec<f64>,
}

/// Symbol ids for each time slice after binarizing at `threshold`, numbered
/// in order of first appearance.
pub fn slice_symbols(roll: &PianoRoll, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must lie in (0, 1)"
        )));
    }
    let mut ids: HashMap<Vec<bool>, usize> = HashMap::new();
    Ok(roll
        .view()
        .rows()
        .into_iter()
        .map(|row| {
            let key: Vec<bool> = row.iter().map(|&x| x >= threshold).collect();
            let next = ids.len();
            *ids.entry(key).or_insert(next)
        })
        .collect())
}

/// Information Rate of a symbol sequence.
///
/// At step `n` the marginal entropy comes from the symbols `0..n` and the
/// conditional entropy from the successors of symbol `n-1` among the
/// transitions inside `0..n`. A context with no recorded successor
/// contributes 0, and each step is clipped at 0.
pub fn information_rate_symbols<S: Ord + Copy>(seq: &[S]) -> Result<IrReport> {
    if seq.len() < 2 {
        return Err(Error::Undefined(format!(
            "information rate needs at least 2 slices, got {}",
            seq.len()
        )));
    }
    let mut marginal: BTreeMap<S, usize> = BTreeMap::new();
    let mut successors: BTreeMap<S, BTreeMap<S, usize>> = BTreeMap::new();
    marginal.insert(seq[0], 1);
    let mut per_step = Vec::with_capacity(seq.len() - 1);
    for n in 1..seq.len() {
        // state: symbols 0..n counted, transitions (m-1, m) for m < n
        let context = seq[n - 1];
        let rate = match successors.get(&context) {
            Some(next) => {
                let h = entropy_bits(marginal.values().copied(), n);
                let total = next.values().sum();
                let h_cond = entropy_bits(next.values().copied(), total);
                (h - h_cond).max(0.0)
            }
            None => 0.0,
        };
        per_step.push(rate);
        *marginal.entry(seq[n]).or_insert(0) += 1;
        *successors.entry(context).or_default().entry(seq[n]).or_insert(0) += 1;
    }
    Ok(IrReport {
        average_ir: per_step.iter().sum::<f64>() / per_step.len() as f64,
        n_slices: seq.len(),
        vocab_size: marginal.len(),
        per_step_ir: per_step,
    })
}

pub fn information_rate(roll: &PianoRoll, threshold: f64) -> Result<IrReport> {
    information_rate_symbols(&slice_symbols(roll, threshold)?)
}
