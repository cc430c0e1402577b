//! Weighted isotonic (non-decreasing) least-squares fit by pool-adjacent-violators.

use alloc::vec::Vec;

/// Replaces `values` with the non-decreasing sequence minimising
/// `Σ w_i (y_i − values_i)²`. Weights must be positive.
pub fn pava(values: &mut [f64], weights: &[f64]) {
    debug_assert_eq!(values.len(), weights.len());
    // Blocks of pooled values: (mean, weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&y, &w) in values.iter().zip(weights) {
        let mut cur = (y, w, 1usize);
        while let Some(&(m, bw, len)) = blocks.last() {
            if m <= cur.0 {
                break;
            }
            blocks.pop();
            let tw = bw + cur.1;
            cur = ((m * bw + cur.0 * cur.1) / tw, tw, len + cur.2);
        }
        blocks.push(cur);
    }
    let mut i = 0;
    for (m, _, len) in blocks {
        values[i..i + len].fill(m);
        i += len;
    }
}

/// Unweighted variant.
pub fn pava_uniform(values: &mut [f64]) {
    let w = alloc::vec![1.0; values.len()];
    pava(values, &w);
}
