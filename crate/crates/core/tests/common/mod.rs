//! Shared helpers for the integration tests: a from-scratch reference
//! implementation of the iterative selector and deterministic random-matrix
//! builders.

use bids_core::AttributionMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Naive reference for the iterative selector: rebuilds the selected-set
/// mean from scratch every iteration and scans candidates sequentially.
/// Deliberately simple so the optimized implementation has something honest
/// to be compared against.
#[allow(dead_code)]
pub fn naive_iterative_selection(matrix: &AttributionMatrix, b: usize) -> (Vec<usize>, Vec<f64>) {
    let n = matrix.n_train();
    let v = matrix.n_val();
    let mut selected: Vec<usize> = Vec::new();
    let mut utilities: Vec<f64> = Vec::new();
    for _ in 0..b {
        let mut a_t = vec![0.0f64; v];
        if !selected.is_empty() {
            for &i in &selected {
                for (j, slot) in a_t.iter_mut().enumerate() {
                    *slot += matrix.get(i, j);
                }
            }
            for slot in &mut a_t {
                *slot /= selected.len() as f64;
            }
        }
        let mut best_util = f64::NEG_INFINITY;
        let mut best_row = usize::MAX;
        for i in 0..n {
            if selected.contains(&i) {
                continue;
            }
            let mut u = f64::NEG_INFINITY;
            for (j, &base) in a_t.iter().enumerate() {
                u = u.max(matrix.get(i, j) - base);
            }
            if u > best_util || (u == best_util && i < best_row) {
                best_util = u;
                best_row = i;
            }
        }
        selected.push(best_row);
        utilities.push(best_util);
    }
    (selected, utilities)
}

/// Standard-normal random matrix with a fixed seed.
#[allow(dead_code)]
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> AttributionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    AttributionMatrix::new(rows, cols, values).expect("finite random matrix")
}

/// Uniform random matrix over `[lo, hi)` with a fixed seed.
#[allow(dead_code)]
pub fn uniform_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> AttributionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    AttributionMatrix::new(rows, cols, values).expect("finite random matrix")
}
