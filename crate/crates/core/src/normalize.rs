//! Instance-level normalization: column-wise z-standardization of the
//! attribution matrix, plus a normality diagnostic for the result.
//!
//! Influence scores for different validation instances live on wildly
//! different scales, so a raw row maximum is dominated by whichever columns
//! happen to run hot. Standardizing each column *j* to
//! `(A_ij − μ_j) / σ_j` puts every validation instance on one scale; any
//! per-column positive-affine distortion `x ↦ a_j·x + b_j` is erased exactly,
//! which is the formal content of the bias fix.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::AttributionMatrix;

/// Per-column sample mean and sample standard deviation (`N − 1` denominator).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Compute per-column sample statistics.
///
/// `means[j] = (1/N)·Σᵢ A_ij`; `stds[j] = sqrt(Σᵢ (A_ij − μ_j)² / (N−1))`.
/// Uses the corrected two-pass algorithm: a second pass over residuals
/// refines the mean and supplies a compensated variance, keeping the
/// normalized columns centered to ~1e-15 even for badly offset inputs.
///
/// # Errors
/// The sample standard deviation needs at least two observations, so
/// matrices with `n_train < 2` are rejected.
pub fn column_stats(matrix: &AttributionMatrix) -> Result<ColumnStats> {
    let n = matrix.n_train();
    let v = matrix.n_val();
    if n < 2 {
        return Err(Error::invalid(format!(
            "column statistics need at least 2 rows, got {n}"
        )));
    }

    // Pass 1: naive means, accumulated row-wise so memory access stays
    // sequential over the row-major buffer.
    let mut means = vec![0.0f64; v];
    for i in 0..n {
        for (acc, &x) in means.iter_mut().zip(matrix.row(i)) {
            *acc += x;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }

    // Pass 2: residual sums against the naive mean. `res` recovers the
    // rounding lost in pass 1; `sq` and `res` combine into the compensated
    // sample variance.
    let mut res = vec![0.0f64; v];
    let mut sq = vec![0.0f64; v];
    for i in 0..n {
        let row = matrix.row(i);
        for j in 0..v {
            let d = row[j] - means[j];
            res[j] += d;
            sq[j] += d * d;
        }
    }

    let mut stds = vec![0.0f64; v];
    for j in 0..v {
        means[j] += res[j] / n as f64;
        let var = (sq[j] - res[j] * res[j] / n as f64) / (n as f64 - 1.0);
        stds[j] = var.max(0.0).sqrt();
    }
    Ok(ColumnStats { means, stds })
}

/// Z-standardize every column: `(x − μ_j) / σ_j`.
///
/// Constant columns (`σ_j = 0`) carry no ranking information and map to all
/// zeros, placing them at the distribution center instead of dividing by
/// zero. Dimensions and ids are preserved.
pub fn normalize_columns(matrix: &AttributionMatrix) -> Result<AttributionMatrix> {
    let stats = column_stats(matrix)?;
    Ok(apply_stats(matrix, &stats))
}

/// Apply precomputed statistics to a matrix (the core of
/// [`normalize_columns`], exposed so callers can reuse one set of statistics).
pub fn apply_stats(matrix: &AttributionMatrix, stats: &ColumnStats) -> AttributionMatrix {
    let v = matrix.n_val();
    // 1/σ with σ=0 mapped to 0: multiplying by 0 yields the all-zero column.
    let inv: Vec<f64> = stats
        .stds
        .iter()
        .map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 })
        .collect();
    let mut values = vec![0.0f64; matrix.n_train() * v];
    values
        .par_chunks_mut(v)
        .enumerate()
        .for_each(|(i, out)| {
            let row = matrix.row(i);
            for j in 0..v {
                out[j] = (row[j] - stats.means[j]) * inv[j];
            }
        });
    AttributionMatrix::with_ids(
        matrix.n_train(),
        v,
        values,
        matrix.row_ids().map(<[String]>::to_vec),
        matrix.col_ids().map(<[String]>::to_vec),
    )
    .expect("normalization preserves shape and finiteness")
}

// ---------------------------------------------------------------------------
// Normality diagnostic
// ---------------------------------------------------------------------------

/// Number of equal-width histogram bins across `[-4, 4]`.
pub const HIST_BINS: usize = 32;
/// Histogram range endpoints.
pub const HIST_LO: f64 = -4.0;
pub const HIST_HI: f64 = 4.0;

/// Diagnostic for one column of a normalized matrix.
///
/// `histogram` holds `(left_edge, count)` pairs: an underflow bin (edge
/// `None`, values below −4), 32 equal bins over `[-4, 4)`, and an overflow
/// bin with edge 4.0 for values ≥ 4.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColumnDiagnostic {
    pub index: usize,
    /// Kolmogorov–Smirnov distance between the column's empirical CDF and
    /// the standard normal CDF; in `[0, 1]`, small means near-normal.
    pub ks: f64,
    pub histogram: Vec<(Option<f64>, u64)>,
}

/// Compare selected columns of an (already normalized) matrix against the
/// standard normal distribution.
///
/// # Errors
/// Rejects out-of-range column indices.
pub fn normality_diagnostic(
    matrix: &AttributionMatrix,
    col_indices: &[usize],
) -> Result<Vec<ColumnDiagnostic>> {
    for &j in col_indices {
        if j >= matrix.n_val() {
            return Err(Error::invalid(format!(
                "diagnostic column {j} out of range for {} columns",
                matrix.n_val()
            )));
        }
    }
    let std_normal = Normal::new(0.0, 1.0).expect("valid parameters");
    Ok(col_indices
        .par_iter()
        .map(|&j| {
            let column: Vec<f64> = (0..matrix.n_train()).map(|i| matrix.get(i, j)).collect();
            ColumnDiagnostic {
                index: j,
                ks: ks_statistic(&column, &std_normal),
                histogram: histogram(&column),
            }
        })
        .collect())
}

/// KS statistic `sup_x |F̂(x) − Φ(x)|` against the given normal.
///
/// With the sorted sample `x₍₀₎ ≤ … ≤ x₍N₋₁₎`, the supremum is attained at a
/// jump of the empirical CDF, so it suffices to check `Φ(x₍ᵢ₎) − i/N` and
/// `(i+1)/N − Φ(x₍ᵢ₎)` at every sample point.
fn ks_statistic(column: &[f64], dist: &Normal) -> f64 {
    let mut sorted = column.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = dist.cdf(x);
        d = d.max(phi - i as f64 / n).max((i + 1) as f64 / n - phi);
    }
    d
}

fn histogram(column: &[f64]) -> Vec<(Option<f64>, u64)> {
    let width = (HIST_HI - HIST_LO) / HIST_BINS as f64;
    let mut counts = vec![0u64; HIST_BINS + 2]; // [underflow, 32 bins, overflow]
    for &x in column {
        let slot = if x < HIST_LO {
            0
        } else if x >= HIST_HI {
            HIST_BINS + 1
        } else {
            1 + (((x - HIST_LO) / width) as usize).min(HIST_BINS - 1)
        };
        counts[slot] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(slot, &c)| {
            let edge = match slot {
                0 => None, // unbounded below
                s => Some(HIST_LO + (s - 1) as f64 * width),
            };
            (edge, c)
        })
        .collect()
}
