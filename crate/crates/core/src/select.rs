//! Selection algorithms: the iterative balanced selector plus the
//! score-ranked, random, and representation-similarity baselines.
//!
//! Every selector returns exactly `B` distinct row indices. Tie-breaking is
//! always by ascending row index and never depends on thread count or
//! evaluation order, so selections are bit-reproducible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AttributionMatrix, Method, SelectionResult, TaskPartition};

/// One overall influence score `s_i` per training example.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
}

impl ScoreVector {
    /// Wrap a score vector, rejecting non-finite entries (a `Σⱼ A_ij` that
    /// overflowed to infinity would otherwise silently win every ranking).
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite score {s} for row {i}")));
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }
}

/// Aggregator for the task-wise max selector: per-task sum (the formula
/// definition) or per-task mean. With equal task sizes the two are
/// rank-equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Sum,
    Mean,
}

fn check_budget(b: usize, n_train: usize) -> Result<()> {
    if b == 0 {
        Err(Error::invalid("budget must be at least 1"))
    } else if b > n_train {
        Err(Error::BudgetTooLarge {
            requested: b,
            available: n_train,
        })
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Score-ranked selection
// ---------------------------------------------------------------------------

/// Keep the `B` rows with the largest scores, ordered by descending score,
/// ties broken by ascending index. Utilities are the selected scores.
pub fn select_top_by_score(scores: &ScoreVector, b: usize, method: Method) -> Result<SelectionResult> {
    check_budget(b, scores.len())?;
    let s = scores.as_slice();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_unstable_by(|&p, &q| s[q].total_cmp(&s[p]).then_with(|| p.cmp(&q)));
    order.truncate(b);
    let utilities = order.iter().map(|&i| s[i]).collect();
    Ok(SelectionResult {
        method,
        budget: b,
        indices: order,
        utilities: Some(utilities),
        seed: None,
    })
}

/// Instance-wise max: `s_i = maxⱼ A_ij`.
pub fn select_instance_max(matrix: &AttributionMatrix, b: usize) -> Result<SelectionResult> {
    let scores = instance_max_scores(matrix);
    select_top_by_score(&scores, b, Method::InstanceMax)
}

fn instance_max_scores(matrix: &AttributionMatrix) -> ScoreVector {
    let scores: Vec<f64> = (0..matrix.n_train())
        .into_par_iter()
        .map(|i| {
            matrix
                .row(i)
                .iter()
                .fold(f64::NEG_INFINITY, |m, &x| m.max(x))
        })
        .collect();
    ScoreVector::new(scores).expect("max of finite values is finite")
}

/// Sum: `s_i = Σⱼ A_ij`.
pub fn select_sum(matrix: &AttributionMatrix, b: usize) -> Result<SelectionResult> {
    let scores: Vec<f64> = (0..matrix.n_train())
        .into_par_iter()
        .map(|i| matrix.row(i).iter().sum())
        .collect();
    select_top_by_score(&ScoreVector::new(scores)?, b, Method::Sum)
}

/// Task-wise max: `s_i = max_k agg_{j ∈ V_k} A_ij` with the chosen
/// aggregator, then top-`B` by score.
pub fn select_task_max(
    matrix: &AttributionMatrix,
    partition: &TaskPartition,
    b: usize,
    aggregator: Aggregator,
) -> Result<SelectionResult> {
    crate::model::validate_partition(partition, matrix.n_val())?;
    let m = partition.m();
    let sizes: Vec<f64> = (0..m).map(|k| partition.task_size(k) as f64).collect();
    let assignment = partition.assignment();
    let scores: Vec<f64> = (0..matrix.n_train())
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0f64; m];
            for (j, &x) in matrix.row(i).iter().enumerate() {
                sums[assignment[j]] += x;
            }
            let mut best = f64::NEG_INFINITY;
            for k in 0..m {
                let agg = match aggregator {
                    Aggregator::Sum => sums[k],
                    Aggregator::Mean => sums[k] / sizes[k],
                };
                best = best.max(agg);
            }
            best
        })
        .collect();
    select_top_by_score(&ScoreVector::new(scores)?, b, Method::TaskMax)
}

/// Representation-based selection: instance-wise max over a cosine
/// similarity matrix. Identical ranking contract to [`select_instance_max`].
pub fn select_rds(similarity: &AttributionMatrix, b: usize) -> Result<SelectionResult> {
    let scores = instance_max_scores(similarity);
    select_top_by_score(&scores, b, Method::Rds)
}

// ---------------------------------------------------------------------------
// Random selection
// ---------------------------------------------------------------------------

/// `B` indices drawn uniformly without replacement.
///
/// A partial Fisher–Yates shuffle over `[0, n_train)` driven by ChaCha8
/// (`rand_chacha`, seeded with `seed`) — a fixed, versioned PRNG so the same
/// `(n_train, B, seed)` triple selects the same rows on every platform.
pub fn select_random(n_train: usize, b: usize, seed: u64) -> Result<SelectionResult> {
    check_budget(b, n_train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n_train).collect();
    for r in 0..b {
        let pick = rng.gen_range(r..n_train);
        pool.swap(r, pick);
    }
    pool.truncate(b);
    Ok(SelectionResult {
        method: Method::Random,
        budget: b,
        indices: pool,
        utilities: None,
        seed: Some(seed),
    })
}

// ---------------------------------------------------------------------------
// Iterative selection favoring underrepresented tasks
// ---------------------------------------------------------------------------

/// Iterative greedy selection.
///
/// Maintains the selected set `T` and its mean influence distribution
/// `A_T = (1/|T|) Σ_{i∈T} A_i` (the all-zero vector while `T` is empty, so
/// the first pick is exactly the instance-wise max). Each iteration selects
///
/// ```text
/// i* = argmax_{i ∉ T}  maxⱼ (A_ij − A_T[j])
/// ```
///
/// i.e. the candidate whose influence distribution rises highest above the
/// selection's current average — which is precisely a column (validation
/// instance, hence task) the selection so far under-serves. Ties break by
/// ascending index. Output order is selection order; `utilities[r]` is the
/// winning margin at iteration `r`.
///
/// The matrix is typically the output of [`crate::normalize::normalize_columns`];
/// normalization is deliberately *not* applied here so the two stages can be
/// ablated independently.
///
/// Worst-case cost is O(B·N·|V|): every iteration rescans all candidates
/// because the baseline `A_T` moves. In practice most rows are dismissed in
/// O(1) by an upper bound: `maxⱼ (A_ij − A_T[j]) ≤ maxⱼ A_ij − minⱼ A_T[j]`,
/// and a candidate whose bound falls strictly below the best utility seen so
/// far this iteration cannot win. Rounding to nearest is monotone, so the
/// bound dominates the utility *as computed in floating point* too, and the
/// skip is exact — it never changes the selection, the tie-breaks, or the
/// recorded utilities. The scan is row-parallel with a deterministic
/// `(utility, index)` argmax reduction.
pub fn select_bids(matrix: &AttributionMatrix, b: usize) -> Result<SelectionResult> {
    let n = matrix.n_train();
    let v = matrix.n_val();
    check_budget(b, n)?;

    let row_max: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| matrix.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();

    let mut indices = Vec::with_capacity(b);
    let mut utilities = Vec::with_capacity(b);
    let mut in_t = vec![false; n];
    let mut col_sum = vec![0.0f64; v];
    let mut baseline = vec![0.0f64; v];

    for step in 0..b {
        if step > 0 {
            let inv = 1.0 / step as f64;
            for (bl, &s) in baseline.iter_mut().zip(&col_sum) {
                *bl = s * inv;
            }
        }
        let baseline_min = baseline.iter().copied().fold(f64::INFINITY, f64::min);
        // `fold` carries the running best through each rayon chunk so the
        // bound check above can skip rows before touching their data; the
        // explicit `(u, i)` comparison keeps the result order-independent.
        let (best_util, best_row) = (0..n)
            .into_par_iter()
            .fold(
                || (f64::NEG_INFINITY, usize::MAX),
                |acc, i| {
                    if in_t[i] || row_max[i] - baseline_min < acc.0 {
                        return acc;
                    }
                    let u = shifted_max(matrix.row(i), &baseline);
                    if u > acc.0 || (u == acc.0 && i < acc.1) {
                        (u, i)
                    } else {
                        acc
                    }
                },
            )
            .reduce(
                || (f64::NEG_INFINITY, usize::MAX),
                |a, c| if c.0 > a.0 || (c.0 == a.0 && c.1 < a.1) { c } else { a },
            );
        debug_assert!(best_row != usize::MAX);

        in_t[best_row] = true;
        indices.push(best_row);
        utilities.push(best_util);
        for (s, &x) in col_sum.iter_mut().zip(matrix.row(best_row)) {
            *s += x;
        }
    }

    Ok(SelectionResult {
        method: Method::Bids,
        budget: b,
        indices,
        utilities: Some(utilities),
        seed: None,
    })
}

/// `maxⱼ (row[j] − baseline[j])` — the hot kernel of [`select_bids`].
///
/// Four independent accumulators so the reduction has no loop-carried
/// dependency chain and vectorizes.
#[inline]
fn shifted_max(row: &[f64], baseline: &[f64]) -> f64 {
    debug_assert_eq!(row.len(), baseline.len());
    let mut m = [f64::NEG_INFINITY; 4];
    for (r, bl) in row.chunks_exact(4).zip(baseline.chunks_exact(4)) {
        m[0] = m[0].max(r[0] - bl[0]);
        m[1] = m[1].max(r[1] - bl[1]);
        m[2] = m[2].max(r[2] - bl[2]);
        m[3] = m[3].max(r[3] - bl[3]);
    }
    let tail = row.len() & !3;
    let mut best = m[0].max(m[1]).max(m[2].max(m[3]));
    for (r, bl) in row[tail..].iter().zip(&baseline[tail..]) {
        best = best.max(r - bl);
    }
    best
}
