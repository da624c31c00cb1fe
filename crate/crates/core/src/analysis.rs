//! Analysis metrics for selections: average influence distribution (AID),
//! task frequency with highest influence (THI, task- and instance-level),
//! and balance summaries over THI counts.
//!
//! AID answers "how much does this subset help each validation instance on
//! average"; THI answers "which task does each selected example help most",
//! either by per-task mean influence (task-level) or by single best column
//! (instance-level). Balance metrics condense a THI count vector into
//! entropy and max/min statistics so "more balanced" becomes a number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_partition, AttributionMatrix, Method, SelectionResult, TaskPartition};

/// Balance summary of a THI count vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceMetrics {
    /// Shannon entropy of the count distribution, in nats; at most `ln m`.
    pub entropy: f64,
    /// `max_count / min_count`; infinite when some task received no picks
    /// (serialized as the string `"inf"`).
    #[serde(with = "ratio_marker")]
    pub max_min_ratio: f64,
    pub max_count: usize,
    pub min_count: usize,
}

/// Full analysis of one selection, serializable as the report JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// AID of the selected subset over the normalized matrix, length `n_val`.
    pub aid: Vec<f64>,
    /// Task-level THI counts, length `m`.
    #[serde(rename = "thi_task")]
    pub thi_task_level: Vec<usize>,
    /// Instance-level THI counts, length `m`.
    #[serde(rename = "thi_instance")]
    pub thi_instance_level: Vec<usize>,
    /// Balance metrics of the instance-level THI counts.
    pub balance: BalanceMetrics,
    pub method: Method,
    pub budget: usize,
}

/// Component-wise mean influence distribution of the chosen rows (all rows
/// when `subset` is `None`).
///
/// # Errors
/// Empty subsets and out-of-range indices are rejected.
pub fn aid(matrix: &AttributionMatrix, subset: Option<&[usize]>) -> Result<Vec<f64>> {
    let v = matrix.n_val();
    let mut acc = vec![0.0f64; v];
    let count = match subset {
        None => {
            for i in 0..matrix.n_train() {
                add_row(&mut acc, matrix.row(i));
            }
            matrix.n_train()
        }
        Some(rows) => {
            if rows.is_empty() {
                return Err(Error::invalid("aid of an empty subset is undefined"));
            }
            for &i in rows {
                if i >= matrix.n_train() {
                    return Err(Error::invalid(format!(
                        "subset index {i} out of range for {} rows",
                        matrix.n_train()
                    )));
                }
                add_row(&mut acc, matrix.row(i));
            }
            rows.len()
        }
    };
    let inv = 1.0 / count as f64;
    for a in &mut acc {
        *a *= inv;
    }
    Ok(acc)
}

#[inline]
fn add_row(acc: &mut [f64], row: &[f64]) {
    for (a, &x) in acc.iter_mut().zip(row) {
        *a += x;
    }
}

/// Task-level THI: for each selected row, the argmax task of its per-task
/// *mean* influence gets one count. Ties break toward the lower task index.
pub fn thi_task_level(
    matrix: &AttributionMatrix,
    partition: &TaskPartition,
    subset: &[usize],
) -> Result<Vec<usize>> {
    validate_partition(partition, matrix.n_val())?;
    check_subset(subset, matrix.n_train())?;
    let m = partition.m();
    let sizes: Vec<f64> = (0..m).map(|k| partition.task_size(k) as f64).collect();
    let assignment = partition.assignment();
    let mut counts = vec![0usize; m];
    for &i in subset {
        let mut sums = vec![0.0f64; m];
        for (j, &x) in matrix.row(i).iter().enumerate() {
            sums[assignment[j]] += x;
        }
        let mut best_k = 0usize;
        let mut best = sums[0] / sizes[0];
        for (k, (&s, &n)) in sums.iter().zip(&sizes).enumerate().skip(1) {
            let mean = s / n;
            if mean > best {
                best = mean;
                best_k = k;
            }
        }
        counts[best_k] += 1;
    }
    Ok(counts)
}

/// Instance-level THI: for each selected row, the task owning the row's
/// argmax *column* gets one count. Ties break toward the lower column index.
pub fn thi_instance_level(
    matrix: &AttributionMatrix,
    partition: &TaskPartition,
    subset: &[usize],
) -> Result<Vec<usize>> {
    validate_partition(partition, matrix.n_val())?;
    check_subset(subset, matrix.n_train())?;
    let mut counts = vec![0usize; partition.m()];
    for &i in subset {
        let row = matrix.row(i);
        let mut best_j = 0usize;
        let mut best = row[0];
        for (j, &x) in row.iter().enumerate().skip(1) {
            if x > best {
                best = x;
                best_j = j;
            }
        }
        counts[partition.task_of(best_j)] += 1;
    }
    Ok(counts)
}

fn check_subset(subset: &[usize], n_train: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::invalid("THI of an empty subset is undefined"));
    }
    for &i in subset {
        if i >= n_train {
            return Err(Error::invalid(format!(
                "subset index {i} out of range for {n_train} rows"
            )));
        }
    }
    Ok(())
}

/// Condense a count vector into `{entropy, max/min ratio, max, min}`.
///
/// Entropy is `−Σ p_k ln p_k` over the nonzero `p_k = counts_k / Σ counts`,
/// in nats; the ratio is `+∞` when the minimum count is zero.
pub fn balance_metrics(counts: &[usize]) -> Result<BalanceMetrics> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("balance metrics need at least one count"));
    }
    let mut entropy = 0.0f64;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            entropy -= p * p.ln();
        }
    }
    let max_count = *counts.iter().max().expect("nonempty");
    let min_count = *counts.iter().min().expect("nonempty");
    let max_min_ratio = if min_count > 0 {
        max_count as f64 / min_count as f64
    } else {
        f64::INFINITY
    };
    Ok(BalanceMetrics {
        entropy,
        max_min_ratio,
        max_count,
        min_count,
    })
}

/// Assemble the full report for one selection.
///
/// THI (both variants) is computed over `matrix` — the matrix the selection
/// actually ranked, raw or normalized — while AID is computed over
/// `normalized` so influence magnitudes are comparable across methods.
/// Balance metrics summarize the instance-level THI counts.
pub fn report(
    matrix: &AttributionMatrix,
    partition: &TaskPartition,
    selection: &SelectionResult,
    normalized: &AttributionMatrix,
) -> Result<AnalysisReport> {
    if normalized.n_train() != matrix.n_train() || normalized.n_val() != matrix.n_val() {
        return Err(Error::invalid(format!(
            "normalized matrix is {}x{}, selection matrix is {}x{}",
            normalized.n_train(),
            normalized.n_val(),
            matrix.n_train(),
            matrix.n_val()
        )));
    }
    selection.validate(matrix.n_train())?;
    let thi_task = thi_task_level(matrix, partition, &selection.indices)?;
    let thi_instance = thi_instance_level(matrix, partition, &selection.indices)?;
    let balance = balance_metrics(&thi_instance)?;
    Ok(AnalysisReport {
        aid: aid(normalized, Some(&selection.indices))?,
        thi_task_level: thi_task,
        thi_instance_level: thi_instance,
        balance,
        method: selection.method,
        budget: selection.budget,
    })
}

/// Serialize an infinite ratio as the string `"inf"`, finite ratios as
/// numbers, and accept either on the way back in.
mod ratio_marker {
    use serde::de::{self, Deserializer, Unexpected};
    use serde::ser::Serializer;
    use serde::Deserialize;

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            ser.serialize_f64(*value)
        } else {
            ser.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Number(x) => Ok(x),
            Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Text(s) => Err(de::Error::invalid_value(
                Unexpected::Str(&s),
                &"a number or \"inf\"",
            )),
        }
    }
}
