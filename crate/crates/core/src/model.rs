//! Core data model: attribution matrices, task partitions, budgets, and
//! selection results.
//!
//! An attribution matrix `A` holds one row per training example and one
//! column per validation instance; `A[i][j]` is the (unitless) influence of
//! training example `i` on validation instance `j`. Row `i` is the influence
//! distribution of example `i`. All selection and analysis code operates on
//! integer indices; string identifiers are opaque labels carried along for
//! provenance only.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// AttributionMatrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix of 64-bit influence scores.
///
/// Invariants, enforced at construction:
/// - `n_train ≥ 1`, `n_val ≥ 1`, `values.len() == n_train * n_val`;
/// - every value is finite;
/// - optional id lists match their dimension and contain no duplicates.
///
/// The same container doubles as a generic dense matrix for gradient feature
/// blocks and similarity matrices, which share the layout and invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    n_train: usize,
    n_val: usize,
    values: Vec<f64>,
    row_ids: Option<Vec<String>>,
    col_ids: Option<Vec<String>>,
}

impl AttributionMatrix {
    /// Build a matrix from a flat row-major buffer.
    pub fn new(n_train: usize, n_val: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_ids(n_train, n_val, values, None, None)
    }

    /// Build a matrix with optional row/column identifiers.
    pub fn with_ids(
        n_train: usize,
        n_val: usize,
        values: Vec<f64>,
        row_ids: Option<Vec<String>>,
        col_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_train == 0 || n_val == 0 {
            return Err(Error::invalid(format!(
                "matrix dimensions must be positive, got {n_train}x{n_val}"
            )));
        }
        let expected = n_train
            .checked_mul(n_val)
            .ok_or_else(|| Error::invalid("matrix dimensions overflow"))?;
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "value buffer holds {} entries, expected {n_train}x{n_val} = {expected}",
                values.len()
            )));
        }
        if let Some((pos, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value {v} at (row {}, col {})",
                pos / n_val,
                pos % n_val
            )));
        }
        validate_ids(&row_ids, n_train, "row_ids")?;
        validate_ids(&col_ids, n_val, "col_ids")?;
        Ok(Self {
            n_train,
            n_val,
            values,
            row_ids,
            col_ids,
        })
    }

    /// Build from per-row slices; convenient in tests and small examples.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("matrix needs at least one row"));
        }
        let n_val = rows[0].len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_val) {
            return Err(Error::invalid(format!(
                "ragged rows: row 0 has {n_val} entries, row {i} has {}",
                r.len()
            )));
        }
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), n_val, values)
    }

    /// Number of training rows (|D|).
    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// Number of validation columns (|V|).
    pub fn n_val(&self) -> usize {
        self.n_val
    }

    /// Single entry `A[i][j]`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.n_train && j < self.n_val);
        self.values[i * self.n_val + j]
    }

    /// Row `i` as a contiguous slice — the influence distribution of
    /// training example `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * self.n_val;
        &self.values[start..start + self.n_val]
    }

    /// Flat row-major view of all values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Optional row identifiers.
    pub fn row_ids(&self) -> Option<&[String]> {
        self.row_ids.as_deref()
    }

    /// Optional column identifiers.
    pub fn col_ids(&self) -> Option<&[String]> {
        self.col_ids.as_deref()
    }
}

fn validate_ids(ids: &Option<Vec<String>>, expected: usize, what: &str) -> Result<()> {
    let Some(ids) = ids else { return Ok(()) };
    if ids.len() != expected {
        return Err(Error::invalid(format!(
            "{what} has {} entries, expected {expected}",
            ids.len()
        )));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid(format!("{what} contains duplicate id {id:?}")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// TaskPartition
// ---------------------------------------------------------------------------

/// Grouping of validation columns into `m` named tasks (V = V₁ ∪ … ∪ Vₘ).
///
/// Stored as a column→task assignment vector; every task owns at least one
/// column and every column belongs to exactly one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPartition {
    task_names: Vec<String>,
    assignment: Vec<usize>,
}

impl TaskPartition {
    /// Build a partition from task names and a column→task assignment.
    pub fn new(task_names: Vec<String>, assignment: Vec<usize>) -> Result<Self> {
        if task_names.is_empty() {
            return Err(Error::invalid("partition needs at least one task"));
        }
        let mut seen = HashSet::with_capacity(task_names.len());
        for name in &task_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate task name {name:?}")));
            }
        }
        let m = task_names.len();
        let mut counts = vec![0usize; m];
        for (j, &k) in assignment.iter().enumerate() {
            if k >= m {
                return Err(Error::invalid(format!(
                    "column {j} assigned to task {k}, but only {m} tasks exist"
                )));
            }
            counts[k] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!(
                "task {empty} ({:?}) owns no columns",
                task_names[empty]
            )));
        }
        Ok(Self {
            task_names,
            assignment,
        })
    }

    /// Number of tasks `m`.
    pub fn m(&self) -> usize {
        self.task_names.len()
    }

    /// Task names, indexed by task id.
    pub fn task_names(&self) -> &[String] {
        &self.task_names
    }

    /// Column→task assignment; `assignment()[j]` is the task of column `j`.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Task of column `j`.
    #[inline]
    pub fn task_of(&self, j: usize) -> usize {
        self.assignment[j]
    }

    /// Number of columns owned by task `k`.
    pub fn task_size(&self, k: usize) -> usize {
        self.assignment.iter().filter(|&&t| t == k).count()
    }
}

/// Check that `partition` is usable against a matrix with `n_val` columns.
///
/// Succeeds iff the assignment covers exactly `n_val` columns, every task
/// index is in range, and every task is nonempty (the latter two hold by
/// construction of [`TaskPartition`], so the length check is the interesting
/// one for deserialized inputs).
pub fn validate_partition(partition: &TaskPartition, n_val: usize) -> Result<()> {
    if partition.assignment.len() != n_val {
        return Err(Error::invalid(format!(
            "partition covers {} columns, matrix has {n_val}",
            partition.assignment.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Budget
// ---------------------------------------------------------------------------

/// Selection budget: an absolute row count or a fraction of `n_train`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Keep exactly this many rows.
    Absolute(usize),
    /// Keep `floor(p · n_train)` rows, clamped below to 1; `p ∈ (0, 1]`.
    Fraction(f64),
}

impl Budget {
    /// Resolve the budget to a concrete row count `B` with `1 ≤ B ≤ n_train`.
    ///
    /// Fractions round down so the requested fraction is never exceeded, then
    /// clamp to 1 so the selection is never empty.
    pub fn resolve(self, n_train: usize) -> Result<usize> {
        match self {
            Budget::Absolute(b) => {
                if b == 0 {
                    Err(Error::invalid("budget must be at least 1"))
                } else if b > n_train {
                    Err(Error::BudgetTooLarge {
                        requested: b,
                        available: n_train,
                    })
                } else {
                    Ok(b)
                }
            }
            Budget::Fraction(p) => {
                if !p.is_finite() || p <= 0.0 || p > 1.0 {
                    return Err(Error::invalid(format!(
                        "fraction budget must lie in (0, 1], got {p}"
                    )));
                }
                Ok(((p * n_train as f64).floor() as usize).clamp(1, n_train))
            }
        }
    }
}

/// Free-function form of [`Budget::resolve`].
pub fn resolve_budget(budget: Budget, n_train: usize) -> Result<usize> {
    budget.resolve(n_train)
}

// ---------------------------------------------------------------------------
// Method & SelectionResult
// ---------------------------------------------------------------------------

/// Selection algorithm tag, matching the on-disk `method` strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bids,
    TaskMax,
    InstanceMax,
    Sum,
    Random,
    Rds,
}

impl Method {
    /// The on-disk string tag.
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bids => "bids",
            Method::TaskMax => "task_max",
            Method::InstanceMax => "instance_max",
            Method::Sum => "sum",
            Method::Random => "random",
            Method::Rds => "rds",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bids" => Ok(Method::Bids),
            "task_max" => Ok(Method::TaskMax),
            "instance_max" => Ok(Method::InstanceMax),
            "sum" => Ok(Method::Sum),
            "random" => Ok(Method::Random),
            "rds" => Ok(Method::Rds),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected bids | task_max | instance_max | sum | random | rds)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a selection run: `B` distinct training-row indices in selection
/// order, plus an optional per-step utility trace.
///
/// For score-ranked methods `utilities[r]` is the score of the row at rank
/// `r`; for the iterative method it is the utility of the pick at iteration
/// `r` against the then-current selected-set mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    pub budget: usize,
    pub indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utilities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SelectionResult {
    /// Validate internal consistency against a matrix with `n_train` rows.
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.indices.len() != self.budget {
            return Err(Error::invalid(format!(
                "selection holds {} indices but declares budget {}",
                self.indices.len(),
                self.budget
            )));
        }
        let mut seen = HashSet::with_capacity(self.indices.len());
        for &i in &self.indices {
            if i >= n_train {
                return Err(Error::invalid(format!(
                    "selected index {i} out of range for {n_train} rows"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::invalid(format!("selected index {i} appears twice")));
            }
        }
        if let Some(u) = &self.utilities {
            if u.len() != self.budget {
                return Err(Error::invalid(format!(
                    "utility trace has {} entries but budget is {}",
                    u.len(),
                    self.budget
                )));
            }
        }
        Ok(())
    }
}
