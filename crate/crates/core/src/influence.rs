//! Building attribution matrices from precomputed gradient features.
//!
//! This implements the aggregation step of the LESS influence estimate: the
//! warmup training run has already produced, per epoch, projected Adam update
//! features for every training example and projected gradient features for
//! every validation example, plus the epoch's average learning rate η̄. The
//! influence of training example `i` on validation example `j` is then
//!
//! ```text
//! A_ij = Σ_t  η̄_t · cos(val[t][j], train[t][i])
//! ```
//!
//! The companion representation-similarity matrix (for the RDS baseline) is
//! the plain pairwise cosine of final-layer representations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{load_matrix, MatrixFormat};
use crate::model::AttributionMatrix;

/// Per-epoch projected gradient features for both sides, plus the per-epoch
/// average learning rates.
///
/// Feature blocks reuse [`AttributionMatrix`] as a dense row-major container:
/// `train_features[t]` is `n_train × d`, `val_features[t]` is `n_val × d`.
#[derive(Debug, Clone)]
pub struct GradientFeatureSet {
    pub train_features: Vec<AttributionMatrix>,
    pub val_features: Vec<AttributionMatrix>,
    pub learning_rates: Vec<f64>,
}

impl GradientFeatureSet {
    /// Validate cross-epoch consistency: equal epoch counts on all three
    /// lists, matching `n_train`/`n_val`/`d` across epochs, finite rates.
    pub fn validate(&self) -> Result<()> {
        let epochs = self.learning_rates.len();
        if epochs == 0 {
            return Err(Error::invalid("feature set needs at least one epoch"));
        }
        if self.train_features.len() != epochs || self.val_features.len() != epochs {
            return Err(Error::invalid(format!(
                "epoch count mismatch: {} learning rates, {} train blocks, {} val blocks",
                epochs,
                self.train_features.len(),
                self.val_features.len()
            )));
        }
        if let Some(r) = self.learning_rates.iter().find(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("non-finite learning rate {r}")));
        }
        let d = self.train_features[0].n_val();
        let n_train = self.train_features[0].n_train();
        let n_val = self.val_features[0].n_train();
        for (t, (train, val)) in self
            .train_features
            .iter()
            .zip(&self.val_features)
            .enumerate()
        {
            if train.n_val() != d || val.n_val() != d {
                return Err(Error::invalid(format!(
                    "epoch {t}: projection dim {} (train) / {} (val), expected {d}",
                    train.n_val(),
                    val.n_val()
                )));
            }
            if train.n_train() != n_train || val.n_train() != n_val {
                return Err(Error::invalid(format!(
                    "epoch {t}: {} train rows / {} val rows, expected {n_train}/{n_val}",
                    train.n_train(),
                    val.n_train()
                )));
            }
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.learning_rates.len()
    }

    pub fn dim(&self) -> usize {
        self.train_features[0].n_val()
    }

    pub fn n_train(&self) -> usize {
        self.train_features[0].n_train()
    }

    pub fn n_val(&self) -> usize {
        self.val_features[0].n_train()
    }
}

/// Adam-influence aggregation over warmup epochs.
///
/// `A_ij = Σ_t η̄_t · cos(val[t][j], train[t][i])`. A zero-norm feature
/// vector on either side contributes cosine 0 for that epoch: a fully-masked
/// example's projected gradient is legitimately zero and carries no
/// alignment signal.
///
/// Implementation: rows are normalized to unit length once per epoch, after
/// which every pairwise cosine is a plain dot product. Dot products run
/// sequentially over `d` so results do not depend on the parallel schedule
/// (rows are the parallel axis).
pub fn adam_influence(features: &GradientFeatureSet) -> Result<AttributionMatrix> {
    features.validate()?;
    let n_train = features.n_train();
    let n_val = features.n_val();
    let mut acc = vec![0.0f64; n_train * n_val];

    for (t, rate) in features.learning_rates.iter().enumerate() {
        let train = normalize_rows(&features.train_features[t]);
        let val = normalize_rows(&features.val_features[t]);
        acc.par_chunks_mut(n_val).enumerate().for_each(|(i, out)| {
            let u = &train[i * features.dim()..(i + 1) * features.dim()];
            for (j, slot) in out.iter_mut().enumerate() {
                let w = &val[j * features.dim()..(j + 1) * features.dim()];
                *slot += rate * dot(u, w);
            }
        });
    }
    AttributionMatrix::new(n_train, n_val, acc)
}

/// Pairwise cosine similarity of representation rows: `S_ij =
/// cos(train[i], val[j])`, zero-norm rows scoring 0 against everything.
pub fn cosine_similarity_matrix(
    train_reprs: &AttributionMatrix,
    val_reprs: &AttributionMatrix,
) -> Result<AttributionMatrix> {
    if train_reprs.n_val() != val_reprs.n_val() {
        return Err(Error::invalid(format!(
            "representation dims differ: {} (train) vs {} (val)",
            train_reprs.n_val(),
            val_reprs.n_val()
        )));
    }
    let d = train_reprs.n_val();
    let n_train = train_reprs.n_train();
    let n_val = val_reprs.n_train();
    let train = normalize_rows(train_reprs);
    let val = normalize_rows(val_reprs);
    let mut values = vec![0.0f64; n_train * n_val];
    values.par_chunks_mut(n_val).enumerate().for_each(|(i, out)| {
        let u = &train[i * d..(i + 1) * d];
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = dot(u, &val[j * d..(j + 1) * d]);
        }
    });
    AttributionMatrix::new(n_train, n_val, values)
}

/// Unit-normalize each row; zero rows stay zero.
fn normalize_rows(m: &AttributionMatrix) -> Vec<f64> {
    let d = m.n_val();
    let mut out = vec![0.0f64; m.n_train() * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, row_out)| {
        let row = m.row(i);
        let norm = dot(row, row).sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            for (o, &x) in row_out.iter_mut().zip(row) {
                *o = x * inv;
            }
        }
    });
    out
}

#[inline]
fn dot(u: &[f64], w: &[f64]) -> f64 {
    u.iter().zip(w).map(|(a, b)| a * b).sum()
}

// ---------------------------------------------------------------------------
// Manifest loading
// ---------------------------------------------------------------------------

/// On-disk description of a feature set: block files are AMAT v1 binaries,
/// one per epoch per side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub epochs: usize,
    pub dim: usize,
    pub learning_rates: Vec<f64>,
    pub train_files: Vec<String>,
    pub val_files: Vec<String>,
}

/// Load a [`GradientFeatureSet`] from a manifest JSON file.
///
/// Relative paths inside the manifest resolve against the manifest's own
/// directory, so a feature bundle can be moved as a unit.
pub fn load_feature_set(manifest_path: &Path) -> Result<GradientFeatureSet> {
    let file = std::fs::File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: FeatureManifest = serde_json::from_reader(std::io::BufReader::new(file))?;

    if manifest.train_files.len() != manifest.epochs
        || manifest.val_files.len() != manifest.epochs
        || manifest.learning_rates.len() != manifest.epochs
    {
        return Err(Error::invalid(format!(
            "manifest declares {} epochs but lists {} train files, {} val files, {} learning rates",
            manifest.epochs,
            manifest.train_files.len(),
            manifest.val_files.len(),
            manifest.learning_rates.len()
        )));
    }

    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |f: &String| {
        let p = Path::new(f);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut train_features = Vec::with_capacity(manifest.epochs);
    let mut val_features = Vec::with_capacity(manifest.epochs);
    for f in &manifest.train_files {
        train_features.push(load_matrix(&resolve(f), MatrixFormat::Binary)?);
    }
    for f in &manifest.val_files {
        val_features.push(load_matrix(&resolve(f), MatrixFormat::Binary)?);
    }

    let set = GradientFeatureSet {
        train_features,
        val_features,
        learning_rates: manifest.learning_rates,
    };
    set.validate()?;
    if set.dim() != manifest.dim {
        return Err(Error::invalid(format!(
            "manifest declares dim {} but feature blocks have dim {}",
            manifest.dim,
            set.dim()
        )));
    }
    Ok(set)
}
