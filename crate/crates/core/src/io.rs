//! On-disk formats for matrices, partitions, and selection results.
//!
//! Matrix formats:
//! - **AMAT v1 binary**: magic `AMAT`, u32 version (= 1), u64 row count,
//!   u64 column count, then rows×cols IEEE-754 binary64 values, row-major —
//!   all little-endian. Round trips are bit-exact.
//! - **CSV**: UTF-8 comma-separated decimal literals, one row per line, LF
//!   endings, no header by default. Values are printed with the shortest
//!   decimal that parses back to the identical 64-bit float. With a header,
//!   row 1 carries an empty corner cell followed by the column ids, and each
//!   data row starts with its row id.
//!
//! Partition and selection files are JSON; unknown keys are ignored on read
//! so callers may embed extra provenance alongside the defined fields.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AttributionMatrix, SelectionResult, TaskPartition};

/// Magic bytes opening every binary matrix file.
pub const AMAT_MAGIC: &[u8; 4] = b"AMAT";
/// The single binary format version this build reads and writes.
pub const AMAT_VERSION: u32 = 1;

/// Matrix serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

/// Load a matrix in the given format. See the module docs for the layouts.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<AttributionMatrix> {
    match format {
        MatrixFormat::Binary => load_binary(path),
        MatrixFormat::Csv => load_csv(path, false),
    }
}

/// Save a matrix in the given format.
pub fn save_matrix(matrix: &AttributionMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Binary => save_binary(matrix, path),
        MatrixFormat::Csv => save_csv(matrix, path, false),
    }
}

// ---------------------------------------------------------------------------
// AMAT v1 binary
// ---------------------------------------------------------------------------

fn load_binary(path: &Path) -> Result<AttributionMatrix> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut header = [0u8; 24];
    file.read_exact(&mut header).map_err(|_| Error::BadPayload {
        path: path.into(),
        detail: "file shorter than the 24-byte header".into(),
    })?;
    if &header[0..4] != AMAT_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != AMAT_VERSION {
        return Err(Error::BadVersion {
            path: path.into(),
            found: version,
            expected: AMAT_VERSION,
        });
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes")) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::BadPayload {
            path: path.into(),
            detail: format!("dimensions {rows}x{cols} overflow"),
        })?;

    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != count * 8 {
        return Err(Error::BadPayload {
            path: path.into(),
            detail: format!(
                "payload is {} bytes, header promises {rows}x{cols} values = {} bytes",
                payload.len(),
                count * 8
            ),
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    AttributionMatrix::new(rows, cols, values)
}

fn save_binary(matrix: &AttributionMatrix, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io_err = |e| Error::io(path, e);
    file.write_all(AMAT_MAGIC).map_err(io_err)?;
    file.write_all(&AMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    file.write_all(&(matrix.n_train() as u64).to_le_bytes()).map_err(io_err)?;
    file.write_all(&(matrix.n_val() as u64).to_le_bytes()).map_err(io_err)?;
    // One buffered pass; 8-byte little-endian per value.
    for &v in matrix.values() {
        file.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Load a CSV matrix. With `header`, row 1 holds column ids (after an ignored
/// corner cell) and the first cell of each data row holds that row's id.
pub fn load_csv(path: &Path, header: bool) -> Result<AttributionMatrix> {
    let file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut lines = file.lines().enumerate();

    let mut col_ids: Option<Vec<String>> = None;
    if header {
        let (_, first) = lines.next().ok_or_else(|| Error::BadPayload {
            path: path.into(),
            detail: "empty file where a header row was expected".into(),
        })?;
        let first = first.map_err(|e| Error::io(path, e))?;
        let mut cells = first.split(',');
        cells.next(); // corner cell above the row-id column
        col_ids = Some(cells.map(str::to_owned).collect());
    }

    let mut row_ids: Vec<String> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut n_val: Option<usize> = None;
    let mut n_rows = 0usize;

    for (line_no, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue; // tolerate a trailing newline
        }
        let mut cells = line.split(',');
        if header {
            row_ids.push(
                cells
                    .next()
                    .ok_or_else(|| Error::BadPayload {
                        path: path.into(),
                        detail: format!("line {}: missing row id", line_no + 1),
                    })?
                    .to_owned(),
            );
        }
        let row_index = n_rows;
        let mut width = 0usize;
        for (col, cell) in cells.enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::BadCell {
                path: path.into(),
                row: row_index,
                col,
                detail: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::BadCell {
                    path: path.into(),
                    row: row_index,
                    col,
                    detail: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
            width += 1;
        }
        match n_val {
            None => n_val = Some(width),
            Some(expected) if expected != width => {
                return Err(Error::BadPayload {
                    path: path.into(),
                    detail: format!(
                        "ragged rows: row 0 has {expected} values, row {row_index} has {width}"
                    ),
                });
            }
            Some(_) => {}
        }
        n_rows += 1;
    }

    let n_val = n_val.ok_or_else(|| Error::BadPayload {
        path: path.into(),
        detail: "no data rows".into(),
    })?;
    let row_ids = header.then_some(row_ids);
    AttributionMatrix::with_ids(n_rows, n_val, values, row_ids, col_ids)
}

/// Save a CSV matrix; `header` additionally writes the id row/column (ids
/// default to `r<i>` / `c<j>` when the matrix carries none).
pub fn save_csv(matrix: &AttributionMatrix, path: &Path, header: bool) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io_err = |e| Error::io(path, e);
    let mut line = String::new();
    if header {
        line.push(','); // corner cell
        for j in 0..matrix.n_val() {
            if j > 0 {
                line.push(',');
            }
            match matrix.col_ids() {
                Some(ids) => line.push_str(&ids[j]),
                None => line.push_str(&format!("c{j}")),
            }
        }
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io_err)?;
    }
    for i in 0..matrix.n_train() {
        line.clear();
        if header {
            match matrix.row_ids() {
                Some(ids) => line.push_str(&ids[i]),
                None => line.push_str(&format!("r{i}")),
            }
            line.push(',');
        }
        for (j, v) in matrix.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            // `{}` prints the shortest decimal that round-trips the f64.
            line.push_str(&format!("{v}"));
        }
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

// ---------------------------------------------------------------------------
// Partition JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    tasks: Vec<TaskEntry>,
}

#[derive(Serialize, Deserialize)]
struct TaskEntry {
    name: String,
    cols: Vec<usize>,
}

/// Load a task partition from `{"tasks": [{"name", "cols"}, ...]}` JSON.
///
/// The `cols` lists must together cover `0..n_val` exactly once, where
/// `n_val` is their total length.
pub fn load_partition(path: &Path) -> Result<TaskPartition> {
    let file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let parsed: PartitionFile = serde_json::from_reader(file)?;
    partition_from_entries(parsed)
}

fn partition_from_entries(parsed: PartitionFile) -> Result<TaskPartition> {
    let n_val: usize = parsed.tasks.iter().map(|t| t.cols.len()).sum();
    let mut assignment = vec![usize::MAX; n_val];
    for (k, task) in parsed.tasks.iter().enumerate() {
        for &j in &task.cols {
            if j >= n_val {
                return Err(Error::invalid(format!(
                    "task {:?} lists column {j}, but the tasks cover only {n_val} columns",
                    task.name
                )));
            }
            if assignment[j] != usize::MAX {
                return Err(Error::invalid(format!(
                    "column {j} appears in more than one task"
                )));
            }
            assignment[j] = k;
        }
    }
    // Total length matches and no duplicates, so every column is assigned.
    let names = parsed.tasks.into_iter().map(|t| t.name).collect();
    TaskPartition::new(names, assignment)
}

/// Save a task partition as `{"tasks": [...]}` JSON (pretty-printed).
pub fn save_partition(partition: &TaskPartition, path: &Path) -> Result<()> {
    let value = partition_to_value(partition);
    write_json(&value, path)
}

/// The partition's JSON representation, for callers that embed it in a
/// larger document.
pub fn partition_to_value(partition: &TaskPartition) -> serde_json::Value {
    let tasks: Vec<TaskEntry> = (0..partition.m())
        .map(|k| TaskEntry {
            name: partition.task_names()[k].clone(),
            cols: (0..partition.assignment().len())
                .filter(|&j| partition.task_of(j) == k)
                .collect(),
        })
        .collect();
    serde_json::to_value(PartitionFile { tasks }).expect("partition serializes")
}

// ---------------------------------------------------------------------------
// Selection JSON
// ---------------------------------------------------------------------------

/// Load a selection result from JSON.
pub fn load_selection(path: &Path) -> Result<SelectionResult> {
    let file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    Ok(serde_json::from_reader(file)?)
}

/// Save a selection result as JSON.
pub fn save_selection(selection: &SelectionResult, path: &Path) -> Result<()> {
    write_json(&serde_json::to_value(selection)?, path)
}

/// Pretty-print any JSON value to `path` with a trailing newline.
pub fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}
