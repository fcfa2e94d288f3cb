//! Ingestion of real crowdsourcing datasets: delimited label and truth
//! files, multi-class binarization, answer-probability estimation and error
//! evaluation.
//!
//! Files are UTF-8, one record per line, tab- or comma-delimited with the
//! delimiter auto-detected on the first line. A header line is recognized by
//! a non-numeric label field and skipped. Label values may use any
//! contiguous integer range; it is mapped onto `{1..L}` before binarization,
//! which sends levels `<= L/2` to `+1` and the rest to `-1`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::baselines::LabelMatrix;
use crate::error::{Error, Result};
use crate::model::ObservationVector;

/// One parsed line of a labels file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLabelRecord {
    pub task_id: String,
    pub worker_id: String,
    pub label: i64,
}

/// A fully loaded dataset: binarized labels, ground truth and summary
/// statistics.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: LabelMatrix,
    /// Binarized ground truth, aligned with the matrix rows.
    pub truth: Vec<i8>,
    /// Task ids in first-appearance order.
    pub task_ids: Vec<String>,
    /// Worker ids in first-appearance order.
    pub worker_ids: Vec<String>,
    /// Number of answered cells after de-duplication.
    pub label_count: usize,
    /// Number of distinct label levels `L`.
    pub label_levels: i64,
    /// Empirical answer probability `label_count / (n t)`.
    pub alpha_hat: f64,
}

impl Dataset {
    pub fn labeller_count(&self) -> usize {
        self.worker_ids.len()
    }

    pub fn task_count(&self) -> usize {
        self.task_ids.len()
    }

    /// Canonical serialization of the binarized labels: tab-delimited
    /// `task worker label` rows ordered by first appearance, with `+1`
    /// encoded as level 1 and `-1` as level 2.
    pub fn write_labels<W: Write>(&self, out: &mut W) -> Result<()> {
        for (row, task) in self.matrix.rows().iter().zip(&self.task_ids) {
            for (i, &v) in row.entries().iter().enumerate() {
                if v != 0 {
                    let level = if v > 0 { 1 } else { 2 };
                    writeln!(out, "{task}\t{}\t{level}", self.worker_ids[i])?;
                }
            }
        }
        Ok(())
    }

    /// Canonical serialization of the binarized truth.
    pub fn write_truth<W: Write>(&self, out: &mut W) -> Result<()> {
        for (task, &g) in self.task_ids.iter().zip(&self.truth) {
            let level = if g > 0 { 1 } else { 2 };
            writeln!(out, "{task}\t{level}")?;
        }
        Ok(())
    }
}

/// Maps a level in `{1..L}` to a binary label: `+1` when `2 level <= L`,
/// `-1` otherwise.
pub fn binarize_label(level: i64, level_count: i64) -> Result<i8> {
    if level < 1 || level > level_count {
        return Err(Error::InvalidParameter(format!(
            "label {level} is outside 1..={level_count}"
        )));
    }
    Ok(if 2 * level <= level_count { 1 } else { -1 })
}

/// Fraction of predictions disagreeing with the truth.
pub fn evaluate(predictions: &[i8], truth: &[i8]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidParameter("nothing to evaluate".into()));
    }
    let wrong = predictions
        .iter()
        .zip(truth)
        .filter(|(p, g)| p != g)
        .count();
    Ok(wrong as f64 / truth.len() as f64)
}

fn detect_delimiter(first_line: &str) -> Result<char> {
    if first_line.contains('\t') {
        Ok('\t')
    } else if first_line.contains(',') {
        Ok(',')
    } else {
        Err(Error::Parse {
            line: 1,
            message: "expected tab- or comma-delimited fields".into(),
        })
    }
}

fn split_fields(line: &str, delim: char) -> Vec<&str> {
    line.split(delim).map(str::trim).collect()
}

/// Reads a delimited file into trimmed field rows, skipping blank lines and
/// an optional header (detected by a non-numeric field at `label_field`).
/// Returns rows tagged with their 1-based line numbers.
fn read_delimited(
    path: &Path,
    fields: usize,
    label_field: usize,
) -> Result<Vec<(usize, Vec<String>)>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    let mut delim = None;
    let mut first_content_line = true;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let d = match delim {
            Some(d) => d,
            None => {
                let d = detect_delimiter(trimmed)?;
                delim = Some(d);
                d
            }
        };
        let parts = split_fields(trimmed, d);
        if parts.len() != fields {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {fields} fields, got {}", parts.len()),
            });
        }
        let is_first = std::mem::take(&mut first_content_line);
        if is_first && parts[label_field].parse::<i64>().is_err() {
            // header row
            continue;
        }
        if parts.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: "empty field".into(),
            });
        }
        rows.push((line_no, parts.into_iter().map(str::to_owned).collect()));
    }
    Ok(rows)
}

/// Loads a labels file (`task worker label`) and a truth file
/// (`task label`) into a binarized [`Dataset`].
///
/// Duplicate `(task, worker)` pairs keep the last record and count once.
/// Every labelled task must have a truth row and vice versa.
pub fn load_labels(labels_path: &Path, truth_path: &Path) -> Result<Dataset> {
    let label_rows = read_delimited(labels_path, 3, 2)?;
    if label_rows.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no label records in {}",
            labels_path.display()
        )));
    }

    let mut task_ids: Vec<String> = Vec::new();
    let mut worker_ids: Vec<String> = Vec::new();
    let mut task_index: HashMap<String, usize> = HashMap::new();
    let mut worker_index: HashMap<String, usize> = HashMap::new();
    let mut records: Vec<(usize, usize, i64)> = Vec::new();

    for (line_no, fields) in &label_rows {
        let label: i64 = fields[2].parse().map_err(|_| Error::Parse {
            line: *line_no,
            message: format!("label {:?} is not an integer", fields[2]),
        })?;
        let ti = *task_index.entry(fields[0].clone()).or_insert_with(|| {
            task_ids.push(fields[0].clone());
            task_ids.len() - 1
        });
        let wi = *worker_index.entry(fields[1].clone()).or_insert_with(|| {
            worker_ids.push(fields[1].clone());
            worker_ids.len() - 1
        });
        records.push((ti, wi, label));
    }

    let truth_rows = read_delimited(truth_path, 2, 1)?;
    let mut truth_map: HashMap<String, i64> = HashMap::new();
    for (line_no, fields) in &truth_rows {
        let label: i64 = fields[1].parse().map_err(|_| Error::Parse {
            line: *line_no,
            message: format!("label {:?} is not an integer", fields[1]),
        })?;
        if !task_index.contains_key(&fields[0]) {
            return Err(Error::UnknownTruthTask(fields[0].clone()));
        }
        truth_map.insert(fields[0].clone(), label);
    }

    // shared label range across worker labels and truth
    let mut min_label = i64::MAX;
    let mut max_label = i64::MIN;
    for &(_, _, l) in &records {
        min_label = min_label.min(l);
        max_label = max_label.max(l);
    }
    for &l in truth_map.values() {
        min_label = min_label.min(l);
        max_label = max_label.max(l);
    }
    let level_count = max_label - min_label + 1;
    if level_count < 2 {
        return Err(Error::InvalidParameter(
            "need at least two distinct label levels".into(),
        ));
    }

    let n = worker_ids.len();
    let t = task_ids.len();
    if n <= 2 {
        return Err(Error::InvalidParameter(format!(
            "need more than 2 workers, got {n}"
        )));
    }

    let mut grid = vec![vec![0i8; n]; t];
    for &(ti, wi, label) in &records {
        // keep-last rule for duplicates: later records overwrite
        grid[ti][wi] = binarize_label(label - min_label + 1, level_count)?;
    }

    let mut truth = Vec::with_capacity(t);
    for task in &task_ids {
        let label = truth_map
            .get(task)
            .ok_or_else(|| Error::MissingTruth(task.clone()))?;
        truth.push(binarize_label(label - min_label + 1, level_count)?);
    }

    let mut matrix = LabelMatrix::new(n)?;
    let mut label_count = 0usize;
    for row in grid {
        label_count += row.iter().filter(|&&v| v != 0).count();
        matrix.push(ObservationVector::new(row)?)?;
    }

    let alpha_hat = label_count as f64 / (n * t) as f64;
    Ok(Dataset {
        matrix,
        truth,
        task_ids,
        worker_ids,
        label_count,
        label_levels: level_count,
        alpha_hat,
    })
}
