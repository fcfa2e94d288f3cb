//! Core domain types: observation vectors, their sufficient statistics,
//! ground truth and the population model.

use crate::error::{Error, Result};

/// The labels submitted for one task across all `n` labellers.
///
/// Entries are `-1`, `0` or `+1`, where `0` marks a labeller who did not
/// answer. At least three labellers are required.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationVector {
    entries: Vec<i8>,
}

impl ObservationVector {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if entries.len() <= 2 {
            return Err(Error::InvalidParameter(format!(
                "need more than 2 labellers, got {}",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().copied().find(|&e| !(-1..=1).contains(&e)) {
            return Err(Error::InvalidLabel(bad as i64));
        }
        Ok(Self { entries })
    }

    pub fn from_slice(entries: &[i8]) -> Result<Self> {
        Self::new(entries.to_vec())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    /// Label sum and answer count in one pass.
    pub fn summary(&self) -> ObservationSummary {
        let mut s = 0i64;
        let mut m = 0usize;
        for &e in &self.entries {
            s += e as i64;
            m += (e != 0) as usize;
        }
        ObservationSummary { s, m }
    }

    /// The same task with every answer negated.
    pub fn flipped(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|&e| -e).collect(),
        }
    }
}

impl std::ops::Index<usize> for ObservationVector {
    type Output = i8;

    fn index(&self, i: usize) -> &i8 {
        &self.entries[i]
    }
}

/// Sufficient statistics of one observation: `s` is the label sum, `m` the
/// number of labellers who answered. Always `|s| <= m <= n` and `s ≡ m (mod 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationSummary {
    pub s: i64,
    pub m: usize,
}

impl From<&ObservationVector> for ObservationSummary {
    fn from(x: &ObservationVector) -> Self {
        x.summary()
    }
}

/// The correct answer of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth(i8);

impl GroundTruth {
    pub fn new(value: i8) -> Result<Self> {
        if value == 1 || value == -1 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidLabel(value as i64))
        }
    }

    pub fn value(self) -> i8 {
        self.0
    }
}

/// Population model: `n > 2` labellers, each answering any given task with
/// probability `alpha` and, when answering, wrong with probability `p[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdModel {
    alpha: f64,
    p: Vec<f64>,
}

impl CrowdModel {
    pub fn new(alpha: f64, p: Vec<f64>) -> Result<Self> {
        if p.len() <= 2 {
            return Err(Error::InvalidParameter(format!(
                "need more than 2 labellers, got {}",
                p.len()
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if let Some(&bad) = p.iter().find(|&&pi| !(0.0..=1.0).contains(&pi)) {
            return Err(Error::ProbabilityOutOfRange(bad));
        }
        Ok(Self { alpha, p })
    }

    pub fn labeller_count(&self) -> usize {
        self.p.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn error_probs(&self) -> &[f64] {
        &self.p
    }
}
