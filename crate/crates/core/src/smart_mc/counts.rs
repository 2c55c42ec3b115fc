//! Empirical counts, row-normalized frequencies and the non-rare mask.
//!
//! All matrices here are `(N+1) x N`: row 0 holds initial states, row `u`
//! (1..=N) transitions out of state `u`. Columns are addressed by the
//! 1-based target state `v`.

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    n_states: usize,
    rows: Vec<Vec<u64>>,
}

impl CountMatrix {
    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n_states = rows.len().saturating_sub(1);
        if n_states == 0 || rows.iter().any(|r| r.len() != n_states) {
            return Err(Error::ShapeMismatch("count matrix must be (N+1) x N with N >= 1".into()));
        }
        Ok(Self { n_states, rows })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn get(&self, u: usize, v: usize) -> u64 {
        self.rows[u][v - 1]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn row_total(&self, u: usize) -> u64 {
        self.rows[u].iter().sum()
    }

    /// Number of observed transitions (rows 1..=N).
    pub fn transition_total(&self) -> u64 {
        (1..=self.n_states).map(|u| self.row_total(u)).sum()
    }
}

/// Tallies initial states into row 0 and transitions into rows 1..=N.
pub fn count_matrix(data: &Dataset) -> CountMatrix {
    let n = data.n_states();
    let mut rows = vec![vec![0u64; n]; n + 1];
    for subject in data.subjects() {
        let seq = &subject.sequence;
        rows[0][seq[0] - 1] += 1;
        for w in seq.windows(2) {
            rows[w[0]][w[1] - 1] += 1;
        }
    }
    CountMatrix { n_states: n, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMatrix {
    probs: Vec<Vec<f64>>,
    active: Vec<bool>,
}

impl EmpiricalMatrix {
    /// Rebuilds from stored probabilities; rows with zero sum become inactive.
    pub fn from_probs(probs: Vec<Vec<f64>>) -> Result<Self> {
        let n = probs.len().saturating_sub(1);
        if n == 0 || probs.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("empirical matrix must be (N+1) x N".into()));
        }
        let mut active = Vec::with_capacity(probs.len());
        for (u, row) in probs.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidDataset(format!("row {u} has entries outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if total == 0.0 {
                active.push(false);
            } else if (total - 1.0).abs() <= 1e-12 {
                active.push(true);
            } else {
                return Err(Error::InvalidDataset(format!("row {u} sums to {total}")));
            }
        }
        Ok(Self { probs, active })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.probs[u][v - 1]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.probs[u]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn is_active(&self, u: usize) -> bool {
        self.active[u]
    }

    pub fn inactive_rows(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&u| !self.active[u]).collect()
    }
}

/// Divides every row by its total; zero-total rows stay zero and inactive.
pub fn empirical_matrix(counts: &CountMatrix) -> EmpiricalMatrix {
    let mut probs = Vec::with_capacity(counts.rows.len());
    let mut active = Vec::with_capacity(counts.rows.len());
    for row in &counts.rows {
        let total: u64 = row.iter().sum();
        if total == 0 {
            probs.push(vec![0.0; row.len()]);
            active.push(false);
        } else {
            probs.push(row.iter().map(|&c| c as f64 / total as f64).collect());
            active.push(true);
        }
    }
    EmpiricalMatrix { probs, active }
}

/// Entries whose count reaches `tol` are modeled through covariates; the
/// rest keep their empirical probability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonRareMask {
    mask: Vec<Vec<bool>>,
    tol: u64,
}

impl NonRareMask {
    pub fn from_rows(mask: Vec<Vec<bool>>, tol: u64) -> Result<Self> {
        let n = mask.len().saturating_sub(1);
        if n == 0 || mask.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("mask must be (N+1) x N".into()));
        }
        Ok(Self { mask, tol })
    }

    pub fn n_states(&self) -> usize {
        self.mask.len() - 1
    }

    pub fn tol(&self) -> u64 {
        self.tol
    }

    pub fn is_masked(&self, u: usize, v: usize) -> bool {
        self.mask[u][v - 1]
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.mask
    }

    /// Masked `(u, v)` pairs in row-major order.
    pub fn masked_entries(&self) -> Vec<(usize, usize)> {
        self.mask
            .iter()
            .enumerate()
            .flat_map(|(u, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &m)| m)
                    .map(move |(c, _)| (u, c + 1))
            })
            .collect()
    }

    pub fn n_masked(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }

    pub fn masked_in_row(&self, u: usize) -> usize {
        self.mask[u].iter().filter(|&&m| m).count()
    }
}

/// Marks `(u, v)` as non-rare when `count >= tol`. Requires `tol >= p + 1`.
pub fn nonrare_mask(counts: &CountMatrix, tol: u64, p: usize) -> Result<NonRareMask> {
    let min = p as u64 + 1;
    if tol < min {
        return Err(Error::TolTooSmall { tol, min });
    }
    let mask = counts
        .rows
        .iter()
        .map(|row| row.iter().map(|&c| c >= tol).collect())
        .collect();
    Ok(NonRareMask { mask, tol })
}
