use super::model::{augmented, dot, order_free_sum, SCORE_LIMIT};
use super::{count_matrix, Dataset, EmpiricalMatrix, NonRareMask};
use crate::error::{Error, Result};
use crate::mscor::Objective;
use crate::sphere::MultiSpherePoint;

/// Negative log-likelihood as a function of the masked coefficient vectors,
/// laid out as one sphere block per masked entry in row-major order.
///
/// The likelihood factorizes over rows of the transition matrix, so each row
/// with masked entries is one term; a final term collects everything that
/// does not depend on coefficients.
#[derive(Debug, Clone)]
pub struct LikelihoodObjective {
    dim: usize,
    /// `(1, x)` per subject, flattened.
    design: Vec<f64>,
    rows: Vec<RowTerm>,
    block_row: Vec<usize>,
    constant: f64,
}

#[derive(Debug, Clone)]
struct RowTerm {
    first_block: usize,
    n_blocks: usize,
    /// Log-likelihood of the rare entries plus the free-mass factor.
    constant: f64,
    subjects: Vec<usize>,
    /// `subjects.len() x n_blocks` transition counts into masked entries.
    counts: Vec<f64>,
    totals: Vec<f64>,
}

impl LikelihoodObjective {
    pub fn new(data: &Dataset, mask: &NonRareMask, empirical: &EmpiricalMatrix) -> Result<Self> {
        let n = data.n_states();
        if mask.n_states() != n || empirical.n_states() != n {
            return Err(Error::ShapeMismatch("dataset, mask and empirical matrix disagree on N".into()));
        }
        let dim = data.n_covariates() + 1;
        let mut design = Vec::with_capacity(dim * data.subjects().len());
        for s in data.subjects() {
            let xa = augmented(&s.covariates);
            let norm = dot(&xa, &xa).sqrt();
            if norm > SCORE_LIMIT {
                return Err(Error::OverflowGuard { value: norm });
            }
            design.extend(xa);
        }

        // per-subject transition counts, sparse per row
        let mut per_subject: Vec<Vec<Vec<u64>>> = Vec::with_capacity(data.subjects().len());
        for s in data.subjects() {
            let mut c = vec![vec![0u64; n]; n + 1];
            c[0][s.sequence[0] - 1] += 1;
            for w in s.sequence.windows(2) {
                c[w[0]][w[1] - 1] += 1;
            }
            per_subject.push(c);
        }
        let totals = count_matrix(data);

        let mut rows = Vec::new();
        let mut block_row = Vec::new();
        let mut constant = 0.0;
        let mut next_block = 0;
        for u in 0..=n {
            let masked: Vec<usize> = (0..n).filter(|&c| mask.rows()[u][c]).collect();
            let emp = empirical.row(u);
            let mut row_const = 0.0;
            for c in (0..n).filter(|&c| !mask.rows()[u][c]) {
                let k = totals.rows()[u][c];
                if k > 0 {
                    if emp[c] <= 0.0 {
                        return Err(Error::ZeroProbability { from: u, to: c + 1 });
                    }
                    row_const += k as f64 * emp[c].ln();
                }
            }
            if masked.is_empty() {
                constant -= row_const;
                continue;
            }
            let masked_total: u64 = masked.iter().map(|&c| totals.rows()[u][c]).sum();
            if masked_total > 0 {
                let mut rare: Vec<f64> = (0..n).filter(|&c| !mask.rows()[u][c]).map(|c| emp[c]).collect();
                let free = 1.0 - order_free_sum(&mut rare);
                if free <= 0.0 {
                    return Err(Error::ZeroProbability { from: u, to: masked[0] + 1 });
                }
                row_const += masked_total as f64 * free.ln();
            }

            let mut term = RowTerm {
                first_block: next_block,
                n_blocks: masked.len(),
                constant: row_const,
                subjects: Vec::new(),
                counts: Vec::new(),
                totals: Vec::new(),
            };
            for (k, c) in per_subject.iter().enumerate() {
                let row: Vec<f64> = masked.iter().map(|&v| c[u][v] as f64).collect();
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    term.subjects.push(k);
                    term.counts.extend(row);
                    term.totals.push(total);
                }
            }
            block_row.extend(std::iter::repeat_n(rows.len(), masked.len()));
            next_block += masked.len();
            rows.push(term);
        }
        if next_block != mask.n_masked() {
            return Err(Error::ShapeMismatch("mask enumeration mismatch".into()));
        }
        Ok(Self {
            dim,
            design,
            rows,
            block_row,
            constant,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.block_row.len()
    }

    pub fn block_dim(&self) -> usize {
        self.dim
    }

    /// Negative log-likelihood of one row, with `beta(j)` giving the vector of
    /// the row's `j`-th masked entry.
    fn row_value<'b>(&self, row: &RowTerm, beta: impl Fn(usize) -> &'b [f64]) -> f64 {
        let m = row.n_blocks;
        let mut scores = vec![0.0; m];
        let mut ll = row.constant;
        for (i, &k) in row.subjects.iter().enumerate() {
            let xa = &self.design[k * self.dim..(k + 1) * self.dim];
            for (j, s) in scores.iter_mut().enumerate() {
                *s = dot(xa, beta(j));
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            let counts = &row.counts[i * m..(i + 1) * m];
            ll += counts.iter().zip(&scores).map(|(c, s)| c * s).sum::<f64>() - row.totals[i] * lse;
        }
        -ll
    }
}

impl Objective for LikelihoodObjective {
    fn evaluate(&self, point: &MultiSpherePoint) -> f64 {
        self.terms(point).iter().sum()
    }

    fn terms(&self, point: &MultiSpherePoint) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .rows
            .iter()
            .map(|r| self.row_value(r, |j| point.block(r.first_block + j)))
            .collect();
        out.push(self.constant);
        out
    }

    fn term_of_block(&self, block: usize) -> usize {
        self.block_row[block]
    }

    fn term_with_block(&self, point: &MultiSpherePoint, block: usize, replacement: &[f64]) -> f64 {
        let r = &self.rows[self.block_row[block]];
        self.row_value(r, |j| {
            let b = r.first_block + j;
            if b == block {
                replacement
            } else {
                point.block(b)
            }
        })
    }
}
