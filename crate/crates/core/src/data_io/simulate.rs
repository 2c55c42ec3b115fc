use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smart_mc::{CoefficientMatrix, Dataset, Subject};

fn default_sparsity() -> f64 {
    0.67
}

fn default_coeff_sd() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_states: usize,
    pub n_subjects: usize,
    pub seq_length: usize,
    pub n_covariates: usize,
    /// Share of each generator row that is structurally zero.
    #[serde(default = "default_sparsity")]
    pub sparsity_fraction: f64,
    #[serde(default = "default_coeff_sd")]
    pub coeff_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_states: usize, n_subjects: usize, seq_length: usize, n_covariates: usize, seed: u64) -> Self {
        Self {
            n_states,
            n_subjects,
            seq_length,
            n_covariates,
            sparsity_fraction: default_sparsity(),
            coeff_sd: default_coeff_sd(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_states < 2 {
            return bad("n_states must be at least 2");
        }
        if self.n_subjects == 0 || self.seq_length == 0 {
            return bad("n_subjects and seq_length must be positive");
        }
        if self.n_covariates == 0 {
            return bad("n_covariates must be positive");
        }
        if !(0.0..1.0).contains(&self.sparsity_fraction) {
            return bad("sparsity_fraction must lie in [0, 1)");
        }
        if !(self.coeff_sd > 0.0 && self.coeff_sd.is_finite()) {
            return bad("coeff_sd must be positive");
        }
        Ok(())
    }

    /// Nonzero entries per generator row.
    pub fn row_support(&self) -> usize {
        let n = self.n_states;
        let keep = ((1.0 - self.sparsity_fraction) * n as f64).round() as usize;
        keep.clamp(2, n)
    }
}

/// Generator used by `simulate_dataset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub n_states: usize,
    pub n_covariates: usize,
    /// `(N+1) x N`, 1 where the generator allows the entry.
    pub support: Vec<Vec<u8>>,
    /// One unit vector per supported entry.
    pub coefficients: CoefficientMatrix,
}

impl SimTruth {
    pub fn is_supported(&self, u: usize, v: usize) -> bool {
        self.support[u][v - 1] == 1
    }

    /// Support-restricted softmax of `(1, x) . beta` for row `u`.
    pub fn row_probs(&self, u: usize, x: &[f64]) -> Vec<f64> {
        let xa: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
        let scores: Vec<Option<f64>> = (1..=self.n_states)
            .map(|v| {
                self.coefficients
                    .get(u, v)
                    .map(|b| b.iter().zip(&xa).map(|(b, x)| b * x).sum())
            })
            .collect();
        let max = scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| s.map_or(0.0, |s| (s - max).exp())).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: SimTruth,
}

/// Draws a sparse generator, standard normal covariates and one sequence
/// per subject.
pub fn simulate_dataset(config: &SimConfig) -> Result<Simulation> {
    config.validate()?;
    let n = config.n_states;
    let p = config.n_covariates;
    let keep = config.row_support();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let coeff = Normal::new(0.0, config.coeff_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut support = vec![vec![0u8; n]; n + 1];
    let mut entries = BTreeMap::new();
    for (u, row) in support.iter_mut().enumerate() {
        let chosen: Vec<usize> = if u == 0 {
            sample(&mut rng, n, keep).into_vec()
        } else {
            let others: Vec<usize> = (0..n).filter(|&c| c != u - 1).collect();
            let mut c: Vec<usize> = sample(&mut rng, others.len(), keep - 1).into_iter().map(|i| others[i]).collect();
            c.push(u - 1);
            c
        };
        let mut chosen = chosen;
        chosen.sort_unstable();
        for c in chosen {
            row[c] = 1;
            let beta = loop {
                let b: Vec<f64> = (0..=p).map(|_| coeff.sample(&mut rng)).collect();
                let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    break b.into_iter().map(|x| x / norm).collect::<Vec<f64>>();
                }
            };
            entries.insert((u, c + 1), beta);
        }
    }
    let truth = SimTruth {
        n_states: n,
        n_covariates: p,
        support,
        coefficients: CoefficientMatrix::new(entries)?,
    };

    let mut subjects = Vec::with_capacity(config.n_subjects);
    for k in 0..config.n_subjects {
        let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let rows: Vec<WeightedIndex<f64>> = (0..=n)
            .map(|u| WeightedIndex::new(truth.row_probs(u, &x)).map_err(|e| Error::InvalidConfig(e.to_string())))
            .collect::<Result<_>>()?;
        let mut seq = Vec::with_capacity(config.seq_length);
        let mut state = rows[0].sample(&mut rng) + 1;
        seq.push(state);
        for _ in 1..config.seq_length {
            state = rows[state].sample(&mut rng) + 1;
            seq.push(state);
        }
        subjects.push(Subject::new(format!("s{:05}", k + 1), seq, x));
    }
    Ok(Simulation {
        dataset: Dataset::new(n, subjects)?,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smart_mc::count_matrix;

    #[test]
    fn tiny_shape() {
        let mut c = SimConfig::new(2, 1, 5, 1, 3);
        c.sparsity_fraction = 0.0;
        let s = simulate_dataset(&c).unwrap();
        let seq = &s.dataset.subjects()[0].sequence;
        assert_eq!(seq.len(), 5);
        assert!(seq.iter().all(|&y| y == 1 || y == 2));
    }

    #[test]
    fn deterministic() {
        let c = SimConfig::new(5, 30, 8, 2, 11);
        assert_eq!(simulate_dataset(&c).unwrap(), simulate_dataset(&c).unwrap());
        let other = SimConfig { seed: 12, ..c.clone() };
        assert_ne!(simulate_dataset(&c).unwrap(), simulate_dataset(&other).unwrap());
    }

    #[test]
    fn counts_stay_on_the_support() {
        let c = SimConfig::new(10, 1000, 20, 5, 0);
        let s = simulate_dataset(&c).unwrap();
        let counts = count_matrix(&s.dataset);
        for u in 0..=10 {
            let nonzero = s.truth.support[u].iter().filter(|&&x| x == 1).count();
            assert_eq!(nonzero, 3);
            if u > 0 {
                assert!(s.truth.is_supported(u, u));
            }
            for v in 1..=10 {
                if !s.truth.is_supported(u, v) {
                    assert_eq!(counts.get(u, v), 0);
                }
            }
        }
        assert_eq!(counts.rows()[0].iter().sum::<u64>(), 1000);
        assert_eq!(counts.transition_total(), 1000 * 19);
        assert_eq!(s.truth.coefficients.len(), 33);
    }

    #[test]
    fn row_probs_sum_to_one() {
        let s = simulate_dataset(&SimConfig::new(6, 2, 3, 3, 5)).unwrap();
        for u in 0..=6 {
            let p = s.truth.row_probs(u, &[0.3, -1.0, 2.0]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
