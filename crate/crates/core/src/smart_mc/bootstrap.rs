use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{fit, fit_with_mask};
use super::{count_matrix, CoefficientMatrix, Dataset};
use crate::error::{Error, Result};
use crate::mscor::{MscorConfig, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSe {
    pub from: usize,
    pub to: usize,
    /// Count in the full data.
    pub count: u64,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub n_boot: usize,
    pub used: usize,
    /// Replicates that errored or ran out of time.
    pub failed: usize,
    pub transitions: Vec<TransitionSe>,
}

/// Subject-level bootstrap with the mask fixed from the full data. Each
/// replicate is refit starting from the full-data estimate.
pub fn bootstrap_se(data: &Dataset, tol: u64, config: &MscorConfig, n_boot: usize, seed: u64) -> Result<BootstrapResult> {
    if n_boot < 2 {
        return Err(Error::InvalidConfig("n_boot must be at least 2".into()));
    }
    let full = fit(data, tol, config)?;
    let keys = full.mask.masked_entries();
    let k = data.subjects().len();

    let mut samples: Vec<CoefficientMatrix> = Vec::with_capacity(n_boot);
    let mut failed = 0;
    for r in 0..n_boot {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let subjects = (0..k).map(|_| data.subjects()[rng.random_range(0..k)].clone()).collect();
        let replicate = data.with_subjects(subjects)?;
        match fit_with_mask(&replicate, &full.mask, config, Some(&full.coefficients)) {
            Ok(f) if f.optimizer.terminated_by != Some(Termination::TimeBudget) => samples.push(f.coefficients),
            _ => failed += 1,
        }
    }
    if samples.len() < 2 {
        return Err(Error::Bootstrap(format!("only {} of {n_boot} replicates succeeded", samples.len())));
    }

    let counts = count_matrix(data);
    let transitions = keys
        .into_iter()
        .map(|(u, v)| {
            let estimate = full.coefficients.get(u, v).expect("fit covers the mask").to_vec();
            let se = (0..estimate.len())
                .map(|j| {
                    let xs: Vec<f64> = samples.iter().map(|c| c.get(u, v).expect("same mask")[j]).collect();
                    sample_sd(&xs)
                })
                .collect();
            TransitionSe {
                from: u,
                to: v,
                count: counts.get(u, v),
                estimate,
                se,
            }
        })
        .collect();
    Ok(BootstrapResult {
        n_boot,
        used: samples.len(),
        failed,
        transitions,
    })
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smart_mc::Subject;

    fn config() -> MscorConfig {
        MscorConfig {
            max_runs: 4,
            max_iter: 300,
            ..MscorConfig::default()
        }
    }

    #[test]
    fn single_subject_has_zero_spread() {
        let data = Dataset::new(2, vec![Subject::new("a", vec![1, 1, 2, 2, 1, 1, 2, 2, 1], vec![0.4])]).unwrap();
        let b = bootstrap_se(&data, 2, &config(), 2, 9).unwrap();
        assert_eq!(b.used, 2);
        assert!(!b.transitions.is_empty());
        for t in &b.transitions {
            assert!(t.se.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn rejects_single_replicate() {
        let data = Dataset::new(2, vec![Subject::new("a", vec![1, 2], vec![0.0])]).unwrap();
        assert!(matches!(bootstrap_se(&data, 2, &config(), 1, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn sd_uses_n_minus_one() {
        assert_eq!(sample_sd(&[1.0, 3.0]), 2.0f64.sqrt());
    }
}
