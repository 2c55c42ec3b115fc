//! Fixtures shared by the benchmarks.

use smartmc_core::data_io::{simulate_dataset, SimConfig};
use smartmc_core::smart_mc::{count_matrix, empirical_matrix, nonrare_mask, Dataset, EmpiricalMatrix, NonRareMask};

pub struct Problem {
    pub data: Dataset,
    pub mask: NonRareMask,
    pub empirical: EmpiricalMatrix,
}

/// Simulated data with `tol = p + 1`.
pub fn problem(n_states: usize, n_subjects: usize, seq_length: usize, p: usize) -> Problem {
    let sim = simulate_dataset(&SimConfig::new(n_states, n_subjects, seq_length, p, 0)).expect("valid config");
    let counts = count_matrix(&sim.dataset);
    let mask = nonrare_mask(&counts, p as u64 + 1, p).expect("tol = p + 1");
    Problem {
        empirical: empirical_matrix(&counts),
        data: sim.dataset,
        mask,
    }
}
