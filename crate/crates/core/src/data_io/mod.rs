//! Reading and writing datasets and fits, sequence reduction, covariate
//! scaling and the synthetic data generator.

mod files;
mod reduce;
mod simulate;
mod standardize;

pub use files::{
    load_covariates, load_dataset, load_events, load_fit, load_json, load_sequences, load_state_labels,
    save_covariates, save_fit, save_json, save_sequences, save_state_labels, standardize_dataset, CovariateTable,
};
pub use reduce::{reduce_sequence, reduce_windows, RawEvent};
pub use simulate::{simulate_dataset, SimConfig, SimTruth, Simulation};
pub use standardize::{is_binary_column, standardize_covariates, ColumnScaling, Standardization};
