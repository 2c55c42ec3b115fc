//! SMART-MC: Markov chains over categorical state sequences whose initial
//! and transition probabilities depend on subject covariates through a
//! masked softmax, with rare transitions pinned to their empirical
//! frequencies. Coefficients live on products of unit spheres and are
//! estimated with MSCOR, a derivative-free multi-run pattern search.

pub mod benchmarks;
pub mod data_io;
pub mod error;
pub mod mscor;
pub mod smart_mc;
pub mod sphere;

pub use benchmarks::{benchmark_config, eval_benchmark, BenchmarkFunction, BenchmarkKind};
pub use error::{Error, ErrorClass, Result};
pub use mscor::{detect_nonconvexity, optimize, Mscor, MscorConfig, Objective, OptResult, Termination};
pub use sphere::{random_point, validate_point, MultiSpherePoint, SphereShape};
pub use data_io::{simulate_dataset, SimConfig, Simulation, Standardization};
pub use smart_mc::{
    bootstrap_se, coefficient_mad, count_matrix, fit, log_likelihood, odds_ratios, patient_transition_matrix,
    CoefficientMatrix, Dataset, FitResult, LikelihoodObjective, OddsKind, Subject,
};
