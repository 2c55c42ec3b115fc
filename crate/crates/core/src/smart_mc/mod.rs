//! The SMART-MC model.
//!
//! Every subject gets its own `(N+1) x N` matrix: row 0 is the initial-state
//! distribution, rows `1..=N` the transition probabilities. Entries with
//! enough observations are a softmax of `(1, x) . beta` over the non-rare
//! entries of the row, scaled to the mass left by the rare entries, which
//! keep their empirical frequency.

mod bootstrap;
mod counts;
mod fit;
mod model;
mod objective;

pub use bootstrap::{bootstrap_se, BootstrapResult, TransitionSe};
pub use counts::{count_matrix, empirical_matrix, nonrare_mask, CountMatrix, EmpiricalMatrix, NonRareMask};
pub use fit::{
    coefficient_mad, fit, fit_with_mask, odds_ratios, top_transitions, FitResult, OddsKind, OptimizerSummary,
};
pub use model::{log_likelihood, patient_transition_matrix, CoefficientMatrix, PatientMatrix};
pub use objective::LikelihoodObjective;

use crate::data_io::Standardization;
use crate::error::{Error, Result};

/// One subject: a state sequence over `1..=N` and a covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub sequence: Vec<usize>,
    pub covariates: Vec<f64>,
}

impl Subject {
    pub fn new(id: impl Into<String>, sequence: Vec<usize>, covariates: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            sequence,
            covariates,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_states: usize,
    state_labels: Vec<String>,
    subjects: Vec<Subject>,
    standardization: Standardization,
}

impl Dataset {
    /// Validates states, covariate lengths and non-emptiness. Covariates are
    /// named `x1..xp` and recorded as unscaled.
    pub fn new(n_states: usize, subjects: Vec<Subject>) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidDataset("at least one state is required".into()));
        }
        let Some(first) = subjects.first() else {
            return Err(Error::InvalidDataset("dataset has no subjects".into()));
        };
        let p = first.covariates.len();
        for s in &subjects {
            if s.sequence.is_empty() {
                return Err(Error::InvalidDataset(format!("subject {} has an empty sequence", s.id)));
            }
            if let Some(&bad) = s.sequence.iter().find(|&&y| y == 0 || y > n_states) {
                return Err(Error::InvalidDataset(format!(
                    "subject {} has state {bad} outside 1..={n_states}",
                    s.id
                )));
            }
            if s.covariates.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "subject {} has {} covariates, expected {p}",
                    s.id,
                    s.covariates.len()
                )));
            }
            if s.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDataset(format!("subject {} has a non-finite covariate", s.id)));
            }
        }
        Ok(Self {
            n_states,
            state_labels: (1..=n_states).map(|s| s.to_string()).collect(),
            subjects,
            standardization: Standardization::identity((1..=p).map(|j| format!("x{j}")).collect()),
        })
    }

    pub fn with_state_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_states {
            return Err(Error::SchemaMismatch(format!(
                "{} state labels for {} states",
                labels.len(),
                self.n_states
            )));
        }
        self.state_labels = labels;
        Ok(self)
    }

    /// Attaches the scaling already applied to the covariates.
    pub fn with_standardization(mut self, standardization: Standardization) -> Result<Self> {
        if standardization.columns.len() != self.n_covariates() {
            return Err(Error::SchemaMismatch(format!(
                "{} scaling columns for {} covariates",
                standardization.columns.len(),
                self.n_covariates()
            )));
        }
        self.standardization = standardization;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_covariates(&self) -> usize {
        self.subjects[0].covariates.len()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.standardization.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Same metadata, different subjects (used for resampling).
    pub fn with_subjects(&self, subjects: Vec<Subject>) -> Result<Self> {
        let mut out = Dataset::new(self.n_states, subjects)?;
        if out.n_covariates() != self.n_covariates() {
            return Err(Error::SchemaMismatch("covariate count changed".into()));
        }
        out.state_labels = self.state_labels.clone();
        out.standardization = self.standardization.clone();
        Ok(out)
    }
}
