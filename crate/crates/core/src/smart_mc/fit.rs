use serde::{Deserialize, Serialize};

use super::model::{log_likelihood, patient_transition_matrix, CoefficientMatrix, PatientMatrix};
use super::objective::LikelihoodObjective;
use super::{count_matrix, empirical_matrix, nonrare_mask, CountMatrix, Dataset, EmpiricalMatrix, NonRareMask};
use crate::data_io::Standardization;
use crate::error::{Error, Result};
use crate::mscor::{optimize, MscorConfig, OptResult, Termination};
use crate::sphere::{random_point, SphereShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub runs: usize,
    pub iterations: Vec<usize>,
    pub evaluations: u64,
    /// `None` when there was nothing to optimize.
    #[serde(default)]
    pub terminated_by: Option<Termination>,
}

impl From<&OptResult> for OptimizerSummary {
    fn from(r: &OptResult) -> Self {
        Self {
            runs: r.runs_completed,
            iterations: r.iterations_per_run.clone(),
            evaluations: r.objective_evaluations,
            terminated_by: Some(r.terminated_by),
        }
    }
}

/// A fitted model together with everything needed to evaluate it on new
/// covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FitJson", into = "FitJson")]
pub struct FitResult {
    pub state_labels: Vec<String>,
    pub mask: NonRareMask,
    pub empirical: EmpiricalMatrix,
    pub coefficients: CoefficientMatrix,
    pub log_likelihood: f64,
    pub optimizer: OptimizerSummary,
    /// Scaling applied to raw covariates before they enter the model.
    pub standardization: Standardization,
}

impl FitResult {
    pub fn n_states(&self) -> usize {
        self.mask.n_states()
    }

    pub fn n_covariates(&self) -> usize {
        self.standardization.columns.len()
    }

    /// Masked entries that are alone in their row. Their vector does not
    /// affect any probability.
    pub fn unidentified(&self) -> Vec<(usize, usize)> {
        self.mask
            .masked_entries()
            .into_iter()
            .filter(|&(u, _)| self.mask.masked_in_row(u) == 1)
            .collect()
    }

    /// Matrix for covariates already on the model scale.
    pub fn patient_matrix(&self, x: &[f64]) -> Result<PatientMatrix> {
        if x.len() != self.n_covariates() {
            return Err(Error::ShapeMismatch(format!(
                "{} covariates given, model has {}",
                x.len(),
                self.n_covariates()
            )));
        }
        patient_transition_matrix(&self.coefficients, &self.mask, &self.empirical, x)
    }

    pub fn log_likelihood_of(&self, data: &Dataset) -> Result<f64> {
        log_likelihood(&self.coefficients, data, &self.mask, &self.empirical)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitJson {
    n_states: usize,
    state_labels: Vec<String>,
    tol: u64,
    mask: Vec<Vec<u8>>,
    empirical: Vec<Vec<f64>>,
    inactive_rows: Vec<usize>,
    coefficients: CoefficientMatrix,
    log_likelihood: f64,
    optimizer: OptimizerSummary,
    standardization: Standardization,
    #[serde(default)]
    unidentified: Vec<(usize, usize)>,
}

impl From<FitResult> for FitJson {
    fn from(f: FitResult) -> Self {
        let unidentified = f.unidentified();
        Self {
            n_states: f.n_states(),
            state_labels: f.state_labels,
            tol: f.mask.tol(),
            mask: f.mask.rows().iter().map(|r| r.iter().map(|&m| m as u8).collect()).collect(),
            inactive_rows: f.empirical.inactive_rows(),
            empirical: f.empirical.rows().to_vec(),
            coefficients: f.coefficients,
            log_likelihood: f.log_likelihood,
            optimizer: f.optimizer,
            standardization: f.standardization,
            unidentified,
        }
    }
}

impl TryFrom<FitJson> for FitResult {
    type Error = Error;

    fn try_from(j: FitJson) -> Result<Self> {
        let mask_rows = j
            .mask
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&m| match m {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(Error::SchemaMismatch(format!("mask entry {other} is not 0/1"))),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mask = NonRareMask::from_rows(mask_rows, j.tol)?;
        let empirical = EmpiricalMatrix::from_probs(j.empirical)?;
        if mask.n_states() != j.n_states || empirical.n_states() != j.n_states || j.state_labels.len() != j.n_states {
            return Err(Error::SchemaMismatch("n_states disagrees with stored matrices".into()));
        }
        if empirical.inactive_rows() != j.inactive_rows {
            return Err(Error::SchemaMismatch("inactive_rows disagrees with the empirical matrix".into()));
        }
        let keys: Vec<_> = j.coefficients.keys().collect();
        if keys != mask.masked_entries() {
            return Err(Error::SchemaMismatch("coefficients do not cover exactly the masked entries".into()));
        }
        if let Some(d) = j.coefficients.dim() {
            if d != j.standardization.columns.len() + 1 {
                return Err(Error::SchemaMismatch("coefficient length does not match the covariates".into()));
            }
        }
        if !j.log_likelihood.is_finite() {
            return Err(Error::SchemaMismatch("log_likelihood is not finite".into()));
        }
        Ok(Self {
            state_labels: j.state_labels,
            mask,
            empirical,
            coefficients: j.coefficients,
            log_likelihood: j.log_likelihood,
            optimizer: j.optimizer,
            standardization: j.standardization,
        })
    }
}

/// Fits the model with the mask implied by `tol`.
pub fn fit(data: &Dataset, tol: u64, config: &MscorConfig) -> Result<FitResult> {
    let counts = count_matrix(data);
    let mask = nonrare_mask(&counts, tol, data.n_covariates())?;
    fit_with_mask(data, &mask, config, None)
}

/// Fits with a given mask. Starts from `init` if supplied, otherwise from a
/// random point drawn with `config.seed`.
pub fn fit_with_mask(
    data: &Dataset,
    mask: &NonRareMask,
    config: &MscorConfig,
    init: Option<&CoefficientMatrix>,
) -> Result<FitResult> {
    config.validate()?;
    let counts = count_matrix(data);
    let empirical = empirical_matrix(&counts);
    let keys = mask.masked_entries();

    let (coefficients, optimizer) = if keys.is_empty() {
        let summary = OptimizerSummary {
            runs: 0,
            iterations: Vec::new(),
            evaluations: 0,
            terminated_by: None,
        };
        (CoefficientMatrix::empty(), summary)
    } else {
        if data.n_covariates() == 0 {
            return Err(Error::InvalidDataset("non-rare entries need at least one covariate".into()));
        }
        let objective = LikelihoodObjective::new(data, mask, &empirical)?;
        let start = match init {
            Some(c) => c.to_point(&keys)?,
            None => random_point(&SphereShape::uniform(keys.len(), data.n_covariates() + 1)?, config.seed)?,
        };
        let result = optimize(&objective, start, config)?;
        (CoefficientMatrix::from_point(&keys, &result.solution)?, OptimizerSummary::from(&result))
    };

    let ll = log_likelihood(&coefficients, data, mask, &empirical)?;
    if !ll.is_finite() {
        return Err(Error::ObjectiveNonFinite { value: ll });
    }
    Ok(FitResult {
        state_labels: data.state_labels().to_vec(),
        mask: mask.clone(),
        empirical,
        coefficients,
        log_likelihood: ll,
        optimizer,
        standardization: data.standardization().clone(),
    })
}

/// The `k` most frequent transitions (rows `u >= 1`) among `candidates`,
/// by count and then by `(u, v)`.
fn rank(counts: &CountMatrix, candidates: impl Iterator<Item = (usize, usize)>, k: usize) -> Vec<(usize, usize)> {
    let mut c: Vec<_> = candidates.filter(|&(u, _)| u >= 1).collect();
    c.sort_by(|a, b| counts.get(b.0, b.1).cmp(&counts.get(a.0, a.1)).then(a.cmp(b)));
    c.truncate(k);
    c
}

/// The `k` most frequent masked transitions.
pub fn top_transitions(counts: &CountMatrix, mask: &NonRareMask, k: usize) -> Vec<(usize, usize)> {
    rank(counts, mask.masked_entries().into_iter(), k)
}

/// Mean absolute coordinate difference over the `top_k` most frequent
/// transitions carried by `est`.
pub fn coefficient_mad(
    est: &CoefficientMatrix,
    truth: &CoefficientMatrix,
    counts: &CountMatrix,
    top_k: usize,
) -> Result<f64> {
    let chosen = rank(counts, est.keys(), top_k);
    if chosen.is_empty() {
        return Err(Error::InvalidConfig("no transitions to compare".into()));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (u, v) in chosen {
        let a = est.get(u, v).ok_or(Error::MissingCoefficient { from: u, to: v })?;
        let b = truth.get(u, v).ok_or(Error::MissingCoefficient { from: u, to: v })?;
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!("coefficient lengths differ at {u} -> {v}")));
        }
        total += a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        n += a.len();
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddsKind {
    /// `m_uv / m_uu`.
    #[default]
    ProbabilityRatio,
    /// `[m_uv / (1 - m_uv)] / [m_uu / (1 - m_uu)]`.
    Odds,
}

/// Ratio of moving from `from` to each of `to` against staying, for
/// covariates `x` on the model scale.
pub fn odds_ratios(fit: &FitResult, x: &[f64], from: usize, to: &[usize], kind: OddsKind) -> Result<Vec<f64>> {
    let n = fit.n_states();
    if from == 0 || from > n || !fit.empirical.is_active(from) {
        return Err(Error::InvalidState(from));
    }
    if let Some(&bad) = to.iter().find(|&&v| v == 0 || v > n) {
        return Err(Error::InvalidState(bad));
    }
    let m = fit.patient_matrix(x)?;
    let stay = m.get(from, from);
    if stay == 0.0 {
        return Err(Error::ZeroSelfTransition(from));
    }
    let odds = |p: f64| p / (1.0 - p);
    Ok(to
        .iter()
        .map(|&v| {
            let p = m.get(from, v);
            match kind {
                OddsKind::ProbabilityRatio => p / stay,
                OddsKind::Odds if v == from => 1.0,
                OddsKind::Odds => odds(p) / odds(stay),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smart_mc::Subject;
    use std::collections::BTreeMap;

    fn toy() -> Dataset {
        let subjects = vec![
            Subject::new("a", vec![1, 1, 1, 2, 2, 1, 1], vec![0.5]),
            Subject::new("b", vec![2, 2, 1, 1, 3, 3], vec![-1.0]),
            Subject::new("c", vec![1, 1, 1, 1, 2], vec![1.5]),
            Subject::new("d", vec![2, 2, 2, 1, 1, 1], vec![0.0]),
        ];
        Dataset::new(3, subjects).unwrap()
    }

    fn quick() -> MscorConfig {
        MscorConfig {
            max_runs: 5,
            max_iter: 500,
            ..MscorConfig::default()
        }
    }

    #[test]
    fn all_rare_fit_is_plug_in() {
        let data = toy();
        let f = fit(&data, 1000, &quick()).unwrap();
        assert!(f.coefficients.is_empty());
        assert_eq!(f.optimizer.runs, 0);
        let counts = count_matrix(&data);
        let emp = empirical_matrix(&counts);
        let mut plug_in = 0.0;
        for s in data.subjects() {
            plug_in += emp.get(0, s.sequence[0]).ln();
            for w in s.sequence.windows(2) {
                plug_in += emp.get(w[0], w[1]).ln();
            }
        }
        assert!((f.log_likelihood - plug_in).abs() < 1e-10);
    }

    #[test]
    fn fit_improves_on_start_and_is_deterministic() {
        let data = toy();
        let config = quick();
        let f = fit(&data, 3, &config).unwrap();
        assert!(!f.coefficients.is_empty());
        let keys = f.mask.masked_entries();
        let start = random_point(&SphereShape::uniform(keys.len(), 2).unwrap(), config.seed).unwrap();
        let start_ll = log_likelihood(
            &CoefficientMatrix::from_point(&keys, &start).unwrap(),
            &data,
            &f.mask,
            &f.empirical,
        )
        .unwrap();
        assert!(f.log_likelihood >= start_ll);
        assert_eq!(fit(&data, 3, &config).unwrap(), f);
    }

    #[test]
    fn json_round_trip() {
        let f = fit(&toy(), 3, &quick()).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        for key in ["n_states", "tol", "mask", "inactive_rows", "coefficients", "standardization"] {
            assert!(json.contains(&format!("\"{key}\"")), "{key}");
        }
        assert_eq!(serde_json::from_str::<FitResult>(&json).unwrap(), f);
    }

    #[test]
    fn mad_values() {
        let mut b = vec![0.06, 0.0, 0.0, 0.0, 0.0, 0.0];
        b[1] = (1.0f64 - 0.06 * 0.06).sqrt();
        let truth = CoefficientMatrix::new(BTreeMap::from([((1, 1), b.clone()), ((1, 2), b.clone())])).unwrap();
        let counts = CountMatrix::from_rows(vec![vec![1, 1], vec![9, 4], vec![0, 0]]).unwrap();
        assert_eq!(coefficient_mad(&truth, &truth, &counts, 10).unwrap(), 0.0);
        let mut flipped = b.clone();
        flipped[0] = -0.06;
        let est = CoefficientMatrix::new(BTreeMap::from([((1, 1), flipped), ((1, 2), b)])).unwrap();
        assert!((coefficient_mad(&est, &truth, &counts, 1).unwrap() - 0.02).abs() < 1e-15);
        let partial = CoefficientMatrix::new(BTreeMap::from([((1, 2), truth.get(1, 2).unwrap().to_vec())])).unwrap();
        assert!(matches!(
            coefficient_mad(&truth, &partial, &counts, 2),
            Err(Error::MissingCoefficient { from: 1, to: 1 })
        ));
    }

    #[test]
    fn odds_ratio_cases() {
        let data = toy();
        let mut f = fit(&data, 3, &quick()).unwrap();
        // row 1 counts (9, 2, 1): only 1 -> 1 is masked
        let keys = f.mask.masked_entries();
        let mut entries = BTreeMap::new();
        for k in keys {
            entries.insert(k, vec![0.6, 0.8]);
        }
        f.coefficients = CoefficientMatrix::new(entries).unwrap();
        assert_eq!(f.unidentified(), vec![(1, 1)]);
        assert_eq!(odds_ratios(&f, &[0.3], 1, &[1], OddsKind::ProbabilityRatio).unwrap(), vec![1.0]);
        // 2 -> 3 never happens
        assert_eq!(odds_ratios(&f, &[0.3], 2, &[3], OddsKind::ProbabilityRatio).unwrap(), vec![0.0]);
        assert!(matches!(
            odds_ratios(&f, &[0.3], 0, &[1], OddsKind::Odds),
            Err(Error::InvalidState(0))
        ));
    }

    #[test]
    fn equal_vectors_give_unit_ratio() {
        let subjects = vec![
            Subject::new("a", vec![1, 1, 2, 1, 1, 2, 2, 1], vec![0.2]),
            Subject::new("b", vec![1, 2, 1, 2, 1, 1], vec![-0.4]),
        ];
        let data = Dataset::new(2, subjects).unwrap();
        let mut f = fit(&data, 2, &quick()).unwrap();
        assert!(f.mask.is_masked(1, 1) && f.mask.is_masked(1, 2));
        let entries = f.mask.masked_entries().into_iter().map(|k| (k, vec![0.0, 1.0])).collect();
        f.coefficients = CoefficientMatrix::new(entries).unwrap();
        for kind in [OddsKind::ProbabilityRatio, OddsKind::Odds] {
            let r = odds_ratios(&f, &[1.7], 1, &[2], kind).unwrap();
            assert!((r[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_self_transition_is_an_error() {
        // state 1 always moves to 2
        let subjects = vec![Subject::new("a", vec![1, 2, 1, 2, 2], vec![0.0])];
        let data = Dataset::new(2, subjects).unwrap();
        let f = fit(&data, 100, &quick()).unwrap();
        assert!(matches!(
            odds_ratios(&f, &[0.0], 1, &[2], OddsKind::ProbabilityRatio),
            Err(Error::ZeroSelfTransition(1))
        ));
    }
}
