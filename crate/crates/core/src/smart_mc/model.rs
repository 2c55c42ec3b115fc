use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, EmpiricalMatrix, NonRareMask};
use crate::error::{Error, Result};
use crate::sphere::{MultiSpherePoint, SphereShape, NORM_TOLERANCE};

/// Largest admissible `|(1, x) . beta|`.
pub(crate) const SCORE_LIMIT: f64 = 700.0;

/// Unit-norm coefficient vectors (intercept first) for the non-rare entries.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<f64>>", into = "BTreeMap<String, Vec<f64>>")]
pub struct CoefficientMatrix {
    entries: BTreeMap<(usize, usize), Vec<f64>>,
}

impl CoefficientMatrix {
    pub fn new(entries: BTreeMap<(usize, usize), Vec<f64>>) -> Result<Self> {
        let mut dim = None;
        for (&(u, v), beta) in &entries {
            if v == 0 {
                return Err(Error::InvalidState(v));
            }
            if *dim.get_or_insert(beta.len()) != beta.len() || beta.len() < 2 {
                return Err(Error::ShapeMismatch(format!(
                    "coefficient vector for {u} -> {v} has length {}",
                    beta.len()
                )));
            }
            let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
                return Err(Error::NormViolation { block: u, norm });
            }
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Maps block `b` of `point` to `keys[b]`.
    pub fn from_point(keys: &[(usize, usize)], point: &MultiSpherePoint) -> Result<Self> {
        if keys.len() != point.blocks().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} keys for {} blocks",
                keys.len(),
                point.blocks().len()
            )));
        }
        Self::new(keys.iter().copied().zip(point.blocks().iter().cloned()).collect())
    }

    /// Blocks in the order of `keys`.
    pub fn to_point(&self, keys: &[(usize, usize)]) -> Result<MultiSpherePoint> {
        let blocks = keys
            .iter()
            .map(|&(u, v)| {
                self.get(u, v)
                    .map(<[f64]>::to_vec)
                    .ok_or(Error::MissingCoefficient { from: u, to: v })
            })
            .collect::<Result<Vec<_>>>()?;
        let shape = SphereShape::new(blocks.iter().map(Vec::len).collect())?;
        MultiSpherePoint::new(shape, blocks)
    }

    pub fn get(&self, u: usize, v: usize) -> Option<&[f64]> {
        self.entries.get(&(u, v)).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> + '_ {
        self.entries.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `p + 1`, if any vector is stored.
    pub fn dim(&self) -> Option<usize> {
        self.entries.values().next().map(Vec::len)
    }
}

impl TryFrom<BTreeMap<String, Vec<f64>>> for CoefficientMatrix {
    type Error = Error;

    fn try_from(map: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (key, beta) in map {
            let parsed = key
                .split_once(',')
                .and_then(|(u, v)| Some((u.trim().parse().ok()?, v.trim().parse().ok()?)));
            let Some(k) = parsed else {
                return Err(Error::SchemaMismatch(format!("coefficient key `{key}` is not `u,v`")));
            };
            entries.insert(k, beta);
        }
        Self::new(entries)
    }
}

impl From<CoefficientMatrix> for BTreeMap<String, Vec<f64>> {
    fn from(c: CoefficientMatrix) -> Self {
        c.entries.into_iter().map(|((u, v), b)| (format!("{u},{v}"), b)).collect()
    }
}

/// One subject's `(N+1) x N` probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientMatrix {
    pub probs: Vec<Vec<f64>>,
    /// Rows with no observations; emitted as self-transition 1 (all zero for
    /// row 0).
    pub inactive: Vec<bool>,
}

impl PatientMatrix {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.probs[u][v - 1]
    }
}

/// Sum that does not depend on the order of `values`.
pub(crate) fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

pub(crate) fn augmented(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.push(1.0);
    out.extend_from_slice(x);
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_alignment(mask: &NonRareMask, empirical: &EmpiricalMatrix) -> Result<()> {
    if mask.n_states() != empirical.n_states() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} states, empirical matrix {}",
            mask.n_states(),
            empirical.n_states()
        )));
    }
    Ok(())
}

/// Covariate-specific matrix: rare entries keep their empirical value, the
/// non-rare entries of each row share the remaining mass via a softmax of
/// `(1, x) . beta`.
pub fn patient_transition_matrix(
    coeffs: &CoefficientMatrix,
    mask: &NonRareMask,
    empirical: &EmpiricalMatrix,
    x: &[f64],
) -> Result<PatientMatrix> {
    check_alignment(mask, empirical)?;
    let n = mask.n_states();
    let xa = augmented(x);
    let mut probs = Vec::with_capacity(n + 1);
    let mut inactive = vec![false; n + 1];

    for u in 0..=n {
        if !empirical.is_active(u) {
            let mut row = vec![0.0; n];
            if u > 0 {
                row[u - 1] = 1.0;
            }
            probs.push(row);
            inactive[u] = true;
            continue;
        }
        let emp = empirical.row(u);
        let masked: Vec<usize> = (0..n).filter(|&c| mask.rows()[u][c]).collect();
        if masked.is_empty() {
            probs.push(emp.to_vec());
            continue;
        }

        let mut rare: Vec<f64> = (0..n).filter(|&c| !mask.rows()[u][c]).map(|c| emp[c]).collect();
        let rare_mass = order_free_sum(&mut rare);

        let mut scores = Vec::with_capacity(masked.len());
        for &c in &masked {
            let beta = coeffs
                .get(u, c + 1)
                .ok_or(Error::MissingCoefficient { from: u, to: c + 1 })?;
            if beta.len() != xa.len() {
                return Err(Error::ShapeMismatch(format!(
                    "coefficient length {} for {} covariates",
                    beta.len(),
                    x.len()
                )));
            }
            let s = dot(&xa, beta);
            if !(s.abs() <= SCORE_LIMIT) {
                return Err(Error::OverflowGuard { value: s });
            }
            scores.push(s);
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let denom = order_free_sum(&mut weights.clone());

        let mut row: Vec<f64> = emp.iter().enumerate().map(|(c, &m)| if mask.rows()[u][c] { 0.0 } else { m }).collect();
        for (&c, w) in masked.iter().zip(&weights) {
            row[c] = (1.0 - rare_mass) * (w / denom);
        }
        probs.push(row);
    }
    Ok(PatientMatrix { probs, inactive })
}

/// Log of the sequence likelihood, summed over subjects.
pub fn log_likelihood(
    coeffs: &CoefficientMatrix,
    data: &Dataset,
    mask: &NonRareMask,
    empirical: &EmpiricalMatrix,
) -> Result<f64> {
    check_alignment(mask, empirical)?;
    if data.n_states() != mask.n_states() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} states, model {}",
            data.n_states(),
            mask.n_states()
        )));
    }
    let mut total = 0.0;
    for subject in data.subjects() {
        let m = patient_transition_matrix(coeffs, mask, empirical, &subject.covariates)?;
        let seq = &subject.sequence;
        let mut ll = term(&m, 0, seq[0])?;
        for w in seq.windows(2) {
            ll += term(&m, w[0], w[1])?;
        }
        total += ll;
    }
    Ok(total)
}

fn term(m: &PatientMatrix, u: usize, v: usize) -> Result<f64> {
    let p = m.get(u, v);
    if p > 0.0 {
        Ok(p.ln())
    } else {
        Err(Error::ZeroProbability { from: u, to: v })
    }
}
