use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub name: String,
    /// Binary columns are passed through untouched.
    pub continuous: bool,
    pub mean: f64,
    pub sd: f64,
}

impl ColumnScaling {
    pub fn apply(&self, x: f64) -> f64 {
        if self.continuous {
            (x - self.mean) / self.sd
        } else {
            x
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<ColumnScaling>,
}

impl Standardization {
    /// Every column passed through unchanged.
    pub fn identity(names: Vec<String>) -> Self {
        let columns = names
            .into_iter()
            .map(|name| ColumnScaling {
                name,
                continuous: false,
                mean: 0.0,
                sd: 1.0,
            })
            .collect();
        Self { columns }
    }

    /// Maps a raw covariate vector onto the model scale.
    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} covariates given, expected {}",
                raw.len(),
                self.columns.len()
            )));
        }
        Ok(raw.iter().zip(&self.columns).map(|(&x, c)| c.apply(x)).collect())
    }

    pub fn with_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} names for {} columns",
                names.len(),
                self.columns.len()
            )));
        }
        for (c, n) in self.columns.iter_mut().zip(names) {
            c.name = n.clone();
        }
        Ok(self)
    }
}

/// True when every value is exactly 0 or 1.
pub fn is_binary_column(values: impl IntoIterator<Item = f64>) -> bool {
    values.into_iter().all(|x| x == 0.0 || x == 1.0)
}

/// Centers and scales the continuous columns by their sample mean and sample
/// standard deviation (divisor `K - 1`). Columns are named `x1..xp`.
pub fn standardize_covariates(raw: &[Vec<f64>], continuous: &[bool]) -> Result<(Vec<Vec<f64>>, Standardization)> {
    let p = continuous.len();
    if let Some(row) = raw.iter().find(|r| r.len() != p) {
        return Err(Error::ShapeMismatch(format!("row of length {} for {p} columns", row.len())));
    }
    let k = raw.len() as f64;
    let mut columns = Vec::with_capacity(p);
    for (j, &cont) in continuous.iter().enumerate() {
        let name = format!("x{}", j + 1);
        if !cont {
            columns.push(ColumnScaling {
                name,
                continuous: false,
                mean: 0.0,
                sd: 1.0,
            });
            continue;
        }
        let mean = raw.iter().map(|r| r[j]).sum::<f64>() / k;
        let var = raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::DegenerateColumn(j + 1));
        }
        columns.push(ColumnScaling {
            name,
            continuous: true,
            mean,
            sd,
        });
    }
    let scaling = Standardization { columns };
    let scaled = raw
        .iter()
        .map(|r| r.iter().zip(&scaling.columns).map(|(&x, c)| c.apply(x)).collect())
        .collect();
    Ok((scaled, scaling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_two_three() {
        let raw = vec![vec![1.0, 0.0], vec![2.0, 1.0], vec![3.0, 1.0]];
        let (x, s) = standardize_covariates(&raw, &[true, false]).unwrap();
        assert_eq!(x, vec![vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(s.columns[0].sd, 1.0);
        assert_eq!(s.apply(&[2.0, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let raw = vec![vec![4.0], vec![4.0]];
        assert!(matches!(standardize_covariates(&raw, &[true]), Err(Error::DegenerateColumn(1))));
    }

    proptest! {
        #[test]
        fn scaled_columns_have_unit_moments(col in prop::collection::vec(-1e3f64..1e3, 3..40)) {
            let spread = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - col.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let raw: Vec<Vec<f64>> = col.iter().map(|&x| vec![x]).collect();
            let (x, _) = standardize_covariates(&raw, &[true]).unwrap();
            let k = x.len() as f64;
            let mean = x.iter().map(|r| r[0]).sum::<f64>() / k;
            let sd = (x.iter().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((sd - 1.0).abs() < 1e-12);
        }
    }
}
