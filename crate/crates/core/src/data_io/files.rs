use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::reduce::RawEvent;
use super::standardize::{is_binary_column, standardize_covariates};
use crate::error::{Error, Result};
use crate::smart_mc::{Dataset, FitResult, Subject};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn expect_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<csv::StringRecord> {
    let header = rdr.headers()?.clone();
    let ok = header.len() >= expected.len() && expected.iter().zip(header.iter()).all(|(a, b)| *a == b);
    if !ok {
        return Err(Error::SchemaMismatch(format!(
            "{}: header must start with `{}`",
            path.display(),
            expected.join(",")
        )));
    }
    Ok(header)
}

fn parse_error(record: &csv::StringRecord, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line: record.position().map_or(0, |p| p.line()),
        column,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, column: usize, what: &str) -> Result<T> {
    let raw = record.get(column).unwrap_or("");
    raw.parse()
        .map_err(|_| parse_error(record, column + 1, format!("`{raw}` is not a valid {what}")))
}

/// Sequences per subject in order of first appearance, plus the largest
/// state seen.
pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<usize>)>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_header(&mut rdr, path, &["subject_id", "t", "state"])?;
    let mut order: Vec<String> = Vec::new();
    let mut steps: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").to_string();
        let t: usize = field(&rec, 1, "position")?;
        let state: usize = field(&rec, 2, "state")?;
        if t == 0 {
            return Err(parse_error(&rec, 2, "positions are 1-based"));
        }
        if state == 0 {
            return Err(parse_error(&rec, 3, "states are 1-based"));
        }
        let entry = steps.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        entry.push((t, state));
    }
    order
        .into_iter()
        .map(|id| {
            let mut s = steps.remove(&id).expect("recorded above");
            s.sort_unstable();
            if s.iter().enumerate().any(|(i, &(t, _))| t != i + 1) {
                return Err(Error::InvalidDataset(format!("subject {id}: positions are not 1..t")));
            }
            Ok((id, s.into_iter().map(|(_, y)| y).collect()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl CovariateTable {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.iter().find(|(i, _)| i == id).map(|(_, x)| x.as_slice())
    }
}

pub fn load_covariates(path: impl AsRef<Path>) -> Result<CovariateTable> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = expect_header(&mut rdr, path, &["subject_id"])?;
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::SchemaMismatch(format!("subject {id} appears twice in covariates")));
        }
        let x = (1..=names.len())
            .map(|j| {
                let v: f64 = field(&rec, j, "number")?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_error(&rec, j + 1, "covariates must be finite"))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((id, x));
    }
    Ok(CovariateTable { names, rows })
}

/// Joins sequences with covariates. `N` is `n_states` if given, otherwise
/// the largest state in the file. Covariates are taken as they are.
pub fn load_dataset(
    sequences: impl AsRef<Path>,
    covariates: impl AsRef<Path>,
    n_states: Option<usize>,
) -> Result<Dataset> {
    let seqs = load_sequences(sequences)?;
    let table = load_covariates(covariates)?;
    let lookup: HashMap<&str, &[f64]> = table.rows.iter().map(|(i, x)| (i.as_str(), x.as_slice())).collect();
    if seqs.len() != table.rows.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} subjects in sequences, {} in covariates",
            seqs.len(),
            table.rows.len()
        )));
    }
    let max_state = seqs.iter().flat_map(|(_, s)| s.iter().copied()).max().unwrap_or(0);
    let n = n_states.unwrap_or(max_state);
    let mut subjects = Vec::with_capacity(seqs.len());
    for (id, seq) in seqs {
        let Some(x) = lookup.get(id.as_str()) else {
            return Err(Error::SchemaMismatch(format!("subject {id} has no covariates")));
        };
        subjects.push(Subject::new(id, seq, x.to_vec()));
    }
    let data = Dataset::new(n, subjects)?;
    let scaling = data.standardization().clone().with_names(&table.names)?;
    data.with_standardization(scaling)
}

/// Standardizes every non-binary covariate column and records the scaling.
pub fn standardize_dataset(data: &Dataset) -> Result<Dataset> {
    let raw: Vec<Vec<f64>> = data.subjects().iter().map(|s| s.covariates.clone()).collect();
    let continuous: Vec<bool> = (0..data.n_covariates())
        .map(|j| !is_binary_column(raw.iter().map(|r| r[j])))
        .collect();
    let (scaled, scaling) = standardize_covariates(&raw, &continuous)?;
    let subjects = data
        .subjects()
        .iter()
        .zip(scaled)
        .map(|(s, x)| Subject::new(s.id.clone(), s.sequence.clone(), x))
        .collect();
    let scaling = scaling.with_names(&data.covariate_names())?;
    data.with_subjects(subjects)?.with_standardization(scaling)
}

pub fn save_sequences(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["subject_id", "t", "state"])?;
    for s in data.subjects() {
        for (t, y) in s.sequence.iter().enumerate() {
            w.write_record([s.id.clone(), (t + 1).to_string(), y.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn save_covariates(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    let mut header = vec!["subject_id".to_string()];
    header.extend(data.covariate_names());
    w.write_record(&header)?;
    for s in data.subjects() {
        let mut rec = vec![s.id.clone()];
        rec.extend(s.covariates.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Events per subject in order of first appearance.
pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<RawEvent>)>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_header(&mut rdr, path, &["subject_id", "date", "state_label"])?;
    let mut out: Vec<(String, Vec<RawEvent>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").to_string();
        let raw = rec.get(1).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|_| parse_error(&rec, 2, format!("`{raw}` is not an ISO-8601 date")))?;
        let label = rec.get(2).unwrap_or("");
        if label.is_empty() {
            return Err(parse_error(&rec, 3, "empty state label"));
        }
        let k = *index.entry(id.clone()).or_insert_with(|| {
            out.push((id, Vec::new()));
            out.len() - 1
        });
        out[k].1.push(RawEvent::new(date, label));
    }
    Ok(out)
}

/// `state,label` pairs, states 1..=N in order.
pub fn save_state_labels(labels: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["state", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.clone()])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_state_labels(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_header(&mut rdr, path, &["state", "label"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let state: usize = field(&rec, 0, "state")?;
        if state != out.len() + 1 {
            return Err(parse_error(&rec, 1, "states must be listed as 1..N"));
        }
        out.push(rec.get(1).unwrap_or("").to_string());
    }
    Ok(out)
}

pub fn save_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| {
        // validation failures inside the conversion surface as custom errors
        if e.is_data() {
            Error::SchemaMismatch(e.to_string())
        } else {
            Error::Json(e)
        }
    })
}

pub fn save_fit(fit: &FitResult, path: impl AsRef<Path>) -> Result<()> {
    save_json(fit, path)
}

pub fn load_fit(path: impl AsRef<Path>) -> Result<FitResult> {
    load_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempdir().unwrap();
        let seq = write(dir.path(), "s.csv", "subject_id,t,state\nb,2,1\nb,1,2\na,1,1\n");
        let cov = write(dir.path(), "c.csv", "subject_id,age,sex\na,40.5,1\nb,31,0\n");
        let d = load_dataset(&seq, &cov, None).unwrap();
        assert_eq!(d.n_states(), 2);
        assert_eq!(d.subjects()[0].id, "b");
        assert_eq!(d.subjects()[0].sequence, vec![2, 1]);
        assert_eq!(d.covariate_names(), vec!["age", "sex"]);

        let seq2 = dir.path().join("s2.csv");
        let cov2 = dir.path().join("c2.csv");
        save_sequences(&d, &seq2).unwrap();
        save_covariates(&d, &cov2).unwrap();
        assert_eq!(load_dataset(&seq2, &cov2, None).unwrap(), d);
    }

    #[test]
    fn missing_covariates_and_zero_state() {
        let dir = tempdir().unwrap();
        let seq = write(dir.path(), "s.csv", "subject_id,t,state\na,1,1\nz,1,2\n");
        let cov = write(dir.path(), "c.csv", "subject_id,x\na,1\nb,2\n");
        assert!(matches!(load_dataset(&seq, &cov, None), Err(Error::SchemaMismatch(_))));
        let bad = write(dir.path(), "b.csv", "subject_id,t,state\na,1,1\na,2,0\n");
        match load_sequences(&bad) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        let hdr = write(dir.path(), "h.csv", "id,t,state\na,1,1\n");
        assert!(matches!(load_sequences(&hdr), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn standardizes_only_continuous_columns() {
        let dir = tempdir().unwrap();
        let seq = write(dir.path(), "s.csv", "subject_id,t,state\na,1,1\nb,1,2\nc,1,1\n");
        let cov = write(dir.path(), "c.csv", "subject_id,age,sex\na,1,0\nb,2,1\nc,3,1\n");
        let d = standardize_dataset(&load_dataset(&seq, &cov, None).unwrap()).unwrap();
        let xs: Vec<_> = d.subjects().iter().map(|s| s.covariates.clone()).collect();
        assert_eq!(xs, vec![vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(d.standardization().columns[0].name, "age");
        assert!(!d.standardization().columns[1].continuous);
    }

    #[test]
    fn events_and_labels() {
        let dir = tempdir().unwrap();
        let ev = write(
            dir.path(),
            "e.csv",
            "subject_id,date,state_label\np,2020-01-01,A\nq,2020-02-01,B\np,2020-05-01,B\n",
        );
        let e = load_events(&ev).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].1.len(), 2);
        let bad = write(dir.path(), "x.csv", "subject_id,date,state_label\np,01/02/2020,A\n");
        assert!(matches!(load_events(&bad), Err(Error::Parse { column: 2, .. })));

        let labels = vec!["A".to_string(), "B".to_string()];
        let lp = dir.path().join("l.csv");
        save_state_labels(&labels, &lp).unwrap();
        assert_eq!(load_state_labels(&lp).unwrap(), labels);
    }
}
