//! Datasets with a possibly-missing outcome, train/calibration splits and
//! CSV ingestion.
//!
//! Missing outcomes are written as empty CSV fields. An optional explicit
//! observation column (`r`, values 0/1) overrides the empty-field rule.
//! The intercept is never stored; model specs prepend it when building
//! design matrices.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariates, outcome and observation indicator for `n` units.
///
/// `y[i]` is `Some` exactly when `r[i]` is true.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    y_name: String,
    x: DMatrix<f64>,
    y: Vec<Option<f64>>,
    r: Vec<bool>,
}

impl Dataset {
    /// Builds a dataset; the observation indicator is derived from `y`.
    pub fn new(names: Vec<String>, y_name: impl Into<String>, x: DMatrix<f64>, y: Vec<Option<f64>>) -> Result<Self> {
        let r = y.iter().map(Option::is_some).collect();
        Self::with_indicator(names, y_name, x, y, r)
    }

    pub fn with_indicator(
        names: Vec<String>,
        y_name: impl Into<String>,
        x: DMatrix<f64>,
        y: Vec<Option<f64>>,
        r: Vec<bool>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Argument("dataset needs at least one row".into()));
        }
        if x.ncols() == 0 {
            return Err(Error::Argument("dataset needs at least one covariate".into()));
        }
        if names.len() != x.ncols() {
            return Err(Error::Argument(format!(
                "{} covariate names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        if y.len() != n || r.len() != n {
            return Err(Error::Argument(format!(
                "outcome length {} / indicator length {} do not match {n} rows",
                y.len(),
                r.len()
            )));
        }
        for i in 0..n {
            if y[i].is_some() != r[i] {
                return Err(Error::Consistency {
                    row: i + 1,
                    message: "outcome must be defined exactly where r = 1".into(),
                });
            }
            if let Some(v) = y[i] {
                if !v.is_finite() {
                    return Err(Error::Consistency { row: i + 1, message: "non-finite outcome".into() });
                }
            }
            if x.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::Consistency { row: i + 1, message: "non-finite covariate".into() });
            }
        }
        Ok(Self { names, y_name: y_name.into(), x, y, r })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of covariate columns (intercept excluded).
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of observed outcomes.
    pub fn m(&self) -> usize {
        self.r.iter().filter(|&&b| b).count()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn y_name(&self) -> &str {
        &self.y_name
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[Option<f64>] {
        &self.y
    }

    pub fn r(&self) -> &[bool] {
        &self.r
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|c| c == name)
    }

    /// Design row `[1, x_i[c] for c in columns]`.
    pub fn design_row(&self, i: usize, columns: &[usize]) -> Vec<f64> {
        let mut row = Vec::with_capacity(columns.len() + 1);
        row.push(1.0);
        row.extend(columns.iter().map(|&c| self.x[(i, c)]));
        row
    }

    /// Design row with the intercept and every covariate.
    pub fn full_design_row(&self, i: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.p() + 1);
        row.push(1.0);
        row.extend(self.x.row(i).iter());
        row
    }

    /// Rows of `idx` with an observed outcome, in the order of `idx`.
    pub fn complete_cases(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().copied().filter(|&i| self.r[i]).collect()
    }

    /// Loads a dataset from a CSV file with a header row.
    pub fn load_csv(path: impl AsRef<Path>, y_column: &str, r_column: Option<&str>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, y_column, r_column)
    }

    pub fn read_csv<R: Read>(reader: R, y_column: &str, r_column: Option<&str>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse { row: 0, message: e.to_string() })?.clone();
        let y_pos = headers
            .iter()
            .position(|h| h == y_column)
            .ok_or_else(|| Error::Parse { row: 0, message: format!("outcome column `{y_column}` not found") })?;
        let r_pos = match r_column {
            Some(name) => Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Parse { row: 0, message: format!("indicator column `{name}` not found") })?,
            ),
            None => None,
        };
        let cov_pos: Vec<usize> = (0..headers.len()).filter(|&j| j != y_pos && Some(j) != r_pos).collect();
        let names: Vec<String> = cov_pos.iter().map(|&j| headers[j].to_string()).collect();

        let mut values = Vec::new();
        let mut y = Vec::new();
        let mut r = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 1;
            let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
            if rec.len() != headers.len() {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {} fields, found {}", headers.len(), rec.len()),
                });
            }
            for &j in &cov_pos {
                values.push(parse_number(&rec[j], row, &headers[j])?);
            }
            let y_cell = &rec[y_pos];
            let y_val = if y_cell.is_empty() { None } else { Some(parse_number(y_cell, row, y_column)?) };
            match r_pos {
                Some(j) => {
                    let observed = match parse_number(&rec[j], row, &headers[j])? {
                        v if v == 1.0 => true,
                        v if v == 0.0 => false,
                        v => {
                            return Err(Error::Parse { row, message: format!("indicator must be 0 or 1, found {v}") })
                        }
                    };
                    if observed && y_val.is_none() {
                        return Err(Error::Consistency {
                            row,
                            message: format!("r = 1 but `{y_column}` is missing"),
                        });
                    }
                    y.push(if observed { y_val } else { None });
                    r.push(observed);
                }
                None => {
                    r.push(y_val.is_some());
                    y.push(y_val);
                }
            }
        }
        let n = y.len();
        let x = DMatrix::from_row_slice(n, names.len(), &values);
        Self::with_indicator(names, y_column, x, y, r)
    }

    /// Writes the dataset as CSV; reals use shortest round-trip formatting.
    pub fn save_csv(&self, path: impl AsRef<Path>, r_column: Option<&str>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file, r_column)
    }

    pub fn write_csv<W: Write>(&self, writer: W, r_column: Option<&str>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(&self.y_name);
        if let Some(rc) = r_column {
            header.push(rc);
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format_real(*v)).collect();
            rec.push(self.y[i].map(format_real).unwrap_or_default());
            if r_column.is_some() {
                rec.push(if self.r[i] { "1".into() } else { "0".into() });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| Error::Parse { row, message: format!("column `{column}`: `{cell}` is not a number") })
}

/// Shortest decimal text that parses back to the identical `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:?}")
}

/// Disjoint train/calibration row indices covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
}

/// Random permutation of `0..n`, with the first `round(fraction * n)`
/// entries going to the training set.
pub fn split(n: usize, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Argument(format!("split of {n} rows at fraction {fraction} leaves an empty side")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let calib = perm.split_off(n_train);
    Ok(SplitIndices { train: perm, calib })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Propensity,
    Outcome,
}

/// Which covariates enter a working model. The intercept is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub columns: Vec<usize>,
}

impl ModelSpec {
    pub fn propensity(columns: Vec<usize>) -> Self {
        Self { kind: ModelKind::Propensity, columns }
    }

    pub fn outcome(columns: Vec<usize>) -> Self {
        Self { kind: ModelKind::Outcome, columns }
    }

    /// Number of coefficients including the intercept.
    pub fn n_coef(&self) -> usize {
        self.columns.len() + 1
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let mut seen = vec![false; ds.p()];
        for &c in &self.columns {
            if c >= ds.p() {
                return Err(Error::Argument(format!("column index {c} out of range for {} covariates", ds.p())));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::Argument(format!("duplicate column index {c} in model spec")));
            }
        }
        Ok(())
    }

    /// Human-readable label such as `1+X1+X2`.
    pub fn label(&self, ds: &Dataset) -> String {
        let mut s = String::from("1");
        for &c in &self.columns {
            s.push('+');
            s.push_str(ds.names().get(c).map(String::as_str).unwrap_or("?"));
        }
        s
    }
}
