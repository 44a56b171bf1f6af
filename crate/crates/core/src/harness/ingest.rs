//! CSV ingestion with min-max rescaling fit on the training rows.
//!
//! Covariates are mapped to `[0,1]^d` and outcomes to `[0,1]`; the CATE on
//! the rescaled outcome scale is multiplied by the outcome range to return
//! to original units.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cate::Dataset;
use crate::error::{Error, Result};

pub const MIN_ROWS: usize = 10;

/// Affine map `v -> (v - min) / (max - min)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: impl Iterator<Item = f64>, column: &str) -> Result<Self> {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !(max > min) {
            return Err(Error::Csv {
                row: 0,
                message: format!("column {column:?} is constant; scale undefined"),
            });
        }
        Ok(MinMax { min, max })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / self.range()
    }

    pub fn unscale(&self, v: f64) -> f64 {
        v * self.range() + self.min
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rescaling {
    pub covariates: Vec<MinMax>,
    pub outcome: MinMax,
}

impl Rescaling {
    pub fn scale_covariates(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| self.covariates[j].scale(x[(i, j)]))
    }

    pub fn scale_outcome(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| self.outcome.scale(v))
    }

    pub fn unscale_outcome(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| self.outcome.unscale(v))
    }

    /// Differences of outcomes only pick up the slope of the outcome map.
    pub fn unscale_cate(&self, h: &DVector<f64>) -> DVector<f64> {
        h * self.outcome.range()
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    /// Rescaled sample.
    pub data: Dataset,
    /// Original-scale covariates and outcomes.
    pub raw: Dataset,
    pub rescaling: Rescaling,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Csv {
        row: 1,
        message: format!("missing column {name:?}"),
    })
}

/// Reads a headered CSV. `train_rows` (0-based data rows) selects the rows
/// whose statistics define the rescaling; `None` uses every row. Error rows
/// are reported as 1-based file line numbers.
pub fn ingest_csv(
    path: &Path,
    covariate_cols: &[String],
    treatment_col: &str,
    outcome_col: &str,
    train_rows: Option<&[usize]>,
) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, covariate_cols, treatment_col, outcome_col, train_rows)
}

pub fn ingest_reader<R: std::io::Read>(
    reader: R,
    covariate_cols: &[String],
    treatment_col: &str,
    outcome_col: &str,
    train_rows: Option<&[usize]>,
) -> Result<Ingested> {
    if covariate_cols.is_empty() {
        return Err(Error::invalid("covariates", "no covariate columns named"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Csv { row: 1, message: e.to_string() })?.clone();
    let xcols: Vec<usize> = covariate_cols.iter().map(|c| column_index(&headers, c)).collect::<Result<_>>()?;
    let acol = column_index(&headers, treatment_col)?;
    let ycol = column_index(&headers, outcome_col)?;

    let mut xs: Vec<f64> = Vec::new();
    let mut a: Vec<u8> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Csv { row: line, message: e.to_string() })?;
        let field = |col: usize, name: &str| -> Result<f64> {
            let raw = rec.get(col).ok_or_else(|| Error::Csv {
                row: line,
                message: format!("missing field {name:?}"),
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::Csv {
                row: line,
                message: format!("{name:?} is not numeric: {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv { row: line, message: format!("{name:?} is not finite") });
            }
            Ok(v)
        };
        for (&c, name) in xcols.iter().zip(covariate_cols) {
            xs.push(field(c, name)?);
        }
        let t = field(acol, treatment_col)?;
        let ai = if t == 0.0 {
            0
        } else if t == 1.0 {
            1
        } else {
            return Err(Error::Csv {
                row: line,
                message: format!("treatment {treatment_col:?} must be 0 or 1, got {t}"),
            });
        };
        a.push(ai);
        y.push(field(ycol, outcome_col)?);
    }
    let n = y.len();
    if n < MIN_ROWS {
        return Err(Error::Csv {
            row: n + 1,
            message: format!("need at least {MIN_ROWS} data rows, got {n}"),
        });
    }
    let d = xcols.len();
    let x = DMatrix::from_row_slice(n, d, &xs);
    let y = DVector::from_vec(y);
    let train: Vec<usize> = match train_rows {
        Some(rows) => {
            if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
                return Err(Error::invalid("train_rows", format!("row {bad} out of range")));
            }
            rows.to_vec()
        }
        None => (0..n).collect(),
    };
    let covariates = (0..d)
        .map(|j| MinMax::fit(train.iter().map(|&i| x[(i, j)]), &covariate_cols[j]))
        .collect::<Result<Vec<_>>>()?;
    let outcome = MinMax::fit(train.iter().map(|&i| y[i]), outcome_col)?;
    let rescaling = Rescaling { covariates, outcome };
    let raw = Dataset::new(x, a.clone(), y)?;
    let data = Dataset::new(rescaling.scale_covariates(&raw.x), a, rescaling.scale_outcome(&raw.y))?;
    Ok(Ingested { data, raw, rescaling })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(rows: usize, bad_treatment_at: Option<usize>) -> String {
        let mut s = String::from("x1,x2,t,y\n");
        for i in 0..rows {
            let t = if Some(i) == bad_treatment_at { 2 } else { i % 2 };
            s.push_str(&format!("{},{},{t},{}\n", 2.0 + (i % 3) as f64, i as f64 * 0.5, 10.0 + i as f64));
        }
        s
    }

    fn cols() -> Vec<String> {
        vec!["x1".into(), "x2".into()]
    }

    #[test]
    fn affine_map() {
        let m = MinMax { min: 2.0, max: 4.0 };
        assert_eq!(m.scale(3.0), 0.5);
        for v in [-3.7, 0.0, 2.0, 1e6 + 0.123] {
            assert!((m.unscale(m.scale(v)) - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn rescales_into_unit_box() {
        let ing = ingest_reader(csv_text(12, None).as_bytes(), &cols(), "t", "y", None).unwrap();
        assert_eq!(ing.data.len(), 12);
        assert!(ing.data.x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(ing.data.y.min(), 0.0);
        assert_eq!(ing.data.y.max(), 1.0);
        assert_eq!(ing.data.x[(1, 0)], 0.5);
        let back = ing.rescaling.unscale_outcome(&ing.data.y);
        assert!((back - &ing.raw.y).amax() < 1e-12);
    }

    #[test]
    fn statistics_come_from_training_rows() {
        let train: Vec<usize> = (0..6).collect();
        let ing = ingest_reader(csv_text(12, None).as_bytes(), &cols(), "t", "y", Some(&train)).unwrap();
        assert_eq!(ing.rescaling.outcome, MinMax { min: 10.0, max: 15.0 });
        assert!(ing.data.y.max() > 1.0);
    }

    #[test]
    fn bad_treatment_names_row() {
        let err = ingest_reader(csv_text(12, Some(4)).as_bytes(), &cols(), "t", "y", None).unwrap_err();
        match err {
            Error::Csv { row, message } => {
                assert_eq!(row, 6);
                assert!(message.contains("0 or 1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_degenerate_inputs() {
        let mut text = csv_text(12, None);
        text.push_str("abc,1,0,1\n");
        assert!(matches!(
            ingest_reader(text.as_bytes(), &cols(), "t", "y", None),
            Err(Error::Csv { row: 14, .. })
        ));
        assert!(ingest_reader(csv_text(5, None).as_bytes(), &cols(), "t", "y", None).is_err());
        assert!(ingest_reader(csv_text(12, None).as_bytes(), &["nope".to_string()], "t", "y", None).is_err());
        let constant = "x,t,y\n".to_string() + &"1,0,2\n1,1,3\n".repeat(6);
        let err = ingest_reader(constant.as_bytes(), &["x".to_string()], "t", "y", None).unwrap_err();
        assert!(err.to_string().contains("constant"));
    }
}
