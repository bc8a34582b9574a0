//! Feature matrices and their CSV exchange format.
//!
//! ```text
//! id,label,f0,f1,...,f{D-1}
//! no/img001.pgm,0,1.23456789e-1,...
//! ```
//!
//! Values are written with 9 significant digits. Externally produced
//! backbone features use the same format.

use std::path::Path;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, labels: Vec<u8>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if ids.len() != labels.len() || data.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "{} ids, {} labels and {} values do not form rows of width {dim}",
                ids.len(),
                labels.len(),
                data.len()
            )));
        }
        if dim == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "feature matrix" });
        }
        Ok(FeatureMatrix { ids, labels, dim, data })
    }

    /// Builds a matrix from rows; ids are `row{i}`.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[u8]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(
            (0..rows.len()).map(|i| format!("row{i}")).collect(),
            labels.to_vec(),
            dim,
            rows.concat(),
        )
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            dim: self.dim,
            data: indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label");
        for j in 0..self.dim {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for i in 0..self.rows() {
            out.push_str(&self.ids[i]);
            out.push(',');
            out.push_str(if self.labels[i] == 1 { "1" } else { "0" });
            for v in self.row(i) {
                out.push_str(&format!(",{v:.8e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty feature file".into(),
        })?;
        let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
        if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
            return Err(Error::Parse {
                line: 1,
                message: "header must be id,label,f0,...".into(),
            });
        }
        for (j, c) in cols[2..].iter().enumerate() {
            if *c != format!("f{j}") {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("column {} should be f{j}, found {c:?}", j + 3),
                });
            }
        }
        let dim = cols.len() - 2;
        let (mut ids, mut labels, mut data) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines {
            let err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            if fields.len() != dim + 2 {
                return Err(err(format!("expected {} fields, found {}", dim + 2, fields.len())));
            }
            ids.push(fields[0].to_string());
            labels.push(match fields[1] {
                "0" => 0,
                "1" => 1,
                other => return Err(err(format!("bad label {other:?}"))),
            });
            for f in &fields[2..] {
                let v: f64 = f.parse().map_err(|_| err(format!("bad number {f:?}")))?;
                if !v.is_finite() {
                    return Err(err(format!("non-finite value {f:?}")));
                }
                data.push(v);
            }
        }
        if ids.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "feature file has no rows".into(),
            });
        }
        Self::new(ids, labels, dim, data)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_layout() {
        let m = FeatureMatrix::new(vec!["a".into(), "b".into()], vec![0, 1], 2, vec![0.5, -1.0, 123456.789, 1e-12]).unwrap();
        let csv = m.to_csv();
        assert_eq!(
            csv,
            "id,label,f0,f1\na,0,5.00000000e-1,-1.00000000e0\nb,1,1.23456789e5,1.00000000e-12\n"
        );
    }

    #[test]
    fn malformed_csv_reports_line() {
        let bad = "id,label,f0\na,0,1.0\nb,1,x\n";
        assert!(matches!(FeatureMatrix::from_csv(bad), Err(Error::Parse { line: 3, .. })));
        let bad = "id,label,f0\na,0,1.0,2.0\n";
        assert!(matches!(FeatureMatrix::from_csv(bad), Err(Error::Parse { line: 2, .. })));
        assert!(FeatureMatrix::from_csv("id,lbl,f0\n").is_err());
        assert!(FeatureMatrix::from_csv("id,label,f0\na,3,1\n").is_err());
    }

    #[test]
    fn rejects_nan() {
        assert!(FeatureMatrix::new(vec!["a".into()], vec![0], 1, vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_to_nine_digits(values in prop::collection::vec(-1e6f64..1e6, 6)) {
            let m = FeatureMatrix::new(vec!["x".into(), "y".into()], vec![1, 0], 3, values.clone()).unwrap();
            let back = FeatureMatrix::from_csv(&m.to_csv()).unwrap();
            prop_assert_eq!(&back.ids, &m.ids);
            prop_assert_eq!(&back.labels, &m.labels);
            for (a, b) in back.data().iter().zip(&values) {
                prop_assert!((a - b).abs() <= 5e-9 * b.abs().max(1e-300));
            }
        }
    }
}
