use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Labelled curves observed on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    grid: Vec<f64>,
    curves: DMatrix<f64>,
    labels: Vec<u8>,
}

impl FunctionalDataset {
    pub fn new(grid: Vec<f64>, curves: DMatrix<f64>, labels: Vec<u8>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::validation("dataset grid is empty"));
        }
        if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("dataset grid must be finite and strictly increasing"));
        }
        if labels.is_empty() {
            return Err(Error::validation("dataset has no samples"));
        }
        if curves.nrows() != labels.len() || curves.ncols() != grid.len() {
            return Err(Error::validation(format!(
                "curve matrix is {}×{}, expected {}×{}",
                curves.nrows(),
                curves.ncols(),
                labels.len(),
                grid.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|y| **y > 1) {
            return Err(Error::validation(format!("label {bad} is not binary")));
        }
        if curves.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("curves contain non-finite values"));
        }
        Ok(FunctionalDataset {
            grid,
            curves,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn curves(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// `(n0, n1)`
    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.labels.iter().filter(|y| **y == 1).count();
        (self.n() - n1, n1)
    }

    /// Values of every curve at grid node `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.curves.column(j).iter().copied().collect()
    }

    pub fn curve(&self, i: usize) -> Vec<f64> {
        self.curves.row(i).iter().copied().collect()
    }

    /// Quadrature weight of the grid (mean spacing).
    pub fn delta(&self) -> f64 {
        match self.m() {
            1 => 1.0,
            m => (self.grid[m - 1] - self.grid[0]) / (m - 1) as f64,
        }
    }

    /// Index of the grid node nearest to `t`.
    pub fn nearest_node(&self, t: f64) -> usize {
        linalg::nearest_node(&self.grid, t)
    }

    pub fn subset(&self, rows: &[usize]) -> FunctionalDataset {
        let curves = self.curves.select_rows(rows);
        FunctionalDataset {
            grid: self.grid.clone(),
            curves,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// First `k` samples and the rest.
    pub fn split_at(&self, k: usize) -> Result<(FunctionalDataset, FunctionalDataset)> {
        if k == 0 || k >= self.n() {
            return Err(Error::validation(format!(
                "cannot split {} samples at {k}",
                self.n()
            )));
        }
        let head: Vec<usize> = (0..k).collect();
        let tail: Vec<usize> = (k..self.n()).collect();
        Ok((self.subset(&head), self.subset(&tail)))
    }

    /// Same curves with replaced labels.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<FunctionalDataset> {
        FunctionalDataset::new(self.grid.clone(), self.curves.clone(), labels)
    }
}

/// Grid value rounded to six significant digits, printed in shortest form.
fn header_value(g: f64) -> String {
    let rounded: f64 = format!("{g:.5e}").parse().unwrap_or(g);
    format!("{rounded}")
}

/// Serialises a dataset as `y,t_<g1>,...` followed by one row per curve.
pub fn to_csv_string(dataset: &FunctionalDataset) -> String {
    let mut out = String::from("y");
    for g in dataset.grid() {
        out.push_str(",t_");
        out.push_str(&header_value(*g));
    }
    out.push('\n');
    for (i, y) in dataset.labels().iter().enumerate() {
        out.push_str(&y.to_string());
        for v in dataset.curves().row(i).iter() {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(dataset: &FunctionalDataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), to_csv_string(dataset).as_bytes())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<FunctionalDataset> {
    let file = fs::File::open(path.as_ref())?;
    parse_csv(file)
}

/// Parses the dataset CSV format from any reader.
pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<FunctionalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let mut fields = header.iter();
    if fields.next() != Some("y") {
        return Err(Error::Parse {
            row: 0,
            message: "header must start with `y`".into(),
        });
    }
    let grid = fields
        .map(|f| {
            f.strip_prefix("t_")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    row: 0,
                    message: format!("malformed grid column `{f}`"),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    if grid.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "header has no grid columns".into(),
        });
    }

    let m = grid.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != m + 1 {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", m + 1, record.len()),
            });
        }
        let label = match &record[0] {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("label `{other}` is not 0 or 1"),
                })
            }
        };
        labels.push(label);
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {} value `{field}` is not a number", j + 1),
            })?;
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "file has no data rows".into(),
        });
    }
    let curves = DMatrix::from_row_slice(labels.len(), m, &values);
    FunctionalDataset::new(grid, curves, labels)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
