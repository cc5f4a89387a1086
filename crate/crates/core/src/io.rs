//! CSV ingestion and the JSON model file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::densemath::Matrix;
use crate::error::{Error, Result};
use crate::loss::QuantileLevel;
use crate::model::{Dataset, Mode, PlqrFit};
use crate::network::NetworkParams;
use crate::optim::{TrainConfig, TrainHistory};

pub const SCHEMA_VERSION: u32 = 1;

/// Which CSV columns hold the response and the two covariate blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub y: String,
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub z: Vec<String>,
}

/// Raw CSV contents: header plus string cells.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column_index(&self, name: &str, path: &Path) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!(
                "{}: no column named '{name}' (columns: {})",
                path.display(),
                self.headers.join(", ")
            ))
        })
    }

    /// Numeric matrix of the named columns, in the given order.
    pub fn numeric_columns(&self, names: &[String], path: &Path) -> Result<Matrix> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n, path))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(self.rows.len() * idx.len());
        for (r, row) in self.rows.iter().enumerate() {
            for (&j, name) in idx.iter().zip(names) {
                data.push(parse_cell(&row[j], path, r, name)?);
            }
        }
        Matrix::from_row_major(self.rows.len(), idx.len(), data)
    }
}

// Reported row numbers count data rows from 1, excluding the header.
fn parse_cell(cell: &str, path: &Path, row: usize, column: &str) -> Result<f64> {
    let parse_err = || Error::Parse {
        path: path.to_path_buf(),
        row: row + 1,
        column: column.to_string(),
        value: cell.to_string(),
    };
    let v: f64 = cell.trim().parse().map_err(|_| parse_err())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err())
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: row {}: {e}", path.display(), r + 1)))?;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "{}: row {} has {} cells, header has {}",
                path.display(),
                r + 1,
                rec.len(),
                headers.len()
            )));
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { headers, rows })
}

/// Reads a dataset, routing columns by `roles`. Empty files are rejected.
pub fn load_csv(path: &Path, roles: &ColumnRoles) -> Result<Dataset> {
    let table = read_table(path)?;
    if table.rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let y = table.numeric_columns(std::slice::from_ref(&roles.y), path)?;
    let x = table.numeric_columns(&roles.x, path)?;
    let z = table.numeric_columns(&roles.z, path)?;
    Dataset::new(y.column(0), x, z)
}

/// Per-column min-max map of `Z` onto `[0, 1]`. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaling {
    pub fn fit(z: &Matrix) -> Self {
        let mut min = vec![f64::INFINITY; z.cols()];
        let mut max = vec![f64::NEG_INFINITY; z.cols()];
        for i in 0..z.rows() {
            for (j, &v) in z.row(i).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    pub fn apply(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.min.len() {
            return Err(Error::Dimension(format!(
                "scaling has {} columns, data has {}",
                self.min.len(),
                z.cols()
            )));
        }
        let mut out = z.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                let range = self.max[j] - self.min[j];
                *v = if range > 0.0 { (*v - self.min[j]) / range } else { 0.0 };
            }
        }
        Ok(out)
    }
}

/// Persisted model: everything `predict` needs plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub tau: QuantileLevel,
    pub mode: Mode,
    pub theta: Vec<f64>,
    pub widths: Vec<usize>,
    /// Row-major entries of each layer, bias in the last column.
    pub layers: Vec<Vec<f64>>,
    pub roles: ColumnRoles,
    pub scaling: Option<MinMaxScaling>,
    pub config: TrainConfig,
}

impl ModelFile {
    pub fn from_fit(
        fit: &PlqrFit,
        roles: ColumnRoles,
        scaling: Option<MinMaxScaling>,
        config: TrainConfig,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tau: fit.tau,
            mode: fit.mode,
            theta: fit.theta_hat.clone(),
            widths: fit.network.widths().to_vec(),
            layers: fit
                .network
                .layers()
                .iter()
                .map(|l| l.as_slice().to_vec())
                .collect(),
            roles,
            scaling,
            config,
        }
    }

    /// Rebuilds the fit. Training history is not persisted.
    pub fn to_fit(&self) -> Result<PlqrFit> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "unsupported model schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.layers.len() + 1 != self.widths.len() {
            return Err(Error::Data(format!(
                "{} layers stored for width chain {:?}",
                self.layers.len(),
                self.widths
            )));
        }
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, e)| Matrix::from_row_major(self.widths[k + 1], self.widths[k] + 1, e.clone()))
            .collect::<Result<Vec<_>>>()?;
        let network = NetworkParams::from_layers(self.widths.clone(), layers)?;
        Ok(PlqrFit {
            theta_hat: self.theta.clone(),
            network,
            tau: self.tau,
            history: TrainHistory::default(),
            mode: self.mode,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
