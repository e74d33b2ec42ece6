//! Weight checkpoints: JSON with row-major matrices inline or in header-less CSV files.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::rowmajor;
use crate::model::ScalarNonlinearity;

use super::{Ctrnn, RnnError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows(Vec<Vec<f64>>),
    Csv { csv: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtrnnJson {
    #[serde(rename = "A")]
    pub a: MatrixSource,
    #[serde(rename = "W0")]
    pub w0: MatrixSource,
    #[serde(rename = "W1")]
    pub w1: MatrixSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: MatrixSource,
    pub activation: String,
}

fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| format!("{}: {s:?}: {e}", path.display())))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    rowmajor::from_rows(&rows).map_err(|e| format!("{}: {e}", path.display()))
}

impl MatrixSource {
    fn load(&self, base: &Path) -> Result<DMatrix<f64>, String> {
        match self {
            Self::Rows(r) => rowmajor::from_rows(r),
            Self::Csv { csv } => read_csv_matrix(&base.join(csv)),
        }
    }
}

impl CtrnnJson {
    /// Builds the network, resolving CSV paths against `base`.
    pub fn to_ctrnn(&self, base: &Path) -> Result<Ctrnn, RnnError> {
        let m = |s: &MatrixSource, name: &str| s.load(base).map_err(|e| RnnError::Checkpoint(format!("{name}: {e}")));
        let net = Ctrnn {
            a: m(&self.a, "A")?,
            w0: m(&self.w0, "W0")?,
            w1: m(&self.w1, "W1")?,
            b0: self.b0.clone().map(DVector::from_vec),
            c: m(&self.c, "C")?,
            activation: ScalarNonlinearity::parse(&self.activation).map_err(RnnError::Checkpoint)?,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn from_ctrnn(net: &Ctrnn) -> Self {
        let rows = |m: &DMatrix<f64>| MatrixSource::Rows(rowmajor::to_rows(m));
        Self {
            a: rows(&net.a),
            w0: rows(&net.w0),
            w1: rows(&net.w1),
            b0: net.b0.as_ref().map(|b| b.iter().copied().collect()),
            c: rows(&net.c),
            activation: net.activation.descriptor(),
        }
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Ctrnn, RnnError> {
    let text = std::fs::read_to_string(path).map_err(|e| RnnError::Checkpoint(format!("{}: {e}", path.display())))?;
    let json: CtrnnJson = serde_json::from_str(&text).map_err(|e| RnnError::Checkpoint(format!("{}: {e}", path.display())))?;
    json.to_ctrnn(path.parent().unwrap_or(Path::new(".")))
}
