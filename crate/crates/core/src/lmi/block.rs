use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, Mat};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub offset: usize,
    pub size: usize,
}

/// Symmetric matrix with a named block partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    matrix: Mat,
    partition: Vec<BlockSpec>,
}

impl BlockMatrix {
    pub fn zeros(partition: &[(&str, usize)]) -> Self {
        let mut offset = 0;
        let partition: Vec<_> = partition
            .iter()
            .map(|&(name, size)| {
                let spec = BlockSpec {
                    name: name.to_string(),
                    offset,
                    size,
                };
                offset += size;
                spec
            })
            .collect();
        Self {
            matrix: Mat::zeros(offset, offset),
            partition,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat {
        self.matrix
    }

    pub fn partition(&self) -> &[BlockSpec] {
        &self.partition
    }

    pub fn spec(&self, name: &str) -> Option<&BlockSpec> {
        self.partition.iter().find(|b| b.name == name)
    }

    fn spec_or_err(&self, name: &str) -> Result<&BlockSpec> {
        self.spec(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no block named `{name}`")))
    }

    /// Writes block `(row, col)` and, off the diagonal, its transpose into
    /// `(col, row)`.
    pub fn set(&mut self, row: &str, col: &str, value: &Mat) -> Result<()> {
        let (r, c) = (
            self.spec_or_err(row)?.clone(),
            self.spec_or_err(col)?.clone(),
        );
        if value.shape() != (r.size, c.size) {
            return Err(Error::Dimension(format!(
                "block ({row},{col}) expects {}x{}, got {:?}",
                r.size,
                c.size,
                value.shape()
            )));
        }
        self.matrix
            .view_mut((r.offset, c.offset), (r.size, c.size))
            .copy_from(value);
        if row != col {
            self.matrix
                .view_mut((c.offset, r.offset), (c.size, r.size))
                .copy_from(&value.transpose());
        }
        Ok(())
    }

    pub fn block(&self, row: &str, col: &str) -> Result<Mat> {
        let (r, c) = (self.spec_or_err(row)?, self.spec_or_err(col)?);
        Ok(self
            .matrix
            .view((r.offset, c.offset), (r.size, c.size))
            .into_owned())
    }

    pub fn asymmetry(&self) -> f64 {
        asymmetry(&self.matrix)
    }

    /// Row-major CSV, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:e}", self.matrix[(i, j)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn partition_json(&self) -> serde_json::Value {
        serde_json::json!({ "dim": self.dim(), "blocks": self.partition })
    }

    /// Writes `<stem>.csv` and the partition sidecar `<stem>.json`.
    pub fn write_csv(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        let sidecar = serde_json::to_string_pretty(&self.partition_json())?;
        std::fs::write(dir.join(format!("{stem}.json")), sidecar)?;
        Ok(())
    }
}
