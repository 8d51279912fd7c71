use serde::Serialize;

use crate::linalg::{zeros, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Upper triangle stored, row by row.
    Symmetric,
    /// Every entry stored, row-major.
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixVariable {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub structure: Structure,
}

impl MatrixVariable {
    pub fn scalar_count(&self) -> usize {
        match self.structure {
            Structure::Symmetric => self.rows * (self.rows + 1) / 2,
            Structure::General => self.rows * self.cols,
        }
    }
}

/// Bijection between declared matrix entries and a flat vector of scalars.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VariableMap {
    vars: Vec<MatrixVariable>,
    len: usize,
}

/// Handle returned by [`VariableMap::symmetric`] and [`VariableMap::general`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

impl VariableMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn symmetric(&mut self, name: impl Into<String>, n: usize) -> VarId {
        self.push(name.into(), n, n, Structure::Symmetric)
    }

    pub fn general(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> VarId {
        self.push(name.into(), rows, cols, Structure::General)
    }

    fn push(&mut self, name: String, rows: usize, cols: usize, structure: Structure) -> VarId {
        let var = MatrixVariable {
            name,
            offset: self.len,
            rows,
            cols,
            structure,
        };
        self.len += var.scalar_count();
        self.vars.push(var);
        VarId(self.vars.len() - 1)
    }

    /// Number of scalar unknowns.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn variables(&self) -> &[MatrixVariable] {
        &self.vars
    }

    pub fn get(&self, id: VarId) -> &MatrixVariable {
        &self.vars[id.0]
    }

    pub fn decode(&self, id: VarId, x: &[f64]) -> Mat {
        let v = &self.vars[id.0];
        let mut m = zeros(v.rows, v.cols);
        let mut k = v.offset;
        match v.structure {
            Structure::Symmetric => {
                for i in 0..v.rows {
                    for j in i..v.cols {
                        m[(i, j)] = x[k];
                        m[(j, i)] = x[k];
                        k += 1;
                    }
                }
            }
            Structure::General => {
                for i in 0..v.rows {
                    for j in 0..v.cols {
                        m[(i, j)] = x[k];
                        k += 1;
                    }
                }
            }
        }
        m
    }

    /// Writes `m` into `x`; symmetric variables read the upper triangle.
    pub fn encode(&self, id: VarId, m: &Mat, x: &mut [f64]) {
        let v = &self.vars[id.0];
        let mut k = v.offset;
        for i in 0..v.rows {
            let start = if v.structure == Structure::Symmetric {
                i
            } else {
                0
            };
            for j in start..v.cols {
                x[k] = m[(i, j)];
                k += 1;
            }
        }
    }

    /// Variable name and entry `(row, col)` behind scalar index `k`.
    pub fn locate(&self, k: usize) -> Option<(&str, usize, usize)> {
        let v = self
            .vars
            .iter()
            .find(|v| k >= v.offset && k < v.offset + v.scalar_count())?;
        let mut idx = k - v.offset;
        for i in 0..v.rows {
            let start = if v.structure == Structure::Symmetric {
                i
            } else {
                0
            };
            let width = v.cols - start;
            if idx < width {
                return Some((&v.name, i, start + idx));
            }
            idx -= width;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_bijection() {
        let mut map = VariableMap::new();
        let s = map.symmetric("S", 3);
        let g = map.general("G", 2, 3);
        assert_eq!(map.len(), 6 + 6);
        let x: Vec<f64> = (0..map.len()).map(|k| k as f64 + 1.0).collect();
        let sm = map.decode(s, &x);
        assert_eq!(sm, sm.transpose());
        let gm = map.decode(g, &x);
        let mut back = vec![0.0; map.len()];
        map.encode(s, &sm, &mut back);
        map.encode(g, &gm, &mut back);
        assert_eq!(back, x);
        let mut seen = std::collections::HashSet::new();
        for k in 0..map.len() {
            assert!(seen.insert(map.locate(k).unwrap()));
        }
        assert_eq!(map.locate(7), Some(("G", 0, 1)));
        assert!(map.locate(map.len()).is_none());
    }
}
