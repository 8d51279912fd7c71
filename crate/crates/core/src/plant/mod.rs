//! The observed plant `ẋ = Ax + B₂w`, the per-node measurement channels
//! and the disturbance signals driving them.

mod disturbance;

pub use disturbance::{
    l2_norm_squared, l2_norm_squared_samples, DisturbanceSignal, Scenario, SignalKind,
};

use crate::error::{dim_err, Result};
use crate::linalg::{eye, zeros, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: Mat,
    b2: Mat,
    x0: Vector,
}

impl PlantModel {
    pub fn new(a: Mat, b2: Mat, x0: Vector) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return dim_err(format!(
                "A must be square and nonempty, got {:?}",
                a.shape()
            ));
        }
        if b2.nrows() != n {
            return dim_err(format!("B2 has {} rows, A has {n}", b2.nrows()));
        }
        if x0.len() != n {
            return dim_err(format!("x0 has length {}, A has {n} rows", x0.len()));
        }
        Ok(Self { a, b2, x0 })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b2(&self) -> &Mat {
        &self.b2
    }

    pub fn x0(&self) -> &Vector {
        &self.x0
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.b2.ncols()
    }
}

/// Measurement channel `y_i = C_i x + D_{2i} w + D̄_{2i} v_i` and the
/// coupling shape `H_i` of node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMeasurement {
    c: Mat,
    d2: Mat,
    dbar2: Mat,
    h: Mat,
}

impl NodeMeasurement {
    /// `h = None` selects `H_i = I_n`.
    pub fn new(plant: &PlantModel, c: Mat, d2: Mat, dbar2: Mat, h: Option<Mat>) -> Result<Self> {
        let n = plant.state_dim();
        let r = c.nrows();
        if c.ncols() != n {
            return dim_err(format!(
                "C has {} columns, state dimension is {n}",
                c.ncols()
            ));
        }
        if d2.shape() != (r, plant.disturbance_dim()) {
            return dim_err(format!(
                "D2 is {:?}, expected ({r}, {})",
                d2.shape(),
                plant.disturbance_dim()
            ));
        }
        if dbar2.nrows() != r {
            return dim_err(format!("Dbar2 has {} rows, C has {r}", dbar2.nrows()));
        }
        let h = h.unwrap_or_else(|| eye(n));
        if h.ncols() != n || h.nrows() == 0 {
            return dim_err(format!("H has shape {:?}, expected (_, {n})", h.shape()));
        }
        Ok(Self { c, d2, dbar2, h })
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn d2(&self) -> &Mat {
        &self.d2
    }

    pub fn dbar2(&self) -> &Mat {
        &self.dbar2
    }

    pub fn h(&self) -> &Mat {
        &self.h
    }

    /// `r_i`.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// `m_v` for this node.
    pub fn noise_dim(&self) -> usize {
        self.dbar2.ncols()
    }

    pub fn coupling_dim(&self) -> usize {
        self.h.nrows()
    }

    /// `y_i = C_i x + D_{2i} w + D̄_{2i} v_i`.
    pub fn measurement(&self, x: &Vector, w: &Vector, v: &Vector) -> Result<Vector> {
        if x.len() != self.c.ncols() || w.len() != self.d2.ncols() || v.len() != self.dbar2.ncols()
        {
            return dim_err(format!(
                "measurement inputs x:{} w:{} v:{} do not fit C:{:?} D2:{:?} Dbar2:{:?}",
                x.len(),
                w.len(),
                v.len(),
                self.c.shape(),
                self.d2.shape(),
                self.dbar2.shape()
            ));
        }
        Ok(&self.c * x + &self.d2 * w + &self.dbar2 * v)
    }

    /// `D_i = [D_{2i} D̄_{2i}]`.
    pub fn stacked_d(&self) -> Mat {
        let r = self.output_dim();
        let (mw, mv) = (self.d2.ncols(), self.dbar2.ncols());
        let mut d = zeros(r, mw + mv);
        d.view_mut((0, 0), (r, mw)).copy_from(&self.d2);
        d.view_mut((0, mw), (r, mv)).copy_from(&self.dbar2);
        d
    }
}

/// Plant plus every node's measurement channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    plant: PlantModel,
    nodes: Vec<NodeMeasurement>,
}

impl NetworkModel {
    pub fn new(plant: PlantModel, nodes: Vec<NodeMeasurement>) -> Result<Self> {
        if nodes.is_empty() {
            return dim_err("network needs at least one node");
        }
        Ok(Self { plant, nodes })
    }

    pub fn plant(&self) -> &PlantModel {
        &self.plant
    }

    pub fn nodes(&self) -> &[NodeMeasurement] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeMeasurement {
        &self.nodes[i]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `B = [B₂ 0]` sized for node `i`'s perturbation `ξ_i = [w; v_i]`.
    pub fn stacked_b(&self, i: usize) -> Mat {
        let n = self.plant.state_dim();
        let mw = self.plant.disturbance_dim();
        let mv = self.nodes[i].noise_dim();
        let mut b = zeros(n, mw + mv);
        b.view_mut((0, 0), (n, mw)).copy_from(self.plant.b2());
        b
    }

    /// Dimension of `ξ_i`.
    pub fn perturbation_dim(&self, i: usize) -> usize {
        self.plant.disturbance_dim() + self.nodes[i].noise_dim()
    }
}
