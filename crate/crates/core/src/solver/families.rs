//! The joint constraint sets of the analysis and synthesis problems. Every
//! node contributes its `Ξ_i` (or `Ξ̄_i`), the Park block and the positivity
//! constraints; nodes couple through the neighbor certificates in `Φ̄_i`.

use serde::{Deserialize, Serialize};

use super::problem::{ConstraintValue, LmiFamily, Sense};
use super::variables::{VarId, VariableMap};
use crate::error::{arg_err, Result};
use crate::linalg::Mat;
use crate::lmi::{
    analysis_lmi, check_scalars, park_block, synthesis_lmi, AnalysisSlack, BlockMatrix,
    NetworkContext, NodeCertificate, NodeGains, SynthesisSlack,
};

/// Fixed scalars of node `i`. `eps`, `eps_bar` are unused by the analysis
/// problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeScalars {
    pub alpha: f64,
    pub pi: f64,
    pub eps: f64,
    pub eps_bar: f64,
}

#[derive(Debug, Clone, Copy)]
struct NodeSlots {
    y_hat: VarId,
    x: VarId,
    /// `F_i` (synthesis) or `Z_i` (analysis).
    third: VarId,
    /// `U_i` (synthesis) or `Q_i` (analysis).
    fourth: VarId,
    s: VarId,
    r: VarId,
    w: VarId,
    g: VarId,
}

fn check_node_scalars(net: &NetworkContext, scalars: &[NodeScalars], need_eps: bool) -> Result<()> {
    if scalars.len() != net.len() {
        return arg_err(format!(
            "{} scalar sets for {} nodes",
            scalars.len(),
            net.len()
        ));
    }
    for (ctx, sc) in net.nodes().iter().zip(scalars) {
        check_scalars(sc.alpha, sc.pi, ctx.out_degree)?;
        if need_eps && !(sc.eps > 0.0 && sc.eps_bar > 0.0) {
            return arg_err(format!(
                "node {}: epsilon scalars must be positive",
                ctx.index + 1
            ));
        }
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return arg_err(format!("gamma must be positive and finite, got {gamma}"));
    }
    Ok(())
}

fn declare(
    net: &NetworkContext,
    third: &str,
    fourth: &str,
    vars: &mut VariableMap,
    synthesis: bool,
) -> Vec<NodeSlots> {
    net.nodes()
        .iter()
        .map(|ctx| {
            let n = ctx.state_dim();
            let i = ctx.index + 1;
            let (c3, c4) = if synthesis {
                (ctx.coupling_dim(), ctx.output_dim())
            } else {
                (n, n)
            };
            NodeSlots {
                y_hat: vars.symmetric(format!("Yhat{i}"), n),
                x: vars.general(format!("X{i}"), n, n),
                third: vars.general(format!("{third}{i}"), n, c3),
                fourth: vars.general(format!("{fourth}{i}"), n, c4),
                s: vars.symmetric(format!("S{i}"), n),
                r: vars.symmetric(format!("R{i}"), n),
                w: vars.symmetric(format!("W{i}"), n),
                g: vars.general(format!("G{i}"), n, n),
            }
        })
        .collect()
}

fn decode_certificates(
    vars: &VariableMap,
    slots: &[NodeSlots],
    scalars: &[NodeScalars],
    x: &[f64],
) -> Vec<NodeCertificate> {
    slots
        .iter()
        .zip(scalars)
        .map(|(s, sc)| NodeCertificate {
            y_hat: vars.decode(s.y_hat, x),
            s: vars.decode(s.s, x),
            r: vars.decode(s.r, x),
            w: vars.decode(s.w, x),
            g: vars.decode(s.g, x),
            alpha: sc.alpha,
            pi: sc.pi,
        })
        .collect()
}

fn node_constraints(
    i: usize,
    xi: BlockMatrix,
    cert: &NodeCertificate,
    out: &mut Vec<ConstraintValue>,
) -> Result<()> {
    let k = i + 1;
    out.push(ConstraintValue::new(
        format!("Xi[{k}]"),
        Sense::NegativeDefinite,
        xi.into_matrix(),
    ));
    out.push(ConstraintValue::new(
        format!("Park[{k}]"),
        Sense::PositiveSemidefinite,
        park_block(&cert.r, &cert.g)?.into_matrix(),
    ));
    out.push(ConstraintValue::new(
        format!("Yhat[{k}]"),
        Sense::NegativeDefinite,
        -&cert.y_hat,
    ));
    for (name, m) in [("S", &cert.s), ("R", &cert.r), ("W", &cert.w)] {
        out.push(ConstraintValue::new(
            format!("{name}[{k}]"),
            Sense::PositiveSemidefinite,
            m.clone(),
        ));
    }
    Ok(())
}

/// Unknowns `Ŷ_i, X_i, F_i, U_i, S_i, R_i, W_i, G_i` for all nodes at fixed
/// scalars and `γ`.
#[derive(Debug, Clone)]
pub struct SynthesisFamily {
    net: NetworkContext,
    scalars: Vec<NodeScalars>,
    gamma: f64,
    vars: VariableMap,
    slots: Vec<NodeSlots>,
}

/// Decoded synthesis unknowns.
#[derive(Debug, Clone)]
pub struct SynthesisVariables {
    pub certificates: Vec<NodeCertificate>,
    pub x: Vec<Mat>,
    pub f: Vec<Mat>,
    pub u: Vec<Mat>,
}

impl SynthesisFamily {
    pub fn new(net: NetworkContext, scalars: Vec<NodeScalars>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        check_node_scalars(&net, &scalars, true)?;
        let mut vars = VariableMap::new();
        let slots = declare(&net, "F", "U", &mut vars, true);
        Ok(Self {
            net,
            scalars,
            gamma,
            vars,
            slots,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn scalars(&self) -> &[NodeScalars] {
        &self.scalars
    }

    pub fn network(&self) -> &NetworkContext {
        &self.net
    }

    pub fn decode(&self, x: &[f64]) -> SynthesisVariables {
        let certificates = decode_certificates(&self.vars, &self.slots, &self.scalars, x);
        SynthesisVariables {
            certificates,
            x: self
                .slots
                .iter()
                .map(|s| self.vars.decode(s.x, x))
                .collect(),
            f: self
                .slots
                .iter()
                .map(|s| self.vars.decode(s.third, x))
                .collect(),
            u: self
                .slots
                .iter()
                .map(|s| self.vars.decode(s.fourth, x))
                .collect(),
        }
    }

    /// Same unknowns at a different `γ`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            gamma,
            ..self.clone()
        })
    }
}

impl LmiFamily for SynthesisFamily {
    fn variables(&self) -> &VariableMap {
        &self.vars
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<ConstraintValue>> {
        let v = self.decode(x);
        let mut out = Vec::with_capacity(6 * self.net.len());
        for (i, ctx) in self.net.nodes().iter().enumerate() {
            let nb: Vec<_> = ctx
                .neighbors
                .iter()
                .map(|&j| v.certificates[j].neighbor_term())
                .collect();
            let sc = self.scalars[i];
            let slack = SynthesisSlack {
                x: &v.x[i],
                f: &v.f[i],
                u: &v.u[i],
                eps: sc.eps,
                eps_bar: sc.eps_bar,
            };
            let xi = synthesis_lmi(ctx, &v.certificates[i], &nb, slack, self.gamma)?;
            node_constraints(i, xi, &v.certificates[i], &mut out)?;
        }
        Ok(out)
    }
}

/// Unknowns `Ŷ_i, X_i, Z_i, Q_i, S_i, R_i, W_i, G_i` for given gains.
#[derive(Debug, Clone)]
pub struct AnalysisFamily {
    net: NetworkContext,
    gains: Vec<NodeGains>,
    scalars: Vec<NodeScalars>,
    gamma: f64,
    vars: VariableMap,
    slots: Vec<NodeSlots>,
}

/// Decoded analysis unknowns.
#[derive(Debug, Clone)]
pub struct AnalysisVariables {
    pub certificates: Vec<NodeCertificate>,
    pub x: Vec<Mat>,
    pub z: Vec<Mat>,
    pub q: Vec<Mat>,
}

impl AnalysisFamily {
    pub fn new(
        net: NetworkContext,
        gains: Vec<NodeGains>,
        scalars: Vec<NodeScalars>,
        gamma: f64,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        check_node_scalars(&net, &scalars, false)?;
        if gains.len() != net.len() {
            return arg_err(format!(
                "{} gain pairs for {} nodes",
                gains.len(),
                net.len()
            ));
        }
        for (ctx, g) in net.nodes().iter().zip(&gains) {
            let n = ctx.state_dim();
            if g.k.shape() != (n, ctx.coupling_dim()) || g.l.shape() != (n, ctx.output_dim()) {
                return Err(crate::Error::Dimension(format!(
                    "node {}: K is {:?} and L is {:?}, expected ({n}, {}) and ({n}, {})",
                    ctx.index + 1,
                    g.k.shape(),
                    g.l.shape(),
                    ctx.coupling_dim(),
                    ctx.output_dim()
                )));
            }
        }
        let mut vars = VariableMap::new();
        let slots = declare(&net, "Z", "Q", &mut vars, false);
        Ok(Self {
            net,
            gains,
            scalars,
            gamma,
            vars,
            slots,
        })
    }

    pub fn decode(&self, x: &[f64]) -> AnalysisVariables {
        AnalysisVariables {
            certificates: decode_certificates(&self.vars, &self.slots, &self.scalars, x),
            x: self
                .slots
                .iter()
                .map(|s| self.vars.decode(s.x, x))
                .collect(),
            z: self
                .slots
                .iter()
                .map(|s| self.vars.decode(s.third, x))
                .collect(),
            q: self
                .slots
                .iter()
                .map(|s| self.vars.decode(s.fourth, x))
                .collect(),
        }
    }

    /// Encodes a synthesis solution as analysis unknowns with `Z = εX`,
    /// `Q = ε̄X`.
    pub fn encode_from_synthesis(
        &self,
        v: &SynthesisVariables,
        scalars: &[NodeScalars],
    ) -> Vec<f64> {
        self.encode_certificate(&v.certificates, &v.x, scalars)
    }

    /// Encodes certificates and synthesis slacks `X_i` as analysis unknowns
    /// with `Z = εX`, `Q = ε̄X`.
    pub fn encode_certificate(
        &self,
        certificates: &[NodeCertificate],
        slack_x: &[Mat],
        scalars: &[NodeScalars],
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.vars.len()];
        for (i, s) in self.slots.iter().enumerate() {
            let c = &certificates[i];
            self.vars.encode(s.y_hat, &c.y_hat, &mut x);
            self.vars.encode(s.s, &c.s, &mut x);
            self.vars.encode(s.r, &c.r, &mut x);
            self.vars.encode(s.w, &c.w, &mut x);
            self.vars.encode(s.g, &c.g, &mut x);
            self.vars.encode(s.x, &slack_x[i], &mut x);
            self.vars
                .encode(s.third, &(&slack_x[i] * scalars[i].eps), &mut x);
            self.vars
                .encode(s.fourth, &(&slack_x[i] * scalars[i].eps_bar), &mut x);
        }
        x
    }
}

impl LmiFamily for AnalysisFamily {
    fn variables(&self) -> &VariableMap {
        &self.vars
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<ConstraintValue>> {
        let v = self.decode(x);
        let mut out = Vec::with_capacity(6 * self.net.len());
        for (i, ctx) in self.net.nodes().iter().enumerate() {
            let nb: Vec<_> = ctx
                .neighbors
                .iter()
                .map(|&j| v.certificates[j].neighbor_term())
                .collect();
            let slack = AnalysisSlack {
                x: &v.x[i],
                z: &v.z[i],
                q: &v.q[i],
            };
            let g = &self.gains[i];
            let xi = analysis_lmi(ctx, &v.certificates[i], &nb, &g.k, &g.l, slack, self.gamma)?;
            node_constraints(i, xi, &v.certificates[i], &mut out)?;
        }
        Ok(out)
    }
}
