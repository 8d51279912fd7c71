//! Construction of the matrix inequalities certifying a Round-Robin observer
//! network: the Park condition, the reciprocal-convexity matrix `Ψ_i`, the
//! history blocks `Ψ̃_i`, the neighbor blocks `Φ̄_i`, and the analysis and
//! synthesis matrices `Ξ_i`, `Ξ̄_i`.
//!
//! Block rows of `Ξ_i` follow the augmented signal
//!
//! ```text
//! a: ė_i(t)            n
//! b: e_i(t)            n
//! c: e_i(t_{k-ν+1})    p_i·n   (ν = 1..p_i)
//! d: e_i(t-τ_i)        n
//! e: e_j(t)            p_i·n   (j ∈ V_i ascending)
//! f: e_j(t_{k-ν_j+1})  p_i·n   (j ∈ V_i ascending)
//! g: ξ_i               m_w + m_v
//! ```
//!
//! A node without in-neighbors has `τ_i = 0`, no held samples and no history
//! terms; its matrix keeps only rows `a`, `b`, `g`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::block::BlockMatrix;
use crate::error::{arg_err, dim_err, Error, Result};
use crate::graph::DirectedGraph;
use crate::linalg::{
    condition_number, eye, is_symmetric, kron, ones_col, ones_row, ones_square_kron, serde_rows,
    sym2, symmetrize, zeros, Mat, Vector,
};
use crate::plant::NetworkModel;

/// Wirtinger factor `π²/4` of the sampled-data supply rate. Unrelated to the
/// per-node rates `π_i`.
pub const WIRTINGER: f64 = PI * PI / 4.0;

/// Condition number above which `X_i` is treated as singular.
pub const MAX_SLACK_CONDITION: f64 = 1e12;

const SYM_TOL: f64 = 1e-12;

/// Everything about node `i` that its matrix inequality reads from the
/// model, the graph and the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeContext {
    pub index: usize,
    /// `V_i`, ascending.
    pub neighbors: Vec<usize>,
    pub in_degree: usize,
    pub out_degree: usize,
    pub tau: f64,
    /// `Σ_{j : i ∈ V_j} τ_j²`.
    pub out_tau_sq: f64,
    pub a: Mat,
    /// `B = [B₂ 0]`.
    pub b: Mat,
    pub c: Mat,
    /// `D_i = [D_{2i} D̄_{2i}]`.
    pub d: Mat,
    pub h: Mat,
}

impl NodeContext {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn perturbation_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn coupling_dim(&self) -> usize {
        self.h.nrows()
    }

    /// `(3 + 3p_i)·n + m_w + m_v`, or `2n + m_w + m_v` without in-neighbors.
    pub fn lmi_dim(&self) -> usize {
        let n = self.state_dim();
        if self.in_degree == 0 {
            2 * n + self.perturbation_dim()
        } else {
            (3 + 3 * self.in_degree) * n + self.perturbation_dim()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkContext {
    nodes: Vec<NodeContext>,
}

impl NetworkContext {
    pub fn new(model: &NetworkModel, graph: &DirectedGraph, taus: &[f64]) -> Result<Self> {
        let count = graph.node_count();
        if model.node_count() != count || taus.len() != count {
            return dim_err(format!(
                "{} measurement channels and {} delay bounds for {count} graph nodes",
                model.node_count(),
                taus.len()
            ));
        }
        let nodes = (0..count)
            .map(|i| {
                let meas = model.node(i);
                NodeContext {
                    index: i,
                    neighbors: graph.neighbors(i).to_vec(),
                    in_degree: graph.in_degree(i),
                    out_degree: graph.out_degree(i),
                    tau: taus[i],
                    out_tau_sq: graph
                        .out_neighbors(i)
                        .iter()
                        .map(|&j| taus[j] * taus[j])
                        .sum(),
                    a: model.plant().a().clone(),
                    b: model.stacked_b(i),
                    c: meas.c().clone(),
                    d: meas.stacked_d(),
                    h: meas.h().clone(),
                }
            })
            .collect();
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[NodeContext] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeContext {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.nodes[0].state_dim()
    }
}

/// Lyapunov-Krasovskii certificate of one node. `y_hat` stores `Y_i⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCertificate {
    #[serde(with = "serde_rows")]
    pub y_hat: Mat,
    #[serde(with = "serde_rows")]
    pub s: Mat,
    #[serde(with = "serde_rows")]
    pub r: Mat,
    #[serde(with = "serde_rows")]
    pub w: Mat,
    #[serde(with = "serde_rows")]
    pub g: Mat,
    pub alpha: f64,
    pub pi: f64,
}

impl NodeCertificate {
    /// Shapes, symmetry, `α > 0` and `0 ≤ π < 2α/q` (`π = 0` when `q = 0`).
    pub fn validate(&self, n: usize, out_degree: usize) -> Result<()> {
        for (name, m) in [
            ("Y^-1", &self.y_hat),
            ("S", &self.s),
            ("R", &self.r),
            ("W", &self.w),
        ] {
            if m.shape() != (n, n) {
                return dim_err(format!("{name} is {:?}, expected ({n}, {n})", m.shape()));
            }
            if !is_symmetric(m, SYM_TOL) {
                return arg_err(format!("{name} is not symmetric"));
            }
        }
        if self.g.shape() != (n, n) {
            return dim_err(format!("G is {:?}, expected ({n}, {n})", self.g.shape()));
        }
        check_scalars(self.alpha, self.pi, out_degree)
    }

    pub fn neighbor_term(&self) -> NeighborTerm<'_> {
        NeighborTerm {
            y_hat: &self.y_hat,
            w: &self.w,
            pi: self.pi,
        }
    }
}

pub(crate) fn check_scalars(alpha: f64, pi: f64, out_degree: usize) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return arg_err(format!("alpha must be positive, got {alpha}"));
    }
    if out_degree == 0 {
        if pi != 0.0 {
            return arg_err("pi must be 0 for a node without out-neighbors");
        }
    } else if !(pi >= 0.0 && pi < 2.0 * alpha / out_degree as f64) {
        return arg_err(format!(
            "pi = {pi} outside [0, 2·alpha/q) = [0, {})",
            2.0 * alpha / out_degree as f64
        ));
    }
    Ok(())
}

/// Data node `i` reads from an in-neighbor `j`: `Y_j⁻¹`, `W_j`, `π_j`.
#[derive(Debug, Clone, Copy)]
pub struct NeighborTerm<'a> {
    pub y_hat: &'a Mat,
    pub w: &'a Mat,
    pub pi: f64,
}

/// `[[R, G], [G', R]]`; the Park condition requires it to be PSD.
pub fn park_block(r: &Mat, g: &Mat) -> Result<BlockMatrix> {
    let n = r.nrows();
    if !r.is_square() || g.shape() != (n, n) {
        return dim_err("R and G must be square of equal size");
    }
    if !is_symmetric(r, SYM_TOL) {
        return arg_err("R is not symmetric");
    }
    let mut out = BlockMatrix::zeros(&[("r0", n), ("r1", n)]);
    out.set("r0", "r0", r)?;
    out.set("r1", "r1", r)?;
    out.set("r0", "r1", g)?;
    Ok(out)
}

fn delta_names(p: usize) -> Vec<String> {
    (0..=p).map(|v| format!("delta{v}")).collect()
}

/// `Ψ_i`: `R` on the `p+1` diagonal blocks, `½(G+G')` everywhere else.
pub fn psi_matrix(r: &Mat, g: &Mat, p: usize) -> Result<BlockMatrix> {
    if p < 1 {
        return arg_err("Psi needs at least one neighbor");
    }
    let n = r.nrows();
    if !r.is_square() || g.shape() != (n, n) {
        return dim_err("R and G must be square of equal size");
    }
    let names = delta_names(p);
    let parts: Vec<_> = names.iter().map(|s| (s.as_str(), n)).collect();
    let mut out = BlockMatrix::zeros(&parts);
    let off = symmetrize(g);
    for (u, nu) in names.iter().enumerate() {
        out.set(nu, nu, r)?;
        for mu in &names[u + 1..] {
            out.set(nu, mu, &off)?;
        }
    }
    Ok(out)
}

/// Maps `[e(t); e(t_k); …; e(t_{k−p+1}); e(t−τ)]` to the successive
/// differences `δ_ν = ē_ν − ē_{ν+1}`, `ν = 0..p`.
pub fn difference_operator(p: usize, n: usize) -> Result<Mat> {
    if p < 1 {
        return arg_err("difference operator needs p >= 1");
    }
    let mut t = zeros((p + 1) * n, (p + 2) * n);
    let i = eye(n);
    for v in 0..=p {
        t.view_mut((v * n, v * n), (n, n)).copy_from(&i);
        t.view_mut((v * n, (v + 1) * n), (n, n)).copy_from(&(-&i));
    }
    Ok(t)
}

/// Both sides of the reciprocally convex bound
/// `τ·Σ_ν δ_ν'Rδ_ν / gap_ν ≥ δ'Ψδ` for `gaps.len() = p + 1` positive gaps
/// summing to `τ`.
pub fn reciprocal_bound_check(
    r: &Mat,
    g: &Mat,
    gaps: &[f64],
    delta: &[Vector],
) -> Result<(f64, f64)> {
    if gaps.len() < 2 || delta.len() != gaps.len() {
        return arg_err(format!(
            "need p+1 >= 2 gaps and as many delta blocks, got {} and {}",
            gaps.len(),
            delta.len()
        ));
    }
    if gaps.iter().any(|&x| !(x > 0.0)) {
        return arg_err("gaps must be positive");
    }
    let n = r.nrows();
    if delta.iter().any(|d| d.len() != n) {
        return dim_err("delta blocks must match R");
    }
    let tau: f64 = gaps.iter().sum();
    let lhs = tau
        * gaps
            .iter()
            .zip(delta)
            .map(|(gap, d)| d.dot(&(r * d)) / gap)
            .sum::<f64>();
    let psi = psi_matrix(r, g, gaps.len() - 1)?;
    let stacked = Vector::from_iterator(
        n * delta.len(),
        delta.iter().flat_map(|d| d.iter().copied()),
    );
    let rhs = stacked.dot(&(psi.matrix() * &stacked));
    Ok((lhs, rhs))
}

/// `Ψ̃_i`, partitioned `[b: n, c: p·n, d: n]`: `Ψ̄ = e^{−2ατ} T'ΨT` with
/// `2αY⁻¹ + S` subtracted from the leading corner and `e^{−2ατ}S` added to
/// the trailing one.
pub fn tilde_psi(cert: &NodeCertificate, p: usize, tau: f64) -> Result<BlockMatrix> {
    let n = cert.r.nrows();
    let t = difference_operator(p, n)?;
    let psi = psi_matrix(&cert.r, &cert.g, p)?;
    let decay = (-2.0 * cert.alpha * tau).exp();
    let bar = symmetrize(&(t.transpose() * psi.matrix() * &t)) * decay;
    let mut out = BlockMatrix::zeros(&[("b", n), ("c", p * n), ("d", n)]);
    // copy Ψ̄ wholesale, then patch the two corners
    let dim = out.dim();
    let mut m = bar;
    {
        let mut corner = m.view_mut((0, 0), (n, n));
        corner -= &cert.y_hat * (2.0 * cert.alpha) + &cert.s;
    }
    {
        let mut corner = m.view_mut((dim - n, dim - n), (n, n));
        corner += &cert.s * decay;
    }
    out.set("b", "b", &m.view((0, 0), (n, n)).into_owned())?;
    out.set("b", "c", &m.view((0, n), (n, p * n)).into_owned())?;
    out.set("b", "d", &m.view((0, dim - n), (n, n)).into_owned())?;
    out.set("c", "c", &m.view((n, n), (p * n, p * n)).into_owned())?;
    out.set("c", "d", &m.view((n, dim - n), (p * n, n)).into_owned())?;
    out.set("d", "d", &m.view((dim - n, dim - n), (n, n)).into_owned())?;
    Ok(out)
}

/// `(Φ̄_{i,11}, Φ̄_{i,12}, Φ̄_{i,22})` over the in-neighbors in ascending order.
pub fn bar_phi(neighbors: &[NeighborTerm<'_>], n: usize) -> Result<(Mat, Mat, Mat)> {
    let p = neighbors.len();
    let mut phi11 = zeros(p * n, p * n);
    let mut phi22 = zeros(p * n, p * n);
    for (v, nb) in neighbors.iter().enumerate() {
        if nb.y_hat.shape() != (n, n) || nb.w.shape() != (n, n) {
            return dim_err(format!("neighbor certificate {v} has wrong shape"));
        }
        let w = nb.w * WIRTINGER;
        phi11
            .view_mut((v * n, v * n), (n, n))
            .copy_from(&(nb.y_hat * nb.pi + &w));
        phi22.view_mut((v * n, v * n), (n, n)).copy_from(&w);
    }
    let phi12 = -&phi22;
    Ok((phi11, phi12, phi22))
}

/// Slack-dependent pieces of `Ξ_i`, named by the products they hold.
struct DescriptorTerms {
    /// `Z + Z'`
    z_sym: Mat,
    /// `−X + Z'(A − LC)`
    ab: Mat,
    /// `Z'KH`
    z_kh: Mat,
    q: Mat,
    /// `Z'(B − LD)`
    z_bld: Mat,
    /// `X'(A − LC) + (A − LC)'X`
    x_acl_sym: Mat,
    /// `X'KH`
    x_kh: Mat,
    /// `(A − LC)'Q`
    acl_q: Mat,
    /// `X'(B − LD)`
    x_bld: Mat,
    /// `H'K'Q`
    hkq: Mat,
    /// `Q'KH + H'K'Q`
    q_kh_sym: Mat,
    /// `Q'(B − LD)`
    q_bld: Mat,
}

fn assemble(
    ctx: &NodeContext,
    cert: &NodeCertificate,
    neighbors: &[NeighborTerm<'_>],
    t: &DescriptorTerms,
    gamma: f64,
) -> Result<BlockMatrix> {
    if !(gamma > 0.0) {
        return arg_err(format!("gamma must be positive, got {gamma}"));
    }
    let n = ctx.state_dim();
    let p = ctx.in_degree;
    let m = ctx.perturbation_dim();
    cert.validate(n, ctx.out_degree)?;
    if neighbors.len() != p {
        return Err(Error::InvalidArgument(format!(
            "node {} expects {p} neighbor certificates, got {}",
            ctx.index + 1,
            neighbors.len()
        )));
    }
    let inv_g2 = 1.0 / (gamma * gamma);
    let id = eye(n);

    let aa = &cert.r * (ctx.tau * ctx.tau) + &cert.w * ctx.out_tau_sq - &t.z_sym;
    let ab = &cert.y_hat + &t.ab;
    let cost_bb = &id * ((p + ctx.out_degree) as f64 * inv_g2) + &t.x_acl_sym;

    if p == 0 {
        let mut xi = BlockMatrix::zeros(&[("a", n), ("b", n), ("g", m)]);
        xi.set("a", "a", &aa)?;
        xi.set("a", "b", &ab)?;
        xi.set("a", "g", &t.z_bld)?;
        xi.set("b", "b", &(cost_bb + &cert.y_hat * (2.0 * cert.alpha)))?;
        xi.set("b", "g", &t.x_bld)?;
        xi.set("g", "g", &(-eye(m)))?;
        return Ok(xi);
    }

    let tp = tilde_psi(cert, p, ctx.tau)?;
    let (phi11, phi12, phi22) = bar_phi(neighbors, n)?;
    let row1 = ones_row(p);

    let mut xi = BlockMatrix::zeros(&[
        ("a", n),
        ("b", n),
        ("c", p * n),
        ("d", n),
        ("e", p * n),
        ("f", p * n),
        ("g", m),
    ]);
    xi.set("a", "a", &aa)?;
    xi.set("a", "b", &ab)?;
    xi.set("a", "c", &(-kron(&row1, &t.z_kh)))?;
    xi.set("a", "f", &kron(&row1, &(&t.z_kh - &t.q)))?;
    xi.set("a", "g", &t.z_bld)?;

    xi.set("b", "b", &(cost_bb - tp.block("b", "b")?))?;
    xi.set("b", "c", &(-tp.block("b", "c")? - kron(&row1, &t.x_kh)))?;
    xi.set("b", "d", &(-tp.block("b", "d")?))?;
    xi.set("b", "e", &(kron(&row1, &id) * (-inv_g2)))?;
    xi.set("b", "f", &kron(&row1, &(&t.x_kh + &t.acl_q)))?;
    xi.set("b", "g", &t.x_bld)?;

    xi.set("c", "c", &(-tp.block("c", "c")?))?;
    xi.set("c", "d", &(-tp.block("c", "d")?))?;
    xi.set("c", "f", &(-ones_square_kron(p, &t.hkq)))?;

    xi.set("d", "d", &(-tp.block("d", "d")?))?;

    xi.set("e", "e", &(-phi11))?;
    xi.set("e", "f", &(-phi12))?;

    xi.set("f", "f", &(ones_square_kron(p, &t.q_kh_sym) - phi22))?;
    xi.set("f", "g", &kron(&ones_col(p), &t.q_bld))?;

    xi.set("g", "g", &(-eye(m)))?;
    Ok(xi)
}

fn check_shape(name: &str, m: &Mat, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return dim_err(format!("{name} is {:?}, expected {shape:?}", m.shape()));
    }
    Ok(())
}

/// Slack matrices of the analysis inequality.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisSlack<'a> {
    pub x: &'a Mat,
    pub z: &'a Mat,
    pub q: &'a Mat,
}

/// `Ξ_i` for given gains `K_i`, `L_i`.
pub fn analysis_lmi(
    ctx: &NodeContext,
    cert: &NodeCertificate,
    neighbors: &[NeighborTerm<'_>],
    k: &Mat,
    l: &Mat,
    slack: AnalysisSlack<'_>,
    gamma: f64,
) -> Result<BlockMatrix> {
    let n = ctx.state_dim();
    check_shape("K", k, (n, ctx.coupling_dim()))?;
    check_shape("L", l, (n, ctx.output_dim()))?;
    for (name, m) in [("X", slack.x), ("Z", slack.z), ("Q", slack.q)] {
        check_shape(name, m, (n, n))?;
    }
    let AnalysisSlack { x, z, q } = slack;
    let acl = &ctx.a - l * &ctx.c;
    let bld = &ctx.b - l * &ctx.d;
    let kh = k * &ctx.h;
    let zt = z.transpose();
    let xt = x.transpose();
    let qt = q.transpose();
    let x_acl = &xt * &acl;
    let terms = DescriptorTerms {
        z_sym: sym2(z),
        ab: -x + &zt * &acl,
        z_kh: &zt * &kh,
        q: q.clone(),
        z_bld: &zt * &bld,
        x_acl_sym: &x_acl + x_acl.transpose(),
        x_kh: &xt * &kh,
        acl_q: acl.transpose() * q,
        x_bld: &xt * &bld,
        hkq: kh.transpose() * q,
        q_kh_sym: sym2(&(&qt * &kh)),
        q_bld: &qt * &bld,
    };
    assemble(ctx, cert, neighbors, &terms, gamma)
}

/// Slack variables and scalars of the synthesis inequality; the gains are
/// encoded as `F_i = X_i'K_i`, `U_i = X_i'L_i`.
#[derive(Debug, Clone, Copy)]
pub struct SynthesisSlack<'a> {
    pub x: &'a Mat,
    pub f: &'a Mat,
    pub u: &'a Mat,
    pub eps: f64,
    pub eps_bar: f64,
}

/// `Ξ̄_i`: `Ξ_i` under `Z = εX`, `Q = ε̄X`, `K = (X')⁻¹F`, `L = (X')⁻¹U`.
/// The `(b, f)` block uses `ε̄(A'X − C'U')`, which is what that substitution
/// produces.
pub fn synthesis_lmi(
    ctx: &NodeContext,
    cert: &NodeCertificate,
    neighbors: &[NeighborTerm<'_>],
    slack: SynthesisSlack<'_>,
    gamma: f64,
) -> Result<BlockMatrix> {
    let n = ctx.state_dim();
    let SynthesisSlack {
        x,
        f,
        u,
        eps,
        eps_bar,
    } = slack;
    check_shape("X", x, (n, n))?;
    check_shape("F", f, (n, ctx.coupling_dim()))?;
    check_shape("U", u, (n, ctx.output_dim()))?;
    if !(eps > 0.0 && eps_bar > 0.0) {
        return arg_err(format!(
            "epsilon scalars must be positive, got {eps}, {eps_bar}"
        ));
    }
    let xt = x.transpose();
    // X'A − UC and X'B − UD
    let xa_uc = &xt * &ctx.a - u * &ctx.c;
    let xb_ud = &xt * &ctx.b - u * &ctx.d;
    let fh = f * &ctx.h;
    let terms = DescriptorTerms {
        z_sym: sym2(x) * eps,
        ab: -x + &xa_uc * eps,
        z_kh: &fh * eps,
        q: x * eps_bar,
        z_bld: &xb_ud * eps,
        x_acl_sym: sym2(&xa_uc),
        x_kh: fh.clone(),
        acl_q: xa_uc.transpose() * eps_bar,
        x_bld: xb_ud.clone(),
        hkq: fh.transpose() * eps_bar,
        q_kh_sym: sym2(&fh) * eps_bar,
        q_bld: xb_ud * eps_bar,
    };
    assemble(ctx, cert, neighbors, &terms, gamma)
}

/// Coupling gain `K_i` and output-injection gain `L_i` of one observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGains {
    #[serde(with = "serde_rows")]
    pub k: Mat,
    #[serde(with = "serde_rows")]
    pub l: Mat,
}

/// `K = (X')⁻¹F`, `L = (X')⁻¹U`; fails when `cond(X)` exceeds
/// [`MAX_SLACK_CONDITION`].
pub fn recover_gains(x: &Mat, f: &Mat, u: &Mat) -> Result<(Mat, Mat)> {
    let n = x.nrows();
    check_shape("X", x, (n, n))?;
    if f.nrows() != n || u.nrows() != n {
        return dim_err("F and U need as many rows as X");
    }
    let cond = condition_number(x);
    if !(cond <= MAX_SLACK_CONDITION) {
        return Err(Error::Singular(cond));
    }
    let lu = x.transpose().lu();
    let k = lu.solve(f).ok_or(Error::Singular(cond))?;
    let l = lu.solve(u).ok_or(Error::Singular(cond))?;
    Ok((k, l))
}

/// Weight `P = (1/N) Σ_i (Y_i⁻¹ + S_i(1 − e^{−2α_iτ_i})/(2α_i))` on the
/// initial state in the consensus performance bound.
pub fn initial_state_weight(certs: &[NodeCertificate], taus: &[f64]) -> Result<Mat> {
    if certs.is_empty() || certs.len() != taus.len() {
        return dim_err("need one delay bound per certificate");
    }
    let n = certs[0].y_hat.nrows();
    let mut p = zeros(n, n);
    for (c, &tau) in certs.iter().zip(taus) {
        if !(c.alpha > 0.0) {
            return arg_err(format!("alpha must be positive, got {}", c.alpha));
        }
        let factor = -(-2.0 * c.alpha * tau).exp_m1() / (2.0 * c.alpha);
        p += &c.y_hat + &c.s * factor;
    }
    Ok(symmetrize(&(p / certs.len() as f64)))
}
