#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, RngExt};
use rrhoc::cli::Setup;
use rrhoc::graph::DirectedGraph;
use rrhoc::linalg::{Mat, Vector};
use rrhoc::lmi::{NetworkContext, NodeCertificate};
use rrhoc::plant::{NetworkModel, NodeMeasurement, PlantModel};

pub fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/ring3.json")
}

pub fn fixture() -> Setup {
    Setup::load(&fixture_path()).expect("fixture config loads")
}

pub fn rand_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rand_vec<R: Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// `MM' + floor·I`.
pub fn rand_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Mat {
    let m = rand_mat(rng, n, n);
    &m * m.transpose() + Mat::identity(n, n) * floor
}

/// Symmetric square root of a positive definite matrix.
pub fn sqrt_spd(m: &Mat) -> Mat {
    let e = m.clone().symmetric_eigen();
    let d = Mat::from_diagonal(&e.eigenvalues.map(f64::sqrt));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// `(R, G)` with `[[R, G], [G', R]] ⪰ 0`: `G = R^½ C R^½` with `‖C‖₂ ≤ 1`.
/// Every fourth draw sits on the boundary `‖C‖₂ = 1`.
pub fn park_pair<R: Rng>(rng: &mut R, n: usize, draw: usize) -> (Mat, Mat) {
    let r = rand_spd(rng, n, 0.05);
    let c = rand_mat(rng, n, n);
    let norm = c.norm().max(1e-12);
    let spectral = c.clone().svd(false, false).singular_values.max().max(1e-12);
    let scale = if draw.is_multiple_of(4) {
        1.0 / spectral
    } else {
        rng.random_range(0.0..1.0) / norm.max(spectral)
    };
    let root = sqrt_spd(&r);
    let g = &root * (c * scale) * &root;
    (r, g)
}

/// Ring over `count` nodes plus random extra edges.
pub fn rand_graph<R: Rng>(rng: &mut R, count: usize) -> DirectedGraph {
    let mut edges: Vec<(usize, usize)> = (0..count).map(|i| (i, (i + 1) % count)).collect();
    for j in 0..count {
        for i in 0..count {
            if i != j && !edges.contains(&(j, i)) && rng.random_bool(0.3) {
                edges.push((j, i));
            }
        }
    }
    DirectedGraph::new(count, &edges).expect("ring plus extras is valid")
}

/// Random plant and measurement data; state dimension up to 3.
pub fn rand_model<R: Rng>(rng: &mut R, nodes: usize) -> NetworkModel {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=2);
    let plant = PlantModel::new(rand_mat(rng, n, n), rand_mat(rng, n, m), rand_vec(rng, n))
        .expect("plant shapes agree");
    let measurements = (0..nodes)
        .map(|_| {
            let r = rng.random_range(1..=2);
            let h = rng.random_bool(0.5).then(|| rand_mat(rng, n, n));
            NodeMeasurement::new(
                &plant,
                rand_mat(rng, r, n),
                rand_mat(rng, r, m),
                rand_spd(rng, r, 0.1),
                h,
            )
            .expect("measurement shapes agree")
        })
        .collect();
    NetworkModel::new(plant, measurements).expect("network assembles")
}

pub fn rand_network<R: Rng>(rng: &mut R) -> NetworkContext {
    let count = rng.random_range(2..=4);
    let graph = rand_graph(rng, count);
    let model = rand_model(rng, count);
    let taus: Vec<f64> = (0..count).map(|_| rng.random_range(0.01..0.5)).collect();
    NetworkContext::new(&model, &graph, &taus).expect("context builds")
}

pub fn rand_certificate<R: Rng>(rng: &mut R, n: usize, out_degree: usize) -> NodeCertificate {
    let alpha = rng.random_range(0.1..2.0);
    let pi = if out_degree == 0 {
        0.0
    } else {
        rng.random_range(0.0..0.99) * 2.0 * alpha / out_degree as f64
    };
    NodeCertificate {
        y_hat: rand_spd(rng, n, 0.1),
        s: rand_spd(rng, n, 0.1),
        r: rand_spd(rng, n, 0.1),
        w: rand_spd(rng, n, 0.1),
        g: rand_mat(rng, n, n),
        alpha,
        pi,
    }
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).abs().max()
}

pub fn sorted_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut v: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Certificates for every node of `net`.
pub fn rand_certificates<R: Rng>(rng: &mut R, net: &NetworkContext) -> Vec<NodeCertificate> {
    net.nodes()
        .iter()
        .map(|c| rand_certificate(rng, c.state_dim(), c.out_degree))
        .collect()
}

/// Largest entrywise gap between the synthesis matrix and the analysis
/// matrix at the substituted slack and recovered gains, over all nodes,
/// together with the largest entry magnitude seen.
pub fn substitution_gap<R: Rng>(rng: &mut R) -> (f64, f64) {
    use rrhoc::lmi::{analysis_lmi, recover_gains, synthesis_lmi, AnalysisSlack, SynthesisSlack};
    let net = rand_network(rng);
    let certs = rand_certificates(rng, &net);
    let gamma = rng.random_range(0.2..5.0);
    let (mut gap, mut size) = (0.0f64, 0.0f64);
    for ctx in net.nodes() {
        let n = ctx.state_dim();
        // diagonally dominant, so X stays well conditioned
        let x = Mat::identity(n, n) * 4.0 + rand_mat(rng, n, n);
        let f = rand_mat(rng, n, ctx.coupling_dim());
        let u = rand_mat(rng, n, ctx.output_dim());
        let (eps, eps_bar) = (rng.random_range(0.05..5.0), rng.random_range(0.05..5.0));
        let neighbors: Vec<_> = ctx
            .neighbors
            .iter()
            .map(|&j| certs[j].neighbor_term())
            .collect();
        let cert = &certs[ctx.index];
        let syn = synthesis_lmi(
            ctx,
            cert,
            &neighbors,
            SynthesisSlack {
                x: &x,
                f: &f,
                u: &u,
                eps,
                eps_bar,
            },
            gamma,
        )
        .expect("synthesis assembles");
        let (k, l) = recover_gains(&x, &f, &u).expect("X is well conditioned");
        let (z, q) = (&x * eps, &x * eps_bar);
        let ana = analysis_lmi(
            ctx,
            cert,
            &neighbors,
            &k,
            &l,
            AnalysisSlack {
                x: &x,
                z: &z,
                q: &q,
            },
            gamma,
        )
        .expect("analysis assembles");
        gap = gap.max(max_abs_diff(syn.matrix(), ana.matrix()));
        size = size.max(ana.matrix().abs().max());
    }
    (gap, size)
}
