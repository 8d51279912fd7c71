mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrhoc::linalg::Vector;
use rrhoc::lmi::{analysis_lmi, reciprocal_bound_check, AnalysisSlack, NetworkContext};
use rrhoc::solver::{compile, LmiFamily, NodeScalars, SynthesisFamily};

fn scalars(rng: &mut ChaCha8Rng, net: &NetworkContext) -> Vec<NodeScalars> {
    net.nodes()
        .iter()
        .map(|c| {
            let alpha = rng.random_range(0.1..2.0);
            let eps = rng.random_range(0.1..3.0);
            NodeScalars {
                alpha,
                pi: rng.random_range(0.0..0.9) * 2.0 * alpha / c.out_degree.max(1) as f64,
                eps,
                eps_bar: eps,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn synthesis_equals_analysis_under_substitution(seed in any::<u64>()) {
        let (gap, size) = common::substitution_gap(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(gap <= 1e-12, "gap {gap:e} with entries up to {size}");
    }

    /// Reversing the order of the in-neighbor data permutes the per-neighbor
    /// blocks of `Ξ_i`, so its spectrum is unchanged.
    #[test]
    fn neighbor_order_is_a_similarity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = common::rand_network(&mut rng);
        let certs = common::rand_certificates(&mut rng, &net);
        for ctx in net.nodes() {
            let n = ctx.state_dim();
            let x = common::rand_mat(&mut rng, n, n);
            let z = common::rand_mat(&mut rng, n, n);
            let q = common::rand_mat(&mut rng, n, n);
            let k = common::rand_mat(&mut rng, n, ctx.coupling_dim());
            let l = common::rand_mat(&mut rng, n, ctx.output_dim());
            let mut terms: Vec<_> = ctx.neighbors.iter().map(|&j| certs[j].neighbor_term()).collect();
            let slack = AnalysisSlack { x: &x, z: &z, q: &q };
            let cert = &certs[ctx.index];
            let a = analysis_lmi(ctx, cert, &terms, &k, &l, slack, 1.3).unwrap();
            terms.reverse();
            let b = analysis_lmi(ctx, cert, &terms, &k, &l, slack, 1.3).unwrap();
            let (ea, eb) = (common::sorted_eigenvalues(a.matrix()), common::sorted_eigenvalues(b.matrix()));
            let scale = a.matrix().abs().max().max(1.0);
            for (u, v) in ea.iter().zip(&eb) {
                prop_assert!((u - v).abs() <= 1e-10 * scale, "{u} vs {v}");
            }
        }
    }

    /// The compiled affine form reproduces the directly assembled matrices.
    #[test]
    fn compiled_matches_reassembled(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = common::rand_network(&mut rng);
        let sc = scalars(&mut rng, &net);
        let family: Arc<dyn LmiFamily> = Arc::new(SynthesisFamily::new(net, sc, 0.8).unwrap());
        let problem = compile(family.clone()).unwrap();
        let x: Vec<f64> = (0..problem.variable_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let direct = family.evaluate(&x).unwrap();
        let compiled = problem.evaluate_compiled(&x);
        prop_assert_eq!(direct.len(), compiled.len());
        for (d, c) in direct.iter().zip(&compiled) {
            let scale = d.matrix.abs().max().max(1.0);
            prop_assert!(common::max_abs_diff(&d.matrix, c) <= 1e-10 * scale, "`{}` differs", d.name);
            let (ed, ec) = (common::sorted_eigenvalues(&d.matrix), common::sorted_eigenvalues(c));
            prop_assert!((ed[ed.len() - 1] - ec[ec.len() - 1]).abs() <= 1e-9 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reciprocal_bound_holds_for_park_feasible_pairs(
        seed in any::<u64>(),
        n in 1usize..=3,
        p in 1usize..=3,
        draw in 0usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, g) = common::park_pair(&mut rng, n, draw);
        let gaps: Vec<f64> = (0..=p).map(|_| rng.random_range(1e-3..1.0)).collect();
        let delta: Vec<Vector> = (0..=p).map(|_| common::rand_vec(&mut rng, n)).collect();
        let (lhs, rhs) = reciprocal_bound_check(&r, &g, &gaps, &delta).unwrap();
        prop_assert!(lhs - rhs >= -1e-9, "lhs {lhs} < rhs {rhs}");
    }

    /// Equal gaps and equal `δ` blocks with `G = R` make the bound tight.
    #[test]
    fn reciprocal_bound_is_tight_at_equal_gaps(seed in any::<u64>(), n in 1usize..=3, p in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = common::rand_spd(&mut rng, n, 0.05);
        let d = common::rand_vec(&mut rng, n);
        let gaps = vec![0.1; p + 1];
        let delta = vec![d; p + 1];
        let (lhs, rhs) = reciprocal_bound_check(&r, &r, &gaps, &delta).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}
