use nalgebra::DVector;
use proptest::prelude::*;

use accgossip::gossip::{drive, sample_activations, MethodContext, MethodRegistry};
use accgossip::harness::trial_values;
use accgossip::kaczmarz::{option1_schedule, option2_schedule, solve_rows, Method};
use accgossip::rng::rng_from_seed;
use accgossip::spectral::summarize;
use accgossip::topology::{build_system, Graph};

/// Random connected graph: a random spanning tree plus extra edges.
fn connected_graph() -> impl Strategy<Value = Graph> {
    (2usize..12)
        .prop_flat_map(|n| {
            let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
            let extra = proptest::collection::vec((0..n, 0..n), 0..2 * n);
            (Just(n), parents, extra)
        })
        .prop_map(|(n, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents
                .into_iter()
                .enumerate()
                .map(|(k, p)| (p, k + 1))
                .collect();
            for (i, j) in extra {
                let e = (i.min(j), i.max(j));
                if i != j && !edges.contains(&e) {
                    edges.push(e);
                }
            }
            Graph::new(n, edges).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rows_are_unit_and_gram_is_half_laplacian(g in connected_graph()) {
        let sys = build_system(&g);
        for r in 0..sys.rows() {
            prop_assert!((sys.a().row(r).norm() - 1.0).abs() < 1e-14);
        }
        let diff = sys.gram() - sys.laplacian() * 0.5;
        prop_assert!(diff.abs().max() < 1e-14);
        prop_assert!(sys.b().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn every_method_preserves_the_mean(g in connected_graph(), seed in 0u64..1000) {
        let summary = summarize(&build_system(&g)).unwrap();
        let ctx = MethodContext::new(&summary);
        let registry = MethodRegistry::builtin();
        let c = trial_values(seed, 0, g.node_count());
        let c_mean = c.iter().sum::<f64>() / c.len() as f64;
        let scale = c.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let log = sample_activations(&g, &mut rng_from_seed(seed), 300);
        for name in registry.names() {
            let mut m = registry.create(name, &ctx).unwrap();
            let mut worst = 0.0_f64;
            drive(&g, &c, m.as_mut(), log.edges(), 1, |s| {
                let x = s.x();
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                worst = worst.max((mean - c_mean).abs());
                true
            })
            .unwrap();
            prop_assert!(worst <= 1e-10 * scale, "{name}: drift {worst:e}");
        }
    }

    #[test]
    fn node_and_matrix_forms_agree(g in connected_graph(), seed in 0u64..1000, opt2 in any::<bool>()) {
        let sys = build_system(&g);
        let summary = summarize(&sys).unwrap();
        let ctx = MethodContext::new(&summary);
        let name = if opt2 { "accgossip-opt2" } else { "accgossip-opt1" };
        let mut method = MethodRegistry::builtin().create(name, &ctx).unwrap();
        let c = trial_values(seed, 1, g.node_count());
        let log = sample_activations(&g, &mut rng_from_seed(seed), 400);

        let mut node = Vec::new();
        drive(&g, &c, method.as_mut(), log.edges(), 1, |s| {
            node.push((s.x(), s.v()));
            true
        })
        .unwrap();

        let schedule = if opt2 {
            option2_schedule(&summary)
        } else {
            option1_schedule(summary.m, summary.lambda_min_plus_ata).unwrap()
        };
        let mut k = 0;
        let mut diff = 0.0_f64;
        solve_rows(
            &sys,
            &DVector::from_column_slice(&c),
            Method::Accelerated(schedule),
            log.edge_indices(&g).unwrap(),
            1,
            |st| {
                let (x, v) = &node[k];
                for l in 0..x.len() {
                    diff = diff.max((x[l] - st.x[l]).abs()).max((v[l] - st.v[l]).abs());
                }
                k += 1;
            },
        );
        prop_assert_eq!(k, node.len());
        prop_assert!(diff <= 1e-12, "max diff {diff:e}");
    }

    #[test]
    fn consensus_is_a_fixed_point(g in connected_graph(), value in -50.0f64..50.0, seed in 0u64..100) {
        let summary = summarize(&build_system(&g)).unwrap();
        let ctx = MethodContext::new(&summary);
        let registry = MethodRegistry::builtin();
        let c = vec![value; g.node_count()];
        let log = sample_activations(&g, &mut rng_from_seed(seed), 50);
        for name in registry.names() {
            let mut m = registry.create(name, &ctx).unwrap();
            let mut worst = 0.0_f64;
            drive(&g, &c, m.as_mut(), log.edges(), 1, |s| {
                for x in s.x() {
                    worst = worst.max((x - value).abs());
                }
                true
            })
            .unwrap();
            prop_assert!(worst <= 1e-12 * value.abs().max(1.0), "{name}: moved {worst:e}");
        }
    }
}
