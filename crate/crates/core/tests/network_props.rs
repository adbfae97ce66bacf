mod common;

use nalgebra::DMatrix;
use peerfx::network::{compute_pi, GroupedNetwork};
use proptest::prelude::*;

fn graph_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<usize>)> {
    (2usize..=7, 1usize..=2).prop_flat_map(|(n, m)| {
        (
            Just(n),
            Just(m),
            prop::collection::vec(any::<bool>(), n * n),
            prop::collection::vec(0..m, n),
        )
    })
}

fn build(n: usize, m: usize, adj: &[bool], groups: &[usize]) -> (GroupedNetwork, Vec<Vec<bool>>) {
    let mut a = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && adj[i * n + j] {
                a[i][j] = true;
                edges.push((i, j));
            }
        }
    }
    let net = GroupedNetwork::new(&edges, groups.to_vec(), vec![0; n], m).unwrap();
    (net, a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn pi_matches_brute_force((n, m, adj, groups) in graph_strategy()) {
        let (net, a) = build(n, m, &adj, &groups);
        let pi = compute_pi(&net).pi;
        for i in 0..n {
            let distant = (0..n).any(|j| {
                a[i][j] && (0..n).any(|k| a[j][k] && k != i && !a[i][k])
            });
            for g in 0..m {
                let has = (0..n).any(|j| a[i][j] && groups[j] == g);
                let want = if has && distant { 1.0 } else { 0.0 };
                prop_assert_eq!(pi[(i, g)], want, "agent {} group {}", i, g);
            }
        }
    }
}

proptest! {
    #[test]
    fn weight_rows_sum_to_one_or_zero((n, m, adj, groups) in graph_strategy()) {
        let (net, a) = build(n, m, &adj, &groups);
        for g in 0..m {
            for h in 0..m {
                let w = net.weight_matrix(g, h);
                for i in 0..n {
                    let expect = if groups[i] == g && (0..n).any(|j| a[i][j] && groups[j] == h) {
                        1.0
                    } else {
                        0.0
                    };
                    prop_assert!((w.row_sum(i) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn peer_operator_is_weighted_sum(
        (n, m, adj, groups) in graph_strategy(),
        coef in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let (net, _) = build(n, m, &adj, &groups);
        let alpha = DMatrix::from_fn(m, m, |g, h| coef[g * 2 + h]);
        let mut sum = DMatrix::zeros(n, n);
        for g in 0..m {
            for h in 0..m {
                sum += net.weight_matrix(g, h).to_dense() * alpha[(g, h)];
            }
        }
        let op = net.peer_operator(&alpha).to_dense();
        prop_assert!((op - sum).amax() < 1e-12);
    }

    #[test]
    fn group_means_match_weights((n, m, adj, groups) in graph_strategy(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let (net, _) = build(n, m, &adj, &groups);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let means = net.group_means(&u);
        for h in 0..m {
            for g in 0..m {
                let wu = net.weight_matrix(g, h).mul_vec(&u);
                for i in (0..n).filter(|&i| groups[i] == g) {
                    prop_assert!((means[i * m + h] - wu[i]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn random_instances_have_two_subnets() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let (net, design, theta) = common::random_instance(&mut rng, 10, 2, 4, 2);
    assert_eq!(net.n_subnets(), 2);
    assert_eq!(design.n_cols(), theta.n_beta());
    for (i, j) in net.edges() {
        assert_eq!(net.subnet(i), net.subnet(j));
    }
}
