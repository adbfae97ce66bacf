mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use peerfx::estimate::{npl_estimate, npl_variance_at, pseudo_loglik, NplSettings};
use peerfx::model::{choice_probabilities, Theta};
use peerfx::network::{build_design, GroupedNetwork};
use peerfx::simulate::{builtin_dgp, simulate_dataset};
use peerfx::Dataset;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permuted(data: &Dataset, perm: &[usize]) -> Dataset {
    // agent i moves to position perm[i]
    let n = data.n();
    let net = &data.net;
    let edges: Vec<(usize, usize)> = net.edges().map(|(i, j)| (perm[i], perm[j])).collect();
    let mut groups = vec![0; n];
    let mut subnet = vec![0; n];
    let mut y = vec![0; n];
    let x0 = data.design.x();
    let mut x = DMatrix::zeros(n, x0.ncols());
    for i in 0..n {
        groups[perm[i]] = net.group(i);
        subnet[perm[i]] = net.subnet(i);
        y[perm[i]] = data.y[i];
        x.row_mut(perm[i]).copy_from(&x0.row(i));
    }
    let pnet = GroupedNetwork::new(&edges, groups, subnet, net.n_groups()).unwrap();
    let design = build_design(&pnet, &x, false).unwrap();
    Dataset::new(pnet, design, y, data.r).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_loglik_ignores_agent_order(seed in any::<u64>(), n in 4usize..14, m in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.gen_range(1..6);
        let (net, design, theta) = common::random_instance(&mut rng, n, m, r, 2);
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=r)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..r as f64)).collect();
        let data = common::with_outcomes(net, design, y, r);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let pdata = permuted(&data, &perm);
        let mut pu = vec![0.0; n];
        for i in 0..n {
            pu[perm[i]] = u[i];
        }
        let (a, _) = pseudo_loglik(&theta, &u, &data).unwrap();
        let (b, _) = pseudo_loglik(&theta, &pu, &pdata).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
    }
}

fn null_sample(n_subnets: usize, ns: usize, seed: u64) -> (Dataset, Theta) {
    let mut cfg = builtin_dgp("A", n_subnets, ns, seed).unwrap();
    cfg.theta.alpha.fill(0.0);
    let sim = simulate_dataset(&cfg).unwrap();
    (sim.data, sim.theta)
}

#[test]
fn no_peer_effect_is_recovered_as_zero() {
    let (data, _) = null_sample(4, 250, 17);
    let fit = npl_estimate(&data, 1, &NplSettings::default())
        .unwrap()
        .with_variance(&data)
        .unwrap();
    assert!(fit.converged);
    let se = fit.std_errors().unwrap();
    let a = fit.theta.alpha[(0, 0)];
    assert!(a.abs() < 4.0 * se[0], "alpha {a} se {}", se[0]);
    assert!(a.abs() < 0.1);
}

fn fd_scores(theta: &Theta, u: &[f64], data: &Dataset, free: &[usize], h: f64) -> Vec<DMatrix<f64>> {
    // per free parameter, n x (R+1) derivative of log p
    let v = theta.to_vec();
    free.iter()
        .map(|&k| {
            let mut up = v.clone();
            let mut dn = v.clone();
            up[k] += h;
            dn[k] -= h;
            let pu = choice_probabilities(&theta.with_vec(&up).unwrap(), &data.net, &data.design, u).unwrap();
            let pd = choice_probabilities(&theta.with_vec(&dn).unwrap(), &data.net, &data.design, u).unwrap();
            pu.zip_map(&pd, |a, b| if a > 0.0 && b > 0.0 { (a.ln() - b.ln()) / (2.0 * h) } else { 0.0 })
        })
        .collect()
}

/// With the peer coefficient pinned at zero the estimator is an ordered
/// probit, whose sandwich can be built from finite differences alone.
#[test]
fn pinned_variance_matches_ordered_probit_sandwich() {
    let (data, theta) = null_sample(2, 150, 5);
    let u = data.y_f64();
    let p = theta.n_params();
    let free: Vec<usize> = (theta.beta_offset()..p).collect();
    let mask: Vec<bool> = (0..p).map(|k| k >= theta.beta_offset()).collect();
    let s = data.n_subnets() as f64;
    let f = free.len();

    let h = 1e-4;
    let ll = |v: &[f64]| pseudo_loglik(&theta.with_vec(v).unwrap(), &u, &data).unwrap().0;
    let v0 = theta.to_vec();
    let mut hess = DMatrix::zeros(f, f);
    for a in 0..f {
        for b in 0..f {
            let e = |sa: f64, sb: f64| {
                let mut v = v0.clone();
                v[free[a]] += sa * h;
                v[free[b]] += sb * h;
                ll(&v)
            };
            hess[(a, b)] = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h * h);
        }
    }

    let probs = choice_probabilities(&theta, &data.net, &data.design, &u).unwrap();
    let scores = fd_scores(&theta, &u, &data, &free, 1e-6);
    let mut meat = DMatrix::zeros(f, f);
    for i in 0..data.n() {
        for t in 0..=data.r {
            let w = probs[(i, t)];
            if w < 1e-20 {
                continue;
            }
            for a in 0..f {
                for b in 0..f {
                    meat[(a, b)] += w * scores[a][(i, t)] * scores[b][(i, t)];
                }
            }
        }
    }
    meat /= s;
    let hinv = hess.try_inverse().unwrap();
    let oracle = &hinv * meat * hinv.transpose() / s;

    let got = npl_variance_at(&theta, &u, &data, Some(&mask)).unwrap().vcov;
    for k in 0..theta.beta_offset() {
        assert_eq!(got.row(k).amax(), 0.0);
    }
    for a in 0..f {
        for b in 0..f {
            let (x, y) = (got[(free[a], free[b])], oracle[(a, b)]);
            let scale = (oracle[(a, a)] * oracle[(b, b)]).sqrt();
            assert!((x - y).abs() < 1e-3 * scale, "({a},{b}) {x} vs {y}");
        }
    }
}

#[test]
fn sandwich_is_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for rep in 0..5 {
        let cfg = builtin_dgp(if rep % 2 == 0 { "A" } else { "C" }, 2, 150, rng.gen()).unwrap();
        let sim = simulate_dataset(&cfg).unwrap();
        let v = npl_variance_at(&sim.theta, &sim.equilibrium.ye, &sim.data, None).unwrap().vcov;
        assert!((&v - v.transpose()).amax() <= 1e-14 * v.amax());
        let eig = SymmetricEigen::new(v.clone()).eigenvalues;
        assert!(eig.min() >= -1e-10 * eig.max(), "eigenvalues {eig}");
    }
}
