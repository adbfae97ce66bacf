#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use peerfx::model::{CutPointSpec, Theta};
use peerfx::network::{build_design, DesignMatrix, GroupedNetwork};
use peerfx::Dataset;
use rand::prelude::*;

/// Random graph on `n` agents with `m` groups and `s` subnetworks.
pub fn random_network(rng: &mut impl Rng, n: usize, m: usize, s: usize, p: f64) -> GroupedNetwork {
    let groups: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
    let subnet: Vec<usize> = (0..n).map(|i| i * s / n).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && subnet[i] == subnet[j] && rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    GroupedNetwork::new(&edges, groups, subnet, m).unwrap()
}

/// Parameters with peer effects inside the contraction region of a
/// quadratic or switched cost.
pub fn random_theta(rng: &mut impl Rng, m: usize, r: usize, switch: usize, n_beta: usize) -> Theta {
    let s = switch.min(r);
    let deltas: Vec<Vec<f64>> = (0..m)
        .map(|_| (1..s).map(|_| rng.gen_range(0.5..1.5)).collect())
        .collect();
    let tails: Vec<f64> = (0..m).map(|_| rng.gen_range(0.4..1.0)).collect();
    let cuts = CutPointSpec::new(r, switch, deltas, tails).unwrap();
    let alpha = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-0.15..0.15));
    let beta = DVector::from_fn(n_beta, |_, _| rng.gen_range(-0.8..0.8));
    Theta::new(alpha, beta, cuts).unwrap()
}

/// Network, design `[1, x, Wx]` and parameters.
pub fn random_instance(
    rng: &mut impl Rng,
    n: usize,
    m: usize,
    r: usize,
    switch: usize,
) -> (GroupedNetwork, DesignMatrix, Theta) {
    let s = if n > 3 { 2 } else { 1 };
    let net = random_network(rng, n, m, s, 0.4);
    let x = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(0.0..3.0));
    let design = build_design(&net, &x, false).unwrap();
    let theta = random_theta(rng, m, r, switch, 3);
    (net, design, theta)
}

/// Attaches outcomes to an instance.
pub fn with_outcomes(net: GroupedNetwork, design: DesignMatrix, y: Vec<usize>, r: usize) -> Dataset {
    Dataset::new(net, design, y, r).unwrap()
}
