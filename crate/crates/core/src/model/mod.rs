//! Structural model: thresholds, choice probabilities, the expected-outcome
//! map and its fixed point.

mod cuts;
mod equilibrium;
mod theta;

pub use cuts::{CutPointJson, CutPointSpec};
pub use equilibrium::{
    solve_equilibrium, solve_with_index, EquilibriumState, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
#[allow(unused_imports)]
pub(crate) use equilibrium::solve_subnet;
pub use theta::{Theta, ThetaJson};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DesignMatrix, GroupedNetwork};
use crate::normal::{self, CDF_ONE, TAIL_CUTOFF};

/// `Σ_{t=1}^R Φ(η - γ(t))`.
#[inline]
pub(crate) fn expected_count(eta: f64, levels: &[f64]) -> f64 {
    let r = levels.len() - 2;
    let cuts = &levels[1..=r];
    let start = cuts.partition_point(|&g| eta - g > CDF_ONE);
    let mut s = start as f64;
    for &g in &cuts[start..] {
        let x = eta - g;
        if x < -TAIL_CUTOFF {
            break;
        }
        s += normal::cdf(x);
    }
    s
}

/// `(Σ_t Φ(η - γ(t)), Σ_t φ(η - γ(t)))`.
#[inline]
pub(crate) fn count_and_slope(eta: f64, levels: &[f64]) -> (f64, f64) {
    let r = levels.len() - 2;
    let cuts = &levels[1..=r];
    let start = cuts.partition_point(|&g| eta - g > TAIL_CUTOFF);
    let mut count = start as f64;
    let mut slope = 0.0;
    for &g in &cuts[start..] {
        let x = eta - g;
        if x < -TAIL_CUTOFF {
            break;
        }
        count += normal::cdf(x);
        slope += normal::pdf(x);
    }
    (count, slope)
}

/// `f*(η) = Σ_t φ(η - γ(t))`.
#[inline]
pub(crate) fn slope(eta: f64, levels: &[f64]) -> f64 {
    count_and_slope(eta, levels).1
}

/// `Σ_g' α^{g_i g'} w_i^{g_i g'} u`; `sums` is scratch of length `M`.
#[inline]
pub(crate) fn peer_term(
    alpha: &DMatrix<f64>,
    net: &GroupedNetwork,
    i: usize,
    u: &[f64],
    sums: &mut [f64],
) -> f64 {
    sums.iter_mut().for_each(|v| *v = 0.0);
    for &j in net.friends(i) {
        sums[net.group(j)] += u[j];
    }
    let g = net.group(i);
    let mut s = 0.0;
    for (h, &total) in sums.iter().enumerate() {
        let c = net.friends_in_group(i, h);
        if c > 0 {
            s += alpha[(g, h)] * total / c as f64;
        }
    }
    s
}

pub(crate) fn check_lengths(net: &GroupedNetwork, design: &DesignMatrix, theta: &Theta) -> Result<()> {
    if design.z().nrows() != net.n() {
        return Err(Error::Dimension(format!(
            "design has {} rows for {} agents",
            design.z().nrows(),
            net.n()
        )));
    }
    if design.n_cols() != theta.n_beta() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} design columns",
            theta.n_beta(),
            design.n_cols()
        )));
    }
    if net.n_groups() != theta.m() {
        return Err(Error::Dimension(format!(
            "network has {} groups, parameters {}",
            net.n_groups(),
            theta.m()
        )));
    }
    Ok(())
}

/// `η_i = Σ_g' α^{g_i g'} w_i^{g_i g'} u + z_i'β`.
pub fn latent_index(
    theta: &Theta,
    net: &GroupedNetwork,
    design: &DesignMatrix,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_lengths(net, design, theta)?;
    if u.len() != net.n() {
        return Err(Error::Dimension(format!("u has length {} for {} agents", u.len(), net.n())));
    }
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("belief of agent {i}")));
    }
    let zb = design.index(&theta.beta);
    let mut sums = vec![0.0; theta.m()];
    (0..net.n())
        .map(|i| {
            let eta = peer_term(&theta.alpha, net, i, u, &mut sums) + zb[i];
            if eta.is_finite() {
                Ok(eta)
            } else {
                Err(Error::NonFiniteIndex(i))
            }
        })
        .collect()
}

/// Belief matrix `p_{it}`, `n × (R+1)`.
pub fn choice_probabilities(
    theta: &Theta,
    net: &GroupedNetwork,
    design: &DesignMatrix,
    ye: &[f64],
) -> Result<DMatrix<f64>> {
    let eta = latent_index(theta, net, design, ye)?;
    let r = theta.r();
    let mut p = DMatrix::zeros(net.n(), r + 1);
    for (i, &e) in eta.iter().enumerate() {
        let lv = theta.cuts.levels(net.group(i));
        for t in 0..=r {
            p[(i, t)] = normal::interval(e - lv[t], e - lv[t + 1]);
        }
    }
    Ok(p)
}

/// Unique maximiser of the payoff: the number of thresholds at or below
/// `η + ε`.
pub fn best_response(theta: &Theta, g: usize, eta_base: f64, eps: f64) -> usize {
    let lv = theta.cuts.levels(g);
    let v = eta_base + eps;
    lv[1..=theta.r()].partition_point(|&c| c <= v)
}

/// One application of the expected-outcome map `L(u)`.
pub fn expected_outcome_map(
    theta: &Theta,
    net: &GroupedNetwork,
    design: &DesignMatrix,
    u: &[f64],
) -> Result<Vec<f64>> {
    let eta = latent_index(theta, net, design, u)?;
    Ok(eta
        .iter()
        .enumerate()
        .map(|(i, &e)| expected_count(e, theta.cuts.levels(net.group(i))))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    /// `B_g = max_u Σ_t φ(u - γ_g(t))`.
    pub bound_per_group: Vec<f64>,
    /// `1 / B_g`.
    pub limit_per_group: Vec<f64>,
    /// `Σ_g' |α^{gg'}|`.
    pub row_sums: Vec<f64>,
    /// `min_g (1/B_g - Σ_g' |α^{gg'}|)`.
    pub margin: f64,
    /// Lipschitz constant of `L` in the sup norm, `max_g B_g Σ_g' |α^{gg'}|`.
    pub kappa: f64,
    pub pass: bool,
}

fn density_comb(u: f64, levels: &[f64]) -> f64 {
    slope(u, levels)
}

/// Maximum of the density comb over the real line.
pub fn max_density_sum(levels: &[f64]) -> f64 {
    const GRID: usize = 4096;
    let r = levels.len() - 2;
    let lo = levels[1] - 10.0;
    let hi = levels[r] + 10.0;
    let step = (hi - lo) / (GRID - 1) as f64;
    let (best_k, _) = (0..GRID)
        .map(|k| (k, density_comb(lo + step * k as f64, levels)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut a = lo + step * best_k.saturating_sub(1) as f64;
    let mut b = lo + step * (best_k + 1).min(GRID - 1) as f64;
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = density_comb(c, levels);
    let mut fd = density_comb(d, levels);
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = density_comb(c, levels);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = density_comb(d, levels);
        }
    }
    let grid_best = density_comb(lo + step * best_k as f64, levels);
    density_comb(0.5 * (a + b), levels).max(grid_best)
}

/// Sufficient condition for a unique equilibrium: the peer coefficients of
/// each group are small relative to the steepest slope of the expected count.
pub fn contraction_diagnostic(theta: &Theta) -> ContractionReport {
    let bounds: Vec<f64> = (0..theta.m())
        .map(|g| max_density_sum(theta.cuts.levels(g)))
        .collect();
    let limits: Vec<f64> = bounds.iter().map(|b| 1.0 / b).collect();
    let rows = theta.peer_row_sums();
    let margin = limits
        .iter()
        .zip(&rows)
        .map(|(l, s)| l - s)
        .fold(f64::INFINITY, f64::min);
    let kappa = bounds
        .iter()
        .zip(&rows)
        .map(|(b, s)| b * s)
        .fold(0.0, f64::max);
    ContractionReport {
        bound_per_group: bounds,
        limit_per_group: limits,
        row_sums: rows,
        margin,
        kappa,
        pass: margin > 0.0,
    }
}

/// Per-agent conditional mean and variance of the outcome.
pub fn conditional_moments(
    theta: &Theta,
    net: &GroupedNetwork,
    design: &DesignMatrix,
    eq: &EquilibriumState,
) -> Result<Vec<(f64, f64)>> {
    if !eq.converged {
        return Err(Error::NotConverged {
            iterations: eq.iterations,
            residual: eq.residual,
        });
    }
    let eta = latent_index(theta, net, design, &eq.ye)?;
    Ok(eta
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let lv = theta.cuts.levels(net.group(i));
            let mut mean = 0.0;
            let mut second = 0.0;
            for t in 1..=theta.r() {
                let x = e - lv[t];
                if x < -TAIL_CUTOFF {
                    break;
                }
                let f = normal::cdf(x);
                mean += f;
                second += (2 * t - 1) as f64 * f;
            }
            (mean, (second - mean * mean).max(0.0))
        })
        .collect())
}

/// `(Σ_t φ(η - γ(t)))_i` at the given beliefs.
pub fn slopes(
    theta: &Theta,
    net: &GroupedNetwork,
    design: &DesignMatrix,
    u: &[f64],
) -> Result<Vec<f64>> {
    let eta = latent_index(theta, net, design, u)?;
    Ok(eta
        .iter()
        .enumerate()
        .map(|(i, &e)| slope(e, theta.cuts.levels(net.group(i))))
        .collect())
}
