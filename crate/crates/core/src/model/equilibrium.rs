use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_lengths, choice_probabilities, expected_count, peer_term, Theta};
use crate::error::{Error, Result};
use crate::network::{DesignMatrix, GroupedNetwork};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub ye: Vec<f64>,
    /// Sup-norm of the last update, worst subnetwork.
    pub residual: f64,
    /// Iterations used, worst subnetwork.
    pub iterations: usize,
    pub converged: bool,
}

impl EquilibriumState {
    pub fn probabilities(
        &self,
        theta: &Theta,
        net: &GroupedNetwork,
        design: &DesignMatrix,
    ) -> Result<DMatrix<f64>> {
        choice_probabilities(theta, net, design, &self.ye)
    }
}

/// Fixed-point iteration restricted to `agents`, which must be closed under
/// friendship (a whole subnetwork). `zb` is the exogenous index `z_i'β`.
/// Returns `(iterations, residual, converged)`.
pub(crate) fn solve_subnet(
    theta: &Theta,
    net: &GroupedNetwork,
    zb: &[f64],
    u: &mut [f64],
    agents: &[usize],
    tol: f64,
    max_iter: usize,
) -> Result<(usize, f64, bool)> {
    let mut sums = vec![0.0; theta.m()];
    let mut next = vec![0.0; agents.len()];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        residual = 0.0;
        for (slot, &i) in next.iter_mut().zip(agents) {
            let eta = peer_term(&theta.alpha, net, i, u, &mut sums) + zb[i];
            if !eta.is_finite() {
                return Err(Error::NonFiniteIndex(i));
            }
            *slot = expected_count(eta, theta.cuts.levels(net.group(i)));
        }
        for (&v, &i) in next.iter().zip(agents) {
            if v.is_nan() {
                return Err(Error::NanIteration(iter));
            }
            residual = f64::max(residual, (v - u[i]).abs());
            u[i] = v;
        }
        if residual < tol {
            return Ok((iter, residual, true));
        }
    }
    Ok((max_iter, residual, false))
}

/// Equilibrium for an arbitrary exogenous index, subnetwork by subnetwork.
/// Without `u0` iteration starts from the no-peer closed form.
pub fn solve_with_index(
    theta: &Theta,
    net: &GroupedNetwork,
    zb: &[f64],
    u0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumState> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let n = net.n();
    if zb.len() != n {
        return Err(Error::Dimension(format!("index has length {} for {n} agents", zb.len())));
    }
    let mut u = match u0 {
        Some(u0) => {
            if u0.len() != n {
                return Err(Error::Dimension(format!(
                    "starting point has length {} for {n} agents",
                    u0.len()
                )));
            }
            if let Some(i) = u0.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("starting belief of agent {i}")));
            }
            u0.to_vec()
        }
        None => (0..n)
            .map(|i| {
                if zb[i].is_finite() {
                    Ok(expected_count(zb[i], theta.cuts.levels(net.group(i))))
                } else {
                    Err(Error::NonFiniteIndex(i))
                }
            })
            .collect::<Result<_>>()?,
    };
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    let mut converged = true;
    for s in 0..net.n_subnets() {
        let (it, res, ok) = solve_subnet(theta, net, zb, &mut u, net.members(s), tol, max_iter)?;
        iterations = iterations.max(it);
        residual = residual.max(res);
        converged &= ok;
    }
    if !converged {
        log::warn!("equilibrium not reached after {max_iter} iterations (residual {residual:.3e})");
    }
    Ok(EquilibriumState {
        ye: u,
        residual,
        iterations,
        converged,
    })
}

/// Bayesian Nash equilibrium expected outcomes by fixed-point iteration.
pub fn solve_equilibrium(
    theta: &Theta,
    net: &GroupedNetwork,
    design: &DesignMatrix,
    u0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumState> {
    check_lengths(net, design, theta)?;
    let zb = design.index(&theta.beta);
    solve_with_index(theta, net, &zb, u0, tol, max_iter)
}
