//! Direct, indirect and total marginal effects, delta-method standard errors
//! and counterfactual group compositions.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::model::{slopes, solve_subnet, solve_with_index, EquilibriumState, Theta};
use crate::network::{build_design_named, DesignMatrix, GroupedNetwork};
use crate::simulate::stream_rng;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EffectSettings {
    /// Equilibrium tolerance for every re-solve.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EffectSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeerEffect {
    pub group: usize,
    pub peer_group: usize,
    /// `α^{gg'}` times the mean slope over agents in group `g`.
    pub dme: f64,
    /// Same sum divided by the whole sample size.
    pub dme_population: f64,
    pub se: Option<f64>,
    pub se_population: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableEffect {
    pub name: String,
    pub discrete: bool,
    pub dme: f64,
    /// Effect of the friends' average of the covariate, equilibrium fixed.
    pub contextual_dme: f64,
    pub ime: f64,
    pub total: f64,
    pub dme_se: Option<f64>,
    pub contextual_dme_se: Option<f64>,
    pub ime_se: Option<f64>,
    pub total_se: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectsReport {
    pub peer: Vec<PeerEffect>,
    pub variables: Vec<VariableEffect>,
    /// Mean slope `f*` per group.
    pub mean_slope: Vec<f64>,
}

impl EffectsReport {
    /// Flat vector used by the delta method: peer DMEs (within-group, then
    /// population), then per variable `dme, contextual, ime, total`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.peer.iter().map(|p| p.dme).collect();
        v.extend(self.peer.iter().map(|p| p.dme_population));
        for e in &self.variables {
            v.extend([e.dme, e.contextual_dme, e.ime, e.total]);
        }
        v
    }

    fn attach_se(&mut self, se: &[f64]) {
        let np = self.peer.len();
        for (k, p) in self.peer.iter_mut().enumerate() {
            p.se = Some(se[k]);
            p.se_population = Some(se[np + k]);
        }
        for (k, e) in self.variables.iter_mut().enumerate() {
            let b = 2 * np + 4 * k;
            e.dme_se = Some(se[b]);
            e.contextual_dme_se = Some(se[b + 1]);
            e.ime_se = Some(se[b + 2]);
            e.total_se = Some(se[b + 3]);
        }
    }
}

fn require_converged(eq: &EquilibriumState) -> Result<()> {
    if eq.converged {
        Ok(())
    } else {
        Err(Error::NotConverged {
            iterations: eq.iterations,
            residual: eq.residual,
        })
    }
}

fn is_binary(design: &DesignMatrix, k: usize) -> bool {
    design.x().column(k).iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Effects holding the equilibrium fixed. Indirect and total fields are
/// left at zero.
pub fn direct_marginal_effects(theta: &Theta, data: &Dataset, eq: &EquilibriumState) -> Result<EffectsReport> {
    require_converged(eq)?;
    let f = slopes(theta, &data.net, &data.design, &eq.ye)?;
    Ok(direct_from_slopes(theta, data, &f))
}

fn direct_from_slopes(theta: &Theta, data: &Dataset, f: &[f64]) -> EffectsReport {
    let n = data.n();
    let m = theta.m();
    let mut sum = vec![0.0; m];
    let mut count = vec![0usize; m];
    for i in 0..n {
        let g = data.net.group(i);
        sum[g] += f[i];
        count[g] += 1;
    }
    let mean_slope: Vec<f64> = (0..m)
        .map(|g| if count[g] > 0 { sum[g] / count[g] as f64 } else { 0.0 })
        .collect();
    let mut peer = Vec::with_capacity(m * m);
    for g in 0..m {
        for h in 0..m {
            peer.push(PeerEffect {
                group: g,
                peer_group: h,
                dme: theta.alpha[(g, h)] * mean_slope[g],
                dme_population: theta.alpha[(g, h)] * sum[g] / n as f64,
                se: None,
                se_population: None,
            });
        }
    }
    let avg = f.iter().sum::<f64>() / n as f64;
    let design = &data.design;
    let variables = (0..design.n_covariates())
        .map(|k| VariableEffect {
            name: design.column_names()[design.own_column(k)].clone(),
            discrete: is_binary(design, k),
            dme: theta.beta[design.own_column(k)] * avg,
            contextual_dme: theta.beta[design.contextual_column(k)] * avg,
            ime: 0.0,
            total: 0.0,
            dme_se: None,
            contextual_dme_se: None,
            ime_se: None,
            total_se: None,
        })
        .collect();
    EffectsReport {
        peer,
        variables,
        mean_slope,
    }
}

/// Mean total effect of raising covariate `k` by one for every agent:
/// `(I - D A)^{-1} D (β₁ 1 + β₂ W 1)` per subnetwork, averaged.
pub fn resolvent_total_effect(theta: &Theta, data: &Dataset, f: &[f64], k: usize) -> Result<f64> {
    let design = &data.design;
    let b1 = theta.beta[design.own_column(k)];
    let b2 = theta.beta[design.contextual_column(k)];
    let net = &data.net;
    let a = net.peer_operator(&theta.alpha);
    let mut total = 0.0;
    for s in 0..net.n_subnets() {
        let members = net.members(s);
        let ns = members.len();
        let mut local = vec![usize::MAX; net.n()];
        for (r, &i) in members.iter().enumerate() {
            local[i] = r;
        }
        let mut mat = DMatrix::<f64>::identity(ns, ns);
        let mut rhs = DVector::<f64>::zeros(ns);
        for (r, &i) in members.iter().enumerate() {
            for (j, w) in a.row(i) {
                mat[(r, local[j])] -= f[i] * w;
            }
            let has_friends = if net.out_degree(i) > 0 { 1.0 } else { 0.0 };
            rhs[r] = f[i] * (b1 + b2 * has_friends);
        }
        let sol = mat.lu().solve(&rhs).ok_or(Error::SingularResolvent(s))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularResolvent(s));
        }
        total += sol.sum();
    }
    Ok(total / net.n() as f64)
}

/// Mean over agents `j` of the summed change in expected outcomes when
/// binary covariate `k` of agent `j` alone is flipped to 1 from 0.
pub fn flip_total_effect(
    theta: &Theta,
    data: &Dataset,
    ye: &[f64],
    k: usize,
    settings: &EffectSettings,
) -> Result<f64> {
    let net = &data.net;
    let design = &data.design;
    let n = net.n();
    let b1 = theta.beta[design.own_column(k)];
    let b2 = theta.beta[design.contextual_column(k)];
    let zb = design.index(&theta.beta);
    // agents whose contextual average includes j, with weight
    let mut followers: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let d = net.out_degree(i) as f64;
        for &j in net.friends(i) {
            followers[j].push((i, 1.0 / d));
        }
    }
    let mut zf = zb.clone();
    let mut u = ye.to_vec();
    let mut total = 0.0;
    for j in 0..n {
        let x = design.x()[(j, k)];
        let delta = 1.0 - 2.0 * x;
        zf[j] += b1 * delta;
        for &(i, w) in &followers[j] {
            zf[i] += b2 * w * delta;
        }
        let members = net.members(net.subnet(j));
        let (iters, residual, ok) = solve_subnet(theta, net, &zf, &mut u, members, settings.tol, settings.max_iter)?;
        if !ok {
            return Err(Error::NotConverged {
                iterations: iters,
                residual,
            });
        }
        let change: f64 = members.iter().map(|&i| u[i] - ye[i]).sum();
        // orient as x: 0 -> 1
        total += if x == 0.0 { change } else { -change };
        for &i in members {
            u[i] = ye[i];
        }
        zf[j] = zb[j];
        for &(i, _) in &followers[j] {
            zf[i] = zb[i];
        }
    }
    Ok(total / n as f64)
}

/// Equilibrium at `theta`, optionally warm-started.
pub fn equilibrium_at(theta: &Theta, data: &Dataset, u0: Option<&[f64]>, settings: &EffectSettings) -> Result<EquilibriumState> {
    let zb = data.design.index(&theta.beta);
    let eq = solve_with_index(theta, &data.net, &zb, u0, settings.tol, settings.max_iter)?;
    require_converged(&eq)?;
    Ok(eq)
}

/// Direct, indirect and total effects at a converged equilibrium. Binary
/// covariates use flip-and-resolve; others the resolvent.
pub fn indirect_and_total_effects(
    theta: &Theta,
    data: &Dataset,
    eq: &EquilibriumState,
    settings: &EffectSettings,
) -> Result<EffectsReport> {
    require_converged(eq)?;
    let f = slopes(theta, &data.net, &data.design, &eq.ye)?;
    let mut report = direct_from_slopes(theta, data, &f);
    for (k, e) in report.variables.iter_mut().enumerate() {
        e.total = if e.discrete {
            flip_total_effect(theta, data, &eq.ye, k, settings)?
        } else {
            resolvent_total_effect(theta, data, &f, k)?
        };
        e.ime = e.total - e.dme;
    }
    Ok(report)
}

/// Full report at `theta`, solving the equilibrium from `u0`.
pub fn effects_at(theta: &Theta, data: &Dataset, u0: Option<&[f64]>, settings: &EffectSettings) -> Result<EffectsReport> {
    let eq = equilibrium_at(theta, data, u0, settings)?;
    indirect_and_total_effects(theta, data, &eq, settings)
}

/// `sqrt(diag(J V J'))` with `J` the central-difference Jacobian of
/// `effect_fn` at `theta`. Coordinates with zero variance are skipped.
/// `step_scale` multiplies the default step `max(1e-6, 1e-6 |θ_k|)`.
pub fn delta_method_se_at<F>(theta: &Theta, vcov: &DMatrix<f64>, effect_fn: F, step_scale: f64) -> Result<Vec<f64>>
where
    F: Fn(&Theta) -> Result<Vec<f64>> + Sync,
{
    let x0 = theta.to_vec();
    let p = x0.len();
    if vcov.nrows() != p || vcov.ncols() != p {
        return Err(Error::Dimension(format!("covariance is {}x{} for {p} parameters", vcov.nrows(), vcov.ncols())));
    }
    let active: Vec<usize> = (0..p).filter(|&k| vcov[(k, k)] > 0.0).collect();
    let cols: Vec<Vec<f64>> = active
        .par_iter()
        .map(|&k| {
            let h = step_scale * f64::max(1e-6, 1e-6 * x0[k].abs());
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = effect_fn(&theta.with_vec(&xp)?)?;
            let fm = effect_fn(&theta.with_vec(&xm)?)?;
            if fp.len() != fm.len() {
                return Err(Error::Dimension("effect vector changed length".into()));
            }
            Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect::<Result<_>>()?;
    let q = match cols.first() {
        Some(c) => c.len(),
        None => return Ok(vec![0.0; effect_fn(theta)?.len()]),
    };
    if cols.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("delta-method Jacobian".into()));
    }
    let na = active.len();
    let jac = DMatrix::from_fn(q, na, |r, c| cols[c][r]);
    let v = DMatrix::from_fn(na, na, |a, b| vcov[(active[a], active[b])]);
    let jv = &jac * v;
    Ok((0..q)
        .map(|r| jv.row(r).dot(&jac.row(r)).max(0.0).sqrt())
        .collect())
}

/// Delta-method standard errors of `effect_fn` at a fitted model.
pub fn delta_method_se<F>(fit: &FitResult, effect_fn: F) -> Result<Vec<f64>>
where
    F: Fn(&Theta) -> Result<Vec<f64>> + Sync,
{
    let vcov = fit
        .vcov_matrix()
        .ok_or_else(|| Error::InvalidParameter("fit has no covariance matrix".into()))?;
    delta_method_se_at(&fit.theta, &vcov, effect_fn, 1.0)
}

/// Effects at the fitted parameters with delta-method standard errors.
pub fn fitted_effects(fit: &FitResult, data: &Dataset, settings: &EffectSettings) -> Result<EffectsReport> {
    let mut report = effects_at(&fit.theta, data, Some(&fit.u), settings)?;
    let base = equilibrium_at(&fit.theta, data, Some(&fit.u), settings)?.ye;
    let se = delta_method_se(fit, |t| Ok(effects_at(t, data, Some(&base), settings)?.to_vec()))?;
    report.attach_se(&se);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    /// Uniform random nested permutation per subnetwork.
    Random,
    /// Currently selected agents come first, in index order.
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualSettings {
    pub shares: Vec<f64>,
    /// Covariate set to 1 for selected agents and 0 otherwise.
    pub covariate: Option<usize>,
    pub assignment: Assignment,
    /// Replace the network by the empty graph.
    pub no_interaction: bool,
    pub seed: u64,
    pub effects: EffectSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualPoint {
    pub share: f64,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub converged: bool,
}

/// Agents "selected" in the observed data: group 1 when `M = 2`, otherwise
/// a value of 1 on the covariate.
fn observed_selection(data: &Dataset, covariate: Option<usize>) -> Vec<bool> {
    (0..data.n())
        .map(|i| match covariate {
            _ if data.net.n_groups() == 2 => data.net.group(i) == 1,
            Some(k) => data.design.x()[(i, k)] == 1.0,
            None => false,
        })
        .collect()
}

/// Dataset with the first `round(share n_s)` agents of each subnetwork's
/// ordering selected.
fn assign(
    data: &Dataset,
    orders: &[Vec<usize>],
    share: f64,
    settings: &CounterfactualSettings,
) -> Result<Dataset> {
    let n = data.n();
    let mut selected = vec![false; n];
    for order in orders {
        let take = (share * order.len() as f64).round() as usize;
        for &i in &order[..take.min(order.len())] {
            selected[i] = true;
        }
    }
    let base_net = if settings.no_interaction {
        data.net.without_edges()
    } else {
        data.net.clone()
    };
    let net: GroupedNetwork = if data.net.n_groups() == 2 {
        base_net.with_groups(selected.iter().map(|&s| usize::from(s)).collect(), 2)?
    } else {
        base_net
    };
    let mut x = data.design.x().clone();
    if let Some(k) = settings.covariate {
        for i in 0..n {
            x[(i, k)] = if selected[i] { 1.0 } else { 0.0 };
        }
    }
    let k = data.design.n_covariates();
    let first = data.design.n_intercepts();
    let names = data.design.column_names()[first..first + k].to_vec();
    let design = build_design_named(&net, &x, data.design.fixed_effects(), Some(&names))?;
    Dataset::new(net, design, data.y.clone(), data.r)
}

/// Mean expected outcome as the selected share varies, network and other
/// covariates held fixed. Standard errors reflect parameter uncertainty only.
pub fn counterfactual(fit: &FitResult, data: &Dataset, settings: &CounterfactualSettings) -> Result<Vec<CounterfactualPoint>> {
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.outer_iterations,
            residual: fit.fixed_point_residual,
        });
    }
    if data.net.n_groups() > 2 {
        return Err(Error::InvalidParameter("counterfactual assignment needs at most two groups".into()));
    }
    if data.net.n_groups() == 1 && settings.covariate.is_none() {
        return Err(Error::InvalidParameter("with one group a covariate to reassign is required".into()));
    }
    if let Some(k) = settings.covariate {
        if k >= data.design.n_covariates() {
            return Err(Error::InvalidParameter(format!("covariate {k} out of range")));
        }
    }
    if let Some(s) = settings.shares.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidParameter(format!("share {s} outside [0, 1]")));
    }
    let observed = observed_selection(data, settings.covariate);
    let mut rng = stream_rng(settings.seed, 0);
    let orders: Vec<Vec<usize>> = (0..data.n_subnets())
        .map(|s| {
            let mut order = data.net.members(s).to_vec();
            match settings.assignment {
                Assignment::Random => order.shuffle(&mut rng),
                Assignment::Identity => order.sort_by_key(|&i| !observed[i]),
            }
            order
        })
        .collect();
    let vcov = fit.vcov_matrix();
    let points = settings
        .shares
        .par_iter()
        .map(|&share| {
            let failed = CounterfactualPoint {
                share,
                mean: None,
                se: None,
                converged: false,
            };
            let cf = match assign(data, &orders, share, settings) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("share {share}: {e}");
                    return failed;
                }
            };
            let mean_at = |t: &Theta, u0: Option<&[f64]>| -> Result<(f64, Vec<f64>)> {
                let eq = equilibrium_at(t, &cf, u0, &settings.effects)?;
                Ok((eq.ye.iter().sum::<f64>() / eq.ye.len() as f64, eq.ye))
            };
            let (mean, ye) = match mean_at(&fit.theta, None) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("share {share}: {e}");
                    return failed;
                }
            };
            let se = vcov.as_ref().and_then(|v| {
                delta_method_se_at(&fit.theta, v, |t| Ok(vec![mean_at(t, Some(&ye))?.0]), 1.0)
                    .map_err(|e| log::warn!("share {share}: standard error failed: {e}"))
                    .ok()
                    .map(|s| s[0])
            });
            CounterfactualPoint {
                share,
                mean: Some(mean),
                se,
                converged: true,
            }
        })
        .collect();
    Ok(points)
}
