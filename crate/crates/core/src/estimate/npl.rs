use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::likelihood::PseudoLikelihood;
use super::optimizer::{maximize, InnerMethod, InnerResult, InnerSettings};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{contraction_diagnostic, expected_outcome_map, ContractionReport, CutPointSpec, Theta};
use crate::normal;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum U0Policy {
    /// Observed outcomes.
    Observed,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NplSettings {
    pub inner: InnerSettings,
    /// Joint sup-norm change in `(θ, u)` that ends the outer loop.
    pub tol_outer: f64,
    pub max_outer: usize,
    pub u0: U0Policy,
    pub max_restarts: usize,
    /// Seed for restart perturbations.
    pub seed: u64,
}

impl Default for NplSettings {
    fn default() -> Self {
        Self {
            inner: InnerSettings::default(),
            tol_outer: 1e-6,
            max_outer: 500,
            u0: U0Policy::Observed,
            max_restarts: 3,
            seed: 0,
        }
    }
}

impl NplSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner.tol > 0.0 && self.tol_outer > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NplStep {
    pub iteration: usize,
    pub loglik: f64,
    pub theta_change: f64,
    pub u_change: f64,
    pub inner_iterations: usize,
    pub grad_norm: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpacingCheck {
    pub group: usize,
    pub min_spacing: Option<f64>,
    pub peer_sum: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Theta,
    pub param_names: Vec<String>,
    /// Beliefs at which `θ̂` maximises the pseudo-likelihood.
    pub u: Vec<f64>,
    pub loglik: f64,
    pub n_params: usize,
    /// `-2 S loglik + k log n`.
    pub bic: f64,
    /// `-2 S loglik + k log S`.
    pub bic_log_s: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    /// `‖u - L(θ̂, u)‖_∞`.
    pub fixed_point_residual: f64,
    /// `‖∇_θ L(θ̂, u)‖_∞`.
    pub inner_grad_norm: f64,
    pub floored: usize,
    pub contraction: ContractionReport,
    pub spacing: Vec<SpacingCheck>,
    pub trace: Vec<NplStep>,
    pub warnings: Vec<String>,
    /// Row-major sandwich covariance, when computed.
    pub vcov: Option<Vec<f64>>,
    pub vcov_pseudo_inverse: bool,
}

impl FitResult {
    pub fn vcov_matrix(&self) -> Option<DMatrix<f64>> {
        let p = self.n_params;
        self.vcov.as_ref().map(|v| DMatrix::from_row_slice(p, p, v))
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.vcov_matrix()
            .map(|v| (0..self.n_params).map(|k| v[(k, k)].max(0.0).sqrt()).collect())
    }
}

fn clipped_quantile(p: f64, n: usize) -> f64 {
    let eps = 0.5 / n.max(1) as f64;
    normal::quantile(p.clamp(eps, 1.0 - eps))
}

/// Starting thresholds from marginal frequencies: `γ(t) ≈ c - Φ⁻¹(P(y ≥ t))`.
fn initial_cuts(data: &Dataset, switch: usize) -> Result<(CutPointSpec, f64)> {
    let r = data.r;
    let m = data.net.n_groups();
    let s = switch.min(r);
    let upper_share = |g: Option<usize>| -> (Vec<f64>, usize) {
        let ys: Vec<usize> = (0..data.n())
            .filter(|&i| g.map_or(true, |g| data.net.group(i) == g))
            .map(|i| data.y[i])
            .collect();
        let n = ys.len();
        let mut counts = vec![0usize; r + 2];
        for &y in &ys {
            counts[y] += 1;
        }
        let mut at_least = vec![0.0; r + 2];
        let mut acc = 0usize;
        for t in (0..=r).rev() {
            acc += counts[t];
            at_least[t] = acc as f64 / n.max(1) as f64;
        }
        (at_least, n)
    };
    let (pooled, n_all) = upper_share(None);
    let intercept = clipped_quantile(pooled[1], n_all);
    let mut deltas = Vec::with_capacity(m);
    let mut tails = Vec::with_capacity(m);
    for g in 0..m {
        let (share, n) = upper_share(Some(g));
        let q = |t: usize| clipped_quantile(share[t], n);
        deltas.push((2..=s).map(|t| (q(t - 1) - q(t)).clamp(0.05, 5.0)).collect::<Vec<_>>());
        let top = (1..=r).rev().find(|&t| share[t] * n as f64 >= 1.0).unwrap_or(1);
        let tail = if top > s {
            (q(s) - q(top)) / (top - s) as f64
        } else {
            0.5
        };
        tails.push(tail.clamp(0.05, 5.0));
    }
    Ok((CutPointSpec::new(r, switch, deltas, tails)?, intercept))
}

/// No-peer ordered-probit fit used to start the outer loop.
pub fn initial_theta(data: &Dataset, switch: usize, inner: &InnerSettings) -> Result<Theta> {
    let (cuts, intercept) = initial_cuts(data, switch)?;
    let m = data.net.n_groups();
    let mut beta = DVector::zeros(data.design.n_cols());
    for k in 0..data.design.n_intercepts() {
        beta[k] = intercept;
    }
    let theta = Theta::new(DMatrix::zeros(m, m), beta, cuts)?;
    let u = data.y_f64();
    let lik = PseudoLikelihood::new(data, &u)?;
    let mut free = vec![true; theta.n_params()];
    free[..theta.n_alpha()].iter_mut().for_each(|v| *v = false);
    let res = run_inner(&lik, &theta, &free, inner)?;
    if !res.converged {
        log::debug!("starting ordered fit stopped at gradient {:.2e}", res.grad_norm);
    }
    theta.with_vec(&res.x)
}

pub(crate) fn run_inner(
    lik: &PseudoLikelihood,
    theta: &Theta,
    free: &[bool],
    settings: &InnerSettings,
) -> Result<InnerResult> {
    let template = theta.clone();
    let mut f = |x: &[f64], hess: bool| {
        let t = template.with_vec(x)?;
        let e = lik.evaluate(&t, hess && settings.method == InnerMethod::Newton)?;
        Ok((e.value, e.grad, e.hess))
    };
    maximize(&mut f, &theta.to_vec(), free, settings)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Nested pseudo-likelihood with the default start.
pub fn npl_estimate(data: &Dataset, switch: usize, settings: &NplSettings) -> Result<FitResult> {
    settings.validate()?;
    let theta0 = initial_theta(data, switch, &settings.inner)?;
    let u0 = match &settings.u0 {
        U0Policy::Observed => data.y_f64(),
        U0Policy::Given(u) => u.clone(),
    };
    npl_estimate_from(data, theta0, u0, settings)
}

/// Nested pseudo-likelihood from explicit starting values.
pub fn npl_estimate_from(
    data: &Dataset,
    theta0: Theta,
    u0: Vec<f64>,
    settings: &NplSettings,
) -> Result<FitResult> {
    settings.validate()?;
    if u0.len() != data.n() {
        return Err(Error::Dimension(format!("u0 has length {} for {} agents", u0.len(), data.n())));
    }
    let free = vec![true; theta0.n_params()];
    let mut rng = ChaCha20Rng::seed_from_u64(settings.seed);
    let jitter = Normal::new(0.0, 0.05).expect("valid normal");

    let mut theta = theta0;
    let mut u = u0;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut prev_ll: Option<f64> = None;
    let mut converged = false;
    let mut out_theta = theta.clone();
    let mut out_u = u.clone();

    for k in 1..=settings.max_outer {
        let lik = PseudoLikelihood::new(data, &u)?;
        let mut res = run_inner(&lik, &theta, &free, &settings.inner);
        let mut restarts = 0;
        while !matches!(&res, Ok(r) if r.converged) && restarts < settings.max_restarts {
            restarts += 1;
            let mut x = theta.to_vec();
            x.iter_mut().for_each(|v| *v += jitter.sample(&mut rng));
            let start = match theta.with_vec(&x) {
                Ok(t) => t,
                Err(_) => continue,
            };
            let mut inner = settings.inner;
            if restarts == settings.max_restarts {
                inner.method = match inner.method {
                    InnerMethod::Newton => InnerMethod::Bfgs,
                    InnerMethod::Bfgs => InnerMethod::Newton,
                };
            }
            res = run_inner(&lik, &start, &free, &inner);
        }
        let inner = match res {
            Ok(r) if r.converged => r,
            Ok(r) => {
                warnings.push(format!(
                    "inner maximisation failed at outer iteration {k} (gradient {:.2e})",
                    r.grad_norm
                ));
                out_theta = theta.with_vec(&r.x)?;
                out_u = u.clone();
                break;
            }
            Err(e) => {
                warnings.push(format!("inner maximisation failed at outer iteration {k}: {e}"));
                break;
            }
        };
        let theta_new = theta.with_vec(&inner.x)?;
        let u_new = expected_outcome_map(&theta_new, &data.net, &data.design, &u)?;
        if u_new.iter().any(|v| v.is_nan()) {
            return Err(Error::NanBeliefs(k));
        }
        let dtheta = sup_diff(&theta_new.to_vec(), &theta.to_vec());
        let du = sup_diff(&u_new, &u);
        if let Some(p) = prev_ll {
            if inner.value < p - 1e-8 {
                warnings.push(format!(
                    "pseudo-likelihood decreased at outer iteration {k} ({p:.10} -> {:.10})",
                    inner.value
                ));
            }
        }
        prev_ll = Some(inner.value);
        trace.push(NplStep {
            iteration: k,
            loglik: inner.value,
            theta_change: dtheta,
            u_change: du,
            inner_iterations: inner.iterations,
            grad_norm: inner.grad_norm,
            restarts,
        });
        out_theta = theta_new.clone();
        out_u = u.clone();
        if dtheta < settings.tol_outer && du < settings.tol_outer {
            converged = true;
            break;
        }
        theta = theta_new;
        u = u_new;
    }
    if !converged && trace.len() == settings.max_outer {
        warnings.push(format!("outer loop stopped after {} iterations", settings.max_outer));
    }
    finish(data, out_theta, out_u, trace, warnings, converged)
}

fn finish(
    data: &Dataset,
    theta: Theta,
    u: Vec<f64>,
    trace: Vec<NplStep>,
    mut warnings: Vec<String>,
    mut converged: bool,
) -> Result<FitResult> {
    let lik = PseudoLikelihood::new(data, &u)?;
    let eval = lik.evaluate(&theta, false)?;
    let grad_norm = eval.grad.amax();
    let lu = expected_outcome_map(&theta, &data.net, &data.design, &u)?;
    let residual = sup_diff(&lu, &u);
    if !eval.value.is_finite() {
        converged = false;
    }
    if eval.floored > 0 {
        warnings.push(format!("{} probabilities floored at the estimate", eval.floored));
    }
    let contraction = contraction_diagnostic(&theta);
    if !contraction.pass {
        warnings.push(format!(
            "uniqueness condition fails at the estimate (margin {:.4})",
            contraction.margin
        ));
    }
    let rows = theta.peer_row_sums();
    let spacing = (0..theta.m())
        .map(|g| {
            let min_spacing = theta.cuts.min_spacing(g);
            SpacingCheck {
                group: g,
                min_spacing,
                peer_sum: rows[g],
                satisfied: min_spacing.map_or(true, |d| d > rows[g]),
            }
        })
        .collect();
    let k = theta.n_params();
    let s = data.n_subnets() as f64;
    let dev = -2.0 * s * eval.value;
    let names = theta.param_names(Some(data.design.column_names()));
    Ok(FitResult {
        param_names: names,
        n_params: k,
        bic: dev + k as f64 * (data.n() as f64).ln(),
        bic_log_s: dev + k as f64 * s.ln(),
        loglik: eval.value,
        outer_iterations: trace.len(),
        converged,
        fixed_point_residual: residual,
        inner_grad_norm: grad_norm,
        floored: eval.floored,
        contraction,
        spacing,
        trace,
        warnings,
        theta,
        u,
        vcov: None,
        vcov_pseudo_inverse: false,
    })
}
