use nalgebra::{DMatrix, DVector};

use super::likelihood::{log_interval_derivs, AgentLayout, PseudoLikelihood, PROB_FLOOR};
use super::npl::FitResult;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{count_and_slope, latent_index, Theta};
use crate::network::{DesignMatrix, GroupedNetwork};
use crate::normal;

/// `∂L_i/∂u_j = f*_i α^{g_i g_j} / #friends of i in g_j` as a dense matrix.
pub fn map_jacobian_u(
    theta: &Theta,
    net: &GroupedNetwork,
    design: &DesignMatrix,
    u: &[f64],
) -> Result<DMatrix<f64>> {
    let eta = latent_index(theta, net, design, u)?;
    let n = net.n();
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        let g = net.group(i);
        let f = count_and_slope(eta[i], theta.cuts.levels(g)).1;
        for &k in net.friends(i) {
            let h = net.group(k);
            j[(i, k)] = f * theta.alpha[(g, h)] / net.friends_in_group(i, h) as f64;
        }
    }
    Ok(j)
}

/// `∂L/∂θ'`, `n × p`, in the flat parameter layout.
pub fn map_jacobian_theta(
    theta: &Theta,
    net: &GroupedNetwork,
    design: &DesignMatrix,
    u: &[f64],
) -> Result<DMatrix<f64>> {
    let eta = latent_index(theta, net, design, u)?;
    let means = net.group_means(u);
    let m = theta.m();
    let p = theta.n_params();
    let ppg = theta.cuts.params_per_group();
    let z = design.z();
    let mut out = DMatrix::zeros(net.n(), p);
    let mut dg = vec![0.0; ppg];
    for i in 0..net.n() {
        let g = net.group(i);
        let lv = theta.cuts.levels(g);
        let f = count_and_slope(eta[i], lv).1;
        for h in 0..m {
            out[(i, theta.alpha_index(g, h))] = f * means[i * m + h];
        }
        for k in 0..theta.n_beta() {
            out[(i, theta.beta_offset() + k)] = f * z[(i, k)];
        }
        let co = theta.cuts_offset() + g * ppg;
        for t in 2..=theta.r() {
            let x = eta[i] - lv[t];
            if x < -normal::TAIL_CUTOFF {
                break;
            }
            let d = normal::pdf(x);
            if d == 0.0 {
                continue;
            }
            theta.cuts.dgamma(g, t, &mut dg);
            for k in 0..ppg {
                out[(i, co + k)] -= d * dg[k];
            }
        }
    }
    Ok(out)
}

/// `∂u/∂θ'` at a fixed point, from `(I - ∂_u L) ∂u/∂θ' = ∂_θ L` solved per
/// subnetwork.
pub fn belief_derivative(theta: &Theta, data: &Dataset, u: &[f64]) -> Result<DMatrix<f64>> {
    let net = &data.net;
    let ju = map_jacobian_u(theta, net, &data.design, u)?;
    let jt = map_jacobian_theta(theta, net, &data.design, u)?;
    let p = theta.n_params();
    let mut out = DMatrix::zeros(net.n(), p);
    for s in 0..net.n_subnets() {
        let idx = net.members(s);
        let k = idx.len();
        if k == 0 {
            continue;
        }
        let a = DMatrix::from_fn(k, k, |r, c| {
            let v = -ju[(idx[r], idx[c])];
            if r == c {
                1.0 + v
            } else {
                v
            }
        });
        let rhs = DMatrix::from_fn(k, p, |r, c| jt[(idx[r], c)]);
        let sol = a.lu().solve(&rhs).ok_or(Error::SingularResolvent(s))?;
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(i).copy_from(&sol.row(r));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct VarianceResult {
    /// Full `p × p` covariance; rows and columns of pinned parameters are zero.
    pub vcov: DMatrix<f64>,
    pub pseudo_inverse: bool,
    pub condition_number: f64,
}

/// Sandwich pieces at `(θ, u)`: `H1`, `H2` and `Σ` (all scaled by `1/S`).
pub fn sandwich_parts(
    theta: &Theta,
    u: &[f64],
    data: &Dataset,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let lik = PseudoLikelihood::new(data, u)?;
    let h1 = lik.evaluate(theta, true)?.hess.expect("requested");
    let du = belief_derivative(theta, data, u)?;
    let eta = lik.eta(theta)?;
    let net = &data.net;
    let m = theta.m();
    let p = theta.n_params();
    let r = theta.r();

    let mut h2 = DMatrix::zeros(p, p);
    let mut sigma = DMatrix::zeros(p, p);
    let mut lay = AgentLayout::new(theta);
    let q = lay.idx.len();
    let mut ja = vec![0.0; q];
    let mut jb = vec![0.0; q];
    let mut score = vec![0.0; q];
    let mut gm = DMatrix::zeros(m, p);
    let mut ad = DVector::zeros(p);
    for i in 0..net.n() {
        let g = net.group(i);
        let lv = theta.cuts.levels(g);
        lay.fill(theta, data, i, g, lik.means_of(i));

        // friend averages of ∂u/∂θ' by group, and the peer-weighted sum
        gm.fill(0.0);
        for &j in net.friends(i) {
            let h = net.group(j);
            let mut row = gm.row_mut(h);
            row += du.row(j);
        }
        ad.fill(0.0);
        for h in 0..m {
            let c = net.friends_in_group(i, h);
            if c > 0 {
                let w = theta.alpha[(g, h)];
                for k in 0..p {
                    gm[(h, k)] /= c as f64;
                    ad[k] += w * gm[(h, k)];
                }
            }
        }

        let t = data.y[i];
        let d = log_interval_derivs(eta[i] - lv[t], eta[i] - lv[t + 1]);
        if d.p >= PROB_FLOOR {
            lay.cuts_for(theta, g, t);
            lay.jac(false, &mut ja);
            lay.jac(true, &mut jb);
            let ca = d.laa + d.lab;
            let cb = d.lab + d.lbb;
            for k in 0..q {
                let w = ca * ja[k] + cb * jb[k];
                if w != 0.0 {
                    let rk = lay.idx[k];
                    for c in 0..p {
                        h2[(rk, c)] += w * ad[c];
                    }
                }
            }
            let l = d.la + d.lb;
            for h in 0..m {
                let rk = theta.alpha_index(g, h);
                for c in 0..p {
                    h2[(rk, c)] += l * gm[(h, c)];
                }
            }
        }

        for tt in 0..=r {
            let a = eta[i] - lv[tt];
            let b = eta[i] - lv[tt + 1];
            if a < -normal::TAIL_CUTOFF {
                break;
            }
            let dd = log_interval_derivs(a, b);
            if !(dd.p > 1e-20) {
                continue;
            }
            lay.cuts_for(theta, g, tt);
            lay.jac(false, &mut ja);
            lay.jac(true, &mut jb);
            for k in 0..q {
                score[k] = dd.la * ja[k] + dd.lb * jb[k];
            }
            for k in 0..q {
                let w = dd.p * score[k];
                if w == 0.0 {
                    continue;
                }
                for l in 0..q {
                    sigma[(lay.idx[k], lay.idx[l])] += w * score[l];
                }
            }
        }
    }
    let scale = 1.0 / data.n_subnets() as f64;
    h2 *= scale;
    sigma *= scale;
    Ok((h1, h2, sigma))
}

/// Sandwich covariance at `(θ, u)` over the free coordinates.
pub fn npl_variance_at(
    theta: &Theta,
    u: &[f64],
    data: &Dataset,
    free: Option<&[bool]>,
) -> Result<VarianceResult> {
    let p = theta.n_params();
    let idx: Vec<usize> = match free {
        Some(f) => (0..p).filter(|&k| f[k]).collect(),
        None => (0..p).collect(),
    };
    let (h1, h2, sigma) = sandwich_parts(theta, u, data)?;
    let k = idx.len();
    let bread = DMatrix::from_fn(k, k, |a, b| h1[(idx[a], idx[b])] + h2[(idx[a], idx[b])]);
    let meat = DMatrix::from_fn(k, k, |a, b| sigma[(idx[a], idx[b])]);
    let svd = bread.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let eps = (k as f64) * f64::EPSILON * smax;
    let (inv, pinv) = match bread.clone().try_inverse() {
        Some(inv) if smin > eps && cond < 1e14 => (inv, false),
        _ => (
            svd.pseudo_inverse(eps)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?,
            true,
        ),
    };
    let s = data.n_subnets() as f64;
    let v = &inv * meat * inv.transpose() / s;
    let mut full = DMatrix::zeros(p, p);
    for a in 0..k {
        for b in 0..k {
            full[(idx[a], idx[b])] = 0.5 * (v[(a, b)] + v[(b, a)]);
        }
    }
    if full.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sandwich covariance".into()));
    }
    if pinv {
        log::warn!("bread matrix is singular (condition {cond:.2e}); using a pseudo-inverse");
    }
    Ok(VarianceResult {
        vcov: full,
        pseudo_inverse: pinv,
        condition_number: cond,
    })
}

/// Sandwich covariance of a fitted model.
pub fn npl_variance(fit: &FitResult, data: &Dataset) -> Result<VarianceResult> {
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.outer_iterations,
            residual: fit.fixed_point_residual,
        });
    }
    npl_variance_at(&fit.theta, &fit.u, data, None)
}

impl FitResult {
    /// Attaches the sandwich covariance.
    pub fn with_variance(mut self, data: &Dataset) -> Result<Self> {
        let v = npl_variance(&self, data)?;
        let p = self.n_params;
        self.vcov = Some((0..p * p).map(|k| v.vcov[(k / p, k % p)]).collect());
        self.vcov_pseudo_inverse = v.pseudo_inverse;
        if v.pseudo_inverse {
            self.warnings.push("covariance uses a pseudo-inverse of a singular bread".into());
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{expected_outcome_map, solve_equilibrium, testutil::random_instance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn map_jacobians_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..10 {
            let m = 1 + trial % 2;
            let r = rng.gen_range(1..=8);
            let switch = rng.gen_range(1..=r);
            let (net, design, theta) = random_instance(&mut rng, 12, m, r, switch);
            let u: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..r as f64)).collect();
            let ju = map_jacobian_u(&theta, &net, &design, &u).unwrap();
            let jt = map_jacobian_theta(&theta, &net, &design, &u).unwrap();
            let h = 1e-6;
            for j in 0..12 {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[j] += h;
                dn[j] -= h;
                let a = expected_outcome_map(&theta, &net, &design, &up).unwrap();
                let b = expected_outcome_map(&theta, &net, &design, &dn).unwrap();
                for i in 0..12 {
                    let fd = (a[i] - b[i]) / (2.0 * h);
                    assert!((fd - ju[(i, j)]).abs() <= 1e-6 * ju[(i, j)].abs().max(1.0));
                }
            }
            let v = theta.to_vec();
            for k in 0..v.len() {
                let mut up = v.clone();
                let mut dn = v.clone();
                up[k] += h;
                dn[k] -= h;
                let a = expected_outcome_map(&theta.with_vec(&up).unwrap(), &net, &design, &u).unwrap();
                let b = expected_outcome_map(&theta.with_vec(&dn).unwrap(), &net, &design, &u).unwrap();
                for i in 0..12 {
                    let fd = (a[i] - b[i]) / (2.0 * h);
                    assert!(
                        (fd - jt[(i, k)]).abs() <= 1e-6 * jt[(i, k)].abs().max(1.0),
                        "({i},{k}) {fd} vs {}",
                        jt[(i, k)]
                    );
                }
            }
        }
    }

    #[test]
    fn belief_derivative_matches_resolving() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (net, design, theta) = random_instance(&mut rng, 10, 2, 5, 3);
        let y = vec![0; 10];
        let data = Dataset::new(net, design, y, 5).unwrap();
        let eq = solve_equilibrium(&theta, &data.net, &data.design, None, 1e-14, 5000).unwrap();
        let du = belief_derivative(&theta, &data, &eq.ye).unwrap();
        let v = theta.to_vec();
        let h = 1e-6;
        for k in 0..v.len() {
            let mut up = v.clone();
            let mut dn = v.clone();
            up[k] += h;
            dn[k] -= h;
            let a = solve_equilibrium(&theta.with_vec(&up).unwrap(), &data.net, &data.design, Some(&eq.ye), 1e-14, 5000)
                .unwrap();
            let b = solve_equilibrium(&theta.with_vec(&dn).unwrap(), &data.net, &data.design, Some(&eq.ye), 1e-14, 5000)
                .unwrap();
            for i in 0..10 {
                let fd = (a.ye[i] - b.ye[i]) / (2.0 * h);
                assert!((fd - du[(i, k)]).abs() < 1e-6 * du[(i, k)].abs().max(1.0));
            }
        }
    }

    /// `∂²L/∂θ∂u' · D` by differencing the likelihood gradient in `u`.
    #[test]
    fn cross_derivative_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (net, design, theta) = random_instance(&mut rng, 10, 2, 4, 2);
        let y: Vec<usize> = (0..10).map(|_| rng.gen_range(0..=4)).collect();
        let data = Dataset::new(net, design, y, 4).unwrap();
        let eq = solve_equilibrium(&theta, &data.net, &data.design, None, 1e-14, 5000).unwrap();
        let (_, h2, _) = sandwich_parts(&theta, &eq.ye, &data).unwrap();
        let du = belief_derivative(&theta, &data, &eq.ye).unwrap();
        let h = 1e-6;
        for k in 0..theta.n_params() {
            let up: Vec<f64> = eq.ye.iter().enumerate().map(|(i, v)| v + h * du[(i, k)]).collect();
            let dn: Vec<f64> = eq.ye.iter().enumerate().map(|(i, v)| v - h * du[(i, k)]).collect();
            let gu = PseudoLikelihood::new(&data, &up).unwrap().evaluate(&theta, false).unwrap().grad;
            let gd = PseudoLikelihood::new(&data, &dn).unwrap().evaluate(&theta, false).unwrap().grad;
            for l in 0..theta.n_params() {
                let fd = (gu[l] - gd[l]) / (2.0 * h);
                assert!((fd - h2[(l, k)]).abs() < 1e-5 * h2[(l, k)].abs().max(1.0));
            }
        }
    }
}
