use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{check_lengths, Theta};
use crate::normal::{self, x_pdf};

pub const PROB_FLOOR: f64 = 1e-300;

/// Pseudo-likelihood `(1/S) Σ_i log p_{i,y_i}(θ, u)` with the beliefs `u`
/// held fixed. Friend averages of `u` are computed once.
pub struct PseudoLikelihood<'a> {
    data: &'a Dataset,
    means: Vec<f64>,
    m: usize,
}

#[derive(Debug, Clone)]
pub struct LikEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
    /// Agents whose probability hit the floor.
    pub floored: usize,
}

/// Derivatives of `log(Φ(a) - Φ(b))` in `a` and `b`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogIntervalDerivs {
    pub p: f64,
    pub la: f64,
    pub lb: f64,
    pub laa: f64,
    pub lbb: f64,
    pub lab: f64,
}

#[inline]
pub(crate) fn log_interval_derivs(a: f64, b: f64) -> LogIntervalDerivs {
    let p = normal::interval(a, b);
    let fa = normal::pdf(a);
    let fb = normal::pdf(b);
    let la = fa / p;
    let lb = -fb / p;
    LogIntervalDerivs {
        p,
        la,
        lb,
        laa: -x_pdf(a) / p - la * la,
        lbb: x_pdf(b) / p - lb * lb,
        lab: -la * lb,
    }
}

/// Per-agent sparse view of `∂η/∂θ` and the cut-point block.
pub(crate) struct AgentLayout {
    pub idx: Vec<usize>,
    pub jeta: Vec<f64>,
    pub cut_start: usize,
    pub dg_lo: Vec<f64>,
    pub dg_hi: Vec<f64>,
}

impl AgentLayout {
    pub fn new(theta: &Theta) -> Self {
        let q = theta.m() + theta.n_beta() + theta.cuts.params_per_group();
        Self {
            idx: vec![0; q],
            jeta: vec![0.0; q],
            cut_start: theta.m() + theta.n_beta(),
            dg_lo: vec![0.0; theta.cuts.params_per_group()],
            dg_hi: vec![0.0; theta.cuts.params_per_group()],
        }
    }

    /// Fills indices and `∂η_i/∂θ` for agent `i` with group means `means_i`.
    pub fn fill(&mut self, theta: &Theta, data: &Dataset, i: usize, g: usize, means_i: &[f64]) {
        let m = theta.m();
        let kb = theta.n_beta();
        let z = data.design.z();
        for h in 0..m {
            self.idx[h] = theta.alpha_index(g, h);
            self.jeta[h] = means_i[h];
        }
        let bo = theta.beta_offset();
        for k in 0..kb {
            self.idx[m + k] = bo + k;
            self.jeta[m + k] = z[(i, k)];
        }
        let ppg = theta.cuts.params_per_group();
        let co = theta.cuts_offset() + g * ppg;
        for k in 0..ppg {
            self.idx[self.cut_start + k] = co + k;
            self.jeta[self.cut_start + k] = 0.0;
        }
    }

    /// Sets `∂γ(t)/∂λ` and `∂γ(t+1)/∂λ` for the agent's group.
    pub fn cuts_for(&mut self, theta: &Theta, g: usize, t: usize) {
        theta.cuts.dgamma(g, t, &mut self.dg_lo);
        theta.cuts.dgamma(g, t + 1, &mut self.dg_hi);
    }

    /// `∂a/∂θ` (`lo`) or `∂b/∂θ` (`hi`) in compact coordinates.
    pub fn jac(&self, hi: bool, out: &mut [f64]) {
        out.copy_from_slice(&self.jeta);
        let dg = if hi { &self.dg_hi } else { &self.dg_lo };
        for (k, d) in dg.iter().enumerate() {
            out[self.cut_start + k] -= d;
        }
    }
}

impl<'a> PseudoLikelihood<'a> {
    pub fn new(data: &'a Dataset, u: &[f64]) -> Result<Self> {
        if u.len() != data.n() {
            return Err(Error::Dimension(format!(
                "beliefs have length {} for {} agents",
                u.len(),
                data.n()
            )));
        }
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("belief of agent {i}")));
        }
        Ok(Self {
            data,
            means: data.net.group_means(u),
            m: data.net.n_groups(),
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub(crate) fn means_of(&self, i: usize) -> &[f64] {
        &self.means[i * self.m..(i + 1) * self.m]
    }

    fn check(&self, theta: &Theta) -> Result<()> {
        check_lengths(&self.data.net, &self.data.design, theta)?;
        if theta.r() != self.data.r {
            return Err(Error::Dimension(format!(
                "parameters for R = {}, data R = {}",
                theta.r(),
                self.data.r
            )));
        }
        Ok(())
    }

    /// Latent indices at `θ`.
    pub fn eta(&self, theta: &Theta) -> Result<Vec<f64>> {
        self.check(theta)?;
        let zb = self.data.design.index(&theta.beta);
        (0..self.data.n())
            .map(|i| {
                let g = self.data.net.group(i);
                let peer: f64 = self
                    .means_of(i)
                    .iter()
                    .enumerate()
                    .map(|(h, v)| theta.alpha[(g, h)] * v)
                    .sum();
                let e = peer + zb[i];
                if e.is_finite() {
                    Ok(e)
                } else {
                    Err(Error::NonFiniteIndex(i))
                }
            })
            .collect()
    }

    pub fn value(&self, theta: &Theta) -> Result<(f64, usize)> {
        let eta = self.eta(theta)?;
        let mut total = 0.0;
        let mut floored = 0;
        for (i, &e) in eta.iter().enumerate() {
            let lv = theta.cuts.levels(self.data.net.group(i));
            let t = self.data.y[i];
            let p = normal::interval(e - lv[t], e - lv[t + 1]);
            if p < PROB_FLOOR {
                floored += 1;
                total += PROB_FLOOR.ln();
            } else {
                total += p.ln();
            }
        }
        Ok((total / self.data.n_subnets() as f64, floored))
    }

    /// Value, gradient and optionally the Hessian in the flat layout.
    pub fn evaluate(&self, theta: &Theta, hessian: bool) -> Result<LikEval> {
        let eta = self.eta(theta)?;
        let p = theta.n_params();
        let mut grad = DVector::zeros(p);
        let mut hess = hessian.then(|| DMatrix::zeros(p, p));
        let mut lay = AgentLayout::new(theta);
        let q = lay.idx.len();
        let mut ja = vec![0.0; q];
        let mut jb = vec![0.0; q];
        let mut total = 0.0;
        let mut floored = 0;
        for (i, &e) in eta.iter().enumerate() {
            let g = self.data.net.group(i);
            let t = self.data.y[i];
            let lv = theta.cuts.levels(g);
            let d = log_interval_derivs(e - lv[t], e - lv[t + 1]);
            if !(d.p >= PROB_FLOOR) {
                floored += 1;
                total += PROB_FLOOR.ln();
                continue;
            }
            total += d.p.ln();
            lay.fill(theta, self.data, i, g, self.means_of(i));
            lay.cuts_for(theta, g, t);
            lay.jac(false, &mut ja);
            lay.jac(true, &mut jb);
            for k in 0..q {
                grad[lay.idx[k]] += d.la * ja[k] + d.lb * jb[k];
            }
            if let Some(h) = hess.as_mut() {
                for k in 0..q {
                    let ck = d.laa * ja[k] + d.lab * jb[k];
                    let dk = d.lab * ja[k] + d.lbb * jb[k];
                    let rk = lay.idx[k];
                    for l in 0..q {
                        h[(rk, lay.idx[l])] += ck * ja[l] + dk * jb[l];
                    }
                }
                for k in 0..lay.dg_lo.len() {
                    let r = lay.idx[lay.cut_start + k];
                    h[(r, r)] -= d.la * lay.dg_lo[k] + d.lb * lay.dg_hi[k];
                }
            }
        }
        let scale = 1.0 / self.data.n_subnets() as f64;
        grad *= scale;
        if let Some(h) = hess.as_mut() {
            *h *= scale;
        }
        Ok(LikEval {
            value: total * scale,
            grad,
            hess,
            floored,
        })
    }
}

/// Convenience wrapper: `(1/S) Σ log p_{i,y_i}` and the floor count.
pub fn pseudo_loglik(theta: &Theta, u: &[f64], data: &Dataset) -> Result<(f64, usize)> {
    PseudoLikelihood::new(data, u)?.value(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{choice_probabilities, testutil::random_instance, CutPointSpec};
    use crate::network::{build_design, GroupedNetwork};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(rng: &mut ChaCha8Rng, n: usize, m: usize, r: usize, switch: usize) -> (Dataset, Theta, Vec<f64>) {
        let (net, design, theta) = random_instance(rng, n, m, r, switch);
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=r)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..r as f64)).collect();
        (Dataset::new(net, design, y, r).unwrap(), theta, u)
    }

    #[test]
    fn binary_symmetric_value() {
        let net = GroupedNetwork::new(&[(0, 1)], vec![0; 4], vec![0, 0, 1, 1], 1).unwrap();
        let design = build_design(&net, &DMatrix::zeros(4, 1), false).unwrap();
        let data = Dataset::new(net, design, vec![0, 1, 1, 0], 1).unwrap();
        let theta = Theta::new(
            DMatrix::zeros(1, 1),
            DVector::zeros(3),
            CutPointSpec::quadratic(1, 1, 1.0).unwrap(),
        )
        .unwrap();
        let (v, fl) = pseudo_loglik(&theta, &[0.0; 4], &data).unwrap();
        assert!((v - 4.0 * 0.5f64.ln() / 2.0).abs() < 1e-14);
        assert_eq!(fl, 0);
    }

    #[test]
    fn value_matches_probability_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (data, theta, u) = random_data(&mut rng, 12, 2, 5, 3);
        let p = choice_probabilities(&theta, &data.net, &data.design, &u).unwrap();
        let direct: f64 = (0..12).map(|i| p[(i, data.y[i])].ln()).sum::<f64>() / data.n_subnets() as f64;
        let (v, _) = pseudo_loglik(&theta, &u, &data).unwrap();
        assert!((v - direct).abs() < 1e-12);
        let eval = PseudoLikelihood::new(&data, &u).unwrap().evaluate(&theta, true).unwrap();
        assert!((eval.value - v).abs() < 1e-14);
    }

    #[test]
    fn gradient_and_hessian_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for trial in 0..10 {
            let m = 1 + trial % 2;
            let r = rng.gen_range(1..=8);
            let switch = rng.gen_range(1..=r);
            let (data, theta, u) = random_data(&mut rng, 14, m, r, switch);
            let lik = PseudoLikelihood::new(&data, &u).unwrap();
            let eval = lik.evaluate(&theta, true).unwrap();
            let hess = eval.hess.unwrap();
            let v = theta.to_vec();
            let h = 1e-5;
            for k in 0..v.len() {
                let mut up = v.clone();
                let mut dn = v.clone();
                up[k] += h;
                dn[k] -= h;
                let tu = theta.with_vec(&up).unwrap();
                let td = theta.with_vec(&dn).unwrap();
                let fd = (lik.value(&tu).unwrap().0 - lik.value(&td).unwrap().0) / (2.0 * h);
                let g = eval.grad[k];
                assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "grad {k}: {fd} vs {g}");
                let gu = lik.evaluate(&tu, false).unwrap().grad;
                let gd = lik.evaluate(&td, false).unwrap().grad;
                for l in 0..v.len() {
                    let fdh = (gu[l] - gd[l]) / (2.0 * h);
                    assert!(
                        (fdh - hess[(l, k)]).abs() <= 1e-5 * hess[(l, k)].abs().max(1.0),
                        "hess ({l},{k}): {fdh} vs {}",
                        hess[(l, k)]
                    );
                }
            }
            assert!((&hess - hess.transpose()).amax() < 1e-10);
        }
    }
}
