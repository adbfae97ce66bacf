//! Synthetic data from the equilibrium model.
//!
//! Random numbers come from ChaCha20 seeded with `seed_from_u64(seed)`;
//! replication `k` of an experiment uses stream `k` of that generator
//! (`set_stream(k)`), so replications are independent of scheduling.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    best_response, contraction_diagnostic, solve_equilibrium, ContractionReport, CutPointSpec,
    EquilibriumState, Theta, DEFAULT_TOL,
};
use crate::network::{build_design, GroupedNetwork};

/// Seeded generator for one replication.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovariateGen {
    Uniform { lo: f64, hi: f64 },
    Poisson { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroupRule {
    /// Everyone in the first group.
    Single,
    /// First group iff covariate `covariate` is at most `cutoff`, second otherwise.
    Threshold { covariate: usize, cutoff: f64 },
}

impl GroupRule {
    pub fn n_groups(&self) -> usize {
        match self {
            GroupRule::Single => 1,
            GroupRule::Threshold { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpConfig {
    pub name: String,
    pub n_subnets: usize,
    pub n_per_subnet: usize,
    pub covariates: Vec<CovariateGen>,
    pub degree_min: usize,
    pub degree_max: usize,
    pub group_rule: GroupRule,
    /// Coefficients on `[1, X, WX]`, peer effects and thresholds.
    pub theta: Theta,
    pub seed: u64,
    pub stream: u64,
}

impl DgpConfig {
    pub fn n(&self) -> usize {
        self.n_subnets * self.n_per_subnet
    }

    pub fn r(&self) -> usize {
        self.theta.r()
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self {
            stream,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subnets == 0 || self.n_per_subnet == 0 {
            return Err(Error::InvalidParameter("empty population".into()));
        }
        if self.degree_min > self.degree_max || self.degree_max > self.n_per_subnet - 1 {
            return Err(Error::InvalidParameter(format!(
                "degree bounds [{}, {}] outside [0, {}]",
                self.degree_min,
                self.degree_max,
                self.n_per_subnet - 1
            )));
        }
        if self.theta.n_beta() != 1 + 2 * self.covariates.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for {} covariates",
                self.theta.n_beta(),
                self.covariates.len()
            )));
        }
        if self.theta.m() != self.group_rule.n_groups() {
            return Err(Error::Dimension("group rule and peer matrix disagree".into()));
        }
        if let GroupRule::Threshold { covariate, .. } = self.group_rule {
            if covariate >= self.covariates.len() {
                return Err(Error::InvalidParameter(format!("no covariate {covariate}")));
            }
        }
        Ok(())
    }
}

const BETA: [f64; 5] = [2.0, 1.5, -1.2, 0.5, -0.9];
const B_SPACINGS: [f64; 12] = [
    2.050, 1.250, 0.850, 0.700, 0.500, 0.400, 0.330, 0.300, 0.290, 0.280, 0.270, 0.260,
];
const B_TAIL: f64 = 0.255;
const R_MAX: usize = 100;

/// The four Monte Carlo designs: `A` (homogeneous, constant spacing), `B`
/// (homogeneous, free spacings up to 13), `C` and `D` (two groups split on
/// `x1 <= 2.5`, with `B` thresholds).
pub fn builtin_dgp(name: &str, n_subnets: usize, n_per_subnet: usize, seed: u64) -> Result<DgpConfig> {
    let key = name.trim().to_ascii_uppercase();
    let (alpha, cuts, rule) = match key.as_str() {
        "A" => (
            DMatrix::from_element(1, 1, 0.25),
            CutPointSpec::quadratic(R_MAX, 1, 0.55)?,
            GroupRule::Single,
        ),
        "B" => (
            DMatrix::from_element(1, 1, 0.25),
            CutPointSpec::uniform(R_MAX, 1, 13, &B_SPACINGS, B_TAIL)?,
            GroupRule::Single,
        ),
        "C" | "D" => {
            let a = if key == "C" {
                [0.3, 0.15, 0.1, 0.15]
            } else {
                [0.4, -0.1, 0.2, 0.1]
            };
            (
                DMatrix::from_row_slice(2, 2, &a),
                CutPointSpec::uniform(R_MAX, 2, 13, &B_SPACINGS, B_TAIL)?,
                GroupRule::Threshold {
                    covariate: 0,
                    cutoff: 2.5,
                },
            )
        }
        _ => return Err(Error::UnknownDgp(name.to_string())),
    };
    let theta = Theta::new(alpha, DVector::from_column_slice(&BETA), cuts)?;
    let cfg = DgpConfig {
        name: key,
        n_subnets,
        n_per_subnet,
        covariates: vec![
            CovariateGen::Uniform { lo: 0.0, hi: 5.0 },
            CovariateGen::Poisson { rate: 2.0 },
        ],
        degree_min: 0,
        degree_max: 10.min(n_per_subnet.saturating_sub(1)),
        group_rule: rule,
        theta,
        seed,
        stream: 0,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: Dataset,
    pub theta: Theta,
    pub equilibrium: EquilibriumState,
    pub contraction: ContractionReport,
    /// Set when the uniqueness condition fails at the true parameters.
    pub flagged: bool,
}

/// `truth.json` payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub dgp: String,
    pub seed: u64,
    pub stream: u64,
    pub theta: Theta,
    pub ye: Vec<f64>,
    pub contraction: ContractionReport,
    pub flagged: bool,
}

impl SimulatedData {
    pub fn truth(&self, cfg: &DgpConfig) -> Truth {
        Truth {
            dgp: cfg.name.clone(),
            seed: cfg.seed,
            stream: cfg.stream,
            theta: self.theta.clone(),
            ye: self.equilibrium.ye.clone(),
            contraction: self.contraction.clone(),
            flagged: self.flagged,
        }
    }
}

fn draw_covariate(rng: &mut ChaCha20Rng, gen: &CovariateGen) -> Result<f64> {
    Ok(match *gen {
        CovariateGen::Uniform { lo, hi } => Uniform::new(lo, hi).sample(rng),
        CovariateGen::Poisson { rate } => Poisson::new(rate)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng),
    })
}

/// Draws covariates, network and shocks, solves the equilibrium and records
/// best responses. Deterministic in `(seed, stream)`.
pub fn simulate_dataset(cfg: &DgpConfig) -> Result<SimulatedData> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    let n = cfg.n();
    let ns = cfg.n_per_subnet;
    let k = cfg.covariates.len();

    let mut x = DMatrix::zeros(n, k);
    for (c, gen) in cfg.covariates.iter().enumerate() {
        for i in 0..n {
            x[(i, c)] = draw_covariate(&mut rng, gen)?;
        }
    }
    let groups: Vec<usize> = (0..n)
        .map(|i| match cfg.group_rule {
            GroupRule::Single => 0,
            GroupRule::Threshold { covariate, cutoff } => usize::from(x[(i, covariate)] > cutoff),
        })
        .collect();
    let subnet: Vec<usize> = (0..n).map(|i| i / ns).collect();

    let degree = Uniform::new_inclusive(cfg.degree_min, cfg.degree_max);
    let mut edges = Vec::new();
    for i in 0..n {
        let d = degree.sample(&mut rng);
        let start = subnet[i] * ns;
        let local = i - start;
        for pick in sample(&mut rng, ns - 1, d).into_iter() {
            let j = if pick >= local { pick + 1 } else { pick };
            edges.push((i, start + j));
        }
    }
    let net = GroupedNetwork::new(&edges, groups, subnet, cfg.theta.m())?;
    let design = build_design(&net, &x, false)?;

    let contraction = contraction_diagnostic(&cfg.theta);
    let flagged = !contraction.pass;
    if flagged {
        log::warn!(
            "uniqueness condition fails for DGP {} (margin {:.4}); proceeding",
            cfg.name,
            contraction.margin
        );
    }
    let eq = solve_equilibrium(&cfg.theta, &net, &design, None, DEFAULT_TOL, 10_000)?;
    if !eq.converged {
        return Err(Error::NotConverged {
            iterations: eq.iterations,
            residual: eq.residual,
        });
    }
    let eta = crate::model::latent_index(&cfg.theta, &net, &design, &eq.ye)?;
    let y: Vec<usize> = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            best_response(&cfg.theta, net.group(i), eta[i], e)
        })
        .collect();
    let data = Dataset::new(net, design, y, cfg.r())?;
    Ok(SimulatedData {
        data,
        theta: cfg.theta.clone(),
        equilibrium: eq,
        contraction,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{choice_probabilities, expected_outcome_map};

    #[test]
    fn builtin_sizes_and_rules() {
        let a = builtin_dgp("A", 8, 250, 1).unwrap();
        assert_eq!(a.n(), 2000);
        assert_eq!(a.degree_max, 10);
        let c = builtin_dgp("c", 2, 50, 1).unwrap();
        assert_eq!(
            c.group_rule,
            GroupRule::Threshold {
                covariate: 0,
                cutoff: 2.5
            }
        );
        let d = builtin_dgp("D", 2, 50, 1).unwrap();
        assert_eq!(d.theta.alpha[(0, 1)], -0.1);
        assert!(matches!(builtin_dgp("E", 1, 10, 0), Err(Error::UnknownDgp(_))));
        assert_eq!(builtin_dgp("A", 1, 4, 0).unwrap().degree_max, 3);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = builtin_dgp("A", 2, 60, 42).unwrap();
        let a = simulate_dataset(&cfg).unwrap();
        let b = simulate_dataset(&cfg).unwrap();
        assert_eq!(a.data.y, b.data.y);
        assert_eq!(a.data.design.x(), b.data.design.x());
        assert_eq!(a.equilibrium.ye, b.equilibrium.ye);
        let c = simulate_dataset(&cfg.with_stream(1)).unwrap();
        assert_ne!(a.data.y, c.data.y);
    }

    #[test]
    fn network_respects_degree_bounds() {
        let cfg = builtin_dgp("C", 3, 40, 5).unwrap();
        let sim = simulate_dataset(&cfg).unwrap();
        let net = &sim.data.net;
        for i in 0..net.n() {
            assert!(net.out_degree(i) <= 10);
            assert!(net.friends(i).iter().all(|&j| net.subnet(j) == net.subnet(i) && j != i));
        }
        let x = sim.data.design.x();
        for i in 0..net.n() {
            assert_eq!(net.group(i), usize::from(x[(i, 0)] > 2.5));
        }
        assert!(sim.flagged);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let cfg = builtin_dgp("B", 2, 100, 3).unwrap();
        let sim = simulate_dataset(&cfg).unwrap();
        assert!(!sim.flagged);
        let l = expected_outcome_map(&sim.theta, &sim.data.net, &sim.data.design, &sim.equilibrium.ye)
            .unwrap();
        for (a, b) in l.iter().zip(&sim.equilibrium.ye) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn outcome_means_track_expectations() {
        let cfg = builtin_dgp("A", 4, 250, 17).unwrap();
        let sim = simulate_dataset(&cfg).unwrap();
        let p = choice_probabilities(&sim.theta, &sim.data.net, &sim.data.design, &sim.equilibrium.ye)
            .unwrap();
        for s in 0..4 {
            let members = sim.data.net.members(s);
            let ns = members.len() as f64;
            let mean_y: f64 = members.iter().map(|&i| sim.data.y[i] as f64).sum::<f64>() / ns;
            let mean_e: f64 = members.iter().map(|&i| sim.equilibrium.ye[i]).sum::<f64>() / ns;
            let var: f64 = members
                .iter()
                .map(|&i| {
                    let row = p.row(i);
                    let m1: f64 = (0..=100).map(|t| t as f64 * row[t]).sum();
                    let m2: f64 = (0..=100).map(|t| (t * t) as f64 * row[t]).sum();
                    m2 - m1 * m1
                })
                .sum();
            let se = var.sqrt() / ns;
            assert!((mean_y - mean_e).abs() < 5.0 * se, "subnet {s}: {mean_y} vs {mean_e}");
        }
    }

    #[test]
    fn no_peer_marginal_matches_ordered_model() {
        let mut cfg = builtin_dgp("A", 1, 3000, 8).unwrap();
        cfg.theta.alpha.fill(0.0);
        cfg.theta.beta = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let sim = simulate_dataset(&cfg).unwrap();
        let lv = cfg.theta.cuts.levels(0);
        let n = sim.data.n() as f64;
        for t in 0..4 {
            let p = crate::normal::interval(1.0 - lv[t], 1.0 - lv[t + 1]);
            let freq = sim.data.y.iter().filter(|&&v| v == t).count() as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((freq - p).abs() < 4.0 * se, "cell {t}: {freq} vs {p}");
        }
    }
}
