//! Monte Carlo replications of the built-in designs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effects::{direct_marginal_effects, equilibrium_at, EffectSettings, EffectsReport};
use crate::error::{Error, Result};
use crate::estimate::{npl_estimate, select_cost_switch, NplSettings};
use crate::simulate::{builtin_dgp, simulate_dataset, DgpConfig};

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample standard deviation (`n - 1` denominator).
    pub fn sd(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

/// Two-pass sample standard deviation.
pub fn two_pass_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSettings {
    pub dgp: String,
    pub n_subnets: usize,
    pub n_per_subnet: usize,
    pub reps: usize,
    pub seed: u64,
    pub switch_grid: Vec<usize>,
    /// Also fit the fully quadratic cost.
    pub quadratic: bool,
    pub npl: NplSettings,
}

impl McSettings {
    pub fn new(dgp: &str, n_subnets: usize, n_per_subnet: usize, reps: usize, seed: u64) -> Self {
        Self {
            dgp: dgp.to_string(),
            n_subnets,
            n_per_subnet,
            reps,
            seed,
            switch_grid: (1..=16).collect(),
            quadratic: true,
            npl: NplSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    pub truth: Vec<f64>,
    pub semiparametric: Option<Vec<f64>>,
    pub selected_switch: Option<usize>,
    pub quadratic: Option<Vec<f64>>,
    pub flagged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McRow {
    pub effect: String,
    pub truth: f64,
    pub semi_mean: f64,
    pub semi_sd: f64,
    pub quad_mean: f64,
    pub quad_sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSummary {
    pub dgp: String,
    pub n: usize,
    pub reps: usize,
    pub failed: usize,
    pub rows: Vec<McRow>,
    pub replications: Vec<Replication>,
}

/// Names matching [`effect_vector`].
pub fn effect_names(report: &EffectsReport) -> Vec<String> {
    let m = report.mean_slope.len();
    let mut names = Vec::new();
    if m == 1 {
        names.push("PE".to_string());
    } else {
        for p in &report.peer {
            names.push(format!("PE{}{}", p.group + 1, p.peer_group + 1));
        }
        for p in &report.peer {
            names.push(format!("PE{}{}_pop", p.group + 1, p.peer_group + 1));
        }
    }
    for v in &report.variables {
        names.push(v.name.clone());
    }
    for v in &report.variables {
        names.push(format!("{}_bar", v.name));
    }
    names
}

/// Direct marginal effects in table order.
pub fn effect_vector(report: &EffectsReport) -> Vec<f64> {
    let mut out: Vec<f64> = report.peer.iter().map(|p| p.dme).collect();
    if report.mean_slope.len() > 1 {
        out.extend(report.peer.iter().map(|p| p.dme_population));
    }
    out.extend(report.variables.iter().map(|v| v.dme));
    out.extend(report.variables.iter().map(|v| v.contextual_dme));
    out
}

fn replicate(cfg: &DgpConfig, settings: &McSettings, rep: usize) -> Replication {
    let mut out = Replication {
        rep,
        truth: Vec::new(),
        semiparametric: None,
        selected_switch: None,
        quadratic: None,
        flagged: false,
        error: None,
    };
    let eff = EffectSettings::default();
    let run = |out: &mut Replication| -> Result<()> {
        let sim = simulate_dataset(&cfg.with_stream(rep as u64))?;
        out.flagged = sim.flagged;
        out.truth = effect_vector(&direct_marginal_effects(&sim.theta, &sim.data, &sim.equilibrium)?);
        let dme_at = |fit: &crate::estimate::FitResult| -> Result<Vec<f64>> {
            let eq = equilibrium_at(&fit.theta, &sim.data, Some(&fit.u), &eff)?;
            Ok(effect_vector(&direct_marginal_effects(&fit.theta, &sim.data, &eq)?))
        };
        if !settings.switch_grid.is_empty() {
            let sel = select_cost_switch(&sim.data, &settings.switch_grid, &settings.npl)?;
            out.selected_switch = Some(sel.best_switch);
            out.semiparametric = Some(dme_at(&sel.best)?);
        }
        if settings.quadratic {
            let fit = npl_estimate(&sim.data, 1, &settings.npl)?;
            if fit.converged {
                out.quadratic = Some(dme_at(&fit)?);
            }
        }
        Ok(())
    };
    if let Err(e) = run(&mut out) {
        log::warn!("replication {rep}: {e}");
        out.error = Some(e.to_string());
    }
    out
}

/// Runs `reps` independent replications (in parallel) and summarises them
/// in replication order.
pub fn run_montecarlo(settings: &McSettings) -> Result<McSummary> {
    if settings.reps == 0 {
        return Err(Error::InvalidParameter("at least one replication is required".into()));
    }
    let cfg = builtin_dgp(&settings.dgp, settings.n_subnets, settings.n_per_subnet, settings.seed)?;
    let reps: Vec<Replication> = (0..settings.reps)
        .into_par_iter()
        .map(|rep| replicate(&cfg, settings, rep))
        .collect();
    // names from a single simulated sample at the truth
    let probe = simulate_dataset(&cfg)?;
    let names = effect_names(&direct_marginal_effects(&probe.theta, &probe.data, &probe.equilibrium)?);
    let k = names.len();
    let mut truth = vec![Welford::default(); k];
    let mut semi = vec![Welford::default(); k];
    let mut quad = vec![Welford::default(); k];
    let mut failed = 0;
    for r in &reps {
        if r.error.is_some() {
            failed += 1;
        }
        for (acc, vals) in [(&mut truth, Some(&r.truth)), (&mut semi, r.semiparametric.as_ref()), (&mut quad, r.quadratic.as_ref())] {
            if let Some(v) = vals.filter(|v| v.len() == k) {
                for (a, &x) in acc.iter_mut().zip(v) {
                    a.push(x);
                }
            }
        }
    }
    let rows = names
        .into_iter()
        .enumerate()
        .map(|(j, effect)| McRow {
            effect,
            truth: truth[j].mean(),
            semi_mean: semi[j].mean(),
            semi_sd: semi[j].sd(),
            quad_mean: quad[j].mean(),
            quad_sd: quad[j].sd(),
        })
        .collect();
    Ok(McSummary {
        dgp: cfg.name.clone(),
        n: cfg.n(),
        reps: settings.reps,
        failed,
        rows,
        replications: reps,
    })
}

/// `mc_table.csv`: one row per effect with truth and estimator means/sds.
pub fn write_mc_table<W: Write>(summary: &McSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["effect", "truth", "semi_mean", "semi_sd", "quad_mean", "quad_sd"])
        .map_err(io)?;
    for r in &summary.rows {
        w.write_record([
            r.effect.clone(),
            format!("{:.6}", r.truth),
            format!("{:.6}", r.semi_mean),
            format!("{:.6}", r.semi_sd),
            format!("{:.6}", r.quad_mean),
            format!("{:.6}", r.quad_sd),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
