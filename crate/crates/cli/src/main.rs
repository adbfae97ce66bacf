use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use peerfx::effects::{
    counterfactual, effects_at, fitted_effects, Assignment, CounterfactualSettings, EffectSettings, EffectsReport,
};
use peerfx::estimate::{select_cost_switch, FitResult, NplSettings, SwitchRow};
use peerfx::io;
use peerfx::montecarlo::{run_montecarlo, write_mc_table, McSettings};
use peerfx::network::{build_design_named, identification_diagnostic, Verdict};
use peerfx::simulate::{builtin_dgp, simulate_dataset};
use peerfx::{Dataset, Error};

#[derive(Parser)]
#[command(name = "peerfx", version, about = "Peer effects for count outcomes on networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a built-in design and write nodes, edges and truth.
    Simulate(Options),
    /// Fit the model over a grid of cost switch points.
    Estimate(Options),
    /// Marginal effects with delta-method standard errors.
    Effects(Options),
    /// Mean expected outcome as the group-1 share varies.
    Counterfactual(Options),
    /// Identification checks on the network and regressors.
    Diagnose(Options),
    /// Monte Carlo replications of a built-in design.
    Montecarlo(Options),
}

impl Command {
    fn parts(&self) -> (&'static str, &Options) {
        match self {
            Command::Simulate(o) => ("simulate", o),
            Command::Estimate(o) => ("estimate", o),
            Command::Effects(o) => ("effects", o),
            Command::Counterfactual(o) => ("counterfactual", o),
            Command::Diagnose(o) => ("diagnose", o),
            Command::Montecarlo(o) => ("montecarlo", o),
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct Options {
    /// TOML file with any of these options; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Output directory (default `peerfx-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Previously written fit.json.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Largest outcome value.
    #[arg(long = "R")]
    #[serde(rename = "R")]
    r: Option<usize>,
    /// Switch values, e.g. "1,2,5" or "1-16".
    #[arg(long)]
    switch_grid: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    fixed_effects: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    tol_inner: Option<f64>,
    #[arg(long)]
    tol_outer: Option<f64>,
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Target shares, e.g. "0,0.25,0.5".
    #[arg(long)]
    shares: Option<String>,
    /// Number of subnetworks.
    #[arg(long = "S")]
    #[serde(rename = "S")]
    s: Option<usize>,
    /// Agents per subnetwork.
    #[arg(long)]
    ns: Option<usize>,
    /// Covariate column (e.g. x2) reassigned by counterfactuals or checked
    /// as the contextual variable by diagnose.
    #[arg(long)]
    covariate: Option<String>,
    /// Counterfactual without social interactions.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    no_interaction: Option<bool>,
}

macro_rules! merge_fields {
    ($a:expr, $b:expr, $($f:ident),*) => {
        Options { config: None, $($f: $a.$f.or($b.$f)),* }
    };
}

impl Options {
    fn resolve(self) -> Result<Self, Error> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str::<Options>(&text).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?
            }
            None => Options::default(),
        };
        Ok(merge_fields!(
            self, file, nodes, edges, out, fit, r, switch_grid, fixed_effects, seed, threads, tol_inner, tol_outer,
            dgp, reps, shares, s, ns, covariate, no_interaction
        ))
    }

    fn required<'a, T>(&self, v: &'a Option<T>, flag: &str) -> Result<&'a T, Error> {
        v.as_ref().ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required")))
    }

    fn npl(&self) -> NplSettings {
        let mut s = NplSettings::default();
        if let Some(t) = self.tol_inner {
            s.inner.tol = t;
        }
        if let Some(t) = self.tol_outer {
            s.tol_outer = t;
        }
        s.seed = self.seed.unwrap_or(0);
        s
    }

    fn grid(&self, r: usize) -> Result<Vec<usize>, Error> {
        match &self.switch_grid {
            None => Ok((1..=r.min(16)).collect()),
            Some(text) => parse_grid(text),
        }
    }
}

fn parse_grid(text: &str) -> Result<Vec<usize>, Error> {
    let bad = || Error::InvalidParameter(format!("cannot parse switch grid {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

fn parse_shares(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::InvalidParameter(format!("bad share {p:?}"))))
        .collect()
}

/// Outputs go to a scratch directory first and are moved in on success.
struct OutDir {
    scratch: PathBuf,
    target: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    fn new(target: &Path) -> Result<Self, Error> {
        let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
        let scratch = target.with_file_name(format!(".{name}.partial-{}", std::process::id()));
        if scratch.exists() {
            fs::remove_dir_all(&scratch)?;
        }
        fs::create_dir_all(&scratch)?;
        Ok(Self {
            scratch,
            target: target.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.scratch.join(name)
    }

    fn commit(self) -> Result<(), Error> {
        fs::create_dir_all(&self.target)?;
        for f in &self.files {
            fs::rename(self.scratch.join(f), self.target.join(f))?;
        }
        Ok(())
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.scratch);
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a Options,
    outputs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct FitFile {
    /// Node ids in internal order.
    ids: Vec<String>,
    selected_switch: usize,
    table: Vec<SwitchRow>,
    fit: FitResult,
}

#[derive(Serialize)]
struct EffectsFile<'a> {
    switch: usize,
    effects: &'a EffectsReport,
}

/// Distinguishes non-convergence (exit 2) from everything else (exit 1).
enum Failure {
    Input(Error),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } | Error::NoConvergedFit | Error::NanIteration(_) | Error::NanBeliefs(_) => {
                Failure::NotConverged(e.to_string())
            }
            e => Failure::Input(e),
        }
    }
}

fn load_data(o: &Options) -> Result<(io::NodeTable, Dataset), Error> {
    let nodes = o.required(&o.nodes, "nodes")?;
    let edges = o.required(&o.edges, "edges")?;
    io::load_dataset(nodes, edges, o.r, o.fixed_effects.unwrap_or(false))
}

fn estimate(o: &Options, table: &io::NodeTable, data: &Dataset) -> Result<FitFile, Failure> {
    let sel = select_cost_switch(data, &o.grid(data.r)?, &o.npl())?;
    let fit = match sel.best.clone().with_variance(data) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("covariance not available: {e}");
            sel.best
        }
    };
    Ok(FitFile {
        ids: table.ids.clone(),
        selected_switch: sel.best_switch,
        table: sel.table,
        fit,
    })
}

fn fit_for(o: &Options, table: &io::NodeTable, data: &Dataset, out: &mut OutDir) -> Result<FitFile, Failure> {
    match &o.fit {
        Some(path) => {
            let f = read_fit(path)?;
            if f.ids != table.ids {
                return Err(Error::InvalidParameter("fit.json was produced from different nodes".into()).into());
            }
            Ok(f)
        }
        None => {
            let f = estimate(o, table, data)?;
            io::write_json(&out.path("fit.json"), &f)?;
            Ok(f)
        }
    }
}

fn read_fit(path: &Path) -> Result<FitFile, Error> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn covariate_index(table_names: &[String], name: &str) -> Result<usize, Error> {
    table_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::InvalidParameter(format!("no covariate named {name:?}; have {}", table_names.join(","))))
}

fn run(command: &'static str, o: &Options) -> Result<(), Failure> {
    let out_path = o.out.clone().unwrap_or_else(|| PathBuf::from("peerfx-out"));
    let mut out = OutDir::new(&out_path)?;
    let seed = o.seed.unwrap_or(0);
    let mut not_converged = None;
    match command {
        "simulate" => {
            let dgp = o.dgp.as_deref().unwrap_or("A");
            let cfg = builtin_dgp(dgp, o.s.unwrap_or(2), o.ns.unwrap_or(250), seed)?;
            let sim = simulate_dataset(&cfg)?;
            io::write_nodes(io::create_file(&out.path("nodes.csv"))?, &sim.data, None, true)?;
            io::write_edges(io::create_file(&out.path("edges.csv"))?, &sim.data.net, None)?;
            io::write_json(&out.path("truth.json"), &sim.truth(&cfg))?;
        }
        "estimate" => {
            let (table, data) = load_data(o)?;
            let f = estimate(o, &table, &data)?;
            println!("selected switch {} (loglik {:.6})", f.selected_switch, f.fit.loglik);
            if !f.fit.converged {
                not_converged = Some("NPL iteration did not converge".to_string());
            }
            io::write_json(&out.path("fit.json"), &f)?;
        }
        "effects" => {
            let (table, data) = load_data(o)?;
            let f = fit_for(o, &table, &data, &mut out)?;
            let settings = EffectSettings::default();
            let report = if f.fit.vcov.is_some() {
                fitted_effects(&f.fit, &data, &settings)?
            } else {
                log::warn!("fit has no covariance; effects reported without standard errors");
                effects_at(&f.fit.theta, &data, Some(&f.fit.u), &settings)?
            };
            io::write_json(
                &out.path("effects.json"),
                &EffectsFile {
                    switch: f.selected_switch,
                    effects: &report,
                },
            )?;
        }
        "counterfactual" => {
            let (table, data) = load_data(o)?;
            let f = fit_for(o, &table, &data, &mut out)?;
            let covariate = o.covariate.as_deref().map(|c| covariate_index(&table.x_names, c)).transpose()?;
            let shares = parse_shares(o.shares.as_deref().unwrap_or("0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"))?;
            let settings = CounterfactualSettings {
                shares,
                covariate,
                assignment: Assignment::Random,
                no_interaction: o.no_interaction.unwrap_or(false),
                seed,
                effects: EffectSettings::default(),
            };
            let points = counterfactual(&f.fit, &data, &settings)?;
            if points.iter().any(|p| !p.converged) {
                log::warn!("some share points failed");
            }
            io::write_counterfactual(io::create_file(&out.path("counterfactual.csv"))?, &points)?;
        }
        "diagnose" => {
            let nodes = o.required(&o.nodes, "nodes")?;
            let edges = o.required(&o.edges, "edges")?;
            let (table, net) = io::load_network(nodes, edges)?;
            let design = build_design_named(&net, &table.x, o.fixed_effects.unwrap_or(false), Some(&table.x_names))?;
            let contextual = o.covariate.as_deref().map(|c| covariate_index(&table.x_names, c)).transpose()?;
            let mut report = identification_diagnostic(&net, &design, contextual);
            if let Some(path) = &o.fit {
                let f = read_fit(path)?;
                report.confirm_contextual(&f.fit.theta.beta);
            }
            println!(
                "condition A {:?}, condition B {:?}, overall {:?}",
                report.condition_a, report.condition_b, report.verdict
            );
            io::write_json(&out.path("diagnostics.json"), &report)?;
            if report.verdict == Verdict::Fail {
                log::warn!("identification conditions fail");
            }
        }
        "montecarlo" => {
            let dgp = o.dgp.as_deref().unwrap_or("A");
            let mut s = McSettings::new(dgp, o.s.unwrap_or(2), o.ns.unwrap_or(250), o.reps.unwrap_or(100), seed);
            s.npl = o.npl();
            s.switch_grid = o.grid(16)?;
            let summary = run_montecarlo(&s)?;
            if summary.failed > 0 {
                log::warn!("{} of {} replications failed", summary.failed, summary.reps);
            }
            write_mc_table(&summary, io::create_file(&out.path("mc_table.csv"))?)?;
            io::write_json(&out.path("mc_replications.json"), &summary.replications)?;
        }
        _ => unreachable!(),
    }
    let config_json = serde_json::to_string(o).map_err(Error::from)?;
    let config_hash: String = Sha256::digest(config_json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let mut outputs = out.files.clone();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        command,
        version: peerfx::VERSION,
        seed,
        config_hash,
        config: o,
        outputs,
    };
    io::write_json(&out.path("manifest.json"), &manifest)?;
    out.commit()?;
    match not_converged {
        Some(msg) => Err(Failure::NotConverged(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PEERFX_LOG", "warn")).init();
    let cli = Cli::parse();
    let (command, opts) = cli.command.parts();
    let result = opts.clone().resolve().map_err(Failure::from).and_then(|o| {
        if let Some(n) = o.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Input(Error::InvalidParameter(e.to_string())))?;
        }
        run(command, &o)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1-3, 5").unwrap(), vec![1, 2, 3, 5]);
        assert!(parse_grid("a").is_err());
        assert_eq!(parse_shares("0, 0.5").unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn non_convergence_maps_to_exit_two() {
        assert!(matches!(Failure::from(Error::NoConvergedFit), Failure::NotConverged(_)));
        let e = Error::NotConverged {
            iterations: 3,
            residual: 1.0,
        };
        assert!(matches!(Failure::from(e), Failure::NotConverged(_)));
        assert!(matches!(Failure::from(Error::UnknownDgp("Z".into())), Failure::Input(_)));
    }
}
