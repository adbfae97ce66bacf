use serde::{Deserialize, Serialize};

use super::npl::{npl_estimate, npl_estimate_from, FitResult, NplSettings};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Theta;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchRow {
    pub switch: usize,
    pub n_params: Option<usize>,
    pub loglik: Option<f64>,
    pub bic: Option<f64>,
    pub bic_log_s: Option<f64>,
    pub converged: bool,
    /// Why the value was not fitted.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub best_switch: usize,
    pub best: FitResult,
    pub table: Vec<SwitchRow>,
}

/// Whether the data can pin down the thresholds implied by `switch`: every
/// level below the switch is observed in each group, and when a tail exists
/// some outcome lies above the switch.
pub fn switch_supported(data: &Dataset, switch: usize) -> std::result::Result<(), String> {
    let r = data.r;
    let s = switch.min(r);
    for g in 0..data.net.n_groups() {
        let mut counts = vec![0usize; r + 1];
        for i in 0..data.n() {
            if data.net.group(i) == g {
                counts[data.y[i]] += 1;
            }
        }
        if let Some(l) = (1..s).find(|&l| counts[l] == 0) {
            return Err(format!("no outcome equal to {l} in group {}", g + 1));
        }
        if s < r && counts[s + 1..].iter().all(|&c| c == 0) {
            return Err(format!("no outcome above {s} in group {}", g + 1));
        }
    }
    Ok(())
}

/// Fits every supported switch value in `grid` (ascending), each warm-started
/// from the previous fit, and keeps the lowest BIC.
pub fn select_cost_switch(data: &Dataset, grid: &[usize], settings: &NplSettings) -> Result<Selection> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::InvalidParameter(
            "switch grid must be a non-empty increasing list of positive integers".into(),
        ));
    }
    if grid[0] != 1 {
        log::warn!("switch grid starts at {} rather than 1", grid[0]);
    }
    let mut table = Vec::with_capacity(grid.len());
    let mut prev: Option<FitResult> = None;
    let mut best: Option<FitResult> = None;
    for &s in grid {
        if s > data.r && table.iter().any(|row: &SwitchRow| row.switch >= data.r && row.skipped.is_none()) {
            table.push(skipped(s, format!("switch beyond R = {}", data.r)));
            continue;
        }
        if let Err(why) = switch_supported(data, s) {
            table.push(skipped(s, why));
            continue;
        }
        let fit = match &prev {
            Some(p) => {
                let theta0 = Theta::new(
                    p.theta.alpha.clone(),
                    p.theta.beta.clone(),
                    p.theta.cuts.extend_switch(s)?,
                )?;
                npl_estimate_from(data, theta0, p.u.clone(), settings)
            }
            None => npl_estimate(data, s, settings),
        };
        let fit = match fit {
            Ok(f) => f,
            Err(e) => {
                table.push(skipped(s, format!("estimation failed: {e}")));
                continue;
            }
        };
        table.push(SwitchRow {
            switch: s,
            n_params: Some(fit.n_params),
            loglik: Some(fit.loglik),
            bic: Some(fit.bic),
            bic_log_s: Some(fit.bic_log_s),
            converged: fit.converged,
            skipped: None,
        });
        if fit.converged {
            if best.as_ref().map_or(true, |b| fit.bic < b.bic) {
                best = Some(fit.clone());
            }
            prev = Some(fit);
        }
    }
    let best = best.ok_or(Error::NoConvergedFit)?;
    Ok(Selection {
        best_switch: best.theta.cuts.switch(),
        best,
        table,
    })
}

fn skipped(switch: usize, why: String) -> SwitchRow {
    SwitchRow {
        switch,
        n_params: None,
        loglik: None,
        bic: None,
        bic_log_s: None,
        converged: false,
        skipped: Some(why),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{builtin_dgp, simulate_dataset};

    #[test]
    fn single_value_grid_returns_that_fit() {
        let sim = simulate_dataset(&builtin_dgp("A", 1, 200, 6).unwrap()).unwrap();
        let sel = select_cost_switch(&sim.data, &[1], &NplSettings::default()).unwrap();
        assert_eq!(sel.best_switch, 1);
        assert_eq!(sel.table.len(), 1);
        let direct = npl_estimate(&sim.data, 1, &NplSettings::default()).unwrap();
        assert!((direct.loglik - sel.best.loglik).abs() < 1e-9);
    }

    #[test]
    fn unsupported_switch_is_skipped() {
        let sim = simulate_dataset(&builtin_dgp("A", 1, 100, 6).unwrap()).unwrap();
        let top = *sim.data.y.iter().max().unwrap();
        assert!(switch_supported(&sim.data, top).is_err());
        let sel = select_cost_switch(&sim.data, &[1, top], &NplSettings::default()).unwrap();
        assert!(sel.table[1].skipped.is_some());
        assert_eq!(sel.best_switch, 1);
    }

    #[test]
    fn rejects_bad_grid() {
        let sim = simulate_dataset(&builtin_dgp("A", 1, 30, 6).unwrap()).unwrap();
        assert!(select_cost_switch(&sim.data, &[], &NplSettings::default()).is_err());
        assert!(select_cost_switch(&sim.data, &[2, 1], &NplSettings::default()).is_err());
    }
}
