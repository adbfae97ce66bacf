use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-group thresholds `γ_g(0..=R+1)` generated by free spacings up to the
/// switch point and a constant tail spacing afterwards.
///
/// With switch `s`, group `g` has spacings `δ_g(r) = γ_g(r) - γ_g(r-1)` for
/// `r = 2..=min(s, R)` and a tail `γ̄_g` used for every `r > s`. The
/// optimiser works on `log δ` and `log γ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPointSpec {
    r: usize,
    switch: usize,
    deltas: Vec<Vec<f64>>,
    tails: Vec<f64>,
    levels: Vec<Vec<f64>>,
}

impl CutPointSpec {
    /// `deltas[g]` lists `δ_g(2..=min(switch, R))`; `tails[g]` is ignored when
    /// `switch >= R`. The switch is clamped to `R`.
    pub fn new(r: usize, switch: usize, deltas: Vec<Vec<f64>>, tails: Vec<f64>) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidParameter("R must be at least 1".into()));
        }
        if switch == 0 {
            return Err(Error::InvalidParameter("switch point must be at least 1".into()));
        }
        let m = deltas.len();
        if m == 0 || tails.len() != m {
            return Err(Error::Dimension(format!(
                "{} spacing blocks and {} tail spacings",
                m,
                tails.len()
            )));
        }
        let switch = switch.min(r);
        for (g, d) in deltas.iter().enumerate() {
            if d.len() != switch - 1 {
                return Err(Error::Dimension(format!(
                    "group {g}: {} free spacings for switch {switch}",
                    d.len()
                )));
            }
            if let Some(v) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "group {g}: spacing {v} is not positive"
                )));
            }
            if switch < r && !(tails[g].is_finite() && tails[g] > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "group {g}: tail spacing {} is not positive",
                    tails[g]
                )));
            }
        }
        let mut spec = Self {
            r,
            switch,
            deltas,
            tails,
            levels: Vec::new(),
        };
        spec.levels = (0..m).map(|g| spec.build_levels(g)).collect();
        Ok(spec)
    }

    /// Constant spacing everywhere (quadratic cost), same for all groups.
    pub fn quadratic(r: usize, m: usize, spacing: f64) -> Result<Self> {
        Self::new(r, 1, vec![Vec::new(); m], vec![spacing; m])
    }

    /// Same free spacings and tail for every group.
    pub fn uniform(r: usize, m: usize, switch: usize, deltas: &[f64], tail: f64) -> Result<Self> {
        let s = switch.min(r);
        Self::new(r, switch, vec![deltas[..s - 1].to_vec(); m], vec![tail; m])
    }

    fn build_levels(&self, g: usize) -> Vec<f64> {
        let mut lv = Vec::with_capacity(self.r + 2);
        lv.push(f64::NEG_INFINITY);
        lv.push(0.0);
        for t in 2..=self.r {
            let prev = lv[t - 1];
            lv.push(prev + self.spacing(g, t));
        }
        lv.push(f64::INFINITY);
        lv
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn m(&self) -> usize {
        self.deltas.len()
    }

    pub fn switch(&self) -> usize {
        self.switch
    }

    pub fn has_tail(&self) -> bool {
        self.switch < self.r
    }

    pub fn deltas(&self, g: usize) -> &[f64] {
        &self.deltas[g]
    }

    pub fn tail(&self, g: usize) -> Option<f64> {
        self.has_tail().then(|| self.tails[g])
    }

    /// `γ_g(t) - γ_g(t-1)` for `t` in `2..=R`.
    pub fn spacing(&self, g: usize, t: usize) -> f64 {
        if t <= self.switch {
            self.deltas[g][t - 2]
        } else {
            self.tails[g]
        }
    }

    pub fn min_spacing(&self, g: usize) -> Option<f64> {
        (2..=self.r).map(|t| self.spacing(g, t)).reduce(f64::min)
    }

    /// `γ_g(r)` with `γ_g(0) = -∞` and `γ_g(R+1) = +∞`.
    pub fn gamma(&self, g: usize, r: usize) -> Result<f64> {
        if g >= self.m() {
            return Err(Error::InvalidParameter(format!("group {g} out of range")));
        }
        if r > self.r + 1 {
            return Err(Error::CutIndex { r, max: self.r + 1 });
        }
        Ok(self.levels[g][r])
    }

    /// All thresholds of group `g`, indexed `0..=R+1`.
    pub fn levels(&self, g: usize) -> &[f64] {
        &self.levels[g]
    }

    /// Free parameters per group.
    pub fn params_per_group(&self) -> usize {
        self.switch - 1 + usize::from(self.has_tail())
    }

    pub fn n_params(&self) -> usize {
        self.params_per_group() * self.m()
    }

    /// Log-scale parameters, group-major.
    pub fn log_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for g in 0..self.m() {
            out.extend(self.deltas[g].iter().map(|d| d.ln()));
            if self.has_tail() {
                out.push(self.tails[g].ln());
            }
        }
        out
    }

    pub fn with_log_params(&self, params: &[f64]) -> Result<Self> {
        let k = self.params_per_group();
        if params.len() != k * self.m() {
            return Err(Error::Dimension(format!(
                "{} cut-point parameters, expected {}",
                params.len(),
                k * self.m()
            )));
        }
        let mut deltas = Vec::with_capacity(self.m());
        let mut tails = self.tails.clone();
        for (g, block) in params.chunks(k.max(1)).take(self.m()).enumerate() {
            let block = &block[..k];
            deltas.push(block[..self.switch - 1].iter().map(|v| v.exp()).collect());
            if self.has_tail() {
                tails[g] = block[k - 1].exp();
            }
        }
        if k == 0 {
            deltas = vec![Vec::new(); self.m()];
        }
        Self::new(self.r, self.switch, deltas, tails)
    }

    /// `∂γ_g(t)/∂λ` for the group-local log parameters, written into `out`
    /// (length `params_per_group`). Infinite boundaries have zero derivative.
    pub fn dgamma(&self, g: usize, t: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if t == 0 || t > self.r {
            return;
        }
        let s = self.switch;
        for k in 2..=t.min(s) {
            out[k - 2] = self.deltas[g][k - 2];
        }
        if self.has_tail() && t > s {
            out[s - 1] = (t - s) as f64 * self.tails[g];
        }
    }

    /// Warm start for a larger switch point: the new free spacings take the
    /// current tail value.
    pub fn extend_switch(&self, switch: usize) -> Result<Self> {
        let switch = switch.min(self.r);
        let deltas = (0..self.m())
            .map(|g| (2..=switch).map(|t| self.spacing(g, t)).collect())
            .collect();
        Self::new(self.r, switch, deltas, self.tails.clone())
    }
}

/// Plain-data mirror used for serialisation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CutPointJson {
    pub r: usize,
    pub switch: usize,
    pub log_spacings: Vec<Vec<f64>>,
    pub tail_spacings: Vec<Option<f64>>,
}

impl From<&CutPointSpec> for CutPointJson {
    fn from(c: &CutPointSpec) -> Self {
        Self {
            r: c.r,
            switch: c.switch,
            log_spacings: c.deltas.iter().map(|d| d.iter().map(|v| v.ln()).collect()).collect(),
            tail_spacings: (0..c.m()).map(|g| c.tail(g)).collect(),
        }
    }
}

impl TryFrom<CutPointJson> for CutPointSpec {
    type Error = Error;

    fn try_from(j: CutPointJson) -> Result<Self> {
        let deltas = j
            .log_spacings
            .iter()
            .map(|d| d.iter().map(|v| v.exp()).collect())
            .collect();
        let tails = j.tail_spacings.iter().map(|t| t.unwrap_or(1.0)).collect();
        CutPointSpec::new(j.r, j.switch, deltas, tails)
    }
}
