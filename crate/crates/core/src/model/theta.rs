use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cuts::{CutPointJson, CutPointSpec};
use crate::error::{Error, Result};

/// Full parameter vector. The flat layout is `α` row-major, then `β`, then
/// the cut-point log parameters group by group.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub alpha: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub cuts: CutPointSpec,
}

impl Theta {
    pub fn new(alpha: DMatrix<f64>, beta: DVector<f64>, cuts: CutPointSpec) -> Result<Self> {
        let m = cuts.m();
        if alpha.nrows() != m || alpha.ncols() != m {
            return Err(Error::Dimension(format!(
                "alpha is {}x{} for {} groups",
                alpha.nrows(),
                alpha.ncols(),
                m
            )));
        }
        if alpha.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self { alpha, beta, cuts })
    }

    pub fn m(&self) -> usize {
        self.cuts.m()
    }

    pub fn r(&self) -> usize {
        self.cuts.r()
    }

    pub fn n_alpha(&self) -> usize {
        self.m() * self.m()
    }

    pub fn n_beta(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_offset(&self) -> usize {
        self.n_alpha()
    }

    pub fn cuts_offset(&self) -> usize {
        self.n_alpha() + self.n_beta()
    }

    pub fn n_params(&self) -> usize {
        self.cuts_offset() + self.cuts.n_params()
    }

    /// Flat index of `α^{gg'}`.
    pub fn alpha_index(&self, g: usize, g_peer: usize) -> usize {
        g * self.m() + g_peer
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let m = self.m();
        let mut v = Vec::with_capacity(self.n_params());
        for g in 0..m {
            for h in 0..m {
                v.push(self.alpha[(g, h)]);
            }
        }
        v.extend(self.beta.iter());
        v.extend(self.cuts.log_params());
        v
    }

    /// Same shapes, new values.
    pub fn with_vec(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "{} parameters, expected {}",
                v.len(),
                self.n_params()
            )));
        }
        let m = self.m();
        let alpha = DMatrix::from_row_slice(m, m, &v[..m * m]);
        let beta = DVector::from_column_slice(&v[self.beta_offset()..self.cuts_offset()]);
        let cuts = self.cuts.with_log_params(&v[self.cuts_offset()..])?;
        Self::new(alpha, beta, cuts)
    }

    /// Row sums of `|α|`, one per group.
    pub fn peer_row_sums(&self) -> Vec<f64> {
        self.alpha.row_iter().map(|r| r.iter().map(|a| a.abs()).sum()).collect()
    }

    /// Human-readable names in flat order.
    pub fn param_names(&self, beta_names: Option<&[String]>) -> Vec<String> {
        let m = self.m();
        let mut names = Vec::with_capacity(self.n_params());
        for g in 0..m {
            for h in 0..m {
                names.push(format!("alpha[{},{}]", g + 1, h + 1));
            }
        }
        match beta_names {
            Some(b) if b.len() == self.n_beta() => names.extend(b.iter().cloned()),
            _ => names.extend((0..self.n_beta()).map(|k| format!("beta[{k}]"))),
        }
        let s = self.cuts.switch();
        for g in 0..m {
            names.extend((2..=s).map(|t| format!("log_delta[{},{}]", g + 1, t)));
            if self.cuts.has_tail() {
                names.push(format!("log_tail[{}]", g + 1));
            }
        }
        names
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ThetaJson {
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub switch: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_spacings: Vec<Vec<f64>>,
    pub tail_spacings: Vec<Option<f64>>,
}

impl From<&Theta> for ThetaJson {
    fn from(t: &Theta) -> Self {
        let cuts = CutPointJson::from(&t.cuts);
        let m = t.m();
        Self {
            r: t.r(),
            m,
            switch: cuts.switch,
            alpha: (0..m * m).map(|k| t.alpha[(k / m, k % m)]).collect(),
            beta: t.beta.iter().copied().collect(),
            log_spacings: cuts.log_spacings,
            tail_spacings: cuts.tail_spacings,
        }
    }
}

impl TryFrom<ThetaJson> for Theta {
    type Error = Error;

    fn try_from(j: ThetaJson) -> Result<Self> {
        if j.alpha.len() != j.m * j.m || j.log_spacings.len() != j.m {
            return Err(Error::Dimension("theta blocks do not match M".into()));
        }
        let cuts = CutPointSpec::try_from(CutPointJson {
            r: j.r,
            switch: j.switch,
            log_spacings: j.log_spacings,
            tail_spacings: j.tail_spacings,
        })?;
        Theta::new(
            DMatrix::from_row_slice(j.m, j.m, &j.alpha),
            DVector::from_vec(j.beta),
            cuts,
        )
    }
}

impl Serialize for Theta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ThetaJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Theta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ThetaJson::deserialize(d)?;
        Theta::try_from(j).map_err(serde::de::Error::custom)
    }
}
