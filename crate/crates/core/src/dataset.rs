use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::network::{build_design_named, DesignMatrix, GroupedNetwork};

/// Observed sample: network, regressors and outcomes in `0..=R`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub net: GroupedNetwork,
    pub design: DesignMatrix,
    pub y: Vec<usize>,
    pub r: usize,
}

impl Dataset {
    pub fn new(net: GroupedNetwork, design: DesignMatrix, y: Vec<usize>, r: usize) -> Result<Self> {
        if y.len() != net.n() || design.z().nrows() != net.n() {
            return Err(Error::Dimension(format!(
                "{} outcomes, {} design rows, {} agents",
                y.len(),
                design.z().nrows(),
                net.n()
            )));
        }
        if r == 0 {
            return Err(Error::InvalidParameter("R must be at least 1".into()));
        }
        if let Some(i) = y.iter().position(|&v| v > r) {
            return Err(Error::InvalidParameter(format!(
                "outcome {} of agent {i} exceeds R = {r}",
                y[i]
            )));
        }
        Ok(Self { net, design, y, r })
    }

    /// Builds the design from raw covariates.
    pub fn from_covariates(
        net: GroupedNetwork,
        x: &DMatrix<f64>,
        y: Vec<usize>,
        r: usize,
        fixed_effects: bool,
        names: Option<&[String]>,
    ) -> Result<Self> {
        let design = build_design_named(&net, x, fixed_effects, names)?;
        Self::new(net, design, y, r)
    }

    pub fn n(&self) -> usize {
        self.net.n()
    }

    pub fn n_subnets(&self) -> usize {
        self.net.n_subnets()
    }

    pub fn y_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&v| v as f64).collect()
    }

    /// Same data with a different design (e.g. fixed effects switched on).
    pub fn with_fixed_effects(&self, fixed_effects: bool) -> Result<Self> {
        let names: Vec<String> = {
            let k = self.design.n_covariates();
            let first = self.design.n_intercepts();
            self.design.column_names()[first..first + k].to_vec()
        };
        Self::from_covariates(
            self.net.clone(),
            self.design.x(),
            self.y.clone(),
            self.r,
            fixed_effects,
            Some(&names),
        )
    }
}
