//! Experiment configuration, read from TOML.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{build_gamma, AppendedCovariance, MpcConfig, Robustification};
use crate::error::{Error, Result};
use crate::estimator::{RlsState, SparseSetShape};
use crate::plant::{DisturbanceModel, ImpulseResponse, ShiftOperators};
use crate::polytope::{init_fps, Polytope};
use crate::recovery::OfflineDesign;

/// The simulation table shipped with the crate.
pub const TABLE_I: &str = include_str!("../../config/tableI.cfg");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub controller: ControllerSection,
    pub estimator: EstimatorSection,
    pub offline: OfflineSection,
    pub experiment: ExperimentSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub memory: usize,
    /// One row per output.
    pub truth: Vec<Vec<f64>>,
    pub sparsity: usize,
    pub noise_bound: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub horizon: usize,
    pub t_end: usize,
    pub violation_probability: f64,
    pub output_row: Vec<f64>,
    pub output_limit: f64,
    pub input_matrix: Vec<Vec<f64>>,
    pub input_limits: Vec<f64>,
    pub output_weight: Vec<Vec<f64>>,
    pub input_weight: Vec<Vec<f64>>,
    pub robustification: RobustificationName,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustificationName {
    DualLp,
    VertexEnumeration,
    ConstraintGeneration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub prior_mean: Vec<f64>,
    /// Prior covariance is this multiple of the identity.
    pub prior_variance: f64,
    pub initial_regressor: Vec<f64>,
    pub fps_lower: Vec<f64>,
    pub fps_upper: Vec<f64>,
    pub row_cap: usize,
    pub sparse_set_shape: ShapeName,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    Box,
    Ball,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineSection {
    pub rip_delta: f64,
    pub sample_constant: f64,
    /// Overrides the sample-count formula.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub c_bar: f64,
    /// Standard deviation of the physical offline inputs; omit to apply the
    /// normalized `N(0, 1/q)` regressors directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_std: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sparse,
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sparse => "sparse",
            Mode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Mode::Sparse),
            "baseline" => Ok(Mode::Baseline),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub offline_seed: u64,
    pub run_seed_base: u64,
    pub n_runs: usize,
    pub mode: Mode,
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::Config(format!("`{name}` has {} entries, expected {len}", v.len())));
    }
    Ok(DVector::from_row_slice(v))
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: Option<usize>, ncols: usize) -> Result<DMatrix<f64>> {
    if let Some(n) = nrows {
        if rows.len() != n {
            return Err(Error::Config(format!("`{name}` has {} rows, expected {n}", rows.len())));
        }
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Config(format!(
            "`{name}` has a row of length {}, expected {ncols}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn table_i() -> Self {
        Self::from_toml_str(TABLE_I).expect("bundled table parses")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every derived object once so later accessors cannot fail on
    /// shapes. Every failure is reported as a configuration error.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    fn check(&self) -> Result<()> {
        self.truth()?;
        self.disturbance()?;
        let ops = self.shift_operators()?;
        self.mpc_config()?.validate(&ops)?;
        self.prior()?;
        self.initial_fps()?;
        self.initial_regressor()?;
        if self.estimator.row_cap < 2 * self.parameter_dim() {
            return Err(Error::Config("row cap below the prior box size".into()));
        }
        Ok(())
    }

    pub fn regressor_len(&self) -> usize {
        self.plant.n_inputs * self.plant.memory
    }

    pub fn parameter_dim(&self) -> usize {
        self.plant.n_outputs * self.regressor_len()
    }

    pub fn truth(&self) -> Result<ImpulseResponse> {
        let h = matrix("truth", &self.plant.truth, Some(self.plant.n_outputs), self.regressor_len())?;
        ImpulseResponse::new(h, self.plant.sparsity).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn disturbance(&self) -> Result<DisturbanceModel> {
        DisturbanceModel::uniform(vector("noise_bound", &self.plant.noise_bound, self.plant.n_outputs)?)
    }

    pub fn shift_operators(&self) -> Result<ShiftOperators> {
        ShiftOperators::new(self.plant.n_inputs, self.plant.memory)
    }

    pub fn mpc_config(&self) -> Result<MpcConfig> {
        let c = &self.controller;
        let n_y = self.plant.n_outputs;
        let n_u = self.plant.n_inputs;
        Ok(MpcConfig {
            horizon: c.horizon,
            output_weight: matrix("output_weight", &c.output_weight, Some(n_y), n_y)?,
            input_weight: matrix("input_weight", &c.input_weight, Some(n_u), n_u)?,
            violation_probability: c.violation_probability,
            output_row: vector("output_row", &c.output_row, n_y)?,
            output_limit: c.output_limit,
            input_matrix: matrix("input_matrix", &c.input_matrix, None, n_u)?,
            input_limits: vector("input_limits", &c.input_limits, c.input_matrix.len())?,
            robustification: match c.robustification {
                RobustificationName::DualLp => Robustification::DualLp,
                RobustificationName::VertexEnumeration => Robustification::VertexEnumeration,
                RobustificationName::ConstraintGeneration => Robustification::ConstraintGeneration,
            },
        })
    }

    pub fn gamma(&self) -> Result<AppendedCovariance> {
        let e = vector("output_row", &self.controller.output_row, self.plant.n_outputs)?;
        build_gamma(&e, &self.disturbance()?.variance(), self.regressor_len())
    }

    pub fn prior(&self) -> Result<RlsState> {
        let dim = self.parameter_dim();
        let mean = vector("prior_mean", &self.estimator.prior_mean, dim)?;
        RlsState::new(mean, DMatrix::identity(dim, dim) * self.estimator.prior_variance)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn initial_regressor(&self) -> Result<DVector<f64>> {
        vector("initial_regressor", &self.estimator.initial_regressor, self.regressor_len())
    }

    pub fn initial_fps(&self) -> Result<Polytope> {
        let dim = self.parameter_dim();
        let lower = vector("fps_lower", &self.estimator.fps_lower, dim)?;
        let upper = vector("fps_upper", &self.estimator.fps_upper, dim)?;
        init_fps(&lower, &upper).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sparse_set_shape(&self) -> SparseSetShape {
        match self.estimator.sparse_set_shape {
            ShapeName::Box => SparseSetShape::Box,
            ShapeName::Ball => SparseSetShape::Ball,
        }
    }

    pub fn offline_design(&self) -> OfflineDesign {
        OfflineDesign {
            sparsity: self.plant.sparsity,
            rip_delta: self.offline.rip_delta,
            sample_constant: self.offline.sample_constant,
            samples: self.offline.samples,
            c_bar: self.offline.c_bar,
            input_std: self.offline.input_std,
        }
    }
}
