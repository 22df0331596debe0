//! Benchmark problems behind a common [`Model`] interface.
//!
//! A model evaluates `F` and the cell means of `∇F` on its own time grid.
//! Both take relaxed `n × M` control matrices so finite-difference checks can
//! perturb controls continuously; the grid methods are thin wrappers.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::control::{AdmissibleSet, ControlError, ControlGrid};
use crate::tvp::PNorm;

mod heat;
mod lvm;
mod tracking;

pub use heat::{HeatModel, HeatParams};
pub use lvm::{LvmModel, LvmParams};
pub use tracking::TrackingModel;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("control has {rows}×{cols} samples, model expects {cells}×{dim}")]
    Shape {
        rows: usize,
        cols: usize,
        cells: usize,
        dim: usize,
    },
    #[error("control horizon {got} differs from model horizon {expected}")]
    Horizon { got: f64, expected: f64 },
    #[error("state became non-finite at step {0}")]
    NonFinite(usize),
    #[error("linear solver failed: {0}")]
    LinearSolve(String),
    #[error("invalid model parameter: {0}")]
    Parameter(String),
    #[error("cannot parse model parameters: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Sampled state quantities over time, for data files.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrace {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    /// One row per time, one entry per column.
    pub values: Vec<Vec<f64>>,
}

pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn alphabet(&self) -> &Arc<AdmissibleSet>;

    fn horizon(&self) -> f64;

    fn cells(&self) -> usize;

    /// The regularization exponent used by the benchmark.
    fn default_p(&self) -> PNorm;

    fn default_beta(&self) -> f64;

    /// `F(u)` for a relaxed `n × M` control.
    fn objective_values(&self, u: &DMatrix<f64>) -> Result<f64, ModelError>;

    /// Cell means of `∇F(u)`, scaled so that `Δt Σ_j g^jᵀ d^j` is the
    /// directional derivative along `d`.
    fn gradient_values(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError>;

    /// State summary for plotting.
    fn state_trace(&self, u: &DMatrix<f64>) -> Result<StateTrace, ModelError>;

    fn dt(&self) -> f64 {
        self.horizon() / self.cells() as f64
    }

    fn objective(&self, u: &ControlGrid) -> Result<f64, ModelError> {
        self.check_grid(u)?;
        self.objective_values(&u.to_matrix())
    }

    fn gradient(&self, u: &ControlGrid) -> Result<DMatrix<f64>, ModelError> {
        self.check_grid(u)?;
        self.gradient_values(&u.to_matrix())
    }

    fn check_grid(&self, u: &ControlGrid) -> Result<(), ModelError> {
        let dim = self.alphabet().dim();
        if u.cells() != self.cells() || u.alphabet().dim() != dim {
            return Err(ModelError::Shape {
                rows: u.cells(),
                cols: u.alphabet().dim(),
                cells: self.cells(),
                dim,
            });
        }
        if (u.horizon() - self.horizon()).abs() > 1e-12 * self.horizon() {
            return Err(ModelError::Horizon {
                got: u.horizon(),
                expected: self.horizon(),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_shape(u: &DMatrix<f64>, cells: usize, dim: usize) -> Result<(), ModelError> {
    if u.nrows() != cells || u.ncols() != dim {
        return Err(ModelError::Shape {
            rows: u.nrows(),
            cols: u.ncols(),
            cells,
            dim,
        });
    }
    Ok(())
}

/// The two benchmark problems by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lvm,
    Heat,
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lvm" => Ok(ModelKind::Lvm),
            "heat" => Ok(ModelKind::Heat),
            other => Err(ModelError::Parameter(format!("unknown model {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Lvm => "lvm",
            ModelKind::Heat => "heat",
        })
    }
}

/// Per-model parameter overrides; missing fields take the defaults.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub lvm: LvmParams,
    pub heat: HeatParams,
}

impl ModelParams {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Builds a benchmark model on `cells` time cells.
pub fn build_model(
    kind: ModelKind,
    cells: usize,
    params: &ModelParams,
) -> Result<Box<dyn Model>, ModelError> {
    Ok(match kind {
        ModelKind::Lvm => Box::new(LvmModel::new(params.lvm.clone(), cells)?),
        ModelKind::Heat => Box::new(HeatModel::new(params.heat.clone(), cells)?),
    })
}
