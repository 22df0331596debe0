//! `F(u) = ½ Δt Σ_j ‖u^j − w^j‖²`, a quadratic toy with a known minimizer.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{check_shape, Model, ModelError, StateTrace};
use crate::control::{AdmissibleSet, ControlGrid};
use crate::tvp::PNorm;

#[derive(Debug, Clone)]
pub struct TrackingModel {
    target: DMatrix<f64>,
    horizon: f64,
    alphabet: Arc<AdmissibleSet>,
    scale: f64,
}

impl TrackingModel {
    /// Tracks an arbitrary real target on the grid of `target.nrows()` cells.
    pub fn new(alphabet: Arc<AdmissibleSet>, horizon: f64, target: DMatrix<f64>) -> Self {
        Self {
            target,
            horizon,
            alphabet,
            scale: 1.0,
        }
    }

    /// Tracks an admissible grid, which is then the unique minimizer of `F`.
    pub fn towards(u: &ControlGrid) -> Self {
        Self::new(u.alphabet().clone(), u.horizon(), u.to_matrix())
    }

    /// Multiplies `F` by `c`.
    pub fn scaled(mut self, c: f64) -> Self {
        self.scale = c;
        self
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }
}

impl Model for TrackingModel {
    fn name(&self) -> &str {
        "tracking"
    }

    fn alphabet(&self) -> &Arc<AdmissibleSet> {
        &self.alphabet
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn cells(&self) -> usize {
        self.target.nrows()
    }

    fn default_p(&self) -> PNorm {
        PNorm::TWO
    }

    fn default_beta(&self) -> f64 {
        1e-6
    }

    fn objective_values(&self, u: &DMatrix<f64>) -> Result<f64, ModelError> {
        check_shape(u, self.cells(), self.alphabet.dim())?;
        Ok(0.5 * self.scale * self.dt() * (u - &self.target).norm_squared())
    }

    fn gradient_values(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        check_shape(u, self.cells(), self.alphabet.dim())?;
        Ok((u - &self.target) * self.scale)
    }

    fn state_trace(&self, u: &DMatrix<f64>) -> Result<StateTrace, ModelError> {
        check_shape(u, self.cells(), self.alphabet.dim())?;
        let dt = self.dt();
        Ok(StateTrace {
            columns: vec!["misfit".into()],
            times: (0..self.cells()).map(|j| j as f64 * dt).collect(),
            values: u
                .row_iter()
                .zip(self.target.row_iter())
                .map(|(a, b)| vec![(a - b).norm()])
                .collect(),
        })
    }
}
