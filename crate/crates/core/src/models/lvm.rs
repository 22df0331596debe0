//! Lotka–Volterra multimode fishing.
//!
//! ```text
//! y₁' = y₁ − y₁y₂ − y₁ v₁ᵀu
//! y₂' = −y₂ + y₁y₂ − y₂ v₂ᵀu
//! F(u) = ½ ∫ (y₁ − 1)² + (y₂ − 1)² dt
//! ```
//!
//! One explicit Euler step per control cell; the integral is the right
//! rectangle rule over the computed states `y¹ … yⁿ`, so every cell's control
//! enters `F`. The gradient is the exact derivative of this discrete `F`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_shape, Model, ModelError, StateTrace};
use crate::control::AdmissibleSet;
use crate::tvp::PNorm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LvmParams {
    pub v1: [f64; 3],
    pub v2: [f64; 3],
    pub y0: [f64; 2],
    pub horizon: f64,
    pub beta: f64,
    pub p: PNorm,
}

impl Default for LvmParams {
    fn default() -> Self {
        Self {
            v1: [0.2, 0.4, 0.01],
            v2: [0.1, 0.2, 0.1],
            y0: [0.5, 0.7],
            horizon: 12.0,
            beta: 1e-3,
            p: PNorm::Infinity,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LvmModel {
    params: LvmParams,
    cells: usize,
    alphabet: Arc<AdmissibleSet>,
}

impl LvmModel {
    pub fn new(params: LvmParams, cells: usize) -> Result<Self, ModelError> {
        if cells == 0 {
            return Err(ModelError::Parameter("cells must be positive".into()));
        }
        if !(params.horizon.is_finite() && params.horizon > 0.0) {
            return Err(ModelError::Parameter(format!("horizon {}", params.horizon)));
        }
        Ok(Self {
            params,
            cells,
            alphabet: Arc::new(AdmissibleSet::unit_vectors(3)),
        })
    }

    pub fn params(&self) -> &LvmParams {
        &self.params
    }

    /// Fishing rates `(v₁ᵀu, v₂ᵀu)` for one control row.
    fn rates(&self, u: &DMatrix<f64>, cell: usize) -> (f64, f64) {
        let (v1, v2) = (&self.params.v1, &self.params.v2);
        let mut r = (0.0, 0.0);
        for k in 0..3 {
            r.0 += v1[k] * u[(cell, k)];
            r.1 += v2[k] * u[(cell, k)];
        }
        r
    }

    /// States `y⁰ … yⁿ`.
    fn states(&self, u: &DMatrix<f64>) -> Result<Vec<[f64; 2]>, ModelError> {
        check_shape(u, self.cells, 3)?;
        let dt = self.dt();
        let mut y = Vec::with_capacity(self.cells + 1);
        y.push(self.params.y0);
        for j in 0..self.cells {
            let [a, b] = y[j];
            let (r1, r2) = self.rates(u, j);
            let next = [
                a + dt * (a - a * b - a * r1),
                b + dt * (-b + a * b - b * r2),
            ];
            if !(next[0].is_finite() && next[1].is_finite()) {
                return Err(ModelError::NonFinite(j + 1));
            }
            y.push(next);
        }
        Ok(y)
    }
}

impl Model for LvmModel {
    fn name(&self) -> &str {
        "lvm"
    }

    fn alphabet(&self) -> &Arc<AdmissibleSet> {
        &self.alphabet
    }

    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn cells(&self) -> usize {
        self.cells
    }

    fn default_p(&self) -> PNorm {
        self.params.p
    }

    fn default_beta(&self) -> f64 {
        self.params.beta
    }

    fn objective_values(&self, u: &DMatrix<f64>) -> Result<f64, ModelError> {
        let y = self.states(u)?;
        let mut acc = 0.0;
        for [a, b] in &y[1..] {
            acc += (a - 1.0).powi(2) + (b - 1.0).powi(2);
        }
        Ok(0.5 * self.dt() * acc)
    }

    fn gradient_values(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let y = self.states(u)?;
        let dt = self.dt();
        let n = self.cells;
        let (v1, v2) = (&self.params.v1, &self.params.v2);
        let mut g = DMatrix::zeros(n, 3);
        // lam = ∂F/∂y^{j+1}, swept backward from j = n − 1
        let mut lam = [dt * (y[n][0] - 1.0), dt * (y[n][1] - 1.0)];
        for j in (0..n).rev() {
            let [a, b] = y[j];
            let s1 = -a * lam[0];
            let s2 = -b * lam[1];
            for k in 0..3 {
                g[(j, k)] = s1 * v1[k] + s2 * v2[k];
            }
            if j == 0 {
                break;
            }
            let (r1, r2) = self.rates(u, j);
            // transpose of the Euler step's state Jacobian
            let j11 = 1.0 + dt * (1.0 - b - r1);
            let j12 = -dt * a;
            let j21 = dt * b;
            let j22 = 1.0 + dt * (-1.0 + a - r2);
            lam = [
                dt * (a - 1.0) + j11 * lam[0] + j21 * lam[1],
                dt * (b - 1.0) + j12 * lam[0] + j22 * lam[1],
            ];
        }
        Ok(g)
    }

    fn state_trace(&self, u: &DMatrix<f64>) -> Result<StateTrace, ModelError> {
        let y = self.states(u)?;
        let dt = self.dt();
        Ok(StateTrace {
            columns: vec!["y1".into(), "y2".into()],
            times: (0..=self.cells).map(|k| k as f64 * dt).collect(),
            values: y.iter().map(|s| s.to_vec()).collect(),
        })
    }
}
