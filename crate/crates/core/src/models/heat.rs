//! Heating a square plate with two point-like heaters.
//!
//! ```text
//! ∂ₜy − αΔy = f₁u₁ + f₂u₂        on (0,T) × (−1,1)²
//! ∇y·n = κ(y_out − y)            on the boundary
//! F(u) = ∫ ‖y − y_d‖²_{L²} + γ(u₁ + u₂) dt
//! ```
//!
//! Space: nodal finite differences on an `N × N` grid with ghost nodes
//! closing the Robin condition. Weighted by the trapezoid rule `W`, the
//! discrete operator `WL` is symmetric, so the implicit Euler matrix
//! `W − τα WL` is factored once by sparse Cholesky and reused for the state
//! and the adjoint sweeps.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use super::{check_shape, Model, ModelError, StateTrace};
use crate::control::AdmissibleSet;
use crate::tvp::PNorm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Heater {
    pub amplitude: f64,
    pub decay: f64,
    pub center: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatParams {
    pub alpha: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub beta: f64,
    pub target: f64,
    pub initial: f64,
    pub outside: f64,
    pub heaters: Vec<Heater>,
    pub horizon: f64,
    /// Largest heating level; each heater takes values `0..=max_level`.
    pub max_level: i64,
    /// Nodes per side of the spatial grid.
    pub grid: usize,
    /// Implicit Euler steps per control cell.
    pub substeps: usize,
    pub p: PNorm,
}

impl Default for Heater {
    fn default() -> Self {
        Self {
            amplitude: 20.0,
            decay: 10.0,
            center: [0.0, 0.0],
        }
    }
}

impl Default for HeatParams {
    fn default() -> Self {
        let heater = |x: f64| Heater {
            center: [x, 0.0],
            ..Heater::default()
        };
        Self {
            alpha: 0.5,
            kappa: 0.12,
            gamma: 10.0,
            beta: 0.1,
            target: 20.0,
            initial: 10.0,
            outside: 0.0,
            heaters: vec![heater(-1.0), heater(1.0)],
            horizon: 10.0,
            max_level: 5,
            grid: 33,
            substeps: 1,
            p: PNorm::TWO,
        }
    }
}

pub struct HeatModel {
    params: HeatParams,
    cells: usize,
    alphabet: Arc<AdmissibleSet>,
    /// Trapezoid weights (diagonal of `W`).
    weights: DVector<f64>,
    /// `W f_i` per heater.
    sources: Vec<DVector<f64>>,
    /// `τα W c`, the Robin inflow added every step.
    inflow: DVector<f64>,
    factor: CscCholesky<f64>,
}

impl std::fmt::Debug for HeatModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HeatModel")
            .field("params", &self.params)
            .field("cells", &self.cells)
            .finish_non_exhaustive()
    }
}

impl HeatModel {
    pub fn new(params: HeatParams, cells: usize) -> Result<Self, ModelError> {
        let bad = |what: &str| Err(ModelError::Parameter(what.to_string()));
        if cells == 0 {
            return bad("cells must be positive");
        }
        if params.grid < 2 {
            return bad("spatial grid needs at least 2 nodes per side");
        }
        if params.substeps == 0 {
            return bad("substeps must be positive");
        }
        if !(params.horizon > 0.0 && params.alpha > 0.0 && params.kappa >= 0.0) {
            return bad("horizon and diffusivity must be positive, kappa nonnegative");
        }
        if params.heaters.is_empty() || params.max_level < 1 {
            return bad("need at least one heater and two heating levels");
        }
        let alphabet = Arc::new(AdmissibleSet::lattice_box(
            0,
            params.max_level,
            params.heaters.len(),
        ));

        let n = params.grid;
        let h = 2.0 / (n - 1) as f64;
        let node = |i: usize, j: usize| i * n + j;
        let coord = |i: usize| -1.0 + i as f64 * h;
        let edge = |i: usize| i == 0 || i == n - 1;
        let tau = params.horizon / (cells * params.substeps) as f64;
        let dofs = n * n;

        let mut weights = DVector::zeros(dofs);
        for i in 0..n {
            for j in 0..n {
                let wi = if edge(i) { 0.5 * h } else { h };
                let wj = if edge(j) { 0.5 * h } else { h };
                weights[node(i, j)] = wi * wj;
            }
        }

        // W − τα WL and the Robin inflow W c, assembled per axis.
        let mut coo = CooMatrix::new(dofs, dofs);
        let mut robin = DVector::zeros(dofs);
        let ta = tau * params.alpha;
        for i in 0..n {
            for j in 0..n {
                let k = node(i, j);
                let w = weights[k];
                let mut diag = w;
                for (pos, neighbour) in [(i, 0usize), (j, 1)] {
                    let step = |p: usize| if neighbour == 0 { node(p, j) } else { node(i, p) };
                    if pos > 0 && pos < n - 1 {
                        for q in [pos - 1, pos + 1] {
                            coo.push(k, step(q), -ta * w / (h * h));
                        }
                        diag += 2.0 * ta * w / (h * h);
                    } else {
                        let q = if pos == 0 { 1 } else { n - 2 };
                        coo.push(k, step(q), -2.0 * ta * w / (h * h));
                        diag += ta * w * (2.0 / (h * h) + 2.0 * params.kappa / h);
                        robin[k] += w * 2.0 * params.kappa * params.outside / h;
                    }
                }
                coo.push(k, k, diag);
            }
        }
        let system = CscMatrix::from(&coo);
        let factor = CscCholesky::factor(&system)
            .map_err(|e| ModelError::LinearSolve(format!("{e:?}")))?;

        let sources = params
            .heaters
            .iter()
            .map(|hs| {
                DVector::from_fn(dofs, |k, _| {
                    let (x, y) = (coord(k / n), coord(k % n));
                    let r2 = (x - hs.center[0]).powi(2) + (y - hs.center[1]).powi(2);
                    weights[k] * hs.amplitude * (-hs.decay * r2).exp()
                })
            })
            .collect();
        let inflow = robin * ta;

        Ok(Self {
            params,
            cells,
            alphabet,
            weights,
            sources,
            inflow,
            factor,
        })
    }

    pub fn params(&self) -> &HeatParams {
        &self.params
    }

    fn tau(&self) -> f64 {
        self.dt() / self.params.substeps as f64
    }

    fn dofs(&self) -> usize {
        self.weights.len()
    }

    /// States at every implicit Euler step, `y⁰ … y^{nS}`.
    fn states(&self, u: &DMatrix<f64>) -> Result<Vec<DVector<f64>>, ModelError> {
        check_shape(u, self.cells, self.sources.len())?;
        let tau = self.tau();
        let steps = self.cells * self.params.substeps;
        let mut y = Vec::with_capacity(steps + 1);
        y.push(DVector::from_element(self.dofs(), self.params.initial));
        for m in 0..steps {
            let cell = m / self.params.substeps;
            let mut rhs = y[m].component_mul(&self.weights) + &self.inflow;
            for (i, src) in self.sources.iter().enumerate() {
                rhs.axpy(tau * u[(cell, i)], src, 1.0);
            }
            self.factor.solve_mut(&mut rhs);
            if rhs.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(m + 1));
            }
            y.push(rhs);
        }
        Ok(y)
    }

    /// `‖y − y_d‖²` in the trapezoid-weighted inner product.
    fn misfit(&self, y: &DVector<f64>) -> f64 {
        let target = self.params.target;
        y.iter()
            .zip(self.weights.iter())
            .map(|(v, w)| w * (v - target).powi(2))
            .sum()
    }

    fn energy(&self, u: &DMatrix<f64>) -> f64 {
        self.params.gamma * self.dt() * u.iter().sum::<f64>()
    }
}

impl Model for HeatModel {
    fn name(&self) -> &str {
        "heat"
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
        let tracking: f64 = y[1..].iter().map(|s| self.misfit(s)).sum();
        Ok(self.tau() * tracking + self.energy(u))
    }

    fn gradient_values(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let y = self.states(u)?;
        let tau = self.tau();
        let dt = self.dt();
        let steps = y.len() - 1;
        let target = self.params.target;
        let tracking_grad = |m: usize| -> DVector<f64> {
            DVector::from_fn(self.dofs(), |k, _| {
                2.0 * tau * self.weights[k] * (y[m][k] - target)
            })
        };
        let mut g = DMatrix::from_element(self.cells, self.sources.len(), self.params.gamma);
        // z = A⁻¹ ∂F/∂y^{m+1}; the state Jacobian A⁻¹W is self-adjoint in W
        let mut z = tracking_grad(steps);
        self.factor.solve_mut(&mut z);
        for m in (0..steps).rev() {
            let cell = m / self.params.substeps;
            for (i, src) in self.sources.iter().enumerate() {
                g[(cell, i)] += tau / dt * src.dot(&z);
            }
            if m == 0 {
                break;
            }
            let mut lam = tracking_grad(m) + z.component_mul(&self.weights);
            self.factor.solve_mut(&mut lam);
            z = lam;
        }
        Ok(g)
    }

    fn state_trace(&self, u: &DMatrix<f64>) -> Result<StateTrace, ModelError> {
        let y = self.states(u)?;
        let tau = self.tau();
        Ok(StateTrace {
            columns: vec!["misfit".into()],
            times: (0..y.len()).map(|m| m as f64 * tau).collect(),
            values: y.iter().map(|s| vec![self.misfit(s).sqrt()]).collect(),
        })
    }
}
