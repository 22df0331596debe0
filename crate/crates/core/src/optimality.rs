//! First- and second-order switching conditions at the switches of a grid
//! control, and the descent moves that witness a violated first-order
//! condition.
//!
//! With the minimal representation `(n_t, a, t)` and jumps `μ_j = a_j − a_{j+1}`
//! the conditions read
//!
//! ```text
//! μ_jᵀ ∇F(u)(t_j) = 0                                   for all j
//! μ_jᵀ (∇F(u))'(t_j) ≥ 0                                for j ∈ J
//! τᵀ 𝔽 τ ≥ 0,  𝔽 = diag(μ_jᵀ(∇F)'(t_j)) + [μ_jᵀ ∇²F(t_j, t_k) μ_k]
//! ```
//!
//! where `J` holds the switches that pass through other alphabet points.
//! Point values of `∇F` at a switch are the mean of the two adjacent cell
//! samples; derivatives and the Hessian kernel come from finite differences.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::control::{extract_minimal, lambda_set, ControlError, ControlGrid, MinimalRepresentation};
use crate::models::{Model, ModelError};

/// Relative tolerance for treating a residual as zero, scaled by `‖∇F‖_∞`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum OptimalityError {
    #[error("switch index {index} out of range for {count} switches")]
    SwitchIndex { index: usize, count: usize },
    #[error("residual {residual} does not exceed the threshold {threshold}")]
    Stationary { residual: f64, threshold: f64 },
    #[error("step mass {0} covers no whole cell")]
    EmptyStep(f64),
    #[error("perturbation of {cells} cells would cross a neighbouring switch")]
    CrossesSwitch { cells: usize },
    #[error("switch at cell {cell} is too close to the boundary for the stencil")]
    Stencil { cell: usize },
    #[error("finite-difference step must be positive, got {0}")]
    FdStep(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderReport {
    pub times: Vec<f64>,
    /// Cell index right after each switch.
    pub cells: Vec<usize>,
    pub jumps: Vec<Vec<i64>>,
    pub residuals: Vec<f64>,
    /// `‖(r_j)_j‖₂`.
    pub norm: f64,
    /// `‖∇F(u)‖_∞` over the samples.
    pub gradient_scale: f64,
}

impl FirstOrderReport {
    /// Whether every residual is below `RESIDUAL_TOLERANCE · ‖∇F‖_∞`.
    pub fn satisfied(&self) -> bool {
        let tol = RESIDUAL_TOLERANCE * self.gradient_scale;
        self.residuals.iter().all(|r| r.abs() <= tol)
    }
}

fn dot(mu: &[i64], g: &DMatrix<f64>, row: usize) -> f64 {
    mu.iter().enumerate().map(|(k, &m)| m as f64 * g[(row, k)]).sum()
}

/// `μᵀ ∇F(t)` at the boundary before `cell`, from the adjacent samples.
fn at_switch(mu: &[i64], g: &DMatrix<f64>, cell: usize) -> f64 {
    0.5 * (dot(mu, g, cell - 1) + dot(mu, g, cell))
}

/// First-order residuals from precomputed gradient samples.
pub fn first_order_with(u: &ControlGrid, gradient: &DMatrix<f64>) -> FirstOrderReport {
    let m = extract_minimal(u);
    let cells = m
        .switch_cells(u.cells())
        .expect("extracted switches lie on the grid");
    let jumps = m.jumps();
    let residuals: Vec<f64> = jumps
        .iter()
        .zip(&cells)
        .map(|(mu, &c)| at_switch(mu, gradient, c))
        .collect();
    let norm = residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
    FirstOrderReport {
        times: m.times().to_vec(),
        cells,
        jumps,
        residuals,
        norm,
        gradient_scale: gradient.amax(),
    }
}

pub fn first_order(model: &dyn Model, u: &ControlGrid) -> Result<FirstOrderReport, OptimalityError> {
    let g = model.gradient(u)?;
    Ok(first_order_with(u, &g))
}

/// A perturbed control moving one switch, with its first-order effect.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentStep {
    pub control: ControlGrid,
    /// `(∇F(u), d)` in the cell quadrature.
    pub linear_change: f64,
    /// `‖d‖_{L¹}` after rounding to whole cells.
    pub mass: f64,
    /// Whether the switch moved earlier (true) or later.
    pub earlier: bool,
}

/// Moves switch `j` by the cells worth `h / ‖μ_j‖₁` of time, towards the side
/// that decreases the linearization, provided `|r_j| > eps`.
pub fn descent_direction(
    u: &ControlGrid,
    gradient: &DMatrix<f64>,
    j: usize,
    h: f64,
    eps: f64,
) -> Result<DescentStep, OptimalityError> {
    let report = first_order_with(u, gradient);
    let count = report.residuals.len();
    if j >= count {
        return Err(OptimalityError::SwitchIndex { index: j, count });
    }
    let r = report.residuals[j];
    if r.abs() <= eps {
        return Err(OptimalityError::Stationary {
            residual: r,
            threshold: eps,
        });
    }
    let mu = &report.jumps[j];
    let mu_l1: i64 = mu.iter().map(|m| m.abs()).sum();
    let dt = u.dt();
    let width = ((h / mu_l1 as f64) / dt * (1.0 + 1e-12)).floor() as usize;
    if width == 0 {
        return Err(OptimalityError::EmptyStep(h));
    }
    let c = report.cells[j];
    let earlier = r > 0.0;
    // the moved cells must stay inside the segment being retracted
    let (lo, hi, fill) = if earlier {
        let prev = if j == 0 { 0 } else { report.cells[j - 1] };
        if c < prev + width {
            return Err(OptimalityError::CrossesSwitch { cells: width });
        }
        (c - width, c, u.indices()[c])
    } else {
        let next = report.cells.get(j + 1).copied().unwrap_or(u.cells());
        if c + width > next {
            return Err(OptimalityError::CrossesSwitch { cells: width });
        }
        (c, c + width, u.indices()[c - 1])
    };
    let mut indices = u.indices().to_vec();
    let mut linear = 0.0;
    for (cell, slot) in indices.iter_mut().enumerate().take(hi).skip(lo) {
        let before = u.value(cell);
        let after = u.alphabet().value(fill);
        for k in 0..before.len() {
            linear += dt * gradient[(cell, k)] * (after[k] - before[k]) as f64;
        }
        *slot = fill;
    }
    Ok(DescentStep {
        control: u.with_indices(indices)?,
        linear_change: linear,
        mass: width as f64 * dt * mu_l1 as f64,
        earlier,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderOptions {
    /// Time integral of the pulse amplitude used for the Hessian kernel.
    pub fd_step: f64,
    /// Sign tolerance, relative to the largest entry of `𝔽`.
    pub tolerance: f64,
}

impl Default for SecondOrderOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-4,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderReport {
    /// Switches whose segment contains further alphabet points.
    pub j_set: Vec<usize>,
    /// `μ_jᵀ (∇F)'(t_j)`.
    pub derivatives: Vec<f64>,
    /// The matrix `𝔽`, `(n_t − 1)²`.
    pub matrix: DMatrix<f64>,
    /// Smallest eigenvalue of `(𝔽 + 𝔽ᵀ)/2`; 0 without switches.
    pub min_eigenvalue: f64,
    pub sonc2: bool,
    pub sonc3: bool,
    pub soec2: bool,
    pub soec3: bool,
}

/// Switches `j` whose `Λ_j` is nonempty.
pub fn j_set(m: &MinimalRepresentation) -> Result<Vec<usize>, ControlError> {
    let mut out = Vec::new();
    for j in 0..m.count() - 1 {
        if !lambda_set(m.level(j), m.level(j + 1), m.alphabet())?.is_empty() {
            out.push(j);
        }
    }
    Ok(out)
}

pub fn second_order(
    model: &dyn Model,
    u: &ControlGrid,
    opts: &SecondOrderOptions,
) -> Result<SecondOrderReport, OptimalityError> {
    if !(opts.fd_step > 0.0) {
        return Err(OptimalityError::FdStep(opts.fd_step));
    }
    let m = extract_minimal(u);
    let cells = m.switch_cells(u.cells())?;
    let jumps = m.jumps();
    let s = jumps.len();
    let n = u.cells();
    let dt = u.dt();
    for &c in &cells {
        if c < 2 || c + 2 > n {
            return Err(OptimalityError::Stencil { cell: c });
        }
    }
    let base = u.to_matrix();
    let g = model.gradient_values(&base)?;

    // (μᵀg)' from the samples one cell beyond each neighbour of t_j
    let derivatives: Vec<f64> = jumps
        .iter()
        .zip(&cells)
        .map(|(mu, &c)| {
            let right = 0.5 * (dot(mu, &g, c) + dot(mu, &g, c + 1));
            let left = 0.5 * (dot(mu, &g, c - 2) + dot(mu, &g, c - 1));
            (right - left) / (2.0 * dt)
        })
        .collect();

    let mut matrix = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(derivatives.clone()));
    let amplitude = opts.fd_step / (2.0 * dt);
    for (k, (mu_k, &ck)) in jumps.iter().zip(&cells).enumerate() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        for cell in [ck - 1, ck] {
            for (col, &mk) in mu_k.iter().enumerate() {
                plus[(cell, col)] += amplitude * mk as f64;
                minus[(cell, col)] -= amplitude * mk as f64;
            }
        }
        let gp = model.gradient_values(&plus)?;
        let gm = model.gradient_values(&minus)?;
        for (j, (mu_j, &cj)) in jumps.iter().zip(&cells).enumerate() {
            let diff = at_switch(mu_j, &gp, cj) - at_switch(mu_j, &gm, cj);
            matrix[(j, k)] += diff / (2.0 * opts.fd_step);
        }
    }

    let min_eigenvalue = if s == 0 {
        0.0
    } else {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    };
    let tol = opts.tolerance * matrix.amax().max(f64::MIN_POSITIVE);
    let j_set = j_set(&m)?;
    let sonc2 = j_set.iter().all(|&j| derivatives[j] >= -tol);
    let soec2 = j_set.iter().all(|&j| derivatives[j] > tol);
    Ok(SecondOrderReport {
        j_set,
        derivatives,
        matrix,
        min_eigenvalue,
        sonc2,
        sonc3: min_eigenvalue >= -tol,
        soec2,
        soec3: s == 0 || min_eigenvalue > tol,
    })
}
