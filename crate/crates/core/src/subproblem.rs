//! Exact solver for the discretized trust-region subproblem
//!
//! ```text
//! minimize   Δt Σ_j g^jᵀ ν_{l^j} + β Σ_j ‖ν_{l^{j+1}} − ν_{l^j}‖_p
//! subject to Σ_j ‖ν_{l^j} − v^j‖_1 ≤ B
//! ```
//!
//! by a backward Bellman recursion over (level, cell, consumed budget). The
//! budget coordinate is the exact integer L¹ deviation of the suffix, so the
//! value table `Φ_{l,i,b}` is indexed by equality and the inequality is
//! recovered by minimizing over `b ≤ B` at the first cell. Only two time
//! layers of `Φ` are alive at once; the argmin table `U` is kept for every
//! cell so that smaller budgets can be reconstructed without recomputation.
//!
//! With a switch bound the state gains a coordinate `s`, the number of index
//! changes still allowed in the suffix.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::control::{ControlError, ControlGrid};
use crate::tvp::{switch_costs, PNorm};

/// Marks an unreachable state. Never used as an operand: every accumulation
/// is guarded by an `is_finite` check or compares against it.
const UNREACHABLE: f64 = f64::INFINITY;

/// Stored in `U` when the inner minimum ranges over an empty set.
const NO_CHOICE: u16 = 0;

#[derive(Debug, Error)]
pub enum SubproblemError {
    #[error("gradient samples are {rows}×{cols}, expected {cells}×{dim}")]
    GradientShape {
        rows: usize,
        cols: usize,
        cells: usize,
        dim: usize,
    },
    #[error("regularization weight must be finite and nonnegative, got {0}")]
    InvalidBeta(f64),
    #[error("gradient samples must be finite")]
    NonFiniteGradient,
    #[error("alphabet of {0} values exceeds the argmin table's index range")]
    AlphabetTooLarge(usize),
    #[error("budget {requested} exceeds the {available} the tables were built for")]
    BudgetExceeded { requested: usize, available: usize },
    #[error("no admissible sequence satisfies the budget and switch bound")]
    Infeasible,
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// One instance of the discretized subproblem around the iterate `current`.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemInstance<'a> {
    pub current: &'a ControlGrid,
    /// `n × M` cell means of the gradient.
    pub gradient: &'a DMatrix<f64>,
    pub p: PNorm,
    pub beta: f64,
    /// Integer L¹ budget `B`.
    pub budget: usize,
    /// Maximal number of index changes, if bounded.
    pub switch_limit: Option<usize>,
}

impl SubproblemInstance<'_> {
    fn validate(&self) -> Result<(), SubproblemError> {
        let cells = self.current.cells();
        let dim = self.current.alphabet().dim();
        if self.gradient.nrows() != cells || self.gradient.ncols() != dim {
            return Err(SubproblemError::GradientShape {
                rows: self.gradient.nrows(),
                cols: self.gradient.ncols(),
                cells,
                dim,
            });
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(SubproblemError::InvalidBeta(self.beta));
        }
        if self.gradient.iter().any(|g| !g.is_finite()) {
            return Err(SubproblemError::NonFiniteGradient);
        }
        let d = self.current.alphabet().len();
        if d >= u16::MAX as usize {
            return Err(SubproblemError::AlphabetTooLarge(d));
        }
        Ok(())
    }
}

/// A reconstructed minimizer and its subproblem value.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsolution {
    pub control: ControlGrid,
    pub value: f64,
    /// `Σ_j ‖u^j − v^j‖_1` of the minimizer.
    pub deviation: usize,
}

/// Value function at the first cell plus the argmin table for all cells.
#[derive(Debug, Clone)]
pub struct DpTables {
    current: ControlGrid,
    levels: usize,
    budget: usize,
    bounded: bool,
    switch_layers: usize,
    /// `Φ_{l,1,b,s}`, layout `[s][l][b]`.
    first: Vec<f64>,
    /// `U_{l,i,b,s}` stored as `l' + 1`, layout `[i][s][l][b]`, `i < n − 1`.
    choice: Vec<u16>,
    /// `‖ν_l − v^i‖_1`, layout `[i][l]`.
    deviation: Vec<u32>,
}

impl DpTables {
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn switch_limit(&self) -> Option<usize> {
        self.bounded.then(|| self.switch_layers - 1)
    }

    fn width(&self) -> usize {
        self.budget + 1
    }

    /// `Φ_{l,1,b}` with the full switch allowance; `None` when unreachable.
    pub fn first_value(&self, level: usize, b: usize) -> Option<f64> {
        let s = self.switch_layers - 1;
        let v = self.first[(s * self.levels + level) * self.width() + b];
        v.is_finite().then_some(v)
    }

    /// `U_{l,i,b}` (0-based cell `i < n − 1`) with the full switch allowance;
    /// `None` encodes the empty argmin.
    pub fn choice(&self, level: usize, cell: usize, b: usize) -> Option<usize> {
        let s = self.switch_layers - 1;
        self.choice_at(cell, s, level, b)
    }

    fn choice_at(&self, cell: usize, s: usize, level: usize, b: usize) -> Option<usize> {
        let idx = ((cell * self.switch_layers + s) * self.levels + level) * self.width() + b;
        match self.choice[idx] {
            NO_CHOICE => None,
            c => Some(c as usize - 1),
        }
    }

    /// Bytes held by the argmin table.
    pub fn choice_table_bytes(&self) -> usize {
        self.choice.len() * std::mem::size_of::<u16>()
    }
}

/// Solves the instance exactly and returns the minimizer, its value, and the
/// tables for later budget reductions.
pub fn solve(inst: &SubproblemInstance<'_>) -> Result<(Subsolution, DpTables), SubproblemError> {
    inst.validate()?;
    let current = inst.current;
    let alphabet = current.alphabet();
    let n = current.cells();
    let d = alphabet.len();
    let m = alphabet.dim();
    let dt = current.dt();
    let width = inst.budget + 1;
    let bounded = inst.switch_limit.is_some();
    let layers = inst.switch_limit.map_or(1, |s| s + 1);
    let layer_len = layers * d * width;

    let costs: Vec<f64> = switch_costs(alphabet, inst.p)
        .into_iter()
        .map(|c| inst.beta * c)
        .collect();

    let mut deviation = vec![0u32; n * d];
    for (i, &v) in current.indices().iter().enumerate() {
        for l in 0..d {
            deviation[i * d + l] = alphabet.l1_distance(v, l) as u32;
        }
    }
    let linear = |i: usize, l: usize| -> f64 {
        let nu = alphabet.value(l);
        let mut acc = 0.0;
        for k in 0..m {
            acc += inst.gradient[(i, k)] * nu[k] as f64;
        }
        dt * acc
    };

    // base case: the last cell
    let mut next = vec![UNREACHABLE; layer_len];
    for l in 0..d {
        let dev = deviation[(n - 1) * d + l] as usize;
        if dev < width {
            let value = linear(n - 1, l);
            for s in 0..layers {
                next[(s * d + l) * width + dev] = value;
            }
        }
    }

    let mut choice = vec![NO_CHOICE; (n - 1) * layer_len];
    let mut cur = vec![UNREACHABLE; layer_len];
    let mut best = vec![UNREACHABLE; width];
    let mut arg = vec![NO_CHOICE; width];

    for i in (0..n.saturating_sub(1)).rev() {
        cur.fill(UNREACHABLE);
        let u_layer = &mut choice[i * layer_len..(i + 1) * layer_len];
        for s in 0..layers {
            for l in 0..d {
                let dev = deviation[i * d + l] as usize;
                if dev >= width {
                    continue;
                }
                let span = width - dev;
                let best = &mut best[..span];
                let arg = &mut arg[..span];
                best.fill(UNREACHABLE);
                arg.fill(NO_CHOICE);
                for l2 in 0..d {
                    let src = if l2 == l || !bounded {
                        s
                    } else if s > 0 {
                        s - 1
                    } else {
                        continue;
                    };
                    let step = costs[l * d + l2];
                    let row = &next[(src * d + l2) * width..][..span];
                    let tag = (l2 + 1) as u16;
                    // ties keep the smaller l2: strict comparison
                    for ((bst, a), &phi) in best.iter_mut().zip(arg.iter_mut()).zip(row) {
                        let cand = step + phi;
                        if cand < *bst {
                            *bst = cand;
                            *a = tag;
                        }
                    }
                }
                let lin = linear(i, l);
                let base = (s * d + l) * width + dev;
                let cur_row = &mut cur[base..base + span];
                let u_row = &mut u_layer[base..base + span];
                for b in 0..span {
                    if best[b].is_finite() {
                        cur_row[b] = lin + best[b];
                        u_row[b] = arg[b];
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let tables = DpTables {
        current: current.clone(),
        levels: d,
        budget: inst.budget,
        bounded,
        switch_layers: layers,
        first: next,
        choice,
        deviation,
    };
    let solution = reconstruct(&tables, inst.budget)?;
    Ok((solution, tables))
}

/// Re-solves at a smaller budget `B' ≤ B` from existing tables: only the
/// first-cell argmin and the forward reconstruction are redone.
pub fn resolve_at_budget(tables: &DpTables, budget: usize) -> Result<Subsolution, SubproblemError> {
    if budget > tables.budget {
        return Err(SubproblemError::BudgetExceeded {
            requested: budget,
            available: tables.budget,
        });
    }
    reconstruct(tables, budget)
}

fn reconstruct(tables: &DpTables, budget: usize) -> Result<Subsolution, SubproblemError> {
    let d = tables.levels;
    let width = tables.width();
    let n = tables.current.cells();
    let top = tables.switch_layers - 1;

    // ties go to the smallest deviation, then the smallest level
    let mut start = None;
    let mut value = UNREACHABLE;
    for b in 0..=budget {
        for l in 0..d {
            let phi = tables.first[(top * d + l) * width + b];
            if phi < value {
                value = phi;
                start = Some((l, b));
            }
        }
    }
    let Some((mut level, mut remaining)) = start else {
        return Err(SubproblemError::Infeasible);
    };
    let used = remaining;

    let mut indices = Vec::with_capacity(n);
    indices.push(level);
    let mut s = top;
    for i in 0..n - 1 {
        let next = tables
            .choice_at(i, s, level, remaining)
            .expect("finite value implies a recorded argmin");
        remaining -= tables.deviation[i * d + level] as usize;
        if tables.bounded && next != level {
            s -= 1;
        }
        level = next;
        indices.push(level);
    }
    debug_assert_eq!(remaining, tables.deviation[(n - 1) * d + level] as usize);

    Ok(Subsolution {
        control: tables.current.with_indices(indices)?,
        value,
        deviation: used,
    })
}

/// The subproblem objective `Δt Σ g^jᵀν_{l^j} + β TV_p` of an arbitrary grid,
/// accumulated left to right.
pub fn subproblem_objective(gradient: &DMatrix<f64>, u: &ControlGrid, p: PNorm, beta: f64) -> f64 {
    let dt = u.dt();
    let mut linear = 0.0;
    for j in 0..u.cells() {
        let nu = u.value(j);
        let mut acc = 0.0;
        for (k, &x) in nu.iter().enumerate() {
            acc += gradient[(j, k)] * x as f64;
        }
        linear += dt * acc;
    }
    linear + beta * crate::tvp::tv_grid(u, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::AdmissibleSet;
    use std::sync::Arc;

    fn grid(alphabet: &Arc<AdmissibleSet>, horizon: f64, indices: Vec<usize>) -> ControlGrid {
        ControlGrid::new(alphabet.clone(), horizon, indices).unwrap()
    }

    #[test]
    fn zero_gradient_keeps_constant_iterate() {
        let v = Arc::new(AdmissibleSet::lattice_box(0, 2, 2));
        let u = grid(&v, 1.0, vec![4; 6]);
        let g = DMatrix::zeros(6, 2);
        let inst = SubproblemInstance {
            current: &u,
            gradient: &g,
            p: PNorm::TWO,
            beta: 0.5,
            budget: 7,
            switch_limit: None,
        };
        let (sol, _) = solve(&inst).unwrap();
        assert_eq!(sol.control, u);
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.deviation, 0);
    }

    #[test]
    fn zero_gradient_value_is_regularized_variation_of_iterate() {
        let v = Arc::new(AdmissibleSet::unit_vectors(3));
        let u = grid(&v, 1.0, vec![0, 0, 1, 1, 2]);
        let g = DMatrix::zeros(5, 3);
        let inst = SubproblemInstance {
            current: &u,
            gradient: &g,
            p: PNorm::Infinity,
            beta: 0.3,
            budget: 0,
            switch_limit: None,
        };
        let (sol, _) = solve(&inst).unwrap();
        assert_eq!(sol.control, u);
        assert!((sol.value - 0.3 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn separable_without_regularization() {
        let v = Arc::new(AdmissibleSet::unit_vectors(3));
        let u = grid(&v, 3.0, vec![0, 0, 0]);
        #[rustfmt::skip]
        let g = DMatrix::from_row_slice(3, 3, &[
            1.0, -2.0, 0.0,
            0.5, 0.7, -0.1,
            -3.0, 0.0, 1.0,
        ]);
        let inst = SubproblemInstance {
            current: &u,
            gradient: &g,
            p: PNorm::ONE,
            beta: 0.0,
            budget: 100,
            switch_limit: None,
        };
        let (sol, _) = solve(&inst).unwrap();
        assert_eq!(sol.control.indices(), &[1, 2, 0]);
        assert!((sol.value - (-2.0 - 0.1 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn budget_zero_forces_current_iterate() {
        let v = Arc::new(AdmissibleSet::lattice_box(0, 3, 1));
        let u = grid(&v, 2.0, vec![0, 3, 1, 2]);
        let g = DMatrix::from_row_slice(4, 1, &[-1.0, 1.0, -1.0, 1.0]);
        let inst = SubproblemInstance {
            current: &u,
            gradient: &g,
            p: PNorm::ONE,
            beta: 0.1,
            budget: 6,
            switch_limit: None,
        };
        let (full, tables) = solve(&inst).unwrap();
        assert_ne!(full.control, u);
        assert!(full.deviation <= 6);
        let same = resolve_at_budget(&tables, 6).unwrap();
        assert_eq!(same, full);
        let frozen = resolve_at_budget(&tables, 0).unwrap();
        assert_eq!(frozen.control, u);
        assert!(matches!(
            resolve_at_budget(&tables, 7),
            Err(SubproblemError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn switch_limit_zero_needs_a_reachable_constant() {
        let v = Arc::new(AdmissibleSet::lattice_box(0, 1, 1));
        // any constant sequence deviates by 1 from this iterate
        let u = grid(&v, 1.0, vec![0, 1]);
        let g = DMatrix::zeros(2, 1);
        let mut inst = SubproblemInstance {
            current: &u,
            gradient: &g,
            p: PNorm::ONE,
            beta: 1.0,
            budget: 0,
            switch_limit: Some(0),
        };
        assert!(matches!(solve(&inst), Err(SubproblemError::Infeasible)));
        inst.budget = 1;
        let (sol, tables) = solve(&inst).unwrap();
        assert_eq!(sol.control.switch_count(), 0);
        assert_eq!(tables.switch_limit(), Some(0));
    }

    #[test]
    fn single_cell_grid() {
        let v = Arc::new(AdmissibleSet::unit_vectors(2));
        let u = grid(&v, 1.0, vec![0]);
        let g = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let inst = SubproblemInstance {
            current: &u,
            gradient: &g,
            p: PNorm::TWO,
            beta: 1.0,
            budget: 2,
            switch_limit: None,
        };
        let (sol, _) = solve(&inst).unwrap();
        assert_eq!(sol.control.indices(), &[1]);
        assert_eq!(sol.value, -1.0);
    }

    #[test]
    fn rejects_malformed_instances() {
        let v = Arc::new(AdmissibleSet::unit_vectors(2));
        let u = grid(&v, 1.0, vec![0, 1]);
        let g = DMatrix::zeros(3, 2);
        let inst = SubproblemInstance {
            current: &u,
            gradient: &g,
            p: PNorm::TWO,
            beta: 1.0,
            budget: 2,
            switch_limit: None,
        };
        assert!(matches!(solve(&inst), Err(SubproblemError::GradientShape { .. })));
        let g = DMatrix::zeros(2, 2);
        let inst = SubproblemInstance {
            gradient: &g,
            beta: -1.0,
            ..inst
        };
        assert!(matches!(solve(&inst), Err(SubproblemError::InvalidBeta(_))));
    }

    #[test]
    fn objective_matches_reported_value() {
        let v = Arc::new(AdmissibleSet::lattice_box(0, 2, 2));
        let u = grid(&v, 2.0, vec![0, 8, 4, 4, 1]);
        let g = DMatrix::from_fn(5, 2, |i, k| ((i * 3 + k * 7) % 5) as f64 - 2.0);
        let inst = SubproblemInstance {
            current: &u,
            gradient: &g,
            p: PNorm::Finite(3.0),
            beta: 0.2,
            budget: 5,
            switch_limit: Some(2),
        };
        let (sol, _) = solve(&inst).unwrap();
        let direct = subproblem_objective(&g, &sol.control, inst.p, inst.beta);
        assert!((direct - sol.value).abs() < 1e-12);
        assert!(sol.control.switch_count() <= 2);
        assert!(sol.control.l1_deviation(&u) as usize <= 5);
    }
}
