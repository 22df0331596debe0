//! Trust-region outer loop for `F(u) + β TV_p(u)`.
//!
//! Each outer iteration evaluates the gradient once and builds the DP tables
//! once at the budget of the initial radius. Radius halvings reuse the tables
//! through [`resolve_at_budget`]; only the acceptance test calls the model.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlGrid;
use crate::models::{Model, ModelError};
use crate::subproblem::{resolve_at_budget, solve, SubproblemError, SubproblemInstance};
use crate::tvp::{tv_grid, PNorm};

/// Predicted reductions at or below this are treated as zero.
pub const PRED_GUARD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrustRegionError {
    #[error("invalid trust-region configuration: {0}")]
    Config(String),
    #[error("initial control does not match the model grid: {0}")]
    Start(ModelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    /// `Δ⁰`, in units of L¹ mass (time × level distance).
    pub initial_radius: f64,
    /// Acceptance ratio `σ`.
    pub sigma: f64,
    pub max_outer: usize,
    pub pred_tol: f64,
    /// Bound on index changes per iterate, if any.
    pub switch_limit: Option<usize>,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            initial_radius: 2.0,
            sigma: 0.5,
            max_outer: 10_000,
            pred_tol: 0.0,
            switch_limit: None,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<(), TrustRegionError> {
        let bad = |m: String| Err(TrustRegionError::Config(m));
        if !(self.initial_radius.is_finite() && self.initial_radius > 0.0) {
            return bad(format!("initial radius {}", self.initial_radius));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("sigma {} outside (0, 1)", self.sigma));
        }
        if !(self.pred_tol >= 0.0) {
            return bad(format!("pred tolerance {}", self.pred_tol));
        }
        Ok(())
    }
}

/// `B = ⌊Δ/Δt⌋`, robust to the quotient landing a rounding error below an
/// integer.
pub fn budget_for(radius: f64, dt: f64) -> usize {
    let q = radius / dt;
    (q + 1e-9 * q.max(1.0)).floor() as usize
}

/// One subproblem solve and acceptance test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerStep {
    pub radius: f64,
    pub budget: usize,
    pub pred: f64,
    /// `None` when the step ended the run before the model was called.
    pub ared: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct IterateRecord {
    /// The iterate this outer iteration started from.
    pub iterate: ControlGrid,
    /// `F + β TV_p` at `iterate`.
    pub objective: f64,
    pub tv: f64,
    pub steps: Vec<InnerStep>,
    pub gradient_calls: usize,
    pub objective_calls: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// No predicted decrease at the final radius.
    Stationary,
    /// The budget fell to zero without an acceptable step.
    BudgetExhausted,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct TrustRegionResult {
    pub control: ControlGrid,
    /// `F + β TV_p` at `control`.
    pub objective: f64,
    pub tv: f64,
    pub termination: Termination,
    /// Radius and budget of the last subproblem solved.
    pub final_radius: f64,
    pub final_budget: usize,
    pub records: Vec<IterateRecord>,
    pub gradient_calls: usize,
    pub objective_calls: usize,
    pub table_builds: usize,
    pub model_seconds: f64,
    pub subproblem_seconds: f64,
    pub seconds: f64,
}

impl TrustRegionResult {
    pub fn converged(&self) -> bool {
        self.termination != Termination::IterationLimit
    }

    pub fn outer_iterations(&self) -> usize {
        self.records.len()
    }

    /// Writes one CSV row per inner step.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<(), TrustRegionError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "outer_iter",
            "inner_iter",
            "radius",
            "budget",
            "pred",
            "ared",
            "objective",
            "tv",
            "accepted",
        ])
        .map_err(csv_io)?;
        for (k, rec) in self.records.iter().enumerate() {
            for (i, s) in rec.steps.iter().enumerate() {
                w.write_record([
                    k.to_string(),
                    i.to_string(),
                    s.radius.to_string(),
                    s.budget.to_string(),
                    s.pred.to_string(),
                    s.ared.map_or_else(String::new, |a| a.to_string()),
                    rec.objective.to_string(),
                    rec.tv.to_string(),
                    s.accepted.to_string(),
                ])
                .map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// `(F + β TV_p, TV_p)` at `u`, adding the model time to `seconds`.
fn total_objective(
    model: &dyn Model,
    u: &ControlGrid,
    p: PNorm,
    beta: f64,
    seconds: &mut f64,
) -> Result<(f64, f64), ModelError> {
    let t = Instant::now();
    let f = model.objective(u)?;
    *seconds += t.elapsed().as_secs_f64();
    let tv = tv_grid(u, p);
    Ok((f + beta * tv, tv))
}

/// Minimizes `F + β TV_p` from `start`.
pub fn minimize(
    model: &dyn Model,
    start: &ControlGrid,
    cfg: &TrustRegionConfig,
    p: PNorm,
    beta: f64,
) -> Result<TrustRegionResult, TrustRegionError> {
    cfg.validate()?;
    model.check_grid(start).map_err(TrustRegionError::Start)?;
    let clock = Instant::now();
    let dt = start.dt();
    let mut model_seconds = 0.0;
    let mut subproblem_seconds = 0.0;
    let mut gradient_calls = 0;
    let mut objective_calls = 0;
    let mut table_builds = 0;

    let mut u = start.clone();
    let (mut objective, mut tv) = total_objective(model, &u, p, beta, &mut model_seconds)?;
    objective_calls += 1;
    let mut records = Vec::new();
    let mut termination = Termination::IterationLimit;
    let mut final_radius = cfg.initial_radius;
    let mut final_budget = budget_for(cfg.initial_radius, dt);

    'outer: for _ in 0..cfg.max_outer {
        let iter_clock = Instant::now();
        let mut record = IterateRecord {
            iterate: u.clone(),
            objective,
            tv,
            steps: Vec::new(),
            gradient_calls: 1,
            objective_calls: 0,
            seconds: 0.0,
        };

        let t = Instant::now();
        let gradient = model.gradient(&u)?;
        model_seconds += t.elapsed().as_secs_f64();
        gradient_calls += 1;

        let mut radius = cfg.initial_radius;
        let budget = budget_for(radius, dt);
        let t = Instant::now();
        let (first, tables) = solve(&SubproblemInstance {
            current: &u,
            gradient: &gradient,
            p,
            beta,
            budget,
            switch_limit: cfg.switch_limit,
        })?;
        table_builds += 1;
        // the only sequence within budget 0 is u itself, summed like the DP
        let reference = resolve_at_budget(&tables, 0)?.value;
        subproblem_seconds += t.elapsed().as_secs_f64();

        let mut candidate = first;
        let mut budget = budget;
        let mut accepted = false;
        loop {
            final_radius = radius;
            final_budget = budget;
            let pred = reference - candidate.value;
            if pred <= cfg.pred_tol.max(PRED_GUARD) {
                record.steps.push(InnerStep {
                    radius,
                    budget,
                    pred,
                    ared: None,
                    accepted: false,
                });
                termination = if budget == 0 {
                    Termination::BudgetExhausted
                } else {
                    Termination::Stationary
                };
                break;
            }
            let (trial, trial_tv) =
                total_objective(model, &candidate.control, p, beta, &mut model_seconds)?;
            objective_calls += 1;
            record.objective_calls += 1;
            let ared = objective - trial;
            let ok = ared >= cfg.sigma * pred;
            record.steps.push(InnerStep {
                radius,
                budget,
                pred,
                ared: Some(ared),
                accepted: ok,
            });
            if ok {
                u = candidate.control;
                objective = trial;
                tv = trial_tv;
                accepted = true;
                break;
            }
            radius *= 0.5;
            budget = budget_for(radius, dt);
            let t = Instant::now();
            candidate = resolve_at_budget(&tables, budget)?;
            subproblem_seconds += t.elapsed().as_secs_f64();
        }
        record.seconds = iter_clock.elapsed().as_secs_f64();
        records.push(record);
        if !accepted {
            break 'outer;
        }
    }

    Ok(TrustRegionResult {
        control: u,
        objective,
        tv,
        termination,
        final_radius,
        final_budget,
        records,
        gradient_calls,
        objective_calls,
        table_builds,
        model_seconds,
        subproblem_seconds,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::AdmissibleSet;
    use crate::models::TrackingModel;
    use std::sync::Arc;

    #[test]
    fn budget_rounding() {
        assert_eq!(budget_for(2.0, 12.0 / 512.0), 85);
        assert_eq!(budget_for(2.0, 0.25), 8);
        assert_eq!(budget_for(0.1 * 3.0, 0.1), 3);
        assert_eq!(budget_for(0.05, 0.1), 0);
    }

    #[test]
    fn optimal_start_stops_immediately() {
        let v = Arc::new(AdmissibleSet::lattice_box(0, 2, 1));
        let target = ControlGrid::new(v, 1.0, vec![0, 0, 2, 2, 1]).unwrap();
        let model = TrackingModel::towards(&target);
        // with β > 0 the linearization would trade tracking for fewer switches
        let res = minimize(&model, &target, &TrustRegionConfig::default(), PNorm::ONE, 0.0).unwrap();
        assert_eq!(res.control, target);
        assert_eq!(res.outer_iterations(), 1);
        assert_eq!(res.termination, Termination::Stationary);
        assert_eq!(res.records[0].steps[0].pred, 0.0);
        assert_eq!(res.gradient_calls, 1);
        assert_eq!(res.objective_calls, 1);
    }

    #[test]
    fn rejects_bad_config() {
        let v = Arc::new(AdmissibleSet::unit_vectors(2));
        let u = ControlGrid::constant(v, 1.0, 3, 0).unwrap();
        let model = TrackingModel::towards(&u);
        let cfg = TrustRegionConfig {
            sigma: 1.0,
            ..TrustRegionConfig::default()
        };
        assert!(matches!(
            minimize(&model, &u, &cfg, PNorm::ONE, 0.0),
            Err(TrustRegionError::Config(_))
        ));
    }

    #[test]
    fn trace_has_one_row_per_inner_step() {
        let v = Arc::new(AdmissibleSet::lattice_box(0, 3, 1));
        let target = ControlGrid::new(v.clone(), 2.0, vec![3, 3, 0, 0, 1, 2]).unwrap();
        let start = ControlGrid::constant(v, 2.0, 6, 0).unwrap();
        let model = TrackingModel::towards(&target);
        let res = minimize(&model, &start, &TrustRegionConfig::default(), PNorm::TWO, 1e-3).unwrap();
        let mut buf = Vec::new();
        res.write_trace(&mut buf).unwrap();
        let rows = String::from_utf8(buf).unwrap().lines().count() - 1;
        let steps: usize = res.records.iter().map(|r| r.steps.len()).sum();
        assert_eq!(rows, steps);
        assert!(res.objective < res.records[0].objective);
    }
}
