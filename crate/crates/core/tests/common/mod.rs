//! Shared oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use iocp_core::{AdmissibleSet, ControlGrid, PNorm};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

/// A small random alphabet: `d ∈ {2, 3}` distinct points of `{−2, …, 2}^M`,
/// `M ∈ {1, 2}`.
pub fn small_alphabet<R: Rng>(rng: &mut R) -> Arc<AdmissibleSet> {
    let dim = rng.gen_range(1..=2);
    let d = rng.gen_range(2..=3);
    let mut pool: Vec<Vec<i64>> = AdmissibleSet::lattice_box(-2, 2, dim).iter().map(<[i64]>::to_vec).collect();
    pool.shuffle(rng);
    pool.truncate(d);
    Arc::new(AdmissibleSet::new(pool).unwrap())
}

pub fn p_choices() -> [PNorm; 3] {
    [PNorm::ONE, PNorm::TWO, PNorm::Infinity]
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub current: ControlGrid,
    pub gradient: DMatrix<f64>,
    pub p: PNorm,
    pub beta: f64,
    pub budget: usize,
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let alphabet = small_alphabet(rng);
    let n = rng.gen_range(1..=6);
    let d = alphabet.len();
    let indices = (0..n).map(|_| rng.gen_range(0..d)).collect();
    let horizon = rng.gen_range(0.5..3.0);
    let current = ControlGrid::new(alphabet.clone(), horizon, indices).unwrap();
    let gradient = DMatrix::from_fn(n, alphabet.dim(), |_, _| rng.gen_range(-1.0..1.0));
    Instance {
        current,
        gradient,
        p: p_choices()[rng.gen_range(0..3)],
        beta: [0.0, 0.1, 1.0][rng.gen_range(0..3)],
        budget: rng.gen_range(0..=8),
    }
}

fn norm(x: &[f64], p: PNorm) -> f64 {
    match p {
        PNorm::Infinity => x.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        PNorm::Finite(q) => x.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q),
    }
}

/// Objective of an index sequence, written out independently of the library.
pub fn sequence_value(inst: &Instance, seq: &[usize]) -> f64 {
    let v = inst.current.alphabet();
    let dt = inst.current.dt();
    let mut total = 0.0;
    for (j, &l) in seq.iter().enumerate() {
        for (k, &x) in v.value(l).iter().enumerate() {
            total += dt * inst.gradient[(j, k)] * x as f64;
        }
    }
    for w in seq.windows(2) {
        let diff: Vec<f64> = v
            .value(w[1])
            .iter()
            .zip(v.value(w[0]))
            .map(|(a, b)| (a - b) as f64)
            .collect();
        total += inst.beta * norm(&diff, inst.p);
    }
    total
}

pub fn deviation(inst: &Instance, seq: &[usize]) -> usize {
    let v = inst.current.alphabet();
    seq.iter()
        .zip(inst.current.indices())
        .map(|(&a, &b)| {
            v.value(a)
                .iter()
                .zip(v.value(b))
                .map(|(x, y)| (x - y).unsigned_abs() as usize)
                .sum::<usize>()
        })
        .sum()
}

pub fn switches(seq: &[usize]) -> usize {
    seq.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Minimum over all `d^n` sequences within the budget and switch bound.
pub fn brute_force(inst: &Instance, budget: usize, switch_limit: Option<usize>) -> Option<f64> {
    let n = inst.current.cells();
    let d = inst.current.alphabet().len();
    let mut seq = vec![0usize; n];
    let mut best: Option<f64> = None;
    loop {
        if deviation(inst, &seq) <= budget && switch_limit.is_none_or(|s| switches(&seq) <= s) {
            let v = sequence_value(inst, &seq);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
        // odometer increment
        let mut k = 0;
        while k < n && seq[k] == d - 1 {
            seq[k] = 0;
            k += 1;
        }
        if k == n {
            return best;
        }
        seq[k] += 1;
    }
}

use iocp_core::subproblem::{resolve_at_budget, solve, SubproblemInstance};
use iocp_core::trust_region::{Termination, TrustRegionConfig, TrustRegionResult};
use iocp_core::Model;

/// Checks the trust-region guarantees on a finished run; returns the first
/// violation.
pub fn check_contract(
    model: &dyn Model,
    res: &TrustRegionResult,
    cfg: &TrustRegionConfig,
    p: PNorm,
    beta: f64,
) -> Result<(), String> {
    if res.termination == Termination::IterationLimit {
        return Err("iteration limit reached".into());
    }
    let recs = &res.records;
    let d = model.alphabet().len();
    let dt = model.dt();
    let mut objective_calls = 1;
    for (k, rec) in recs.iter().enumerate() {
        if rec.iterate.indices().iter().any(|&l| l >= d) {
            return Err(format!("iterate {k} not admissible"));
        }
        objective_calls += rec.steps.iter().filter(|s| s.ared.is_some()).count();
        let Some(step) = rec.steps.iter().find(|s| s.accepted) else {
            if k + 1 != recs.len() {
                return Err(format!("iteration {k} rejected every step but was not last"));
            }
            continue;
        };
        let (next, next_objective) = match recs.get(k + 1) {
            Some(r) => (&r.iterate, r.objective),
            None => (&res.control, res.objective),
        };
        let ared = rec.objective - next_objective;
        if !(step.pred > 0.0 && ared >= cfg.sigma * step.pred) {
            return Err(format!("iteration {k}: ared {ared} < σ·pred {}", step.pred));
        }
        let mass = dt * rec.iterate.l1_deviation(next) as f64;
        if mass > step.radius * (1.0 + 1e-12) {
            return Err(format!("iteration {k}: step mass {mass} exceeds radius {}", step.radius));
        }
    }
    if recs.last().is_none_or(|r| r.steps.iter().any(|s| s.accepted)) {
        return Err("last iteration accepted a step but the run stopped".into());
    }
    if res.gradient_calls != recs.len() || res.table_builds != recs.len() {
        return Err(format!(
            "{} gradients and {} table builds for {} iterations",
            res.gradient_calls,
            res.table_builds,
            recs.len()
        ));
    }
    if res.objective_calls != objective_calls {
        return Err(format!("{} objective calls, expected {objective_calls}", res.objective_calls));
    }
    let g = model.gradient(&res.control).map_err(|e| e.to_string())?;
    let (sol, tables) = solve(&SubproblemInstance {
        current: &res.control,
        gradient: &g,
        p,
        beta,
        budget: res.final_budget,
        switch_limit: cfg.switch_limit,
    })
    .map_err(|e| e.to_string())?;
    let own = resolve_at_budget(&tables, 0).map_err(|e| e.to_string())?.value;
    let relative = sol.value - own;
    if relative < -1e-9 {
        return Err(format!("final iterate is not optimal for its subproblem: {relative}"));
    }
    Ok(())
}
