mod common;

use std::sync::Arc;

use common::check_contract;
use iocp_core::harness::{random_start, sample_rng};
use iocp_core::models::{LvmModel, LvmParams, Model, TrackingModel};
use iocp_core::trust_region::{minimize, Termination, TrustRegionConfig};
use iocp_core::tvp::tv_grid;
use iocp_core::{AdmissibleSet, ControlGrid, PNorm};
use rand::Rng;

/// Exhaustive minimizer of `F + β TV_p` over all grids.
fn brute_force(model: &dyn Model, like: &ControlGrid, p: PNorm, beta: f64) -> ControlGrid {
    let n = like.cells();
    let d = like.alphabet().len();
    let mut best: Option<(f64, ControlGrid)> = None;
    for code in 0..d.pow(n as u32) {
        let idx = (0..n).map(|j| code / d.pow(j as u32) % d).collect();
        let u = like.with_indices(idx).unwrap();
        let v = model.objective(&u).unwrap() + beta * tv_grid(&u, p);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, u));
        }
    }
    best.unwrap().1
}

#[test]
fn tracking_toy_reaches_exhaustive_minimizer() {
    let cfg = TrustRegionConfig {
        sigma: 0.25,
        ..TrustRegionConfig::default()
    };
    let mut rng = sample_rng(31, 0);
    let alphabets = [
        AdmissibleSet::lattice_box(0, 2, 1),
        AdmissibleSet::unit_vectors(3),
        AdmissibleSet::new(vec![vec![0, 0], vec![1, 2], vec![-1, 1]]).unwrap(),
        AdmissibleSet::unit_vectors(2),
    ];
    for trial in 0..200 {
        let v = Arc::new(alphabets[trial % alphabets.len()].clone());
        let n = rng.gen_range(1..=6);
        let horizon = 0.25 * n as f64;
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| (0..n).map(|_| rng.gen_range(0..v.len())).collect();
        let target = ControlGrid::new(v.clone(), horizon, pick(&mut rng)).unwrap();
        let start = ControlGrid::new(v.clone(), horizon, pick(&mut rng)).unwrap();
        let model = TrackingModel::towards(&target);
        let p = common::p_choices()[trial % 3];
        let res = minimize(&model, &start, &cfg, p, 1e-6).unwrap();
        assert_eq!(brute_force(&model, &target, p, 1e-6), target);
        assert_eq!(res.control, target, "start {:?}", start.indices());
        check_contract(&model, &res, &cfg, p, 1e-6).unwrap();
    }
}

#[test]
fn half_acceptance_ratio_stalls_on_an_isolated_cell() {
    // fixing the middle cell halves the tracking gain and adds two switches,
    // so ared/pred falls just below ½
    let v = Arc::new(AdmissibleSet::lattice_box(0, 1, 1));
    let target = ControlGrid::new(v.clone(), 0.75, vec![0, 1, 0]).unwrap();
    let start = ControlGrid::constant(v, 0.75, 3, 0).unwrap();
    let model = TrackingModel::towards(&target);
    let res = minimize(&model, &start, &TrustRegionConfig::default(), PNorm::ONE, 1e-6).unwrap();
    assert_eq!(res.control, start);
    assert_eq!(res.termination, Termination::BudgetExhausted);
}

#[test]
fn lvm_runs_keep_the_contract() {
    let model = LvmModel::new(LvmParams::default(), 256).unwrap();
    let cfg = TrustRegionConfig::default();
    for seed in 0..8 {
        let start = random_start(&model, &mut sample_rng(seed, 0));
        let res = minimize(&model, &start, &cfg, PNorm::Infinity, 1e-3).unwrap();
        check_contract(&model, &res, &cfg, PNorm::Infinity, 1e-3).unwrap();
        assert!(res.objective <= res.records[0].objective);
    }
}

#[test]
fn switch_limit_is_respected_by_every_iterate() {
    let model = LvmModel::new(LvmParams::default(), 128).unwrap();
    let start = ControlGrid::constant(model.alphabet().clone(), 12.0, 128, 0).unwrap();
    let cfg = TrustRegionConfig {
        switch_limit: Some(3),
        ..TrustRegionConfig::default()
    };
    let res = minimize(&model, &start, &cfg, PNorm::Infinity, 1e-3).unwrap();
    assert!(res.records.iter().all(|r| r.iterate.switch_count() <= 3));
    assert!(res.control.switch_count() <= 3);
    check_contract(&model, &res, &cfg, PNorm::Infinity, 1e-3).unwrap();
}
