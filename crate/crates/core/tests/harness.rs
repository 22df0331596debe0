use std::fs;

use iocp_core::harness::{emit_solution, random_start, run_benchmark, sample_rng, BenchmarkSpec};
use iocp_core::models::{HeatModel, HeatParams, LvmModel, LvmParams, Model, ModelKind};
use iocp_core::ControlGrid;
use nalgebra::DMatrix;

#[test]
fn random_starts_respect_the_switch_bound() {
    let model = LvmModel::new(LvmParams::default(), 97).unwrap();
    let mut zero = 0;
    for seed in 0..10_000 {
        let u = random_start(&model, &mut sample_rng(seed, 0));
        assert!(u.switch_count() <= 9);
        zero += (u.switch_count() == 0) as usize;
    }
    // the count is uniform on {0, …, 9}
    assert!((800..1200).contains(&zero), "{zero}");
}

#[test]
fn benchmarks_are_deterministic() {
    let mut spec = BenchmarkSpec::new(ModelKind::Lvm, 64);
    spec.samples = 4;
    spec.seed = 17;
    let a = run_benchmark(&spec).unwrap();
    let b = run_benchmark(&spec).unwrap();
    assert!(a.failures.is_empty());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.objective, y.objective);
        assert_eq!(x.control, y.control);
        assert_eq!(x.index, y.index);
        assert!(x.monotone);
        assert!(x.model_fraction + x.subproblem_fraction <= 1.0);
    }
}

#[test]
fn single_sample_aggregates_equal_the_row() {
    let mut spec = BenchmarkSpec::new(ModelKind::Lvm, 64);
    spec.samples = 1;
    let res = run_benchmark(&spec).unwrap();
    let row = &res.samples[0];
    for agg in res.aggregates() {
        let v = res.column(&agg.column)[0];
        assert_eq!((agg.min, agg.max, agg.mean, agg.median), (v, v, v, v));
    }
    assert_eq!(res.aggregates()[0].min, row.objective);
}

#[test]
fn batch_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = BenchmarkSpec::new(ModelKind::Lvm, 64);
    spec.samples = 3;
    let res = run_benchmark(&spec).unwrap();
    let model = LvmModel::new(LvmParams::default(), 64).unwrap();
    let files = res.write_dir(dir.path(), &model).unwrap();
    let samples = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let header = samples.lines().next().unwrap();
    assert!(header.starts_with("index,objective,seconds,residual_norm,outer_iterations"));
    assert_eq!(samples.lines().count(), 4);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("column,min,max,mean,median\nobjective,"));
    for f in files {
        assert!(f.exists(), "{f:?}");
    }
    assert!(dir.path().join("best/u_3.dat").exists());
    assert!(dir.path().join("best/state.dat").exists());
}

#[test]
fn constant_control_step_files_have_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let model = LvmModel::new(LvmParams::default(), 32).unwrap();
    let u = ControlGrid::constant(model.alphabet().clone(), 12.0, 32, 1).unwrap();
    emit_solution(&u, &model, dir.path()).unwrap();
    for k in 1..=3 {
        let text = fs::read_to_string(dir.path().join(format!("u_{k}.dat"))).unwrap();
        assert_eq!(text.lines().count(), 3, "{text}");
        assert!(text.ends_with(&format!("12 {}\n", (k == 2) as u8)));
    }
    let g = fs::read_to_string(dir.path().join("gradient_1.dat")).unwrap();
    let sup = g
        .lines()
        .skip(1)
        .map(|l| l.split(' ').nth(1).unwrap().parse::<f64>().unwrap().abs())
        .fold(0.0, f64::max);
    let sup_other = (2..=3)
        .flat_map(|k| {
            fs::read_to_string(dir.path().join(format!("gradient_{k}.dat")))
                .unwrap()
                .lines()
                .skip(1)
                .map(|l| l.split(' ').nth(1).unwrap().parse::<f64>().unwrap().abs())
                .collect::<Vec<_>>()
        })
        .fold(sup, f64::max);
    assert!((sup_other - 1.0).abs() < 1e-12);
}

#[test]
fn heat_misfit_drops_while_heating() {
    let dir = tempfile::tempdir().unwrap();
    let params = HeatParams {
        grid: 17,
        ..HeatParams::default()
    };
    let model = HeatModel::new(params, 40).unwrap();
    // full power for the first second, then off
    let values = DMatrix::from_fn(40, 2, |j, _| if j < 4 { 5.0 } else { 0.0 });
    let u = ControlGrid::from_matrix(model.alphabet().clone(), 10.0, &values).unwrap();
    emit_solution(&u, &model, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("state.dat")).unwrap();
    let misfit: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(' ').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(misfit.len(), 41);
    for w in misfit[..5].windows(2) {
        assert!(w[1] < w[0]);
    }
    assert_eq!(model.name(), "heat");
}

#[test]
fn capped_starts_fit_the_switch_limit() {
    use iocp_core::harness::random_start_within;
    let model = LvmModel::new(LvmParams::default(), 200).unwrap();
    for seed in 0..500 {
        let u = random_start_within(&model, &mut sample_rng(seed, 0), Some(3));
        assert!(u.switch_count() <= 3);
    }
    let mut spec = BenchmarkSpec::new(ModelKind::Lvm, 128);
    spec.samples = 2;
    spec.trust_region.switch_limit = Some(2);
    let res = run_benchmark(&spec).unwrap();
    assert!(res.failures.is_empty(), "{:?}", res.failures);
    assert!(res.samples.iter().all(|s| s.switches <= 2));
}
