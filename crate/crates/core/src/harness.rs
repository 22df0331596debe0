//! Seeded benchmark batches: random starts, parallel runs, statistics and
//! data files.
//!
//! Every sample draws from its own ChaCha stream derived from the master
//! seed, so results do not depend on how samples are scheduled.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlGrid;
use crate::io::{step_rows, write_columns, write_control};
use crate::models::{build_model, Model, ModelError, ModelKind, ModelParams};
use crate::optimality::first_order_with;
use crate::trust_region::{minimize, Termination, TrustRegionConfig};
use crate::tvp::PNorm;

/// Environment variable holding the worker count for batch runs.
pub const THREADS_ENV: &str = "IOCP_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid benchmark spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub model: ModelKind,
    pub cells: usize,
    /// Defaults to the model's exponent.
    #[serde(default)]
    pub p: Option<PNorm>,
    /// Defaults to the model's weight.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trust_region: TrustRegionConfig,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_samples() -> usize {
    20
}

impl BenchmarkSpec {
    pub fn new(model: ModelKind, cells: usize) -> Self {
        Self {
            model,
            cells,
            p: None,
            beta: None,
            samples: default_samples(),
            seed: 0,
            trust_region: TrustRegionConfig::default(),
            params: ModelParams::default(),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.samples == 0 {
            return Err(HarnessError::Spec("at least one sample is required".into()));
        }
        if self.cells == 0 {
            return Err(HarnessError::Spec("cells must be positive".into()));
        }
        if let Some(b) = self.beta {
            if !(b.is_finite() && b >= 0.0) {
                return Err(HarnessError::Spec(format!("beta {b}")));
            }
        }
        self.trust_region
            .validate()
            .map_err(|e| HarnessError::Spec(e.to_string()))
    }
}

/// Independent stream for sample `index` of a batch seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A random start with at most `⌊n/10⌋` switches: the count is uniform, the
/// switch cells are uniform without replacement and each segment's level is
/// uniform among those differing from its predecessor.
pub fn random_start<R: Rng + ?Sized>(model: &dyn Model, rng: &mut R) -> ControlGrid {
    random_start_within(model, rng, None)
}

/// [`random_start`] with the switch count also capped at `switch_limit`, so
/// the start is feasible for a switch-bounded run.
pub fn random_start_within<R: Rng + ?Sized>(
    model: &dyn Model,
    rng: &mut R,
    switch_limit: Option<usize>,
) -> ControlGrid {
    let n = model.cells();
    let d = model.alphabet().len();
    let cap = (n / 10).min(n - 1).min(switch_limit.unwrap_or(usize::MAX));
    let switches = rng.gen_range(0..=cap);
    let mut cuts = sample(rng, n - 1, switches).into_vec();
    cuts.sort_unstable();
    let mut indices = Vec::with_capacity(n);
    let mut level = rng.gen_range(0..d);
    let mut next_cut = cuts.iter().map(|&c| c + 1).peekable();
    for j in 0..n {
        if next_cut.peek() == Some(&j) {
            next_cut.next();
            level = (level + rng.gen_range(1..d)) % d;
        }
        indices.push(level);
    }
    ControlGrid::new(model.alphabet().clone(), model.horizon(), indices)
        .expect("indices drawn from the alphabet")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResult {
    pub index: usize,
    pub objective: f64,
    pub seconds: f64,
    pub residual_norm: f64,
    pub outer_iterations: usize,
    pub switches: usize,
    /// Share of the run spent in objective and gradient evaluations.
    pub model_fraction: f64,
    /// Share spent building and re-reading DP tables.
    pub subproblem_fraction: f64,
    pub termination: Termination,
    pub monotone: bool,
    #[serde(skip)]
    pub control: ControlGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub column: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

impl Aggregate {
    /// Statistics of a nonempty column.
    pub fn of(column: &str, values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            column: column.to_string(),
            min: sorted[0],
            max: sorted[n - 1],
            mean: values.iter().sum::<f64>() / n as f64,
            median,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub spec: BenchmarkSpec,
    pub samples: Vec<SampleResult>,
    /// `(index, message)` of samples that failed.
    pub failures: Vec<(usize, String)>,
}

impl BenchmarkResult {
    pub fn column(&self, name: &str) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| match name {
                "objective" => s.objective,
                "seconds" => s.seconds,
                "residual_norm" => s.residual_norm,
                "outer_iterations" => s.outer_iterations as f64,
                "switches" => s.switches as f64,
                "model_fraction" => s.model_fraction,
                "subproblem_fraction" => s.subproblem_fraction,
                other => panic!("unknown column {other}"),
            })
            .collect()
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        if self.samples.is_empty() {
            return Vec::new();
        }
        SUMMARY_COLUMNS
            .iter()
            .map(|c| Aggregate::of(c, &self.column(c)))
            .collect()
    }

    pub fn best(&self) -> Option<&SampleResult> {
        self.samples.iter().min_by(|a, b| a.objective.total_cmp(&b.objective))
    }

    pub fn write_samples<W: std::io::Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary<W: std::io::Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for a in self.aggregates() {
            w.serialize(a)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `samples.csv`, `summary.csv`, `failures.csv` and the best
    /// solution's data files under `dir`.
    pub fn write_dir(&self, dir: &Path, model: &dyn Model) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(dir)?;
        let samples = dir.join("samples.csv");
        self.write_samples(BufWriter::new(File::create(&samples)?))?;
        let summary = dir.join("summary.csv");
        self.write_summary(BufWriter::new(File::create(&summary)?))?;
        let failures = dir.join("failures.csv");
        let mut w = csv::Writer::from_path(&failures)?;
        w.write_record(["index", "error"])?;
        for (i, msg) in &self.failures {
            w.write_record([i.to_string(), msg.clone()])?;
        }
        w.flush()?;
        let mut files = vec![samples, summary, failures];
        if let Some(best) = self.best() {
            files.extend(emit_solution(&best.control, model, &dir.join("best"))?);
        }
        Ok(files)
    }
}

const SUMMARY_COLUMNS: [&str; 7] = [
    "objective",
    "seconds",
    "residual_norm",
    "outer_iterations",
    "switches",
    "model_fraction",
    "subproblem_fraction",
];

/// Runs one sample from its seeded random start.
pub fn run_sample(
    model: &dyn Model,
    spec: &BenchmarkSpec,
    index: usize,
) -> Result<SampleResult, HarnessError> {
    let p = spec.p.unwrap_or_else(|| model.default_p());
    let beta = spec.beta.unwrap_or_else(|| model.default_beta());
    let start = random_start_within(
        model,
        &mut sample_rng(spec.seed, index as u64),
        spec.trust_region.switch_limit,
    );
    let res = minimize(model, &start, &spec.trust_region, p, beta).map_err(|e| match e {
        crate::trust_region::TrustRegionError::Model(m) => HarnessError::Model(m),
        other => HarnessError::Spec(other.to_string()),
    })?;
    let gradient = model.gradient(&res.control)?;
    let residual_norm = first_order_with(&res.control, &gradient).norm;
    let monotone = res
        .records
        .windows(2)
        .all(|w| w[1].objective < w[0].objective);
    let total = res.seconds.max(f64::MIN_POSITIVE);
    Ok(SampleResult {
        index,
        objective: res.objective,
        seconds: res.seconds,
        residual_norm,
        outer_iterations: res.outer_iterations(),
        switches: res.control.switch_count(),
        model_fraction: res.model_seconds / total,
        subproblem_fraction: res.subproblem_seconds / total,
        termination: res.termination,
        monotone,
        control: res.control,
    })
}

fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse().ok().filter(|&n| n > 0)
}

/// Runs every sample of `spec` in parallel; results are ordered by index.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkResult, HarnessError> {
    spec.validate()?;
    let model = build_model(spec.model, spec.cells, &spec.params)?;
    run_benchmark_with(model.as_ref(), spec)
}

/// [`run_benchmark`] on an already constructed model.
pub fn run_benchmark_with(
    model: &dyn Model,
    spec: &BenchmarkSpec,
) -> Result<BenchmarkResult, HarnessError> {
    spec.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count() {
        pool = pool.num_threads(n);
    }
    let outcomes: Vec<_> = pool.build()?.install(|| {
        (0..spec.samples)
            .into_par_iter()
            .map(|i| (i, run_sample(model, spec, i)))
            .collect()
    });
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (i, outcome) in outcomes {
        match outcome {
            Ok(s) => samples.push(s),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    Ok(BenchmarkResult {
        spec: spec.clone(),
        samples,
        failures,
    })
}

/// Writes step files per control component, the state trace and the
/// gradient scaled to the alphabet's range into `dir`.
pub fn emit_solution(u: &ControlGrid, model: &dyn Model, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let m = u.alphabet().dim();

    let path = dir.join("control.dat");
    write_control(BufWriter::new(File::create(&path)?), u)?;
    files.push(path);

    for k in 0..m {
        let path = dir.join(format!("u_{}.dat", k + 1));
        let rows = step_rows(u, k);
        let times: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let name = format!("u{}", k + 1);
        write_columns(
            BufWriter::new(File::create(&path)?),
            &["t", &name],
            &times,
            rows.iter().map(|r| vec![r.1 as f64]),
        )?;
        files.push(path);
    }

    let values = u.to_matrix();
    let trace = model.state_trace(&values)?;
    let path = dir.join("state.dat");
    let mut header = vec!["t"];
    header.extend(trace.columns.iter().map(String::as_str));
    write_columns(
        BufWriter::new(File::create(&path)?),
        &header,
        &trace.times,
        trace.values.iter().cloned(),
    )?;
    files.push(path);

    // gradient scaled so that its sup norm matches the largest control level
    let g = model.gradient_values(&values)?;
    let level = u
        .alphabet()
        .iter()
        .flat_map(|v| v.iter().map(|x| x.abs()))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let sup = g.amax();
    let scale = if sup > 0.0 { level / sup } else { 0.0 };
    let mids: Vec<f64> = u.cell_starts().map(|t| t + 0.5 * u.dt()).collect();
    for k in 0..m {
        let path = dir.join(format!("gradient_{}.dat", k + 1));
        let name = format!("dF{}", k + 1);
        write_columns(
            BufWriter::new(File::create(&path)?),
            &["t", &name],
            &mids,
            (0..u.cells()).map(|j| vec![scale * g[(j, k)]]),
        )?;
        files.push(path);
    }
    Ok(files)
}
