//! Admissible sets, piecewise-constant grid controls, and the minimal and
//! full switching-point representations.
//!
//! Alphabet indices are stored 0-based. Documentation that talks about
//! `ν_1, …, ν_d` counts from one; index `l` in code is `ν_{l+1}`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_rational::Ratio;
use thiserror::Error;

/// Relative tolerance used when matching switch times against grid boundaries.
const TIME_ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("admissible set needs at least two values, got {0}")]
    TooFewValues(usize),
    #[error("admissible values must share a positive dimension")]
    DimensionMismatch,
    #[error("duplicate admissible value {0:?}")]
    DuplicateValue(Vec<i64>),
    #[error("alphabet index {index} out of range for an alphabet of {size} values")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("a control grid needs at least one cell")]
    EmptyGrid,
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("value {0:?} is not in the admissible set")]
    NotAdmissible(Vec<f64>),
    #[error("segment endpoints coincide at {0:?}; the lambda set would be the whole interval")]
    DegenerateSegment(Vec<i64>),
    #[error("switch time {time} is not a boundary of a {cells}-cell grid on [0, {horizon}]")]
    MisalignedSwitch { time: f64, cells: usize, horizon: f64 },
    #[error("invalid representation: {0}")]
    InvalidRepresentation(String),
    #[error("cannot parse alphabet spec {0:?}")]
    AlphabetSpec(String),
}

/// The finite set `V = {ν_1, …, ν_d} ⊂ Z^M` of admissible control values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibleSet {
    dim: usize,
    // row-major d × M
    values: Vec<i64>,
}

impl AdmissibleSet {
    pub fn new(values: Vec<Vec<i64>>) -> Result<Self, ControlError> {
        if values.len() < 2 {
            return Err(ControlError::TooFewValues(values.len()));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(ControlError::DimensionMismatch);
        }
        for (i, v) in values.iter().enumerate() {
            if values[..i].contains(v) {
                return Err(ControlError::DuplicateValue(v.clone()));
            }
        }
        Ok(Self {
            dim,
            values: values.into_iter().flatten().collect(),
        })
    }

    /// The unit vectors `e_1, …, e_M`; encodes `u ∈ {0,1}^M, Σ u_i = 1`.
    pub fn unit_vectors(dim: usize) -> Self {
        assert!(dim >= 2, "unit-vector alphabet needs M >= 2");
        let values = (0..dim)
            .map(|i| (0..dim).map(|k| i64::from(k == i)).collect())
            .collect();
        Self::new(values).expect("unit vectors are distinct")
    }

    /// The integer box `{lo, …, hi}^M`, ordered with the first component
    /// varying slowest.
    pub fn lattice_box(lo: i64, hi: i64, dim: usize) -> Self {
        assert!(dim >= 1 && hi > lo, "lattice box needs hi > lo and M >= 1");
        let side = (hi - lo + 1) as usize;
        let count = side.pow(dim as u32);
        let mut values = Vec::with_capacity(count);
        for mut code in 0..count {
            let mut v = vec![0; dim];
            for k in (0..dim).rev() {
                v[k] = lo + (code % side) as i64;
                code /= side;
            }
            values.push(v);
        }
        Self::new(values).expect("box points are distinct")
    }

    /// Number of values `d`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Control dimension `M`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, index: usize) -> &[i64] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn index_of(&self, value: &[i64]) -> Option<usize> {
        self.iter().position(|v| v == value)
    }

    /// Looks up a real-valued point, accepting it only if every component is
    /// an integer up to `1e-9`.
    pub fn index_of_real(&self, value: &[f64]) -> Option<usize> {
        if value.len() != self.dim {
            return None;
        }
        let mut rounded = Vec::with_capacity(self.dim);
        for &x in value {
            let r = x.round();
            if !x.is_finite() || (x - r).abs() > 1e-9 {
                return None;
            }
            rounded.push(r as i64);
        }
        self.index_of(&rounded)
    }

    /// `‖ν_a − ν_b‖_1`.
    pub fn l1_distance(&self, a: usize, b: usize) -> u64 {
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x.abs_diff(*y))
            .sum()
    }

    /// `ν_a − ν_b` as reals.
    pub fn difference(&self, a: usize, b: usize) -> Vec<f64> {
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| (x - y) as f64)
            .collect()
    }

    fn check_index(&self, index: usize) -> Result<(), ControlError> {
        if index < self.len() {
            Ok(())
        } else {
            Err(ControlError::IndexOutOfRange {
                index,
                size: self.len(),
            })
        }
    }
}

impl FromStr for AdmissibleSet {
    type Err = ControlError;

    /// Accepts `unit:M`, `box:LO:HI:M`, or an explicit list such as
    /// `0,0;1,1;2,2`.
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let bad = || ControlError::AlphabetSpec(spec.to_string());
        let parts: Vec<&str> = spec.trim().split(':').collect();
        match parts.as_slice() {
            ["unit", m] => {
                let m: usize = m.parse().map_err(|_| bad())?;
                if m < 2 {
                    return Err(bad());
                }
                Ok(Self::unit_vectors(m))
            }
            ["box", lo, hi, m] => {
                let lo: i64 = lo.parse().map_err(|_| bad())?;
                let hi: i64 = hi.parse().map_err(|_| bad())?;
                let m: usize = m.parse().map_err(|_| bad())?;
                if hi <= lo || m == 0 {
                    return Err(bad());
                }
                Ok(Self::lattice_box(lo, hi, m))
            }
            [list] => {
                let values = list
                    .split(';')
                    .map(|v| {
                        v.split(',')
                            .map(|x| x.trim().parse::<i64>().map_err(|_| bad()))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Self::new(values)
            }
            _ => Err(bad()),
        }
    }
}

/// Left edge of cell `k` on an `n`-cell grid over `[0, horizon]`.
///
/// Every switch time in the crate is produced by this function so that
/// representations extracted from grids compare bit-for-bit.
pub fn grid_time(k: usize, cells: usize, horizon: f64) -> f64 {
    k as f64 * horizon / cells as f64
}

/// Maps a time onto a grid boundary index, rejecting off-grid times.
pub fn boundary_index(time: f64, cells: usize, horizon: f64) -> Result<usize, ControlError> {
    let k = (time * cells as f64 / horizon).round();
    let misaligned = ControlError::MisalignedSwitch {
        time,
        cells,
        horizon,
    };
    if !(0.0..=cells as f64).contains(&k) {
        return Err(misaligned);
    }
    let k = k as usize;
    if (grid_time(k, cells, horizon) - time).abs() > TIME_ALIGN_TOL * horizon.max(1.0) {
        return Err(misaligned);
    }
    Ok(k)
}

/// A piecewise-constant control on a uniform grid, stored as alphabet
/// indices. Cell `j` covers `[jΔt, (j+1)Δt)` with `Δt = T/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    horizon: f64,
    indices: Vec<usize>,
    alphabet: Arc<AdmissibleSet>,
}

impl ControlGrid {
    pub fn new(
        alphabet: Arc<AdmissibleSet>,
        horizon: f64,
        indices: Vec<usize>,
    ) -> Result<Self, ControlError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ControlError::InvalidHorizon(horizon));
        }
        if indices.is_empty() {
            return Err(ControlError::EmptyGrid);
        }
        for &l in &indices {
            alphabet.check_index(l)?;
        }
        Ok(Self {
            horizon,
            indices,
            alphabet,
        })
    }

    pub fn constant(
        alphabet: Arc<AdmissibleSet>,
        horizon: f64,
        cells: usize,
        index: usize,
    ) -> Result<Self, ControlError> {
        Self::new(alphabet, horizon, vec![index; cells])
    }

    /// Builds a grid from an `n × M` matrix of admissible values.
    pub fn from_matrix(
        alphabet: Arc<AdmissibleSet>,
        horizon: f64,
        values: &DMatrix<f64>,
    ) -> Result<Self, ControlError> {
        if values.ncols() != alphabet.dim() {
            return Err(ControlError::DimensionMismatch);
        }
        let indices = values
            .row_iter()
            .map(|row| {
                let row: Vec<f64> = row.iter().copied().collect();
                alphabet
                    .index_of_real(&row)
                    .ok_or(ControlError::NotAdmissible(row))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(alphabet, horizon, indices)
    }

    /// Same grid and alphabet, different indices.
    pub fn with_indices(&self, indices: Vec<usize>) -> Result<Self, ControlError> {
        if indices.len() != self.indices.len() {
            return Err(ControlError::InvalidRepresentation(format!(
                "expected {} cells, got {}",
                self.indices.len(),
                indices.len()
            )));
        }
        Self::new(self.alphabet.clone(), self.horizon, indices)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn cells(&self) -> usize {
        self.indices.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.indices.len() as f64
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn alphabet(&self) -> &Arc<AdmissibleSet> {
        &self.alphabet
    }

    pub fn value(&self, cell: usize) -> &[i64] {
        self.alphabet.value(self.indices[cell])
    }

    /// Value at time `t`; `t = T` maps to the last cell.
    pub fn value_at(&self, t: f64) -> &[i64] {
        let cell = ((t / self.dt()).floor().max(0.0) as usize).min(self.cells() - 1);
        self.value(cell)
    }

    /// Cell left edges `t_0, …, t_{n-1}`.
    pub fn cell_starts(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.cells();
        (0..n).map(move |k| grid_time(k, n, self.horizon))
    }

    /// The control as an `n × M` real matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let m = self.alphabet.dim();
        DMatrix::from_fn(self.cells(), m, |j, k| self.value(j)[k] as f64)
    }

    /// Number of cell boundaries at which the alphabet index changes.
    pub fn switch_count(&self) -> usize {
        self.indices.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// `Σ_j ‖u^j − w^j‖_1` (integer; multiply by `Δt` for the L¹ distance).
    pub fn l1_deviation(&self, other: &ControlGrid) -> u64 {
        self.indices
            .iter()
            .zip(&other.indices)
            .map(|(&a, &b)| self.alphabet.l1_distance(a, b))
            .sum()
    }
}

impl fmt::Display for ControlGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.cells();
        for (k, &l) in self.indices.iter().enumerate() {
            write!(f, "{}", grid_time(k, n, self.horizon))?;
            for x in self.alphabet.value(l) {
                write!(f, " {x}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// `u = a_1 χ_(t_0,t_1) + Σ_{j≥2} a_j χ_[t_{j-1},t_j)` with strictly
/// increasing interior switch times and distinct consecutive levels.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalRepresentation {
    horizon: f64,
    levels: Vec<usize>,
    times: Vec<f64>,
    alphabet: Arc<AdmissibleSet>,
}

impl MinimalRepresentation {
    pub fn new(
        alphabet: Arc<AdmissibleSet>,
        horizon: f64,
        levels: Vec<usize>,
        times: Vec<f64>,
    ) -> Result<Self, ControlError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ControlError::InvalidHorizon(horizon));
        }
        if levels.is_empty() {
            return Err(ControlError::InvalidRepresentation("no levels".into()));
        }
        if times.len() + 1 != levels.len() {
            return Err(ControlError::InvalidRepresentation(format!(
                "{} levels need {} switch times, got {}",
                levels.len(),
                levels.len() - 1,
                times.len()
            )));
        }
        for &l in &levels {
            alphabet.check_index(l)?;
        }
        if let Some(w) = levels.windows(2).find(|w| w[0] == w[1]) {
            return Err(ControlError::InvalidRepresentation(format!(
                "consecutive levels repeat alphabet index {}",
                w[0]
            )));
        }
        let mut previous = 0.0;
        for &t in &times {
            if !(t > previous && t < horizon) {
                return Err(ControlError::InvalidRepresentation(format!(
                    "switch times must increase strictly inside (0, {horizon}); got {times:?}"
                )));
            }
            previous = t;
        }
        Ok(Self {
            horizon,
            levels,
            times,
            alphabet,
        })
    }

    /// Number of pieces `n_t`.
    pub fn count(&self) -> usize {
        self.levels.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn alphabet(&self) -> &Arc<AdmissibleSet> {
        &self.alphabet
    }

    pub fn level(&self, i: usize) -> &[i64] {
        self.alphabet.value(self.levels[i])
    }

    /// Jump vectors `μ_j = a_j − a_{j+1}`, one per interior switch.
    pub fn jumps(&self) -> Vec<Vec<i64>> {
        self.levels
            .windows(2)
            .map(|w| {
                let a = self.alphabet.value(w[0]);
                let b = self.alphabet.value(w[1]);
                a.iter().zip(b).map(|(x, y)| x - y).collect()
            })
            .collect()
    }

    /// Grid boundary index of every switch on an `n`-cell grid.
    pub fn switch_cells(&self, cells: usize) -> Result<Vec<usize>, ControlError> {
        self.times
            .iter()
            .map(|&t| boundary_index(t, cells, self.horizon))
            .collect()
    }
}

/// Merges maximal runs of equal cells. Switch times land on cell boundaries.
pub fn extract_minimal(u: &ControlGrid) -> MinimalRepresentation {
    let n = u.cells();
    let mut levels = vec![u.indices[0]];
    let mut times = Vec::new();
    for (k, w) in u.indices.windows(2).enumerate() {
        if w[0] != w[1] {
            levels.push(w[1]);
            times.push(grid_time(k + 1, n, u.horizon));
        }
    }
    MinimalRepresentation {
        horizon: u.horizon,
        levels,
        times,
        alphabet: u.alphabet.clone(),
    }
}

/// Samples a minimal representation on an `n`-cell grid. Every switch time
/// must be a grid boundary; lossy rendering is refused.
pub fn render_grid(m: &MinimalRepresentation, cells: usize) -> Result<ControlGrid, ControlError> {
    if cells == 0 {
        return Err(ControlError::EmptyGrid);
    }
    let boundaries = m.switch_cells(cells)?;
    let mut indices = Vec::with_capacity(cells);
    let mut start = 0;
    for (piece, &end) in boundaries.iter().chain(std::iter::once(&cells)).enumerate() {
        if end <= start && piece < boundaries.len() {
            // two switches collapsed onto one boundary
            return Err(ControlError::MisalignedSwitch {
                time: m.times[piece],
                cells,
                horizon: m.horizon,
            });
        }
        indices.extend(std::iter::repeat_n(m.levels[piece], end - start));
        start = end;
    }
    ControlGrid::new(m.alphabet.clone(), m.horizon, indices)
}

/// All `λ ∈ (0,1)` with `(1−λ)a + λb ∈ V`, strictly increasing, computed in
/// exact rational arithmetic.
pub fn lambda_set(
    a: &[i64],
    b: &[i64],
    alphabet: &AdmissibleSet,
) -> Result<Vec<Ratio<i64>>, ControlError> {
    if a.len() != alphabet.dim() || b.len() != alphabet.dim() {
        return Err(ControlError::DimensionMismatch);
    }
    let Some(pivot) = (0..a.len()).find(|&k| a[k] != b[k]) else {
        return Err(ControlError::DegenerateSegment(a.to_vec()));
    };
    let zero = Ratio::from_integer(0);
    let one = Ratio::from_integer(1);
    let mut lambdas: Vec<Ratio<i64>> = alphabet
        .iter()
        .filter_map(|nu| {
            let lambda = Ratio::new(nu[pivot] - a[pivot], b[pivot] - a[pivot]);
            if lambda <= zero || lambda >= one {
                return None;
            }
            let on_segment = (0..a.len())
                .all(|k| lambda * Ratio::from_integer(b[k] - a[k]) == Ratio::from_integer(nu[k] - a[k]));
            on_segment.then_some(lambda)
        })
        .collect();
    lambdas.sort();
    Ok(lambdas)
}

/// One maximal group of equal times in a full representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCluster {
    pub time: f64,
    /// Position in the full level list of the level before the cluster.
    pub first_level: usize,
    /// Convex weights of the inserted interior levels, increasing.
    pub lambdas: Vec<Ratio<i64>>,
}

/// The minimal representation with every switch expanded by the admissible
/// points lying strictly between its two levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FullRepresentation {
    horizon: f64,
    levels: Vec<usize>,
    times: Vec<f64>,
    clusters: Vec<SwitchCluster>,
    alphabet: Arc<AdmissibleSet>,
}

impl FullRepresentation {
    /// `n̂`.
    pub fn count(&self) -> usize {
        self.levels.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn clusters(&self) -> &[SwitchCluster] {
        &self.clusters
    }

    pub fn alphabet(&self) -> &Arc<AdmissibleSet> {
        &self.alphabet
    }

    pub fn level(&self, i: usize) -> &[i64] {
        self.alphabet.value(self.levels[i])
    }
}

/// Duplicates every switch time once per interior admissible point of its
/// segment and inserts those points in increasing-λ order.
pub fn extract_full(m: &MinimalRepresentation) -> Result<FullRepresentation, ControlError> {
    let alphabet = &m.alphabet;
    let mut levels = vec![m.levels[0]];
    let mut times = Vec::with_capacity(m.times.len());
    let mut clusters = Vec::with_capacity(m.times.len());
    for (j, &t) in m.times.iter().enumerate() {
        let a = alphabet.value(m.levels[j]);
        let b = alphabet.value(m.levels[j + 1]);
        let lambdas = lambda_set(a, b, alphabet)?;
        clusters.push(SwitchCluster {
            time: t,
            first_level: levels.len() - 1,
            lambdas: lambdas.clone(),
        });
        for lambda in &lambdas {
            let point: Vec<i64> = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let v = Ratio::from_integer(x) + *lambda * Ratio::from_integer(y - x);
                    debug_assert!(v.is_integer());
                    v.to_integer()
                })
                .collect();
            let index = alphabet
                .index_of(&point)
                .expect("lambda_set only returns points of the alphabet");
            levels.push(index);
            times.push(t);
        }
        levels.push(m.levels[j + 1]);
        times.push(t);
    }
    Ok(FullRepresentation {
        horizon: m.horizon,
        levels,
        times,
        clusters,
        alphabet: alphabet.clone(),
    })
}
