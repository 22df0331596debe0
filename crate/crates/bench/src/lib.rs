//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use iocp_core::{AdmissibleSet, ControlGrid};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random iterate and gradient on `cells` cells over the 6×6 heating
/// alphabet with horizon 10.
pub fn heat_like_instance(cells: usize, seed: u64) -> (ControlGrid, DMatrix<f64>) {
    let alphabet = Arc::new(AdmissibleSet::lattice_box(0, 5, 2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = (0..cells).map(|_| rng.gen_range(0..alphabet.len())).collect();
    let u = ControlGrid::new(alphabet, 10.0, indices).expect("indices in range");
    let g = DMatrix::from_fn(cells, 2, |_, _| rng.gen_range(-1.0..1.0));
    (u, g)
}

/// Same for the three-unit-vector alphabet with horizon 12.
pub fn lvm_like_instance(cells: usize, seed: u64) -> (ControlGrid, DMatrix<f64>) {
    let alphabet = Arc::new(AdmissibleSet::unit_vectors(3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = (0..cells).map(|_| rng.gen_range(0..3)).collect();
    let u = ControlGrid::new(alphabet, 12.0, indices).expect("indices in range");
    let g = DMatrix::from_fn(cells, 3, |_, _| rng.gen_range(-1.0..1.0));
    (u, g)
}
