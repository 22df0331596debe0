//! Integer optimal control with TV_p switching regularization.
//!
//! The solver minimizes `F(u) + β TV_p(u)` over piecewise-constant controls
//! whose values lie in a finite integer alphabet `V ⊂ Z^M`:
//!
//! * [`control`] holds the alphabet, grid controls and switching-point
//!   representations;
//! * [`tvp`] evaluates the switching cost;
//! * [`subproblem`] solves the linearized trust-region subproblem exactly by
//!   dynamic programming over a budget coordinate;
//! * [`trust_region`] is the outer loop;
//! * [`optimality`] checks the first- and second-order switching conditions;
//! * [`models`] provides the Lotka–Volterra and heat benchmark problems;
//! * [`harness`] runs seeded benchmark batches and writes their data files;
//! * [`io`] reads and writes the plain-text column format.

pub mod control;
pub mod harness;
pub mod io;
pub mod models;
pub mod optimality;
pub mod subproblem;
pub mod trust_region;
pub mod tvp;

pub use control::{AdmissibleSet, ControlGrid, FullRepresentation, MinimalRepresentation};
pub use models::{Model, ModelError, ModelKind};
pub use subproblem::{DpTables, SubproblemInstance, Subsolution};
pub use trust_region::{minimize, TrustRegionConfig, TrustRegionResult};
pub use tvp::PNorm;
