//! Plane-strain elastodynamics with lattice-Boltzmann wave solvers for the
//! dilatation and rotation fields, plus a finite-difference reference solver.

pub mod elastodyn;
pub mod fields;
pub mod lattice;
pub mod loads;
pub mod oracle;
pub mod output;
pub mod runner;
pub mod scenario;
pub mod sweep;
pub mod wave_lbm;

/// Planar vector `[x, y]`.
pub type Vec2 = [f64; 2];

pub use elastodyn::{KinematicState, LbmSolver, Problem, SetupError, StepError};
pub use fields::{Material, Sym2};
pub use lattice::{BoundaryId, Geometry, Hole, Lattice, NodeClass};
pub use loads::{BoundaryConditions, EdgeCondition, LoadCurve};
pub use runner::{run, RunOptions, RunReport, SolverChoice, SolverKind};
pub use scenario::{load_config, preset, Scenario};
pub use sweep::Execution;
