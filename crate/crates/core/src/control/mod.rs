//! Null controls of the linearized equation and controllability to trajectories.

pub mod enorms;
mod riccati;
pub mod tracking;
pub mod variational;

pub use enorms::{verify_e_membership, weighted_source_norm, ENormReport, ERefinement};
pub use tracking::{
    control_to_trajectory, delta_sweep, DeltaProbe, DeltaSweep, TrackingOptions,
    TrajectoryControlResult,
};
pub use variational::{
    assemble_variational_system, control_norm, solve_null_control, ConstrainedSolution,
    ControlResult, SolverKind, SolverStats, VariationalOptions, VariationalSystem,
    CONSTRAINT_TOLERANCE,
};
