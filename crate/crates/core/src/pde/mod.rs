//! Discrete operators and solvers for the forward, linearized, adjoint and
//! nonlinear equations.

pub mod nonlinear;
pub mod operators;
pub mod solver;

pub use nonlinear::{
    solve_nonlinear, solve_nonlinear_with, uncontrolled_trajectory, IterationLog, NonlinearMode,
    NonlinearOptions, NonlinearSolution,
};
pub use operators::{assemble_operators, dissipativity_pairing, CoefficientSet, DiscreteOperators};
pub use solver::{
    solve_adjoint, solve_linear_constant, solve_linearized, Propagator, StepMatrices, DEFAULT_THETA,
};
