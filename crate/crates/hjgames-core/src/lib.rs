//! Grid-based level-set solver for two classes of state-constrained
//! two-player zero-sum games with free terminal time.
//!
//! Player A picks controls to minimize a running cost — either its maximum
//! or its minimum over time — while keeping the state inside a constraint
//! set; player B opposes. Embedding the cost budget as an extra state `z`
//! turns cost and constraint into a single value function `V(t, x, z)`
//! solved backward on a Cartesian grid, with the game value recovered as
//! the smallest `z` where `V <= 0`.
//!
//! The crate is generic over the working scalar (`f32` or f64` via
//! [`Scalar`]); the aliases below fix the default `f64` precision used by
//! the CLI and the serialized formats.
//!
//! Pipeline: describe a game with [`ProblemSpec`] (or pick a built-in),
//! build a [`Grid`], run [`solve`], then query the result with
//! [`extract_vartheta`] / [`level_slice`] and roll out closed-loop
//! trajectories with [`rollout`]. [`oracle_solve`] provides an independent
//! brute-force reference for small instances.

mod error;
mod scalar;

pub mod extract;
pub mod grid;
pub mod numerics;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod synthesis;

pub use error::{HjError, Result};
pub use extract::{
    containment_violations, extract_vartheta, level_slice, sub_zero_disagreement, StateSlice,
    ValueQueryResult,
};
pub use grid::{build_grid, ghost_extend, Axis, ExtendedField, Grid, ScalarField};
pub use numerics::{
    cfl_timestep, derivatives_along_axis, dissipation_bounds, hamiltonian, hamiltonian_lattice,
    lax_friedrichs, ControlLattice, ControlLattices, DerivativeOrder, DerivativePair, Dissipation,
    Integrator, SchemeOptions, DISSIPATION_SAFETY, WENO_EPSILON,
};
pub use oracle::{one_step_backup_field, oracle_solve, OracleTable, ORACLE_EVAL_GUARD};
pub use problem::{
    builtin_by_name, builtin_toy_1d, builtin_water_system, AnalyticHamiltonianFn, ControlBox,
    DynamicsFn, PlayerMode, ProblemBuilder, ProblemSpec, StageCostFn, StateCostFn,
};
pub use scalar::{cast, Scalar};
pub use solver::{
    solve, solve_at_times, solve_with_stats, step_update, terminal_condition, EquationVariant,
    SolveStats, ValueFunction, BLOWUP_THRESHOLD,
};
pub use synthesis::{
    admissible_pair, gradient_at, optimal_controls, rollout, BPolicy, ControlCase,
    GradientSample, OptimalControls, Trajectory,
};

/// Default working precision.
pub type Real = f64;

/// [`ProblemSpec`] at the default precision.
pub type RealProblem = ProblemSpec<Real>;
/// [`Grid`] at the default precision.
pub type RealGrid = Grid<Real>;
/// [`ScalarField`] at the default precision.
pub type RealField = ScalarField<Real>;
/// [`ValueFunction`] at the default precision.
pub type RealValueFunction = ValueFunction<Real>;
/// [`Trajectory`] at the default precision.
pub type RealTrajectory = Trajectory<Real>;
