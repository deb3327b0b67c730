//! Brute-force discrete dynamic-programming reference solver.
//!
//! Propagates every grid node one Euler step under every control pair of a
//! lattice and backs the next snapshot up through multilinear
//! interpolation, using the same lattices and interpolation as the PDE
//! solver so discrepancies isolate the PDE discretization itself. Only
//! meant for small instances; a tractability guard rejects anything big.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{HjError, Result};
use crate::grid::{Grid, ScalarField};
use crate::numerics::{ControlLattice, ControlLattices};
use crate::problem::{PlayerMode, ProblemSpec};
use crate::scalar::{smax, smin, Scalar};
use crate::solver::{state_costs, step_update, terminal_condition, EquationVariant};

/// Node-propagations-per-step budget: nodes x |A lattice| x |B lattice|.
pub const ORACLE_EVAL_GUARD: usize = 100_000_000;

/// Reference table of value snapshots from the discrete backup.
#[derive(Clone, Debug)]
pub struct OracleTable<T> {
    grid: Arc<Grid<T>>,
    times: Vec<T>,
    values: Vec<ScalarField<T>>,
    lattice_a: usize,
    lattice_b: usize,
    variant: EquationVariant,
    mode: PlayerMode,
}

impl<T: Scalar> OracleTable<T> {
    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn snapshots(&self) -> &[ScalarField<T>] {
        &self.values
    }

    pub fn snapshot(&self, k: usize) -> &ScalarField<T> {
        &self.values[k]
    }

    pub fn variant(&self) -> EquationVariant {
        self.variant
    }

    pub fn mode(&self) -> PlayerMode {
        self.mode
    }

    pub fn lattice_counts(&self) -> (usize, usize) {
        (self.lattice_a, self.lattice_b)
    }
}

/// Backward recursion over `stamps` uniform steps.
///
/// Per node and control pair the augmented state advances one Euler step,
/// the next snapshot is interpolated there (extrapolating linearly past
/// the box edge, like the PDE solver's ghost layers), and the play order
/// resolves the one-step game: `Upper` lets player B react (`min_a
/// max_b`), `Lower` reverses, `OptCtrl` drops player B. The time-invariant
/// variants additionally let a freezing choice keep the state put. The
/// variant's clamp is applied to the optimized backup.
pub fn oracle_solve<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Arc<Grid<T>>,
    variant: EquationVariant,
    mode: PlayerMode,
    lattice: (usize, usize),
    stamps: usize,
) -> Result<OracleTable<T>, T> {
    if stamps < 2 {
        return Err(HjError::config("need at least 2 oracle stamps"));
    }
    if grid.state_dim() != spec.state_dim() {
        return Err(HjError::config(format!(
            "grid has {} state axes but the problem has {}",
            grid.state_dim(),
            spec.state_dim()
        )));
    }
    if variant.is_time_invariant_form() && !spec.time_invariant() {
        return Err(HjError::config(
            "time-invariant equation variants require a time-invariant problem",
        ));
    }
    let lat_a = ControlLattice::new(spec.controls_a(), lattice.0);
    let lat_b = match mode {
        PlayerMode::OptCtrl => ControlLattice::singleton(spec.controls_b()),
        _ => ControlLattice::new(spec.controls_b(), lattice.1),
    };
    let per_step = grid
        .num_points()
        .saturating_mul(lat_a.len())
        .saturating_mul(lat_b.len());
    if per_step > ORACLE_EVAL_GUARD {
        return Err(HjError::config(format!(
            "oracle would take {per_step} propagations per step (guard {ORACLE_EVAL_GUARD})"
        )));
    }
    let lattices = ControlLattices { a: lat_a, b: lat_b };

    let horizon = spec.horizon();
    let times: Vec<T> = (0..stamps)
        .map(|j| horizon * T::from_usize(j).unwrap() / T::from_usize(stamps - 1).unwrap())
        .collect();

    let mut snapshots_rev: Vec<Vec<T>> = Vec::with_capacity(stamps);
    let mut cur = terminal_condition(spec, grid)?.into_values();
    snapshots_rev.push(cur.clone());

    let n = grid.state_dim();
    for k in (0..stamps - 1).rev() {
        let t_now = times[k];
        let h = times[k + 1] - t_now;
        let next_field = ScalarField::new(grid.clone(), cur.clone())?;
        let (c_state, g_state) = state_costs(spec, grid, t_now)?;
        let z_count = grid.z_axis().count();
        let mut out = vec![T::zero(); grid.num_points()];
        out.par_iter_mut().enumerate().try_for_each_init(
            || Propagator::new(n),
            |pr, (node, slot)| -> std::result::Result<(), HjError<T>> {
                let sidx = node / z_count;
                pr.load(grid, node);
                let backed = one_step_backup(
                    spec,
                    grid,
                    &next_field,
                    &lattices,
                    variant,
                    mode,
                    t_now,
                    h,
                    pr,
                    node,
                )?;
                let gz = g_state[sidx] - pr.coords[n];
                *slot = step_update(variant, c_state[sidx], gz, backed, T::zero(), T::zero());
                Ok(())
            },
        )?;
        cur = out;
        snapshots_rev.push(cur.clone());
    }

    snapshots_rev.reverse();
    let values = snapshots_rev
        .into_iter()
        .map(|v| ScalarField::new(grid.clone(), v))
        .collect::<Result<Vec<_>, T>>()?;
    Ok(OracleTable {
        grid: grid.clone(),
        times,
        values,
        lattice_a: lattice.0,
        lattice_b: lattice.1,
        variant,
        mode,
    })
}

struct Propagator<T> {
    coords: Vec<T>,
    fbuf: Vec<T>,
    probe: Vec<T>,
}

impl<T: Scalar> Propagator<T> {
    fn new(n: usize) -> Self {
        Propagator {
            coords: vec![T::zero(); n + 1],
            fbuf: vec![T::zero(); n],
            probe: vec![T::zero(); n + 1],
        }
    }

    fn load(&mut self, grid: &Grid<T>, node: usize) {
        grid.node_coords(node, &mut self.coords);
    }
}

#[allow(clippy::too_many_arguments)]
fn one_step_backup<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Grid<T>,
    next: &ScalarField<T>,
    lattices: &ControlLattices<T>,
    variant: EquationVariant,
    mode: PlayerMode,
    t: T,
    h: T,
    pr: &mut Propagator<T>,
    node: usize,
) -> Result<T, T> {
    let stay = next.values()[node];
    let mut eval_pair = |a: &[T], b: &[T]| -> Result<T, T> {
        let n = grid.state_dim();
        let x = &pr.coords[..n];
        spec.dynamics_into(t, x, a, b, &mut pr.fbuf);
        for k in 0..n {
            pr.probe[k] = pr.coords[k] + h * pr.fbuf[k];
        }
        pr.probe[n] = pr.coords[n] - h * spec.stage_cost_raw(t, x, a, b);
        // Propagation may leave the box near the boundary; extrapolating
        // linearly matches the PDE solver's ghost closure.
        let moved = next.interpolate_extrapolating(&pr.probe);
        // Time-invariant forms may also freeze the state for the step; the
        // freeze maximizes for the max-over-time class and minimizes for
        // the min-over-time class.
        Ok(match variant {
            EquationVariant::P1TimeVarying | EquationVariant::P2TimeVarying => moved,
            EquationVariant::P1TimeInvariant => smax(stay, moved),
            EquationVariant::P2TimeInvariant => smin(stay, moved),
        })
    };

    match mode {
        PlayerMode::Upper | PlayerMode::OptCtrl => {
            // Player A commits, B reacts: min over a of max over b.
            let mut outer = T::infinity();
            for a in lattices.a.points() {
                let mut inner = T::neg_infinity();
                for b in lattices.b.points() {
                    let v = eval_pair(a, b)?;
                    if v > inner {
                        inner = v;
                    }
                }
                if inner < outer {
                    outer = inner;
                }
            }
            Ok(outer)
        }
        PlayerMode::Lower => {
            let mut outer = T::neg_infinity();
            for b in lattices.b.points() {
                let mut inner = T::infinity();
                for a in lattices.a.points() {
                    let v = eval_pair(a, b)?;
                    if v < inner {
                        inner = v;
                    }
                }
                if inner > outer {
                    outer = inner;
                }
            }
            Ok(outer)
        }
    }
}

/// Applies the oracle's one-step backup to an arbitrary snapshot (used to
/// test the solver against the dynamic-programming optimality condition).
pub fn one_step_backup_field<T: Scalar>(
    spec: &ProblemSpec<T>,
    next: &ScalarField<T>,
    variant: EquationVariant,
    mode: PlayerMode,
    lattice: (usize, usize),
    t: T,
    h: T,
) -> Result<ScalarField<T>, T> {
    let grid = next.grid().clone();
    let lat_a = ControlLattice::new(spec.controls_a(), lattice.0);
    let lat_b = match mode {
        PlayerMode::OptCtrl => ControlLattice::singleton(spec.controls_b()),
        _ => ControlLattice::new(spec.controls_b(), lattice.1),
    };
    let lattices = ControlLattices { a: lat_a, b: lat_b };
    let (c_state, g_state) = state_costs(spec, &grid, t)?;
    let n = grid.state_dim();
    let z_count = grid.z_axis().count();
    let mut out = vec![T::zero(); grid.num_points()];
    out.par_iter_mut().enumerate().try_for_each_init(
        || Propagator::new(n),
        |pr, (node, slot)| -> std::result::Result<(), HjError<T>> {
            let sidx = node / z_count;
            pr.load(&grid, node);
            let backed =
                one_step_backup(spec, &grid, next, &lattices, variant, mode, t, h, pr, node)?;
            let gz = g_state[sidx] - pr.coords[n];
            *slot = step_update(variant, c_state[sidx], gz, backed, T::zero(), T::zero());
            Ok(())
        },
    )?;
    ScalarField::new(grid, out)
}
