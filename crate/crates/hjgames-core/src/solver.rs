//! Backward-in-time sweeps for the four HJ equations.
//!
//! Each step evaluates the Lax-Friedrichs numerical Hamiltonian at every
//! node of the previous snapshot, takes an explicit step, and applies the
//! variant's clamp so the discrete solution keeps the envelope properties
//! of the continuous one (`V >= c` everywhere, plus `V >= g - z` for the
//! max-over-time equations).

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{HjError, Result};
use crate::grid::{alloc_extended, ghost_extend_into, ExtendedField, Grid, ScalarField};
use crate::numerics::{
    cfl_timestep, dissipation_bounds, lax_friedrichs_with, upwind1_pair, weno5_pair,
    ControlLattices, DerivativeOrder, DerivativePair, Dissipation, Integrator, SchemeOptions,
    DISSIPATION_SAFETY,
};
use crate::problem::{PlayerMode, ProblemSpec};
use crate::scalar::{cast, smax, smin, Scalar};

/// Absolute value beyond which a solve is declared blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Which of the four HJ equations a solve targets.
///
/// `P1*` equations track the maximum of the running cost over time, `P2*`
/// the minimum; the `TimeInvariant` forms absorb the free terminal time
/// into a clipped Hamiltonian instead of an explicit cost clamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EquationVariant {
    P1TimeVarying,
    P1TimeInvariant,
    P2TimeVarying,
    P2TimeInvariant,
}

impl EquationVariant {
    pub fn is_time_invariant_form(&self) -> bool {
        matches!(
            self,
            EquationVariant::P1TimeInvariant | EquationVariant::P2TimeInvariant
        )
    }

    pub fn is_p1(&self) -> bool {
        matches!(
            self,
            EquationVariant::P1TimeVarying | EquationVariant::P1TimeInvariant
        )
    }
}

/// Time-stamped sequence of value-function snapshots.
#[derive(Clone, Debug)]
pub struct ValueFunction<T> {
    grid: Arc<Grid<T>>,
    times: Vec<T>,
    snapshots: Vec<ScalarField<T>>,
    variant: EquationVariant,
    mode: PlayerMode,
}

impl<T: Scalar> ValueFunction<T> {
    /// Reassembles a value function from stored parts (deserialization);
    /// validates stamp ordering and snapshot sizes.
    pub fn from_parts(
        grid: Arc<Grid<T>>,
        times: Vec<T>,
        snapshot_values: Vec<Vec<T>>,
        variant: EquationVariant,
        mode: PlayerMode,
    ) -> Result<Self, T> {
        if times.len() < 2 || times.len() != snapshot_values.len() {
            return Err(HjError::config(format!(
                "need matching times/snapshots with at least 2 stamps, got {}/{}",
                times.len(),
                snapshot_values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HjError::config("time stamps must be strictly ascending"));
        }
        let snapshots = snapshot_values
            .into_iter()
            .map(|v| ScalarField::new(grid.clone(), v))
            .collect::<Result<Vec<_>, T>>()?;
        Ok(ValueFunction {
            grid,
            times,
            snapshots,
            variant,
            mode,
        })
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn snapshots(&self) -> &[ScalarField<T>] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &ScalarField<T> {
        &self.snapshots[k]
    }

    pub fn variant(&self) -> EquationVariant {
        self.variant
    }

    pub fn mode(&self) -> PlayerMode {
        self.mode
    }

    /// Index of the stored stamp nearest to `t`; `t` outside the stored
    /// range (beyond slack) is a domain error.
    pub fn nearest_stamp(&self, t: T) -> Result<usize, T> {
        let first = self.times[0];
        let last = *self.times.last().unwrap();
        let slack = (last - first) * cast::<T>(1e-9);
        if !t.is_finite() || t < first - slack || t > last + slack {
            return Err(HjError::domain(format!(
                "time {t} outside stored stamps [{first}, {last}]"
            )));
        }
        let mut best = 0usize;
        let mut best_d = T::infinity();
        for (k, tk) in self.times.iter().enumerate() {
            let d = (*tk - t).abs();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        Ok(best)
    }
}

/// Terminal condition `V(T, x, z) = max{ c(T, x), g(T, x) - z }`.
pub fn terminal_condition<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Arc<Grid<T>>,
) -> Result<ScalarField<T>, T> {
    let horizon = spec.horizon();
    let (c_state, g_state) = state_costs(spec, grid, horizon)?;
    let z_axis = *grid.z_axis();
    let z_count = z_axis.count();
    let mut values = vec![T::zero(); grid.num_points()];
    values
        .par_chunks_mut(z_count)
        .enumerate()
        .for_each(|(s, chunk)| {
            for (j, slot) in chunk.iter_mut().enumerate() {
                *slot = smax(c_state[s], g_state[s] - z_axis.coord(j));
            }
        });
    ScalarField::new(grid.clone(), values)
}

/// One node's clamped explicit update for each equation variant.
///
/// `c_now` and `gz_now` are `c(t_k, x)` and `g(t_k, x) - z` at the time
/// being written; `v_next` is the value at the later stamp; `h_hat` the
/// numerical Hamiltonian evaluated on the later snapshot. With `dt = 0`
/// this reduces to the variant's pure clamp.
#[inline]
pub fn step_update<T: Scalar>(
    variant: EquationVariant,
    c_now: T,
    gz_now: T,
    v_next: T,
    dt: T,
    h_hat: T,
) -> T {
    let zero = T::zero();
    match variant {
        EquationVariant::P1TimeVarying => smax(c_now, smax(gz_now, v_next - dt * h_hat)),
        EquationVariant::P1TimeInvariant => smax(c_now, v_next - dt * smin(zero, h_hat)),
        EquationVariant::P2TimeVarying => smax(c_now, smin(gz_now, v_next - dt * h_hat)),
        EquationVariant::P2TimeInvariant => smax(c_now, v_next - dt * smax(zero, h_hat)),
    }
}

/// Counters reported alongside a solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    /// Explicit sub-steps taken across the whole horizon.
    pub sub_steps: usize,
    /// CFL-limited step used (before stamp-boundary shortening).
    pub dt: f64,
}

/// Solves the selected HJ equation backward from the terminal condition and
/// stores `stamps` uniformly spaced snapshots over `[0, T]`.
pub fn solve<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Arc<Grid<T>>,
    variant: EquationVariant,
    mode: PlayerMode,
    opts: &SchemeOptions<T>,
    stamps: usize,
) -> Result<ValueFunction<T>, T> {
    solve_with_stats(spec, grid, variant, mode, opts, stamps).map(|(vf, _)| vf)
}

/// [`solve`] variant that also reports step counters.
pub fn solve_with_stats<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Arc<Grid<T>>,
    variant: EquationVariant,
    mode: PlayerMode,
    opts: &SchemeOptions<T>,
    stamps: usize,
) -> Result<(ValueFunction<T>, SolveStats), T> {
    if stamps < 2 {
        return Err(HjError::config("need at least 2 snapshot stamps"));
    }
    let horizon = spec.horizon();
    let times: Vec<T> = (0..stamps)
        .map(|j| horizon * T::from_usize(j).unwrap() / T::from_usize(stamps - 1).unwrap())
        .collect();
    solve_at_times(spec, grid, variant, mode, opts, &times)
}

/// Solves with snapshots stored at an explicit ascending stamp sequence
/// running from 0 to the horizon.
pub fn solve_at_times<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Arc<Grid<T>>,
    variant: EquationVariant,
    mode: PlayerMode,
    opts: &SchemeOptions<T>,
    stamps: &[T],
) -> Result<(ValueFunction<T>, SolveStats), T> {
    opts.validate()?;
    let horizon = spec.horizon();
    let slack = horizon * cast::<T>(1e-9);
    if stamps.len() < 2
        || stamps[0].abs() > slack
        || (*stamps.last().unwrap() - horizon).abs() > slack
        || stamps.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(HjError::config(
            "snapshot stamps must ascend from 0 to the horizon",
        ));
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
    let required = opts.derivative_order.required_ghost();
    if grid.ghost_width() < required {
        return Err(HjError::config(format!(
            "grid ghost width {} is below the scheme's required {}",
            grid.ghost_width(),
            required
        )));
    }

    let times = stamps.to_vec();
    let lattices = ControlLattices::for_mode(spec, mode, opts);
    let diss = dissipation_bounds(spec, mode, grid, horizon, &lattices, cast(DISSIPATION_SAFETY))?;
    let min_stamp_dt = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(T::infinity(), smin);
    // A frozen system (all-zero dissipation means f and L vanish on the
    // sampled set) has a zero Hamiltonian; step at stamp resolution.
    let zero_diss = diss.alpha_x.iter().all(|a| *a == T::zero()) && diss.alpha_z == T::zero();
    let dt_cfl = if zero_diss {
        min_stamp_dt
    } else {
        smin(cfl_timestep(grid, &diss, opts.cfl)?, min_stamp_dt)
    };

    let ctx = StageCtx {
        spec,
        grid,
        variant,
        mode,
        lattices: &lattices,
        diss: &diss,
        order: opts.derivative_order,
        counts: grid.axes().iter().map(|a| a.count()).collect(),
        spacings: grid.axes().iter().map(|a| a.spacing()).collect(),
    };
    let n_nodes = grid.num_points();
    let mut ext = alloc_extended(grid, required);
    let mut clamps = ClampCache::new();
    let mut next = vec![T::zero(); n_nodes];
    let mut rk = if opts.integrator == Integrator::TvdRk3 {
        Some((vec![T::zero(); n_nodes], vec![T::zero(); n_nodes]))
    } else {
        None
    };

    let terminal = terminal_condition(spec, grid)?;
    let mut cur = terminal.into_values();
    let mut snapshots_rev: Vec<Vec<T>> = Vec::with_capacity(times.len());
    snapshots_rev.push(cur.clone());

    let eps = horizon * cast::<T>(1e-12);
    let mut stats = SolveStats {
        sub_steps: 0,
        dt: dt_cfl.to_f64().unwrap_or(f64::NAN),
    };
    for j in (0..times.len() - 1).rev() {
        let target = times[j];
        let mut s = times[j + 1];
        while s > target + eps {
            let remaining = s - target;
            let (delta, landed) = if dt_cfl < remaining {
                (dt_cfl, false)
            } else {
                (remaining, true)
            };
            let t_clamp = s - delta;
            clamps.refresh(spec, grid, t_clamp)?;
            match &mut rk {
                None => {
                    ctx.run_stage(&cur, &clamps, s, delta, &mut ext, &mut next)?;
                    std::mem::swap(&mut cur, &mut next);
                }
                Some((u1, u2)) => {
                    tvd_rk3_step(&ctx, &clamps, &mut cur, u1, u2, &mut next, &mut ext, s, delta)?;
                }
            }
            stats.sub_steps += 1;
            s = if landed { target } else { s - delta };
        }
        snapshots_rev.push(cur.clone());
    }

    snapshots_rev.reverse();
    let snapshots = snapshots_rev
        .into_iter()
        .map(|v| ScalarField::new(grid.clone(), v))
        .collect::<Result<Vec<_>, T>>()?;
    Ok((
        ValueFunction {
            grid: grid.clone(),
            times,
            snapshots,
            variant,
            mode,
        },
        stats,
    ))
}

/// Shu-Osher three-stage scheme using the clamped update as the stage map;
/// a final clamp restores the exact envelope after the convex combinations.
#[allow(clippy::too_many_arguments)]
fn tvd_rk3_step<T: Scalar>(
    ctx: &StageCtx<'_, T>,
    clamps: &ClampCache<T>,
    cur: &mut [T],
    u1: &mut [T],
    u2: &mut [T],
    scratch: &mut [T],
    ext: &mut ExtendedField<T>,
    s: T,
    dt: T,
) -> Result<(), T> {
    let three_q = cast::<T>(0.75);
    let quarter = cast::<T>(0.25);
    let third = cast::<T>(1.0 / 3.0);
    let two_thirds = cast::<T>(2.0 / 3.0);
    let half = cast::<T>(0.5);
    let t_clamp = s - dt;

    ctx.run_stage(cur, clamps, s, dt, ext, u1)?;
    ctx.run_stage(u1, clamps, t_clamp, dt, ext, scratch)?;
    u2.par_iter_mut()
        .zip(scratch.par_iter().zip(cur.par_iter()))
        .for_each(|(out, (stage, base))| {
            *out = three_q * *base + quarter * *stage;
        });
    ctx.run_stage(u2, clamps, s - half * dt, dt, ext, scratch)?;

    let zc = ctx.counts[ctx.counts.len() - 1];
    let z_axis = *ctx.grid.z_axis();
    let variant = ctx.variant;
    let c_state = &clamps.c_state;
    let g_state = &clamps.g_state;
    let next = &*scratch;
    cur.par_chunks_mut(zc).enumerate().for_each(|(sidx, chunk)| {
        let c_now = c_state[sidx];
        let g_now = g_state[sidx];
        for (j, slot) in chunk.iter_mut().enumerate() {
            let node = sidx * zc + j;
            let combined = third * *slot + two_thirds * next[node];
            let gz = g_now - z_axis.coord(j);
            *slot = step_update(variant, c_now, gz, combined, T::zero(), T::zero());
        }
    });
    Ok(())
}

/// Immutable per-solve context shared by every stage evaluation.
struct StageCtx<'a, T> {
    spec: &'a ProblemSpec<T>,
    grid: &'a Arc<Grid<T>>,
    variant: EquationVariant,
    mode: PlayerMode,
    lattices: &'a ControlLattices<T>,
    diss: &'a Dissipation<T>,
    order: DerivativeOrder,
    counts: Vec<usize>,
    spacings: Vec<T>,
}

impl<'a, T: Scalar> StageCtx<'a, T> {
    /// One clamped explicit stage: reads the snapshot `v_in` (gradients and
    /// Hamiltonian at pseudo-time `t_h`), writes the clamped update into
    /// `out`, and aborts on blow-up.
    fn run_stage(
        &self,
        v_in: &[T],
        clamps: &ClampCache<T>,
        t_h: T,
        dt: T,
        ext: &mut ExtendedField<T>,
        out: &mut [T],
    ) -> Result<(), T> {
        ghost_extend_into(self.grid, v_in, ext);

        let naxes = self.counts.len();
        let n = naxes - 1;
        let z_count = self.counts[naxes - 1];
        let w = ext.width();
        let ext = &*ext;
        let c_state = &clamps.c_state;
        let g_state = &clamps.g_state;
        let t_clamp = clamps.time.expect("clamps refreshed before staging");

        out.par_iter_mut().enumerate().try_for_each_init(
            || NodeWorkspace::new(n),
            |ws, (node, slot)| -> std::result::Result<(), HjError<T>> {
                // Decompose the node index once for coordinates and the
                // extended-array base offset.
                let mut rem = node;
                let mut base = 0usize;
                for k in (0..naxes).rev() {
                    let i = rem % self.counts[k];
                    rem /= self.counts[k];
                    ws.multi[k] = i;
                    base += (i + w) * ext.stride(k);
                }
                for k in 0..naxes {
                    ws.coords[k] = self.grid.axes()[k].coord(ws.multi[k]);
                }

                for k in 0..naxes {
                    let stride = ext.stride(k);
                    let pair = match self.order {
                        DerivativeOrder::Upwind1 => upwind1_pair(
                            ext.value(base - stride),
                            ext.value(base),
                            ext.value(base + stride),
                            self.spacings[k],
                        ),
                        DerivativeOrder::Weno5 => {
                            let win = [
                                ext.value(base - 3 * stride),
                                ext.value(base - 2 * stride),
                                ext.value(base - stride),
                                ext.value(base),
                                ext.value(base + stride),
                                ext.value(base + 2 * stride),
                                ext.value(base + 3 * stride),
                            ];
                            weno5_pair(&win, self.spacings[k])
                        }
                    };
                    ws.pairs[k] = pair;
                    if k < n {
                        ws.p_mean[k] = pair.mean();
                    }
                }

                let x = &ws.coords[..n];
                let z = ws.coords[n];
                let h_hat = lax_friedrichs_with(
                    self.spec,
                    self.mode,
                    self.lattices,
                    t_h,
                    x,
                    z,
                    &ws.pairs,
                    self.diss,
                    &ws.p_mean,
                    ws.pairs[n].mean(),
                    &mut ws.fbuf,
                )?;
                let sidx = node / z_count;
                let gz = g_state[sidx] - z;
                let v = step_update(self.variant, c_state[sidx], gz, v_in[node], dt, h_hat);
                if !v.is_finite() || v.abs() > cast::<T>(BLOWUP_THRESHOLD) {
                    return Err(HjError::Blowup {
                        time: t_clamp,
                        detail: format!("node {node} reached {v}"),
                    });
                }
                *slot = v;
                Ok(())
            },
        )
    }
}

struct NodeWorkspace<T> {
    multi: Vec<usize>,
    coords: Vec<T>,
    pairs: Vec<DerivativePair<T>>,
    p_mean: Vec<T>,
    fbuf: Vec<T>,
}

impl<T: Scalar> NodeWorkspace<T> {
    fn new(n: usize) -> Self {
        NodeWorkspace {
            multi: vec![0; n + 1],
            coords: vec![T::zero(); n + 1],
            pairs: vec![
                DerivativePair {
                    left: T::zero(),
                    right: T::zero()
                };
                n + 1
            ],
            p_mean: vec![T::zero(); n],
            fbuf: vec![T::zero(); n],
        }
    }
}

/// Cached `c(t, x)` / `g(t, x)` node values for the current clamp time.
struct ClampCache<T> {
    time: Option<T>,
    frozen: bool,
    c_state: Vec<T>,
    g_state: Vec<T>,
}

impl<T: Scalar> ClampCache<T> {
    fn new() -> Self {
        ClampCache {
            time: None,
            frozen: false,
            c_state: Vec::new(),
            g_state: Vec::new(),
        }
    }

    fn refresh(&mut self, spec: &ProblemSpec<T>, grid: &Grid<T>, t: T) -> Result<(), T> {
        if self.frozen || self.time == Some(t) {
            self.time = Some(t);
            return Ok(());
        }
        let (c, g) = state_costs(spec, grid, t)?;
        self.c_state = c;
        self.g_state = g;
        self.time = Some(t);
        self.frozen = spec.time_invariant();
        Ok(())
    }
}

/// Evaluates `c(t, x)` and `g(t, x)` on the state nodes.
pub(crate) fn state_costs<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Grid<T>,
    t: T,
) -> Result<(Vec<T>, Vec<T>), T> {
    let m = grid.num_state_points();
    let n = grid.state_dim();
    let mut c = vec![T::zero(); m];
    let mut g = vec![T::zero(); m];
    c.par_iter_mut()
        .zip(g.par_iter_mut())
        .enumerate()
        .try_for_each_init(
            || vec![T::zero(); n],
            |x, (s, (cs, gs))| -> std::result::Result<(), HjError<T>> {
                grid.state_coords(s, x);
                *cs = spec.constraint_raw(t, x);
                *gs = spec.terminal_cost_raw(t, x);
                if !(cs.is_finite() && gs.is_finite()) {
                    return Err(HjError::evaluation(format!(
                        "constraint or terminal cost non-finite at t={t}"
                    )));
                }
                Ok(())
            },
        )?;
    Ok((c, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Axis};
    use crate::problem::{builtin_toy_1d, builtin_water_system, frozen_problem, ControlBox};
    use approx::assert_relative_eq;

    fn frozen_grid() -> Arc<Grid<f64>> {
        Arc::new(
            build_grid(
                vec![
                    Axis::new(0.0, 4.0, 9).unwrap(),
                    Axis::new(0.0, 4.0, 9).unwrap(),
                ],
                Axis::new(0.0, 8.0, 9).unwrap(),
                3,
            )
            .unwrap(),
        )
    }

    #[test]
    fn terminal_condition_examples() {
        let spec = builtin_water_system::<f64>();
        let grid = Arc::new(
            build_grid(
                vec![
                    Axis::new(0.0, 16.0, 41).unwrap(),
                    Axis::new(0.5, 5.5, 41).unwrap(),
                ],
                Axis::new(0.0, 18.0, 41).unwrap(),
                3,
            )
            .unwrap(),
        );
        let term = terminal_condition(&spec, &grid).unwrap();
        let direct = |x1: f64, x2: f64, z: f64| -> f64 {
            let c = ((x1 - 7.5f64).abs() - 7.5).max((x2 - 3.0f64).abs() - 2.0);
            c.max(x1 - z)
        };
        // (2.6, 2, 6): constraint -1 beats cost gap 2.6 - 6.
        assert_relative_eq!(direct(2.6, 2.0, 6.0), -1.0);
        assert_relative_eq!(
            term.interpolate(&[2.6, 2.0, 6.0]).unwrap(),
            -1.0,
            epsilon = 1e-9
        );
        // (10, 4, 4): cost gap 6 dominates.
        assert_relative_eq!(direct(10.0, 4.0, 4.0), 6.0);
        assert_relative_eq!(
            term.interpolate(&[10.0, 4.0, 4.0]).unwrap(),
            6.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn terminal_condition_closed_form() {
        // c = -1, g = 0 gives max{-1, -z}.
        let spec = crate::problem::ProblemSpec::<f64>::builder(2)
            .dynamics(|_, _, _, _, out| out.fill(0.0))
            .stage_cost(|_, _, _, _| 0.0)
            .terminal_cost(|_, _| 0.0)
            .constraint(|_, _| -1.0)
            .controls_a(ControlBox::interval(0.0, 1.0).unwrap())
            .controls_b(ControlBox::interval(0.0, 1.0).unwrap())
            .horizon(1.0)
            .time_invariant(true)
            .build()
            .unwrap();
        let grid = frozen_grid();
        let term = terminal_condition(&spec, &grid).unwrap();
        let zc = grid.z_axis().count();
        for (node, v) in term.values().iter().enumerate() {
            let z = grid.z_axis().coord(node % zc);
            assert_relative_eq!(*v, (-z).max(-1.0));
        }
    }

    #[test]
    fn step_update_examples() {
        // max of three
        assert_relative_eq!(
            step_update(EquationVariant::P1TimeVarying, -1.0, -2.0, -0.5, 1.0, 0.0),
            -0.5
        );
        // P2 ordering: min with g-z first, then max with c
        assert_relative_eq!(
            step_update(EquationVariant::P2TimeVarying, -1.0, -2.0, -0.5, 1.0, 0.0),
            -1.0
        );
        // positive Hamiltonian clipped by min{0, .}
        assert_relative_eq!(
            step_update(EquationVariant::P1TimeInvariant, -1.0, -9.0, 0.3, 0.1, 2.0),
            0.3
        );
        // and drives the update when negative
        assert_relative_eq!(
            step_update(EquationVariant::P1TimeInvariant, -1.0, -9.0, 0.3, 0.1, -2.0),
            0.5
        );
        // P2 time-invariant clips negatives instead
        assert_relative_eq!(
            step_update(EquationVariant::P2TimeInvariant, -1.0, -9.0, 0.3, 0.1, -2.0),
            0.3
        );
    }

    #[test]
    fn frozen_system_is_stationary_for_all_variants() {
        let spec = frozen_problem();
        let grid = frozen_grid();
        let term = terminal_condition(&spec, &grid).unwrap();
        for variant in [
            EquationVariant::P1TimeVarying,
            EquationVariant::P1TimeInvariant,
            EquationVariant::P2TimeVarying,
            EquationVariant::P2TimeInvariant,
        ] {
            for integrator in [Integrator::Euler, Integrator::TvdRk3] {
                let opts = SchemeOptions {
                    integrator,
                    ..SchemeOptions::default()
                };
                let vf = solve(&spec, &grid, variant, PlayerMode::Upper, &opts, 11).unwrap();
                assert_eq!(vf.times().len(), 11);
                for snap in vf.snapshots() {
                    for (a, b) in snap.values().iter().zip(term.values()) {
                        assert_relative_eq!(*a, *b, epsilon = 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn terminal_snapshot_is_exact() {
        let spec = builtin_toy_1d::<f64>();
        let grid = Arc::new(
            build_grid(
                vec![Axis::new(-3.0, 3.0, 15).unwrap()],
                Axis::new(0.0, 8.0, 15).unwrap(),
                3,
            )
            .unwrap(),
        );
        let opts = SchemeOptions {
            lattice_a: 5,
            lattice_b: 5,
            ..SchemeOptions::default()
        };
        let vf = solve(
            &spec,
            &grid,
            EquationVariant::P1TimeVarying,
            PlayerMode::Upper,
            &opts,
            9,
        )
        .unwrap();
        let term = terminal_condition(&spec, &grid).unwrap();
        assert_eq!(vf.snapshots().last().unwrap().values(), term.values());
    }

    #[test]
    fn p1_time_invariant_is_backward_monotone() {
        let spec = builtin_toy_1d::<f64>();
        let grid = Arc::new(
            build_grid(
                vec![Axis::new(-3.0, 3.0, 21).unwrap()],
                Axis::new(0.0, 8.0, 21).unwrap(),
                3,
            )
            .unwrap(),
        );
        let opts = SchemeOptions {
            lattice_a: 5,
            lattice_b: 5,
            ..SchemeOptions::default()
        };
        let vf = solve(
            &spec,
            &grid,
            EquationVariant::P1TimeInvariant,
            PlayerMode::Upper,
            &opts,
            21,
        )
        .unwrap();
        for k in 0..vf.times().len() - 1 {
            for (a, b) in vf.snapshot(k).values().iter().zip(vf.snapshot(k + 1).values()) {
                assert!(*a >= *b - 1e-12, "backward monotonicity broken: {a} < {b}");
            }
        }
    }

    #[test]
    fn incompatible_requests_are_config_errors() {
        let grid = Arc::new(
            build_grid(
                vec![Axis::new(-3.0, 3.0, 11).unwrap()],
                Axis::new(0.0, 8.0, 11).unwrap(),
                3,
            )
            .unwrap(),
        );
        let opts = SchemeOptions::default();
        // time-invariant variant on a time-varying problem
        let tv_spec = crate::problem::ProblemSpec::builder(1)
            .dynamics(|_, _, a: &[f64], b: &[f64], out: &mut [f64]| out[0] = a[0] + b[0])
            .stage_cost(|t, _, _, _| t)
            .terminal_cost(|_, x| x[0])
            .constraint(|_, _| -1.0)
            .controls_a(ControlBox::interval(-1.0, 1.0).unwrap())
            .controls_b(ControlBox::interval(-0.5, 0.5).unwrap())
            .horizon(1.0)
            .time_invariant(false)
            .build()
            .unwrap();
        assert!(matches!(
            solve(
                &tv_spec,
                &grid,
                EquationVariant::P1TimeInvariant,
                PlayerMode::Upper,
                &opts,
                5
            ),
            Err(HjError::Config(_))
        ));
        // insufficient ghost width for WENO5
        let thin = Arc::new(
            build_grid(
                vec![Axis::new(-3.0, 3.0, 11).unwrap()],
                Axis::new(0.0, 8.0, 11).unwrap(),
                1,
            )
            .unwrap(),
        );
        assert!(matches!(
            solve(
                &tv_spec,
                &thin,
                EquationVariant::P1TimeVarying,
                PlayerMode::Upper,
                &opts,
                5
            ),
            Err(HjError::Config(_))
        ));
    }

    #[test]
    fn runaway_hamiltonian_triggers_blowup_error() {
        // The clamps bound V from below, so a blow-up must run upward: a
        // hugely negative Hamiltonian inflates V past the threshold.
        let spec = crate::problem::ProblemSpec::<f64>::builder(1)
            .dynamics(|_, _, _, _, out| out[0] = 1.0) // non-zero so a CFL step exists
            .stage_cost(|_, _, _, _| 0.0)
            .terminal_cost(|_, _| 0.0)
            .constraint(|_, _| -1e13)
            .analytic_hamiltonian(|_, _, _, _, _, _| -1e16)
            .controls_a(ControlBox::interval(0.0, 1.0).unwrap())
            .controls_b(ControlBox::interval(0.0, 1.0).unwrap())
            .horizon(1.0)
            .time_invariant(true)
            .build()
            .unwrap();
        let grid = Arc::new(
            build_grid(
                vec![Axis::new(0.0, 1.0, 5).unwrap()],
                Axis::new(0.0, 1.0, 5).unwrap(),
                3,
            )
            .unwrap(),
        );
        let err = solve(
            &spec,
            &grid,
            EquationVariant::P1TimeVarying,
            PlayerMode::Upper,
            &SchemeOptions::default(),
            5,
        )
        .unwrap_err();
        assert!(matches!(err, HjError::Blowup { .. }), "got {err:?}");
    }

    #[test]
    fn explicit_snapshot_stamps_are_honored() {
        let spec = frozen_problem();
        let grid = frozen_grid();
        let stamps = [0.0, 0.3, 0.45, 1.0];
        let (vf, _) = solve_at_times(
            &spec,
            &grid,
            EquationVariant::P1TimeVarying,
            PlayerMode::Upper,
            &SchemeOptions::default(),
            &stamps,
        )
        .unwrap();
        assert_eq!(vf.times(), &stamps);
        let term = terminal_condition(&spec, &grid).unwrap();
        for snap in vf.snapshots() {
            for (a, b) in snap.values().iter().zip(term.values()) {
                assert_relative_eq!(*a, *b, epsilon = 1e-13);
            }
        }
        // Bad stamp lists are rejected.
        for bad in [&[0.0, 0.5][..], &[0.2, 1.0], &[0.0, 0.6, 0.4, 1.0]] {
            assert!(matches!(
                solve_at_times(
                    &spec,
                    &grid,
                    EquationVariant::P1TimeVarying,
                    PlayerMode::Upper,
                    &SchemeOptions::default(),
                    bad,
                ),
                Err(HjError::Config(_))
            ));
        }
    }

    #[test]
    fn nearest_stamp_selection() {
        let spec = frozen_problem();
        let grid = frozen_grid();
        let vf = solve(
            &spec,
            &grid,
            EquationVariant::P1TimeVarying,
            PlayerMode::Upper,
            &SchemeOptions::default(),
            11,
        )
        .unwrap();
        assert_eq!(vf.nearest_stamp(0.0).unwrap(), 0);
        assert_eq!(vf.nearest_stamp(0.26).unwrap(), 3);
        assert_eq!(vf.nearest_stamp(1.0).unwrap(), 10);
        assert!(vf.nearest_stamp(1.5).is_err());
    }
}
