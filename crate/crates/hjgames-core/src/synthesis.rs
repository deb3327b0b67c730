//! Optimal control extraction from the value-function gradient and
//! closed-loop rollout of the augmented dynamics.

use crate::error::{HjError, Result};
use crate::extract::extract_vartheta;
use crate::numerics::{hamiltonian, ControlLattices, SchemeOptions};
use crate::problem::{PlayerMode, ProblemSpec};
use crate::scalar::{cast, Scalar};
use crate::solver::{EquationVariant, ValueFunction};

/// Value and first derivatives of `V` at an augmented query point.
#[derive(Clone, Debug)]
pub struct GradientSample<T> {
    pub v: T,
    pub v_t: T,
    pub d_x: Vec<T>,
    pub d_z: T,
}

/// Which term of the HJ equation is active at the query point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlCase {
    /// A clamp term (`c - V`, or `g - z - V` for the max-over-time
    /// equations) dominates; many controls are optimal.
    Envelope,
    /// The PDE term is active; the maxmini pair is the certain choice.
    Hamiltonian,
    /// Min-over-time equations only: the stopping term dominates and the
    /// second player's admissible set opens up.
    Stopping,
}

/// Maxmini control pair with the diagnosed active case.
#[derive(Clone, Debug)]
pub struct OptimalControls<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub case: ControlCase,
}

/// Player B's behavior during a rollout.
#[derive(Clone, Debug)]
pub enum BPolicy<T> {
    /// Re-derive B's control from the value function each refresh.
    OptimalFromV,
    /// Hold one control for the whole horizon.
    Constant(Vec<T>),
    /// Per-refresh sequence, consumed in order.
    Fixed(Vec<Vec<T>>),
}

/// Sampled closed-loop path of the augmented system.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    /// State samples, one per time.
    pub states: Vec<Vec<T>>,
    pub z_values: Vec<T>,
    /// Controls held on the interval starting at each sample (final sample
    /// repeats the last held pair).
    pub controls_a: Vec<Vec<T>>,
    pub controls_b: Vec<Vec<T>>,
    /// `c(s, x(s))` per sample.
    pub constraint_trace: Vec<T>,
    /// `L(s, x(s), a, b)` per sample under the held controls.
    pub stage_cost_trace: Vec<T>,
    /// Realized cost `int_0^s L + g(s, x(s))` per sample.
    pub realized_cost: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    fn new() -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            z_values: Vec::new(),
            controls_a: Vec::new(),
            controls_b: Vec::new(),
            constraint_trace: Vec::new(),
            stage_cost_trace: Vec::new(),
            realized_cost: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Worst constraint value along the path.
    pub fn max_constraint(&self) -> T {
        self.constraint_trace
            .iter()
            .fold(T::neg_infinity(), |m, v| if *v > m { *v } else { m })
    }
}

/// Central-difference gradient of `V` at `(t, x, z)` using the local grid
/// spacing as the step; `v_t` is a one-sided difference between adjacent
/// stamps. The query must sit at least one spacing inside every axis.
pub fn gradient_at<T: Scalar>(
    vf: &ValueFunction<T>,
    t: T,
    x: &[T],
    z: T,
) -> Result<GradientSample<T>, T> {
    let grid = vf.grid();
    let n = grid.state_dim();
    if x.len() != n {
        return Err(HjError::domain(format!(
            "query state has {} coordinates, expected {n}",
            x.len()
        )));
    }
    let mut point = Vec::with_capacity(n + 1);
    point.extend_from_slice(x);
    point.push(z);
    for (k, ax) in grid.axes().iter().enumerate() {
        let h = ax.spacing();
        let slack = h * cast::<T>(1e-9);
        if point[k] < ax.min() + h - slack || point[k] > ax.max() - h + slack {
            return Err(HjError::domain(format!(
                "gradient query coordinate {} = {} is within one spacing of the boundary",
                k, point[k]
            )));
        }
    }
    let k = vf.nearest_stamp(t)?;
    let snap = vf.snapshot(k);
    let v = snap.interpolate(&point)?;

    let mut d_x = Vec::with_capacity(n);
    let mut probe = point.clone();
    for (kx, ax) in grid.axes().iter().enumerate() {
        let h = ax.spacing();
        probe[kx] = point[kx] + h;
        let hi = snap.interpolate(&probe)?;
        probe[kx] = point[kx] - h;
        let lo = snap.interpolate(&probe)?;
        probe[kx] = point[kx];
        let d = (hi - lo) / (h + h);
        if kx < n {
            d_x.push(d);
        } else {
            return Ok(GradientSample {
                v,
                v_t: time_derivative(vf, k, &point, v)?,
                d_x,
                d_z: d,
            });
        }
    }
    unreachable!("z axis handled in the loop")
}

fn time_derivative<T: Scalar>(
    vf: &ValueFunction<T>,
    k: usize,
    point: &[T],
    v_here: T,
) -> Result<T, T> {
    let times = vf.times();
    if k + 1 < times.len() {
        let v_next = vf.snapshot(k + 1).interpolate(point)?;
        Ok((v_next - v_here) / (times[k + 1] - times[k]))
    } else {
        let v_prev = vf.snapshot(k - 1).interpolate(point)?;
        Ok((v_here - v_prev) / (times[k] - times[k - 1]))
    }
}

/// Evaluates the instantaneous game `H~(a, b) = -dV_x . f + dV_z L` on the
/// control lattices and returns the play-order-consistent optimal pair plus
/// the active case of the HJ equation at the query point.
///
/// Upper/OptCtrl modes pick `a* = argmax_a min_b H~` then `b* = argmin_b
/// H~(a*, .)`; Lower mode reverses the orders. Ties break toward the lowest
/// lattice index.
#[allow(clippy::too_many_arguments)]
pub fn optimal_controls<T: Scalar>(
    spec: &ProblemSpec<T>,
    vf: &ValueFunction<T>,
    mode: PlayerMode,
    variant: EquationVariant,
    t: T,
    x: &[T],
    z: T,
    opts: &SchemeOptions<T>,
) -> Result<OptimalControls<T>, T> {
    let grad = gradient_at(vf, t, x, z)?;
    let lattices = ControlLattices::for_mode(spec, mode, opts);
    let table = InstantGame::tabulate(spec, &lattices, t, x, &grad)?;
    let (ai, bi) = table.maxmini(mode);
    let case = classify_case(spec, vf, mode, variant, t, x, z, &grad, &lattices)?;
    Ok(OptimalControls {
        a: lattices.a.points()[ai].clone(),
        b: lattices.b.points()[bi].clone(),
        case,
    })
}

/// `H~` on the full lattice product, kept for argmax/argmin scans.
pub(crate) struct InstantGame<T> {
    /// Row-major `[a][b]` values.
    values: Vec<T>,
    nb: usize,
}

impl<T: Scalar> InstantGame<T> {
    pub(crate) fn tabulate(
        spec: &ProblemSpec<T>,
        lattices: &ControlLattices<T>,
        t: T,
        x: &[T],
        grad: &GradientSample<T>,
    ) -> Result<Self, T> {
        let na = lattices.a.len();
        let nb = lattices.b.len();
        let mut values = Vec::with_capacity(na * nb);
        let mut fbuf = vec![T::zero(); spec.state_dim()];
        for a in lattices.a.points() {
            for b in lattices.b.points() {
                spec.dynamics_into(t, x, a, b, &mut fbuf);
                let mut dot = T::zero();
                for (p, f) in grad.d_x.iter().zip(&fbuf) {
                    dot = dot + *p * *f;
                }
                let h = -dot + grad.d_z * spec.stage_cost_raw(t, x, a, b);
                if !h.is_finite() {
                    return Err(HjError::evaluation(format!(
                        "non-finite instantaneous Hamiltonian at t={t}"
                    )));
                }
                values.push(h);
            }
        }
        Ok(InstantGame { values, nb })
    }

    #[inline]
    pub(crate) fn at(&self, ai: usize, bi: usize) -> T {
        self.values[ai * self.nb + bi]
    }

    fn na(&self) -> usize {
        self.values.len() / self.nb
    }

    /// Worst-case response value for player A's lattice point `ai`.
    pub(crate) fn min_over_b(&self, ai: usize) -> T {
        let row = &self.values[ai * self.nb..(ai + 1) * self.nb];
        row.iter().fold(T::infinity(), |m, v| if *v < m { *v } else { m })
    }

    pub(crate) fn max_over_a(&self, bi: usize) -> T {
        let mut m = T::neg_infinity();
        for ai in 0..self.na() {
            let v = self.at(ai, bi);
            if v > m {
                m = v;
            }
        }
        m
    }

    /// Play-order-consistent optimal pair (first strict improvement wins,
    /// so ties resolve to the lowest lattice index).
    fn maxmini(&self, mode: PlayerMode) -> (usize, usize) {
        match mode {
            PlayerMode::Upper | PlayerMode::OptCtrl => {
                let mut ai_best = 0;
                let mut best = T::neg_infinity();
                for ai in 0..self.na() {
                    let m = self.min_over_b(ai);
                    if m > best {
                        best = m;
                        ai_best = ai;
                    }
                }
                let mut bi_best = 0;
                let mut worst = T::infinity();
                for bi in 0..self.nb {
                    let v = self.at(ai_best, bi);
                    if v < worst {
                        worst = v;
                        bi_best = bi;
                    }
                }
                (ai_best, bi_best)
            }
            PlayerMode::Lower => {
                let mut bi_best = 0;
                let mut best = T::infinity();
                for bi in 0..self.nb {
                    let m = self.max_over_a(bi);
                    if m < best {
                        best = m;
                        bi_best = bi;
                    }
                }
                let mut ai_best = 0;
                let mut top = T::neg_infinity();
                for ai in 0..self.na() {
                    let v = self.at(ai, bi_best);
                    if v > top {
                        top = v;
                        ai_best = ai;
                    }
                }
                (ai_best, bi_best)
            }
        }
    }
}

/// Relative tolerance for comparing the three HJ terms.
fn case_tolerance<T: Scalar>(v: T) -> T {
    cast::<T>(1e-6) * (T::one() + v.abs())
}

#[allow(clippy::too_many_arguments)]
fn classify_case<T: Scalar>(
    spec: &ProblemSpec<T>,
    _vf: &ValueFunction<T>,
    mode: PlayerMode,
    variant: EquationVariant,
    t: T,
    x: &[T],
    z: T,
    grad: &GradientSample<T>,
    lattices: &ControlLattices<T>,
) -> Result<ControlCase, T> {
    let h_bar = hamiltonian(spec, mode, lattices, t, x, z, &grad.d_x, grad.d_z)?;
    let c_term = spec.eval_constraint(t, x)? - grad.v;
    let g_term = spec.eval_terminal_cost(t, x)? - z - grad.v;
    let pde_term = grad.v_t - h_bar;
    let tol = case_tolerance(grad.v);
    Ok(if variant.is_p1() {
        if c_term.max(g_term) >= pde_term - tol {
            ControlCase::Envelope
        } else {
            ControlCase::Hamiltonian
        }
    } else if c_term >= pde_term - tol {
        ControlCase::Envelope
    } else if pde_term >= g_term - tol {
        ControlCase::Stopping
    } else {
        ControlCase::Hamiltonian
    })
}

/// Diagnostic membership test for the permissive optimal-control sets of
/// the active case (the selection itself always returns the maxmini pair).
#[allow(clippy::too_many_arguments)]
pub fn admissible_pair<T: Scalar>(
    spec: &ProblemSpec<T>,
    vf: &ValueFunction<T>,
    mode: PlayerMode,
    variant: EquationVariant,
    t: T,
    x: &[T],
    z: T,
    a: &[T],
    b: &[T],
    opts: &SchemeOptions<T>,
) -> Result<bool, T> {
    let grad = gradient_at(vf, t, x, z)?;
    let lattices = ControlLattices::for_mode(spec, mode, opts);
    let case = classify_case(spec, vf, mode, variant, t, x, z, &grad, &lattices)?;
    let tol = case_tolerance(grad.v);
    let h_of = |av: &[T], bv: &[T]| -> Result<T, T> {
        let mut fbuf = vec![T::zero(); spec.state_dim()];
        spec.dynamics_into(t, x, av, bv, &mut fbuf);
        let mut dot = T::zero();
        for (p, f) in grad.d_x.iter().zip(&fbuf) {
            dot = dot + *p * *f;
        }
        Ok(-dot + grad.d_z * spec.stage_cost_raw(t, x, av, bv))
    };
    let table = InstantGame::tabulate(spec, &lattices, t, x, &grad)?;
    match (case, mode) {
        (ControlCase::Envelope, PlayerMode::Upper | PlayerMode::OptCtrl) => {
            // First player must keep the PDE term non-positive against the
            // worst reaction; the second player is free.
            let mut worst = T::infinity();
            for bv in lattices.b.points() {
                let h = h_of(a, bv)?;
                if h < worst {
                    worst = h;
                }
            }
            Ok(grad.v_t - worst <= tol)
        }
        (ControlCase::Envelope, PlayerMode::Lower) => {
            let mut best = T::neg_infinity();
            for av in lattices.a.points() {
                let h = h_of(av, b)?;
                if h > best {
                    best = h;
                }
            }
            Ok(grad.v_t - best <= tol)
        }
        (ControlCase::Hamiltonian, _) => {
            let (ai, bi) = table.maxmini(mode);
            match mode {
                PlayerMode::Upper | PlayerMode::OptCtrl => {
                    let best = table.min_over_b(ai);
                    let mut worst_b = T::infinity();
                    for bv in lattices.b.points() {
                        let h = h_of(a, bv)?;
                        if h < worst_b {
                            worst_b = h;
                        }
                    }
                    Ok(worst_b >= best - tol && h_of(a, b)? <= worst_b + tol)
                }
                PlayerMode::Lower => {
                    let best = table.max_over_a(bi);
                    let mut top_a = T::neg_infinity();
                    for av in lattices.a.points() {
                        let h = h_of(av, b)?;
                        if h > top_a {
                            top_a = h;
                        }
                    }
                    Ok(top_a <= best + tol && h_of(a, b)? >= top_a - tol)
                }
            }
        }
        (ControlCase::Stopping, _) => {
            // Any first-player control; the reacting player must keep the
            // PDE term non-negative.
            Ok(grad.v_t - h_of(a, b)? >= -tol)
        }
    }
}

/// Integrates the augmented closed loop from `x0` with zero-order-hold
/// controls refreshed every `dt`.
///
/// The cost budget is initialized from the extracted game value at `t = 0`;
/// a saturated start is an infeasibility error. If the state leaves the
/// grid box (or comes too close to the boundary to take gradients) the
/// partial trajectory is returned inside the escape error. The recorded
/// `z` bookkeeping is exact; only the gradient queries clamp `z` into the
/// differentiable band of the grid, since the budget may drift through the
/// z edge as cost accrues.
#[allow(clippy::too_many_arguments)]
pub fn rollout<T: Scalar>(
    spec: &ProblemSpec<T>,
    vf: &ValueFunction<T>,
    mode: PlayerMode,
    variant: EquationVariant,
    x0: &[T],
    b_policy: &BPolicy<T>,
    dt: T,
    opts: &SchemeOptions<T>,
) -> Result<Trajectory<T>, T> {
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(HjError::config(format!("rollout dt must be positive, got {dt}")));
    }
    let grid = vf.grid();
    if !grid.state_contains(x0) {
        return Err(HjError::domain("rollout start outside the grid box"));
    }
    let start = extract_vartheta(vf, T::zero(), x0, T::zero())?;
    if start.saturated {
        return Err(HjError::Infeasible(format!(
            "no feasible cost budget at the start state (value saturates above {})",
            grid.z_axis().max()
        )));
    }

    let horizon = spec.horizon();
    let mut traj = Trajectory::new();
    let mut x = x0.to_vec();
    let z_axis = grid.z_axis();
    let z_floor = z_axis.min() + z_axis.spacing();
    let z_ceil = z_axis.max() - z_axis.spacing();
    let z_query = move |z: T| z.max(z_floor).min(z_ceil);
    let mut zv = z_query(start.value);
    let z0 = zv;
    if let BPolicy::Constant(bv) = b_policy {
        if !spec.controls_b().contains(bv) {
            return Err(HjError::domain("constant b policy outside player B's box"));
        }
    }
    let mut t = T::zero();
    let mut step_idx = 0usize;
    let eps = horizon * cast::<T>(1e-12);
    let mut held_a = spec.controls_a().lower().to_vec();
    let mut held_b = spec.controls_b().lower().to_vec();

    loop {
        let remaining = horizon - t;
        let is_final = remaining <= eps;
        if !is_final {
            let controls = match optimal_controls(spec, vf, mode, variant, t, &x, z_query(zv), opts) {
                Ok(c) => c,
                Err(HjError::Domain(_)) => {
                    return Err(HjError::Escape {
                        time: t,
                        partial: Box::new(traj),
                    })
                }
                Err(e) => return Err(e),
            };
            held_a = controls.a;
            held_b = match b_policy {
                BPolicy::OptimalFromV => controls.b,
                BPolicy::Constant(bv) => bv.clone(),
                BPolicy::Fixed(seq) => seq
                    .get(step_idx)
                    .ok_or_else(|| {
                        HjError::config(format!("fixed b sequence exhausted at refresh {step_idx}"))
                    })?
                    .clone(),
            };
        }

        traj.times.push(t);
        traj.states.push(x.clone());
        traj.z_values.push(zv);
        traj.controls_a.push(held_a.clone());
        traj.controls_b.push(held_b.clone());
        traj.constraint_trace.push(spec.eval_constraint(t, &x)?);
        traj.stage_cost_trace
            .push(spec.eval_stage_cost(t, &x, &held_a, &held_b)?);
        traj.realized_cost
            .push((z0 - zv) + spec.eval_terminal_cost(t, &x)?);

        if is_final {
            break;
        }
        let h = if dt < remaining { dt } else { remaining };
        rk4_augmented(spec, &mut x, &mut zv, t, h, &held_a, &held_b);
        t = if h == remaining { horizon } else { t + h };
        step_idx += 1;

        if !grid.state_contains(&x) {
            return Err(HjError::Escape {
                time: t,
                partial: Box::new(traj),
            });
        }
    }
    Ok(traj)
}

/// Classical one-step RK4 for the augmented system `(x' = f, z' = -L)`
/// under held controls.
fn rk4_augmented<T: Scalar>(
    spec: &ProblemSpec<T>,
    x: &mut [T],
    z: &mut T,
    t: T,
    h: T,
    a: &[T],
    b: &[T],
) {
    let n = x.len();
    let half = cast::<T>(0.5);
    let sixth = cast::<T>(1.0 / 6.0);
    let two = cast::<T>(2.0);

    let mut k = vec![vec![T::zero(); n + 1]; 4];
    let mut probe = vec![T::zero(); n];
    let eval = |tt: T, xx: &[T], out: &mut [T]| {
        let (xs, zs) = out.split_at_mut(n);
        spec.dynamics_into(tt, xx, a, b, xs);
        zs[0] = -spec.stage_cost_raw(tt, xx, a, b);
    };

    eval(t, x, &mut k[0]);
    for i in 0..n {
        probe[i] = x[i] + half * h * k[0][i];
    }
    eval(t + half * h, &probe, &mut k[1]);
    for i in 0..n {
        probe[i] = x[i] + half * h * k[1][i];
    }
    eval(t + half * h, &probe, &mut k[2]);
    for i in 0..n {
        probe[i] = x[i] + h * k[2][i];
    }
    eval(t + h, &probe, &mut k[3]);

    for i in 0..n {
        x[i] = x[i]
            + h * sixth * (k[0][i] + two * k[1][i] + two * k[2][i] + k[3][i]);
    }
    *z = *z + h * sixth * (k[0][n] + two * k[1][n] + two * k[2][n] + k[3][n]);
}
