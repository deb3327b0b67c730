//! Game instance definition: dynamics, costs, constraint, control sets.
//!
//! A [`ProblemSpec`] bundles the four evaluators of a two-player zero-sum
//! game — dynamics `f(t,x,a,b)`, stage cost `L(t,x,a,b)`, terminal cost
//! `g(t,x)`, and state constraint `c(t,x)` (feasible where `c ≤ 0`) —
//! together with the players' control boxes and the horizon. Evaluators are
//! plain callables and must be pure: they are invoked concurrently from many
//! worker threads during a solve.
//!
//! Regularity (Lipschitz continuity, convexity of the velocity/cost sets,
//! boundedness below) is a user obligation; it is not machine-checked.

use std::fmt;
use std::sync::Arc;

use crate::error::{HjError, Result};
use crate::scalar::{cast, Scalar};

/// Axis-aligned box of admissible controls for one player.
#[derive(Clone, Debug)]
pub struct ControlBox<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> ControlBox<T> {
    /// Builds a box from per-dimension bounds; requires `lower[i] <= upper[i]`
    /// and at least one dimension.
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, T> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(HjError::config(format!(
                "control box needs matching, non-empty bounds (got {} lower, {} upper)",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(HjError::config(format!(
                    "control box dimension {i} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(ControlBox { lower, upper })
    }

    /// Box for a scalar control in `[lo, hi]`.
    pub fn interval(lo: T, hi: T) -> Result<Self, T> {
        ControlBox::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    /// True when `u` lies inside the box (inclusive).
    pub fn contains(&self, u: &[T]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Which game value a solve targets.
///
/// `Upper` is the sup-over-strategy / inf-over-signal value (the second
/// player reacts to the first player's instantaneous control), `Lower` is
/// the reverse play order, and `OptCtrl` is the single-player reduction in
/// which player B's box collapses to its lower corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PlayerMode {
    Upper,
    Lower,
    OptCtrl,
}

impl fmt::Display for PlayerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlayerMode::Upper => write!(f, "upper"),
            PlayerMode::Lower => write!(f, "lower"),
            PlayerMode::OptCtrl => write!(f, "opt-ctrl"),
        }
    }
}

/// Dynamics evaluator: writes `f(t, x, a, b)` into `out` (length `state_dim`).
pub type DynamicsFn<T> = dyn Fn(T, &[T], &[T], &[T], &mut [T]) + Send + Sync;
/// Stage cost evaluator `L(t, x, a, b)`.
pub type StageCostFn<T> = dyn Fn(T, &[T], &[T], &[T]) -> T + Send + Sync;
/// Terminal cost `g(t, x)` / constraint `c(t, x)` evaluator.
pub type StateCostFn<T> = dyn Fn(T, &[T]) -> T + Send + Sync;
/// Closed-form Hamiltonian `(t, x, z, p, q, mode) -> H`.
pub type AnalyticHamiltonianFn<T> = dyn Fn(T, &[T], T, &[T], T, PlayerMode) -> T + Send + Sync;

/// Immutable description of one game instance.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    state_dim: usize,
    dynamics: Arc<DynamicsFn<T>>,
    stage_cost: Arc<StageCostFn<T>>,
    terminal_cost: Arc<StateCostFn<T>>,
    constraint: Arc<StateCostFn<T>>,
    controls_a: ControlBox<T>,
    controls_b: ControlBox<T>,
    horizon: T,
    time_invariant: bool,
    analytic_hamiltonian: Option<Arc<AnalyticHamiltonianFn<T>>>,
}

impl<T: Scalar> fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("state_dim", &self.state_dim)
            .field("controls_a", &self.controls_a)
            .field("controls_b", &self.controls_b)
            .field("horizon", &self.horizon)
            .field("time_invariant", &self.time_invariant)
            .field("analytic_hamiltonian", &self.analytic_hamiltonian.is_some())
            .finish()
    }
}

/// Step-by-step constructor for [`ProblemSpec`].
pub struct ProblemBuilder<T> {
    state_dim: usize,
    dynamics: Option<Arc<DynamicsFn<T>>>,
    stage_cost: Option<Arc<StageCostFn<T>>>,
    terminal_cost: Option<Arc<StateCostFn<T>>>,
    constraint: Option<Arc<StateCostFn<T>>>,
    controls_a: Option<ControlBox<T>>,
    controls_b: Option<ControlBox<T>>,
    horizon: Option<T>,
    time_invariant: bool,
    analytic_hamiltonian: Option<Arc<AnalyticHamiltonianFn<T>>>,
}

impl<T: Scalar> ProblemBuilder<T> {
    pub fn dynamics(mut self, f: impl Fn(T, &[T], &[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.dynamics = Some(Arc::new(f));
        self
    }

    pub fn stage_cost(mut self, l: impl Fn(T, &[T], &[T], &[T]) -> T + Send + Sync + 'static) -> Self {
        self.stage_cost = Some(Arc::new(l));
        self
    }

    pub fn terminal_cost(mut self, g: impl Fn(T, &[T]) -> T + Send + Sync + 'static) -> Self {
        self.terminal_cost = Some(Arc::new(g));
        self
    }

    pub fn constraint(mut self, c: impl Fn(T, &[T]) -> T + Send + Sync + 'static) -> Self {
        self.constraint = Some(Arc::new(c));
        self
    }

    pub fn controls_a(mut self, b: ControlBox<T>) -> Self {
        self.controls_a = Some(b);
        self
    }

    pub fn controls_b(mut self, b: ControlBox<T>) -> Self {
        self.controls_b = Some(b);
        self
    }

    pub fn horizon(mut self, t: T) -> Self {
        self.horizon = Some(t);
        self
    }

    pub fn time_invariant(mut self, yes: bool) -> Self {
        self.time_invariant = yes;
        self
    }

    /// Installs a closed-form Hamiltonian used in place of control-lattice
    /// enumeration wherever the Hamiltonian is evaluated.
    pub fn analytic_hamiltonian(
        mut self,
        h: impl Fn(T, &[T], T, &[T], T, PlayerMode) -> T + Send + Sync + 'static,
    ) -> Self {
        self.analytic_hamiltonian = Some(Arc::new(h));
        self
    }

    pub fn build(self) -> Result<ProblemSpec<T>, T> {
        let horizon = self
            .horizon
            .ok_or_else(|| HjError::config("problem horizon not set"))?;
        if !(horizon.is_finite() && horizon > T::zero()) {
            return Err(HjError::config(format!("horizon must be positive, got {horizon}")));
        }
        Ok(ProblemSpec {
            state_dim: self.state_dim,
            dynamics: self
                .dynamics
                .ok_or_else(|| HjError::config("dynamics evaluator not set"))?,
            stage_cost: self
                .stage_cost
                .ok_or_else(|| HjError::config("stage cost evaluator not set"))?,
            terminal_cost: self
                .terminal_cost
                .ok_or_else(|| HjError::config("terminal cost evaluator not set"))?,
            constraint: self
                .constraint
                .ok_or_else(|| HjError::config("constraint evaluator not set"))?,
            controls_a: self
                .controls_a
                .ok_or_else(|| HjError::config("player A control box not set"))?,
            controls_b: self
                .controls_b
                .ok_or_else(|| HjError::config("player B control box not set"))?,
            horizon,
            time_invariant: self.time_invariant,
            analytic_hamiltonian: self.analytic_hamiltonian,
        })
    }
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn builder(state_dim: usize) -> ProblemBuilder<T> {
        ProblemBuilder {
            state_dim,
            dynamics: None,
            stage_cost: None,
            terminal_cost: None,
            constraint: None,
            controls_a: None,
            controls_b: None,
            horizon: None,
            time_invariant: false,
            analytic_hamiltonian: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn controls_a(&self) -> &ControlBox<T> {
        &self.controls_a
    }

    pub fn controls_b(&self) -> &ControlBox<T> {
        &self.controls_b
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn time_invariant(&self) -> bool {
        self.time_invariant
    }

    pub fn has_analytic_hamiltonian(&self) -> bool {
        self.analytic_hamiltonian.is_some()
    }

    /// Evaluates the dynamics with full input/output validation.
    ///
    /// Controls outside their boxes are a domain error; non-finite output
    /// components are an evaluation error.
    pub fn eval_dynamics(&self, t: T, x: &[T], a: &[T], b: &[T]) -> Result<Vec<T>, T> {
        if x.len() != self.state_dim {
            return Err(HjError::domain(format!(
                "state has length {}, expected {}",
                x.len(),
                self.state_dim
            )));
        }
        if !self.controls_a.contains(a) {
            return Err(HjError::domain("player A control outside its box"));
        }
        if !self.controls_b.contains(b) {
            return Err(HjError::domain("player B control outside its box"));
        }
        let mut out = vec![T::zero(); self.state_dim];
        (self.dynamics)(t, x, a, b, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(HjError::evaluation(format!(
                "dynamics produced a non-finite component at t={t}"
            )));
        }
        Ok(out)
    }

    /// Stage cost with finiteness validation.
    pub fn eval_stage_cost(&self, t: T, x: &[T], a: &[T], b: &[T]) -> Result<T, T> {
        let v = (self.stage_cost)(t, x, a, b);
        if !v.is_finite() {
            return Err(HjError::evaluation(format!("stage cost non-finite at t={t}")));
        }
        Ok(v)
    }

    /// Terminal cost with finiteness validation.
    pub fn eval_terminal_cost(&self, t: T, x: &[T]) -> Result<T, T> {
        let v = (self.terminal_cost)(t, x);
        if !v.is_finite() {
            return Err(HjError::evaluation(format!("terminal cost non-finite at t={t}")));
        }
        Ok(v)
    }

    /// Constraint value with finiteness validation (feasible where `c <= 0`).
    pub fn eval_constraint(&self, t: T, x: &[T]) -> Result<T, T> {
        let v = (self.constraint)(t, x);
        if !v.is_finite() {
            return Err(HjError::evaluation(format!("constraint non-finite at t={t}")));
        }
        Ok(v)
    }

    // Unchecked fast paths for the solver hot loops. Inputs are grid nodes
    // and lattice points, already inside their boxes.

    #[inline]
    pub(crate) fn dynamics_into(&self, t: T, x: &[T], a: &[T], b: &[T], out: &mut [T]) {
        (self.dynamics)(t, x, a, b, out);
    }

    #[inline]
    pub(crate) fn stage_cost_raw(&self, t: T, x: &[T], a: &[T], b: &[T]) -> T {
        (self.stage_cost)(t, x, a, b)
    }

    #[inline]
    pub(crate) fn terminal_cost_raw(&self, t: T, x: &[T]) -> T {
        (self.terminal_cost)(t, x)
    }

    #[inline]
    pub(crate) fn constraint_raw(&self, t: T, x: &[T]) -> T {
        (self.constraint)(t, x)
    }

    #[inline]
    pub(crate) fn analytic_hamiltonian_raw(
        &self,
        t: T,
        x: &[T],
        z: T,
        p: &[T],
        q: T,
        mode: PlayerMode,
    ) -> Option<T> {
        self.analytic_hamiltonian.as_ref().map(|h| h(t, x, z, p, q, mode))
    }
}

/// Water level of pond 1 flowing out through the controlled gate; the
/// Bernoulli rate `sqrt(2 g x1)` is replaced below `x1 = 1` by a sinusoid
/// with matching value and slope so the dynamics stay Lipschitz.
#[inline]
fn outflow_rate<T: Scalar>(x1: T) -> T {
    let one = T::one();
    if x1 < one {
        cast::<T>(4.82) * (cast::<T>(1.17) * x1).sin()
    } else {
        (cast::<T>(2.0 * 9.81) * x1).sqrt()
    }
}

/// Two-pond water system: player A drains pond 1 into pond 2 through a gate
/// `a ∈ [0,1]`, player B is precipitation `b ∈ [0,10]`; A minimizes the peak
/// level of pond 1 while keeping pond 1 in `[0,15]` and pond 2 in `[1,5]`.
///
/// Ships a closed-form Hamiltonian: with the cost gradient `p` the optimal
/// controls decouple, so the upper and lower values coincide.
pub fn builtin_water_system<T: Scalar>() -> ProblemSpec<T> {
    let half = cast::<T>(0.5);
    ProblemSpec::builder(2)
        .dynamics(move |_t, x: &[T], a: &[T], b: &[T], out: &mut [T]| {
            let o = outflow_rate(x[0]);
            out[0] = b[0] - o * a[0];
            out[1] = half * o * a[0] - half * x[1];
        })
        .stage_cost(|_t, _x: &[T], _a: &[T], _b: &[T]| T::zero())
        .terminal_cost(|_t, x: &[T]| x[0])
        .constraint(move |_t, x: &[T]| {
            let c1 = (x[0] - cast::<T>(7.5)).abs() - cast::<T>(7.5);
            let c2 = (x[1] - cast::<T>(3.0)).abs() - cast::<T>(2.0);
            if c1 > c2 {
                c1
            } else {
                c2
            }
        })
        .analytic_hamiltonian(move |_t, x: &[T], _z, p: &[T], _q, mode| {
            // -p.f = -p1*b + (p1 - 0.5 p2) * outflow * a + 0.5 p2 x2, optimized
            // per player over its interval; a and b enter separately so the
            // max-min and min-max orders agree.
            let zero = T::zero();
            let coeff_a = (p[0] - half * p[1]) * outflow_rate(x[0]);
            let a_term = if coeff_a > zero { coeff_a } else { zero };
            let b_term = match mode {
                // Player B's box collapses to b = 0 in the single-player
                // reduction.
                PlayerMode::OptCtrl => zero,
                _ => {
                    if p[0] > zero {
                        -cast::<T>(10.0) * p[0]
                    } else {
                        zero
                    }
                }
            };
            b_term + half * p[1] * x[1] + a_term
        })
        .controls_a(ControlBox::interval(T::zero(), T::one()).expect("valid box"))
        .controls_b(ControlBox::interval(T::zero(), cast::<T>(10.0)).expect("valid box"))
        .horizon(T::one())
        .time_invariant(true)
        .build()
        .expect("built-in problem is complete")
}

/// One-dimensional integrator game `x' = a + b` with quadratic costs and the
/// corridor constraint `|x| <= 2`; small enough for brute-force reference
/// solves.
pub fn builtin_toy_1d<T: Scalar>() -> ProblemSpec<T> {
    ProblemSpec::builder(1)
        .dynamics(|_t, _x: &[T], a: &[T], b: &[T], out: &mut [T]| {
            out[0] = a[0] + b[0];
        })
        .stage_cost(|_t, x: &[T], _a: &[T], _b: &[T]| x[0] * x[0])
        .terminal_cost(|_t, x: &[T]| x[0] * x[0])
        .constraint(|_t, x: &[T]| x[0].abs() - cast::<T>(2.0))
        .controls_a(ControlBox::interval(-T::one(), T::one()).expect("valid box"))
        .controls_b(ControlBox::interval(cast::<T>(-0.5), cast::<T>(0.5)).expect("valid box"))
        .horizon(T::one())
        .time_invariant(true)
        .build()
        .expect("built-in problem is complete")
}

/// Looks up a built-in problem by its CLI name.
pub fn builtin_by_name<T: Scalar>(name: &str) -> Option<ProblemSpec<T>> {
    match name {
        "water2d" => Some(builtin_water_system()),
        "toy1d" => Some(builtin_toy_1d()),
        _ => None,
    }
}

/// Stationary two-state problem used across the test suite: nothing moves,
/// nothing accrues, the constraint is always satisfied.
#[cfg(test)]
pub(crate) fn frozen_problem() -> ProblemSpec<f64> {
    ProblemSpec::builder(2)
        .dynamics(|_t, _x, _a, _b, out: &mut [f64]| out.fill(0.0))
        .stage_cost(|_, _, _, _| 0.0)
        .terminal_cost(|_, x: &[f64]| x[0])
        .constraint(|_, _| -1.0)
        .controls_a(ControlBox::interval(0.0, 1.0).unwrap())
        .controls_b(ControlBox::interval(0.0, 1.0).unwrap())
        .horizon(1.0)
        .time_invariant(true)
        .build()
        .unwrap()
}
