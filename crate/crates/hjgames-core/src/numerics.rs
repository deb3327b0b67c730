//! Spatial derivative approximations, numerical Hamiltonians with
//! Lax-Friedrichs dissipation, control-lattice minimax evaluation, and
//! time-step control.

use rayon::prelude::*;

use crate::error::{HjError, Result};
use crate::grid::Grid;
use crate::problem::{ControlBox, PlayerMode, ProblemSpec};
use crate::scalar::{cast, Scalar};

/// Regularization added to the WENO smoothness indicators.
pub const WENO_EPSILON: f64 = 1e-6;

/// Safety factor applied to sampled dissipation bounds.
pub const DISSIPATION_SAFETY: f64 = 1.1;

/// One-sided derivative approximations at a node: `left` is the
/// backward-biased value, `right` the forward-biased one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativePair<T> {
    pub left: T,
    pub right: T,
}

impl<T: Scalar> DerivativePair<T> {
    #[inline]
    pub fn mean(&self) -> T {
        (self.left + self.right) / cast::<T>(2.0)
    }

    /// Half the forward/backward gap; the quantity the dissipation scales.
    #[inline]
    pub fn half_jump(&self) -> T {
        (self.right - self.left) / cast::<T>(2.0)
    }
}

/// Lax-Friedrichs dissipation coefficients: per state axis and for z.
#[derive(Clone, Debug)]
pub struct Dissipation<T> {
    pub alpha_x: Vec<T>,
    pub alpha_z: T,
}

/// Spatial derivative scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeOrder {
    Upwind1,
    Weno5,
}

impl DerivativeOrder {
    /// Ghost layers each one-sided stencil reaches through.
    pub fn required_ghost(&self) -> usize {
        match self {
            DerivativeOrder::Upwind1 => 1,
            DerivativeOrder::Weno5 => 3,
        }
    }
}

/// Time integrator for the backward sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    TvdRk3,
}

/// Knobs of the numerical scheme.
#[derive(Clone, Copy, Debug)]
pub struct SchemeOptions<T> {
    pub derivative_order: DerivativeOrder,
    pub integrator: Integrator,
    /// CFL number in (0, 1].
    pub cfl: T,
    /// Lattice points per control dimension of player A.
    pub lattice_a: usize,
    /// Lattice points per control dimension of player B.
    pub lattice_b: usize,
}

impl<T: Scalar> Default for SchemeOptions<T> {
    fn default() -> Self {
        SchemeOptions {
            derivative_order: DerivativeOrder::Weno5,
            integrator: Integrator::Euler,
            cfl: cast(0.5),
            lattice_a: 11,
            lattice_b: 11,
        }
    }
}

impl<T: Scalar> SchemeOptions<T> {
    pub fn validate(&self) -> Result<(), T> {
        if !(self.cfl > T::zero() && self.cfl <= T::one()) {
            return Err(HjError::config(format!(
                "CFL number must be in (0, 1], got {}",
                self.cfl
            )));
        }
        if self.lattice_a < 2 || self.lattice_b < 2 {
            return Err(HjError::config(
                "control lattices need at least 2 points per dimension",
            ));
        }
        Ok(())
    }
}

/// One-sided derivative pairs for every interior node of a 1D line.
///
/// `extended` must carry exactly the scheme's required ghost width on each
/// end (1 for `Upwind1`, 3 for `Weno5`); too short a line is a
/// configuration error.
pub fn derivatives_along_axis<T: Scalar>(
    extended: &[T],
    spacing: T,
    order: DerivativeOrder,
) -> Result<Vec<DerivativePair<T>>, T> {
    let g = order.required_ghost();
    if extended.len() < 2 * g + 1 {
        return Err(HjError::config(format!(
            "extended line of {} values is too short for ghost width {g}",
            extended.len()
        )));
    }
    let interior = extended.len() - 2 * g;
    let mut out = Vec::with_capacity(interior);
    for i in 0..interior {
        let c = i + g; // index of the node in the extended line
        let pair = match order {
            DerivativeOrder::Upwind1 => upwind1_pair(
                extended[c - 1],
                extended[c],
                extended[c + 1],
                spacing,
            ),
            DerivativeOrder::Weno5 => {
                let w: &[T; 7] = extended[c - 3..=c + 3].try_into().unwrap();
                weno5_pair(w, spacing)
            }
        };
        out.push(pair);
    }
    Ok(out)
}

#[inline]
pub(crate) fn upwind1_pair<T: Scalar>(vm: T, v0: T, vp: T, h: T) -> DerivativePair<T> {
    DerivativePair {
        left: (v0 - vm) / h,
        right: (vp - v0) / h,
    }
}

/// Fifth-order WENO combination of three third-order stencils built from
/// the divided differences `v1..v5`.
#[inline]
fn weno_combine<T: Scalar>(v1: T, v2: T, v3: T, v4: T, v5: T) -> T {
    let c13_12 = cast::<T>(13.0 / 12.0);
    let c14 = cast::<T>(0.25);
    let two = cast::<T>(2.0);
    let three = cast::<T>(3.0);
    let four = cast::<T>(4.0);
    let eps = cast::<T>(WENO_EPSILON);

    let phi1 = v1 * cast::<T>(1.0 / 3.0) - v2 * cast::<T>(7.0 / 6.0) + v3 * cast::<T>(11.0 / 6.0);
    let phi2 = -v2 * cast::<T>(1.0 / 6.0) + v3 * cast::<T>(5.0 / 6.0) + v4 * cast::<T>(1.0 / 3.0);
    let phi3 = v3 * cast::<T>(1.0 / 3.0) + v4 * cast::<T>(5.0 / 6.0) - v5 * cast::<T>(1.0 / 6.0);

    let s1 = c13_12 * (v1 - two * v2 + v3).powi(2) + c14 * (v1 - four * v2 + three * v3).powi(2);
    let s2 = c13_12 * (v2 - two * v3 + v4).powi(2) + c14 * (v2 - v4).powi(2);
    let s3 = c13_12 * (v3 - two * v4 + v5).powi(2) + c14 * (three * v3 - four * v4 + v5).powi(2);

    let a1 = cast::<T>(0.1) / (s1 + eps).powi(2);
    let a2 = cast::<T>(0.6) / (s2 + eps).powi(2);
    let a3 = cast::<T>(0.3) / (s3 + eps).powi(2);
    (a1 * phi1 + a2 * phi2 + a3 * phi3) / (a1 + a2 + a3)
}

/// WENO5 one-sided pair from the 7-point window centered on the node.
#[inline]
pub(crate) fn weno5_pair<T: Scalar>(w: &[T; 7], h: T) -> DerivativePair<T> {
    let d = [
        (w[1] - w[0]) / h,
        (w[2] - w[1]) / h,
        (w[3] - w[2]) / h,
        (w[4] - w[3]) / h,
        (w[5] - w[4]) / h,
        (w[6] - w[5]) / h,
    ];
    DerivativePair {
        left: weno_combine(d[0], d[1], d[2], d[3], d[4]),
        right: weno_combine(d[5], d[4], d[3], d[2], d[1]),
    }
}

/// Uniform sampling of a control box: per-dimension uniform lattices whose
/// Cartesian product enumerates candidate controls in index order (used for
/// deterministic tie-breaking).
#[derive(Clone, Debug)]
pub struct ControlLattice<T> {
    points: Vec<Vec<T>>,
}

impl<T: Scalar> ControlLattice<T> {
    /// Lattice with `count` points per dimension (`count >= 2` hits both box
    /// corners; `count == 1` collapses to the lower corner).
    pub fn new(cbox: &ControlBox<T>, count: usize) -> Self {
        let dims = cbox.dim();
        let count = count.max(1);
        let mut axes: Vec<Vec<T>> = Vec::with_capacity(dims);
        for k in 0..dims {
            let lo = cbox.lower()[k];
            let hi = cbox.upper()[k];
            let pts = if count == 1 {
                vec![lo]
            } else {
                (0..count)
                    .map(|i| {
                        lo + (hi - lo) * T::from_usize(i).unwrap()
                            / T::from_usize(count - 1).unwrap()
                    })
                    .collect()
            };
            axes.push(pts);
        }
        let total: usize = axes.iter().map(|a| a.len()).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims];
        for _ in 0..total {
            points.push(idx.iter().zip(&axes).map(|(i, ax)| ax[*i]).collect());
            for k in (0..dims).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        ControlLattice { points }
    }

    /// Singleton lattice at the box's lower corner.
    pub fn singleton(cbox: &ControlBox<T>) -> Self {
        ControlLattice {
            points: vec![cbox.lower().to_vec()],
        }
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pair of player lattices consistent with a play mode.
#[derive(Clone, Debug)]
pub struct ControlLattices<T> {
    pub a: ControlLattice<T>,
    pub b: ControlLattice<T>,
}

impl<T: Scalar> ControlLattices<T> {
    /// Builds the lattices a solve will enumerate: in `OptCtrl` mode player
    /// B's box collapses to its lower corner.
    pub fn for_mode(spec: &ProblemSpec<T>, mode: PlayerMode, opts: &SchemeOptions<T>) -> Self {
        let a = ControlLattice::new(spec.controls_a(), opts.lattice_a);
        let b = match mode {
            PlayerMode::OptCtrl => ControlLattice::singleton(spec.controls_b()),
            _ => ControlLattice::new(spec.controls_b(), opts.lattice_b),
        };
        ControlLattices { a, b }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn integrand<T: Scalar>(
    spec: &ProblemSpec<T>,
    t: T,
    x: &[T],
    a: &[T],
    b: &[T],
    p: &[T],
    q: T,
    fbuf: &mut [T],
) -> T {
    spec.dynamics_into(t, x, a, b, fbuf);
    let mut dot = T::zero();
    for (pi, fi) in p.iter().zip(fbuf.iter()) {
        dot = dot + *pi * *fi;
    }
    -dot + q * spec.stage_cost_raw(t, x, a, b)
}

/// Hamiltonian by exhaustive enumeration over the control lattices.
///
/// `Upper` returns `max_a min_b`, `Lower` returns `min_b max_a`, `OptCtrl`
/// maximizes over player A alone (the `b` lattice should be a singleton).
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_lattice<T: Scalar>(
    spec: &ProblemSpec<T>,
    mode: PlayerMode,
    lattices: &ControlLattices<T>,
    t: T,
    x: &[T],
    _z: T,
    p: &[T],
    q: T,
) -> Result<T, T> {
    let mut fbuf = vec![T::zero(); spec.state_dim()];
    hamiltonian_lattice_with(spec, mode, lattices, t, x, p, q, &mut fbuf)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn hamiltonian_lattice_with<T: Scalar>(
    spec: &ProblemSpec<T>,
    mode: PlayerMode,
    lattices: &ControlLattices<T>,
    t: T,
    x: &[T],
    p: &[T],
    q: T,
    fbuf: &mut [T],
) -> Result<T, T> {
    let value = match mode {
        PlayerMode::Upper | PlayerMode::OptCtrl => {
            let mut outer = T::neg_infinity();
            for a in lattices.a.points() {
                let mut inner = T::infinity();
                for b in lattices.b.points() {
                    let v = integrand(spec, t, x, a, b, p, q, fbuf);
                    if v < inner {
                        inner = v;
                    }
                }
                if inner > outer {
                    outer = inner;
                }
            }
            outer
        }
        PlayerMode::Lower => {
            let mut outer = T::infinity();
            for b in lattices.b.points() {
                let mut inner = T::neg_infinity();
                for a in lattices.a.points() {
                    let v = integrand(spec, t, x, a, b, p, q, fbuf);
                    if v > inner {
                        inner = v;
                    }
                }
                if inner < outer {
                    outer = inner;
                }
            }
            outer
        }
    };
    if !value.is_finite() {
        return Err(HjError::evaluation(format!(
            "non-finite Hamiltonian integrand at t={t}"
        )));
    }
    Ok(value)
}

/// Hamiltonian at one augmented point: the problem's closed form when it has
/// one, control-lattice enumeration otherwise.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian<T: Scalar>(
    spec: &ProblemSpec<T>,
    mode: PlayerMode,
    lattices: &ControlLattices<T>,
    t: T,
    x: &[T],
    z: T,
    p: &[T],
    q: T,
) -> Result<T, T> {
    if let Some(h) = spec.analytic_hamiltonian_raw(t, x, z, p, q, mode) {
        if !h.is_finite() {
            return Err(HjError::evaluation(format!(
                "analytic Hamiltonian non-finite at t={t}"
            )));
        }
        return Ok(h);
    }
    hamiltonian_lattice(spec, mode, lattices, t, x, z, p, q)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn hamiltonian_with<T: Scalar>(
    spec: &ProblemSpec<T>,
    mode: PlayerMode,
    lattices: &ControlLattices<T>,
    t: T,
    x: &[T],
    z: T,
    p: &[T],
    q: T,
    fbuf: &mut [T],
) -> Result<T, T> {
    if let Some(h) = spec.analytic_hamiltonian_raw(t, x, z, p, q, mode) {
        if !h.is_finite() {
            return Err(HjError::evaluation(format!(
                "analytic Hamiltonian non-finite at t={t}"
            )));
        }
        return Ok(h);
    }
    hamiltonian_lattice_with(spec, mode, lattices, t, x, p, q, fbuf)
}

/// Lax-Friedrichs numerical Hamiltonian: the Hamiltonian at the averaged
/// one-sided gradients minus dissipation proportional to the one-sided
/// differences.
///
/// `pairs` holds one `DerivativePair` per axis, z last. When every pair has
/// `left == right` the dissipation vanishes and the value reduces to the
/// plain Hamiltonian (consistency).
#[allow(clippy::too_many_arguments)]
pub fn lax_friedrichs<T: Scalar>(
    spec: &ProblemSpec<T>,
    mode: PlayerMode,
    lattices: &ControlLattices<T>,
    t: T,
    x: &[T],
    z: T,
    pairs: &[DerivativePair<T>],
    diss: &Dissipation<T>,
) -> Result<T, T> {
    let n = spec.state_dim();
    debug_assert_eq!(pairs.len(), n + 1);
    let p_mean: Vec<T> = pairs[..n].iter().map(|d| d.mean()).collect();
    let q_mean = pairs[n].mean();
    let mut fbuf = vec![T::zero(); n];
    lax_friedrichs_with(
        spec, mode, lattices, t, x, z, pairs, diss, &p_mean, q_mean, &mut fbuf,
    )
}

#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn lax_friedrichs_with<T: Scalar>(
    spec: &ProblemSpec<T>,
    mode: PlayerMode,
    lattices: &ControlLattices<T>,
    t: T,
    x: &[T],
    z: T,
    pairs: &[DerivativePair<T>],
    diss: &Dissipation<T>,
    p_mean: &[T],
    q_mean: T,
    fbuf: &mut [T],
) -> Result<T, T> {
    let n = spec.state_dim();
    let mut h = hamiltonian_with(spec, mode, lattices, t, x, z, p_mean, q_mean, fbuf)?;
    for (k, pair) in pairs[..n].iter().enumerate() {
        h = h - diss.alpha_x[k] * pair.half_jump();
    }
    h = h - diss.alpha_z * pairs[n].half_jump();
    Ok(h)
}

/// Global dissipation coefficients: per axis, the maximum of `|f_i|` over
/// (grid state nodes) x (control lattice), and the maximum of `|L|` for the
/// z axis, inflated by `safety`.
pub fn dissipation_bounds<T: Scalar>(
    spec: &ProblemSpec<T>,
    mode: PlayerMode,
    grid: &Grid<T>,
    t: T,
    lattices: &ControlLattices<T>,
    safety: T,
) -> Result<Dissipation<T>, T> {
    let n = spec.state_dim();
    if grid.state_dim() != n {
        return Err(HjError::config(format!(
            "grid has {} state axes but the problem has {}",
            grid.state_dim(),
            n
        )));
    }
    let b_points: &[Vec<T>] = match mode {
        PlayerMode::OptCtrl => &lattices.b.points()[..1],
        _ => lattices.b.points(),
    };
    let state_nodes = grid.num_state_points();
    let (max_f, max_l) = (0..state_nodes)
        .into_par_iter()
        .map_init(
            || (vec![T::zero(); n], vec![T::zero(); n]),
            |(x, fbuf), s| {
                grid.state_coords(s, x);
                let mut mf = vec![T::zero(); n];
                let mut ml = T::zero();
                for a in lattices.a.points() {
                    for b in b_points {
                        spec.dynamics_into(t, x, a, b, fbuf);
                        for k in 0..n {
                            let v = fbuf[k].abs();
                            if v > mf[k] {
                                mf[k] = v;
                            }
                        }
                        let l = spec.stage_cost_raw(t, x, a, b).abs();
                        if l > ml {
                            ml = l;
                        }
                    }
                }
                (mf, ml)
            },
        )
        .reduce(
            || (vec![T::zero(); n], T::zero()),
            |(mut f1, l1), (f2, l2)| {
                for k in 0..n {
                    if f2[k] > f1[k] {
                        f1[k] = f2[k];
                    }
                }
                (f1, if l2 > l1 { l2 } else { l1 })
            },
        );
    let alpha_x: Vec<T> = max_f.iter().map(|v| *v * safety).collect();
    let alpha_z = max_l * safety;
    if alpha_x.iter().any(|v| !v.is_finite()) || !alpha_z.is_finite() {
        return Err(HjError::evaluation(
            "non-finite dynamics or stage cost while sampling dissipation bounds",
        ));
    }
    Ok(Dissipation { alpha_x, alpha_z })
}

/// CFL-limited time step `cfl / (sum_i alpha_i / dx_i + alpha_z / dz)`.
///
/// All-zero dissipation leaves the formula undefined and is a configuration
/// error; callers with a genuinely frozen system should pick their own step.
pub fn cfl_timestep<T: Scalar>(grid: &Grid<T>, diss: &Dissipation<T>, cfl: T) -> Result<T, T> {
    let mut denom = T::zero();
    for (ax, alpha) in grid.state_axes().iter().zip(&diss.alpha_x) {
        denom = denom + *alpha / ax.spacing();
    }
    denom = denom + diss.alpha_z / grid.z_axis().spacing();
    if denom <= T::zero() {
        return Err(HjError::config(
            "all dissipation coefficients are zero; no CFL step exists",
        ));
    }
    Ok(cfl / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Axis};
    use crate::problem::{builtin_toy_1d, builtin_water_system};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn extend_line(f: impl Fn(f64) -> f64, lo: f64, hi: f64, count: usize, ghost: usize) -> (Vec<f64>, f64) {
        let h = (hi - lo) / (count - 1) as f64;
        let vals = (0..count + 2 * ghost)
            .map(|i| f(lo + (i as f64 - ghost as f64) * h))
            .collect();
        (vals, h)
    }

    #[test]
    fn linear_fields_are_exact_for_both_orders() {
        for order in [DerivativeOrder::Upwind1, DerivativeOrder::Weno5] {
            let g = order.required_ghost();
            let (vals, h) = extend_line(|x| 3.0 * x, 0.0, 1.0, 11, g);
            let pairs = derivatives_along_axis(&vals, h, order).unwrap();
            assert_eq!(pairs.len(), 11);
            for p in pairs {
                assert_relative_eq!(p.left, 3.0, max_relative = 1e-12);
                assert_relative_eq!(p.right, 3.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn weno5_convergence_on_sine_is_fifth_order() {
        // Exact (analytic) ghost values isolate the stencil order from the
        // boundary extrapolation.
        let err_at = |count: usize| -> f64 {
            let (vals, h) = extend_line(f64::sin, 0.0, std::f64::consts::PI, count, 3);
            let pairs = derivatives_along_axis(&vals, h, DerivativeOrder::Weno5).unwrap();
            pairs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let x = i as f64 * h;
                    (p.left - x.cos()).abs()
                })
                .fold(0.0, f64::max)
        };
        let e1 = err_at(101);
        let e2 = err_at(201);
        let rate = (e1 / e2).log2();
        assert!(rate >= 4.5, "observed order {rate}, errors {e1} {e2}");
    }

    #[test]
    fn upwind_detects_kink_of_abs() {
        let (vals, h) = extend_line(f64::abs, -1.0, 1.0, 21, 1);
        let pairs = derivatives_along_axis(&vals, h, DerivativeOrder::Upwind1).unwrap();
        let mid = 10; // x = 0
        assert_relative_eq!(pairs[mid].left, -1.0, epsilon = 1e-12);
        assert_relative_eq!(pairs[mid].right, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn too_short_line_is_config_error() {
        assert!(matches!(
            derivatives_along_axis(&[1.0f64; 5], 0.1, DerivativeOrder::Weno5),
            Err(HjError::Config(_))
        ));
    }

    fn toy_lattices(count: usize) -> (crate::problem::ProblemSpec<f64>, ControlLattices<f64>) {
        let spec = builtin_toy_1d::<f64>();
        let opts = SchemeOptions {
            lattice_a: count,
            lattice_b: count,
            ..SchemeOptions::default()
        };
        let lat = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        (spec, lat)
    }

    #[test]
    fn zero_gradient_gives_zero_hamiltonian() {
        let (spec, lat) = toy_lattices(5);
        let h = hamiltonian(&spec, PlayerMode::Upper, &lat, 0.0, &[1.0], 0.0, &[0.0], 0.0).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn water_hamiltonian_matches_closed_form_and_lattice() {
        let spec = builtin_water_system::<f64>();
        let opts = SchemeOptions {
            lattice_a: 101,
            lattice_b: 101,
            ..SchemeOptions::default()
        };
        let lat = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        let want = -10.0 + (2.0f64 * 9.81 * 4.0).sqrt();
        let h = hamiltonian(&spec, PlayerMode::Upper, &lat, 0.0, &[4.0, 2.0], 0.0, &[1.0, 0.0], 0.0)
            .unwrap();
        assert_relative_eq!(h, want, max_relative = 1e-12);
        assert_relative_eq!(h, -1.1411, epsilon = 1e-4);
        let h_lat =
            hamiltonian_lattice(&spec, PlayerMode::Upper, &lat, 0.0, &[4.0, 2.0], 0.0, &[1.0, 0.0], 0.0)
                .unwrap();
        assert_relative_eq!(h_lat, want, epsilon = 1e-9);
    }

    #[test]
    fn water_upper_equals_lower() {
        let spec = builtin_water_system::<f64>();
        let opts = SchemeOptions::default();
        let lat_u = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let x = [rng.gen_range(0.0..16.0), rng.gen_range(0.5..5.5)];
            let p = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let q = rng.gen_range(-5.0..5.0);
            let hu = hamiltonian(&spec, PlayerMode::Upper, &lat_u, 0.0, &x, 0.0, &p, q).unwrap();
            let hl = hamiltonian(&spec, PlayerMode::Lower, &lat_u, 0.0, &x, 0.0, &p, q).unwrap();
            assert_relative_eq!(hu, hl, epsilon = 1e-12);
        }
    }

    #[test]
    fn minimax_inequality_on_lattice() {
        // min_b max_a >= max_a min_b for any joint integrand.
        let (spec, lat) = toy_lattices(7);
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let x = [rng.gen_range(-3.0..3.0)];
            let p = [rng.gen_range(-4.0..4.0)];
            let q = rng.gen_range(-4.0..4.0);
            let hu = hamiltonian_lattice(&spec, PlayerMode::Upper, &lat, 0.0, &x, 0.0, &p, q).unwrap();
            let hl = hamiltonian_lattice(&spec, PlayerMode::Lower, &lat, 0.0, &x, 0.0, &p, q).unwrap();
            assert!(hl >= hu - 1e-12, "min-max {hl} < max-min {hu}");
        }
    }

    #[test]
    fn optctrl_lattice_refinement_is_monotone() {
        // Doubling density keeps old sample points, so the max cannot drop.
        let spec = builtin_toy_1d::<f64>();
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let x = [rng.gen_range(-3.0..3.0)];
            let p = [rng.gen_range(-4.0..4.0)];
            let q = rng.gen_range(-4.0..4.0);
            let mut prev = f64::NEG_INFINITY;
            for count in [2usize, 3, 5, 9, 17] {
                let opts = SchemeOptions {
                    lattice_a: count,
                    lattice_b: count,
                    ..SchemeOptions::default()
                };
                let lat = ControlLattices::for_mode(&spec, PlayerMode::OptCtrl, &opts);
                let h =
                    hamiltonian_lattice(&spec, PlayerMode::OptCtrl, &lat, 0.0, &x, 0.0, &p, q).unwrap();
                assert!(h >= prev - 1e-12, "refinement dropped {prev} -> {h}");
                prev = h;
            }
        }
    }

    #[test]
    fn lax_friedrichs_consistency_at_equal_gradients() {
        let spec = builtin_water_system::<f64>();
        let opts = SchemeOptions::default();
        let lat = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        let diss = Dissipation {
            alpha_x: vec![19.5, 9.5],
            alpha_z: 0.0,
        };
        let pairs = [
            DerivativePair { left: 0.7, right: 0.7 },
            DerivativePair { left: -1.3, right: -1.3 },
            DerivativePair { left: -1.0, right: -1.0 },
        ];
        let h_hat =
            lax_friedrichs(&spec, PlayerMode::Upper, &lat, 0.0, &[4.0, 2.0], 3.0, &pairs, &diss)
                .unwrap();
        let h = hamiltonian(&spec, PlayerMode::Upper, &lat, 0.0, &[4.0, 2.0], 3.0, &[0.7, -1.3], -1.0)
            .unwrap();
        assert_eq!(h_hat, h);
    }

    #[test]
    fn pure_dissipation_arithmetic() {
        // Zero Hamiltonian, one axis with a unit jump: -alpha * (phi+ - phi-)/2.
        let spec = crate::problem::frozen_problem();
        let opts = SchemeOptions::default();
        let lat = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        let diss = Dissipation {
            alpha_x: vec![2.0, 0.0],
            alpha_z: 0.0,
        };
        let pairs = [
            DerivativePair { left: -1.0, right: 1.0 },
            DerivativePair { left: 0.0, right: 0.0 },
            DerivativePair { left: 0.0, right: 0.0 },
        ];
        let h_hat =
            lax_friedrichs(&spec, PlayerMode::Upper, &lat, 0.0, &[0.0, 0.0], 0.0, &pairs, &diss)
                .unwrap();
        assert_relative_eq!(h_hat, -2.0);
    }

    #[test]
    fn lax_friedrichs_matches_independent_formula() {
        let spec = builtin_water_system::<f64>();
        let opts = SchemeOptions::default();
        let lat = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        let diss = Dissipation {
            alpha_x: vec![19.49, 9.47],
            alpha_z: 0.3,
        };
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let x = [rng.gen_range(0.0..16.0), rng.gen_range(0.5..5.5)];
            let z = rng.gen_range(0.0..18.0);
            let pairs: Vec<DerivativePair<f64>> = (0..3)
                .map(|_| DerivativePair {
                    left: rng.gen_range(-2.0..2.0),
                    right: rng.gen_range(-2.0..2.0),
                })
                .collect();
            let got =
                lax_friedrichs(&spec, PlayerMode::Upper, &lat, 0.0, &x, z, &pairs, &diss).unwrap();
            // Re-derive from scratch.
            let p = [
                0.5 * (pairs[0].left + pairs[0].right),
                0.5 * (pairs[1].left + pairs[1].right),
            ];
            let q = 0.5 * (pairs[2].left + pairs[2].right);
            let h = hamiltonian(&spec, PlayerMode::Upper, &lat, 0.0, &x, z, &p, q).unwrap();
            let want = h
                - diss.alpha_x[0] * 0.5 * (pairs[0].right - pairs[0].left)
                - diss.alpha_x[1] * 0.5 * (pairs[1].right - pairs[1].left)
                - diss.alpha_z * 0.5 * (pairs[2].right - pairs[2].left);
            assert_relative_eq!(got, want, max_relative = 1e-15, epsilon = 1e-15);
        }
    }

    #[test]
    fn lax_friedrichs_is_monotone_under_sufficient_dissipation() {
        // With alpha bounding |dH/dp| per axis, raising any phi+ must not
        // raise H_hat and raising any phi- must not lower it.
        let spec = builtin_water_system::<f64>();
        let opts = SchemeOptions::default();
        let lat = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        let diss = Dissipation {
            alpha_x: vec![19.49, 9.47],
            alpha_z: 0.0,
        };
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(23);
        for _ in 0..100 {
            let x = [rng.gen_range(0.0..16.0), rng.gen_range(0.5..5.5)];
            let z = rng.gen_range(0.0..18.0);
            let base: Vec<DerivativePair<f64>> = (0..3)
                .map(|_| DerivativePair {
                    left: rng.gen_range(-2.0..2.0),
                    right: rng.gen_range(-2.0..2.0),
                })
                .collect();
            let h0 =
                lax_friedrichs(&spec, PlayerMode::Upper, &lat, 0.0, &x, z, &base, &diss).unwrap();
            let eps = rng.gen_range(0.01..0.5);
            for k in 0..3 {
                let mut up = base.clone();
                up[k].right += eps;
                let h_up =
                    lax_friedrichs(&spec, PlayerMode::Upper, &lat, 0.0, &x, z, &up, &diss).unwrap();
                assert!(h_up <= h0 + 1e-10, "axis {k}: phi+ bump raised H {h0} -> {h_up}");
                let mut lo = base.clone();
                lo[k].left += eps;
                let h_lo =
                    lax_friedrichs(&spec, PlayerMode::Upper, &lat, 0.0, &x, z, &lo, &diss).unwrap();
                assert!(h_lo >= h0 - 1e-10, "axis {k}: phi- bump lowered H {h0} -> {h_lo}");
            }
        }
    }

    fn water_grid_41() -> Grid<f64> {
        build_grid(
            vec![
                Axis::new(0.0, 16.0, 41).unwrap(),
                Axis::new(0.5, 5.5, 41).unwrap(),
            ],
            Axis::new(0.0, 18.0, 41).unwrap(),
            3,
        )
        .unwrap()
    }

    #[test]
    fn water_dissipation_bounds() {
        let spec = builtin_water_system::<f64>();
        let opts = SchemeOptions::default();
        let lat = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        let grid = water_grid_41();
        let d = dissipation_bounds(&spec, PlayerMode::Upper, &grid, 1.0, &lat, 1.1).unwrap();
        let peak = (2.0f64 * 9.81 * 16.0).sqrt();
        assert!(d.alpha_x[0] >= peak, "alpha_x1 {} < {peak}", d.alpha_x[0]);
        assert!(d.alpha_x[1] >= 0.5 * peak, "alpha_x2 {} < {}", d.alpha_x[1], 0.5 * peak);
        assert_eq!(d.alpha_z, 0.0);
    }

    #[test]
    fn toy_and_frozen_dissipation_bounds() {
        let spec = builtin_toy_1d::<f64>();
        let opts = SchemeOptions::default();
        let lat = ControlLattices::for_mode(&spec, PlayerMode::Upper, &opts);
        let grid = build_grid(
            vec![Axis::new(-3.0, 3.0, 31).unwrap()],
            Axis::new(0.0, 8.0, 31).unwrap(),
            3,
        )
        .unwrap();
        let d = dissipation_bounds(&spec, PlayerMode::Upper, &grid, 1.0, &lat, 1.1).unwrap();
        assert!(d.alpha_x[0] >= 1.5);
        assert!(d.alpha_z >= 9.0);

        let frozen = crate::problem::frozen_problem();
        let lat = ControlLattices::for_mode(&frozen, PlayerMode::Upper, &opts);
        let grid2 = build_grid(
            vec![
                Axis::new(0.0, 1.0, 5).unwrap(),
                Axis::new(0.0, 1.0, 5).unwrap(),
            ],
            Axis::new(0.0, 1.0, 5).unwrap(),
            3,
        )
        .unwrap();
        let d = dissipation_bounds(&frozen, PlayerMode::Upper, &grid2, 1.0, &lat, 1.1).unwrap();
        assert_eq!(d.alpha_x, vec![0.0, 0.0]);
        assert_eq!(d.alpha_z, 0.0);
    }

    #[test]
    fn cfl_formula_arithmetic() {
        let grid = build_grid(
            vec![Axis::new(0.0, 2.0, 5).unwrap()],
            Axis::new(0.0, 1.0, 2).unwrap(),
            0,
        )
        .unwrap();
        // dx = 0.5, dz = 1
        let d = Dissipation {
            alpha_x: vec![2.0],
            alpha_z: 0.0,
        };
        let dt = cfl_timestep(&grid, &d, 0.5).unwrap();
        assert_relative_eq!(dt, 0.125);
        let d2 = Dissipation {
            alpha_x: vec![4.0],
            alpha_z: 0.0,
        };
        assert_relative_eq!(cfl_timestep(&grid, &d2, 0.5).unwrap(), dt / 2.0);
        let zero = Dissipation {
            alpha_x: vec![0.0],
            alpha_z: 0.0,
        };
        assert!(matches!(cfl_timestep(&grid, &zero, 0.5), Err(HjError::Config(_))));
    }

    proptest! {
        #[test]
        fn derivative_pairs_exact_on_random_linear_lines(
            slope in -10.0f64..10.0, intercept in -5.0f64..5.0,
        ) {
            for order in [DerivativeOrder::Upwind1, DerivativeOrder::Weno5] {
                let g = order.required_ghost();
                let (vals, h) = extend_line(|x| slope * x + intercept, -1.0, 1.0, 15, g);
                let pairs = derivatives_along_axis(&vals, h, order).unwrap();
                for p in pairs {
                    prop_assert!((p.left - slope).abs() < 1e-9 * (1.0 + slope.abs()));
                    prop_assert!((p.right - slope).abs() < 1e-9 * (1.0 + slope.abs()));
                }
            }
        }
    }
}
