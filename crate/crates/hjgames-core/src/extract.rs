//! Recovers the game value from a solved value function and slices it for
//! inspection.
//!
//! The game value at a state is the smallest cost budget `z` whose
//! augmented value is non-positive: `vartheta(t, x) = min z  s.t.
//! V(t, x, z) <= 0`. States where `V` stays positive across the whole z
//! range have no feasible play within the stored budget — the value is
//! reported as saturated (infinite).

use crate::error::{HjError, Result};
use crate::grid::Axis;
use crate::scalar::Scalar;
use crate::solver::ValueFunction;

/// Outcome of a game-value query.
#[derive(Clone, Copy, Debug)]
pub struct ValueQueryResult<T> {
    /// Smallest feasible cost budget, `+inf` when saturated.
    pub value: T,
    /// True when `V > -margin` across the entire z range.
    pub saturated: bool,
    /// Grid z-levels bracketing the crossing (equal when the crossing sits
    /// at or below the first node); `None` when saturated.
    pub z_bracket: Option<(T, T)>,
}

/// Minimum-z extraction at state `x` and the stamp nearest `t`.
///
/// Scans `V(t, x, .)` along z (multilinear in `x` at each z node) for the
/// first node with `V <= -margin`, then resolves the crossing to sub-grid
/// resolution by linear interpolation between the bracketing nodes. A
/// positive `margin` trades value for safety.
pub fn extract_vartheta<T: Scalar>(
    vf: &ValueFunction<T>,
    t: T,
    x: &[T],
    margin: T,
) -> Result<ValueQueryResult<T>, T> {
    if margin < T::zero() || !margin.is_finite() {
        return Err(HjError::config(format!("margin must be >= 0, got {margin}")));
    }
    let k = vf.nearest_stamp(t)?;
    let profile = z_profile(vf, k, x)?;
    let z_axis = *vf.grid().z_axis();

    let mut crossing = None;
    for (j, w) in profile.iter().enumerate() {
        if *w <= -margin {
            crossing = Some(j);
            break;
        }
    }
    match crossing {
        None => Ok(ValueQueryResult {
            value: T::infinity(),
            saturated: true,
            z_bracket: None,
        }),
        Some(0) => Ok(ValueQueryResult {
            value: z_axis.min(),
            saturated: false,
            z_bracket: Some((z_axis.min(), z_axis.min())),
        }),
        Some(j) => {
            let z_lo = z_axis.coord(j - 1);
            let z_hi = z_axis.coord(j);
            // Shift by the margin so the crossing of w + margin locates
            // where V = -margin.
            let w_lo = profile[j - 1] + margin;
            let w_hi = profile[j] + margin;
            let value = if w_lo <= w_hi {
                // Not actually decreasing across the bracket (can happen in
                // noisy corners); fall back to the feasible node.
                z_hi
            } else {
                z_lo + (z_hi - z_lo) * w_lo / (w_lo - w_hi)
            };
            Ok(ValueQueryResult {
                value,
                saturated: false,
                z_bracket: Some((z_lo, z_hi)),
            })
        }
    }
}

/// Values of `V(t_k, x, z_j)` for all z nodes, multilinear in `x`.
fn z_profile<T: Scalar>(vf: &ValueFunction<T>, k: usize, x: &[T]) -> Result<Vec<T>, T> {
    let grid = vf.grid();
    let n = grid.state_dim();
    if x.len() != n {
        return Err(HjError::domain(format!(
            "query state has {} coordinates, expected {n}",
            x.len()
        )));
    }
    // Locate the state cell once; reuse its corner weights for every z node.
    let mut cells = Vec::with_capacity(n);
    let mut fracs = Vec::with_capacity(n);
    for (k_ax, ax) in grid.state_axes().iter().enumerate() {
        let (i, f) = ax.locate(x[k_ax])?;
        cells.push(i);
        fracs.push(f);
    }
    let strides = grid.strides();
    let z_count = grid.z_axis().count();
    let values = vf.snapshot(k).values();

    let corners = 1usize << n;
    let mut profile = vec![T::zero(); z_count];
    for corner in 0..corners {
        let mut base = 0usize;
        let mut w = T::one();
        for k_ax in 0..n {
            let hi = (corner >> k_ax) & 1 == 1;
            base += (cells[k_ax] + hi as usize) * strides[k_ax];
            w = w * if hi {
                fracs[k_ax]
            } else {
                T::one() - fracs[k_ax]
            };
        }
        for (j, slot) in profile.iter_mut().enumerate() {
            *slot = *slot + w * values[base + j];
        }
    }
    Ok(profile)
}

/// A value-function slice at fixed z over the state axes.
#[derive(Clone, Debug)]
pub struct StateSlice<T> {
    axes: Vec<Axis<T>>,
    values: Vec<T>,
}

impl<T: Scalar> StateSlice<T> {
    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    /// Row-major values over the state axes.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Count of nodes with `value <= 0` (the feasible region at this budget).
    pub fn sub_zero_count(&self) -> usize {
        self.values.iter().filter(|v| **v <= T::zero()).count()
    }
}

/// `V(t, ., z)` sampled on the state grid; its zero sub-level set is the
/// feasible region at cost budget `z`.
pub fn level_slice<T: Scalar>(vf: &ValueFunction<T>, t: T, z: T) -> Result<StateSlice<T>, T> {
    let k = vf.nearest_stamp(t)?;
    let grid = vf.grid();
    let (j, frac) = grid.z_axis().locate(z)?;
    let z_count = grid.z_axis().count();
    let values = vf.snapshot(k).values();
    let m = grid.num_state_points();
    let mut out = vec![T::zero(); m];
    for (s, slot) in out.iter_mut().enumerate() {
        let lo = values[s * z_count + j];
        let hi = values[s * z_count + j + 1];
        *slot = lo + (hi - lo) * frac;
    }
    Ok(StateSlice {
        axes: grid.state_axes().to_vec(),
        values: out,
    })
}

/// Fraction of state nodes whose sub-zero classification differs between
/// two slices of the same grid.
pub fn sub_zero_disagreement<T: Scalar>(a: &StateSlice<T>, b: &StateSlice<T>) -> f64 {
    assert_eq!(a.values.len(), b.values.len(), "slices from different grids");
    let differing = a
        .values
        .iter()
        .zip(&b.values)
        .filter(|(va, vb)| (**va <= T::zero()) != (**vb <= T::zero()))
        .count();
    differing as f64 / a.values.len() as f64
}

/// Nodes where slice `a`'s feasible region sticks out of `b`'s.
pub fn containment_violations<T: Scalar>(a: &StateSlice<T>, b: &StateSlice<T>, tol: T) -> usize {
    assert_eq!(a.values.len(), b.values.len(), "slices from different grids");
    a.values
        .iter()
        .zip(&b.values)
        .filter(|(va, vb)| **va <= T::zero() && **vb > tol)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Axis};
    use crate::numerics::SchemeOptions;
    use crate::problem::{ControlBox, PlayerMode, ProblemSpec};
    use crate::solver::{solve, EquationVariant};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn stationary_vf(
        g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        c: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> ValueFunction<f64> {
        let spec = ProblemSpec::<f64>::builder(2)
            .dynamics(|_, _, _, _, out| out.fill(0.0))
            .stage_cost(|_, _, _, _| 0.0)
            .terminal_cost(move |_, x| g(x))
            .constraint(move |_, x| c(x))
            .controls_a(ControlBox::interval(0.0, 1.0).unwrap())
            .controls_b(ControlBox::interval(0.0, 1.0).unwrap())
            .horizon(1.0)
            .time_invariant(true)
            .build()
            .unwrap();
        let grid = Arc::new(
            build_grid(
                vec![
                    Axis::new(0.0, 4.0, 17).unwrap(),
                    Axis::new(0.0, 4.0, 17).unwrap(),
                ],
                Axis::new(0.0, 8.0, 17).unwrap(),
                3,
            )
            .unwrap(),
        );
        solve(
            &spec,
            &grid,
            EquationVariant::P1TimeVarying,
            PlayerMode::Upper,
            &SchemeOptions::default(),
            5,
        )
        .unwrap()
    }

    #[test]
    fn frozen_value_crosses_zero_at_z_zero() {
        // V = max{-1, -z} crosses zero exactly at z = 0 for every state.
        let vf = stationary_vf(|_| 0.0, |_| -1.0);
        for x in [[0.5, 0.5], [2.0, 3.0], [3.7, 0.2]] {
            let q = extract_vartheta(&vf, 0.7, &x, 0.0).unwrap();
            assert!(!q.saturated);
            assert_relative_eq!(q.value, 0.0);
        }
    }

    #[test]
    fn terminal_extraction_matches_terminal_cost() {
        // At the terminal stamp V = max{c, g - z}; with c <= 0 the crossing
        // sits exactly at z = g(x).
        let vf = stationary_vf(|x| x[0] + 0.25 * x[1], |_| -1.0);
        let grid = vf.grid().clone();
        for s in 0..grid.num_state_points() {
            let mut x = [0.0; 2];
            grid.state_coords(s, &mut x);
            let q = extract_vartheta(&vf, 1.0, &x, 0.0).unwrap();
            let g = x[0] + 0.25 * x[1];
            assert!(!q.saturated);
            assert_relative_eq!(q.value, g, epsilon = 1e-9);
        }
    }

    #[test]
    fn violated_constraint_saturates() {
        let vf = stationary_vf(|x| x[0], |_| 0.5);
        let q = extract_vartheta(&vf, 0.0, &[1.0, 1.0], 0.0).unwrap();
        assert!(q.saturated);
        assert!(q.value.is_infinite());
        assert!(q.z_bracket.is_none());
    }

    #[test]
    fn crossing_below_grid_clips_to_z_min() {
        // g = -5 puts the crossing below z_min = 0; the result clips there.
        let vf = stationary_vf(|_| -5.0, |_| -1.0);
        let q = extract_vartheta(&vf, 0.0, &[1.0, 1.0], 0.0).unwrap();
        assert!(!q.saturated);
        assert_relative_eq!(q.value, 0.0);
        assert_eq!(q.z_bracket, Some((0.0, 0.0)));
    }

    #[test]
    fn margin_is_monotone() {
        let vf = stationary_vf(|x| x[0] + x[1], |_| -1.0);
        let mut prev = -1.0f64;
        for m in [0.0, 0.1, 0.3, 0.6] {
            let q = extract_vartheta(&vf, 0.0, &[1.5, 1.5], m).unwrap();
            assert!(!q.saturated);
            assert!(q.value >= prev, "margin {m} dropped the value");
            prev = q.value;
        }
        // With V = max{-1, g - z}, V <= -m requires z >= g + m (for m < 1).
        let q = extract_vartheta(&vf, 0.0, &[1.5, 1.5], 0.25).unwrap();
        assert_relative_eq!(q.value, 3.0 + 0.25, epsilon = 1e-9);
    }

    #[test]
    fn queries_outside_the_grid_are_domain_errors() {
        let vf = stationary_vf(|x| x[0], |_| -1.0);
        assert!(matches!(
            extract_vartheta(&vf, 0.0, &[9.0, 0.0], 0.0),
            Err(HjError::Domain(_))
        ));
        assert!(matches!(
            level_slice(&vf, 0.0, 99.0),
            Err(HjError::Domain(_))
        ));
    }

    #[test]
    fn stationary_slices_equal_terminal_slice() {
        let vf = stationary_vf(|x| x[0], |_| -1.0);
        let at_end = level_slice(&vf, 1.0, 3.0).unwrap();
        for t in [0.0, 0.25, 0.5] {
            let s = level_slice(&vf, t, 3.0).unwrap();
            for (a, b) in s.values().iter().zip(at_end.values()) {
                assert_relative_eq!(*a, *b);
            }
        }
    }

    #[test]
    fn slice_containment_is_monotone_in_z() {
        let vf = stationary_vf(|x| x[0] + x[1], |x| x[0] - 3.5);
        let lo = level_slice(&vf, 0.0, 2.0).unwrap();
        let hi = level_slice(&vf, 0.0, 5.0).unwrap();
        assert_eq!(containment_violations(&lo, &hi, 0.0), 0);
        assert!(lo.sub_zero_count() <= hi.sub_zero_count());
    }

    #[test]
    fn constant_field_slices_constant() {
        let vf = stationary_vf(|_| 0.0, |_| -1.0);
        // Above z=0 the value is max{-1, -z} = -... strictly; at z=4 all -1.
        let s = level_slice(&vf, 0.5, 4.0).unwrap();
        for v in s.values() {
            assert_relative_eq!(*v, -1.0);
        }
    }
}
