//! Cartesian grid over the augmented state (x, z), scalar fields on it,
//! multilinear interpolation, and ghost-cell extension.
//!
//! Layout is row-major over `(x1, ..., xn, z)`: the auxiliary cost axis `z`
//! is always the last (fastest-varying) dimension. A node index therefore
//! decomposes as `node = state_index * z_count + z_index`.

use std::sync::Arc;

use crate::error::{HjError, Result};
use crate::scalar::Scalar;

/// One uniformly spaced grid axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis<T> {
    min: T,
    max: T,
    count: usize,
}

impl<T: Scalar> Axis<T> {
    pub fn new(min: T, max: T, count: usize) -> Result<Self, T> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(HjError::config(format!(
                "axis needs finite max > min, got [{min}, {max}]"
            )));
        }
        if count < 2 {
            return Err(HjError::config(format!(
                "axis needs at least 2 points, got {count}"
            )));
        }
        Ok(Axis { min, max, count })
    }

    pub fn min(&self) -> T {
        self.min
    }

    pub fn max(&self) -> T {
        self.max
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn spacing(&self) -> T {
        (self.max - self.min) / T::from_usize(self.count - 1).unwrap()
    }

    /// Coordinate of node `i`.
    pub fn coord(&self, i: usize) -> T {
        debug_assert!(i < self.count);
        self.min + self.spacing() * T::from_usize(i).unwrap()
    }

    /// Locates `v` in a cell: returns `(i, frac)` with `v ≈ coord(i) +
    /// frac * spacing` and `i <= count - 2`. Points up to a relative sliver
    /// outside the axis are clamped; anything further out is a domain error.
    pub fn locate(&self, v: T) -> Result<(usize, T), T> {
        let tol = self.spacing() * T::from_f64(1e-9).unwrap();
        if !v.is_finite() || v < self.min - tol || v > self.max + tol {
            return Err(HjError::domain(format!(
                "coordinate {v} outside axis [{min}, {max}]",
                min = self.min,
                max = self.max
            )));
        }
        let u = (v - self.min) / self.spacing();
        let mut i = u.floor().to_usize().unwrap_or(0);
        if i > self.count - 2 {
            i = self.count - 2;
        }
        let frac = (u - T::from_usize(i).unwrap()).max(T::zero()).min(T::one());
        Ok((i, frac))
    }

    /// Like [`Axis::locate`] but for points beyond the axis: the outermost
    /// cell is used with an out-of-range fraction, so multilinear formulas
    /// extrapolate linearly (the same closure the ghost layers use).
    pub(crate) fn locate_extrapolating(&self, v: T) -> (usize, T) {
        let u = (v - self.min) / self.spacing();
        let mut i = u.floor().to_isize().unwrap_or(0).max(0) as usize;
        if i > self.count - 2 {
            i = self.count - 2;
        }
        (i, u - T::from_usize(i).unwrap())
    }

    /// True when `v` lies inside `[min, max]` up to floating-point slack.
    pub fn contains(&self, v: T) -> bool {
        let tol = self.spacing() * T::from_f64(1e-9).unwrap();
        v.is_finite() && v >= self.min - tol && v <= self.max + tol
    }
}

/// Computational grid over the augmented state: `n` state axes plus the
/// auxiliary `z` axis, with a ghost-layer width used by the derivative
/// stencils.
#[derive(Clone, Debug)]
pub struct Grid<T> {
    /// All axes, z last.
    axes: Vec<Axis<T>>,
    ghost_width: usize,
}

/// Builds a validated grid; degenerate axes are configuration errors.
pub fn build_grid<T: Scalar>(
    state_axes: Vec<Axis<T>>,
    z_axis: Axis<T>,
    ghost_width: usize,
) -> Result<Grid<T>, T> {
    if state_axes.is_empty() {
        return Err(HjError::config("grid needs at least one state axis"));
    }
    let mut axes = state_axes;
    axes.push(z_axis);
    Ok(Grid { axes, ghost_width })
}

impl<T: Scalar> Grid<T> {
    /// Number of state dimensions (excluding z).
    pub fn state_dim(&self) -> usize {
        self.axes.len() - 1
    }

    /// All axes, z last.
    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn state_axes(&self) -> &[Axis<T>] {
        &self.axes[..self.axes.len() - 1]
    }

    pub fn z_axis(&self) -> &Axis<T> {
        self.axes.last().unwrap()
    }

    pub fn ghost_width(&self) -> usize {
        self.ghost_width
    }

    /// Total node count over all axes.
    pub fn num_points(&self) -> usize {
        self.axes.iter().map(|a| a.count()).product()
    }

    /// Node count of the state axes only.
    pub fn num_state_points(&self) -> usize {
        self.state_axes().iter().map(|a| a.count()).product()
    }

    /// Row-major strides (z stride is 1).
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.axes.len()];
        for k in (0..self.axes.len() - 1).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].count();
        }
        s
    }

    /// Decomposes a flat node index into per-axis indices.
    pub fn multi_index(&self, mut node: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.axes.len());
        for k in (0..self.axes.len()).rev() {
            let c = self.axes[k].count();
            out[k] = node % c;
            node /= c;
        }
    }

    /// Writes the coordinates of a flat node index into `out`.
    pub fn node_coords(&self, node: usize, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.axes.len());
        let mut rem = node;
        for k in (0..self.axes.len()).rev() {
            let c = self.axes[k].count();
            out[k] = self.axes[k].coord(rem % c);
            rem /= c;
        }
    }

    /// Coordinates of a state-only node index (no z component).
    pub fn state_coords(&self, state_node: usize, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.state_dim());
        let mut rem = state_node;
        for k in (0..self.state_dim()).rev() {
            let c = self.axes[k].count();
            out[k] = self.axes[k].coord(rem % c);
            rem /= c;
        }
    }

    /// True when the state part of a point is inside the grid box.
    pub fn state_contains(&self, x: &[T]) -> bool {
        x.len() == self.state_dim()
            && x.iter().zip(self.state_axes()).all(|(v, ax)| ax.contains(*v))
    }
}

/// Scalar field stored on a grid, row-major over `(x1, ..., xn, z)`.
#[derive(Clone, Debug)]
pub struct ScalarField<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self, T> {
        if values.len() != grid.num_points() {
            return Err(HjError::config(format!(
                "field has {} values for a {}-point grid",
                values.len(),
                grid.num_points()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Arc<Grid<T>>, v: T) -> Self {
        let n = grid.num_points();
        ScalarField {
            grid,
            values: vec![v; n],
        }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Multilinear interpolation at an augmented point `(x1..xn, z)`.
    ///
    /// Exact at grid nodes and for fields affine in each coordinate; points
    /// outside the bounding box are a domain error.
    pub fn interpolate(&self, point: &[T]) -> Result<T, T> {
        let axes = self.grid.axes();
        if point.len() != axes.len() {
            return Err(HjError::domain(format!(
                "query point has {} coordinates, grid has {} axes",
                point.len(),
                axes.len()
            )));
        }
        let mut cells = [0usize; 8];
        let mut fracs = [T::zero(); 8];
        let (cells, fracs) = if axes.len() <= 8 {
            (&mut cells[..axes.len()], &mut fracs[..axes.len()])
        } else {
            return Err(HjError::config("grids beyond 8 axes are not supported"));
        };
        for (k, ax) in axes.iter().enumerate() {
            let (i, f) = ax.locate(point[k])?;
            cells[k] = i;
            fracs[k] = f;
        }
        Ok(self.corner_sum(cells, fracs))
    }

    /// Multilinear evaluation that extrapolates linearly beyond the box
    /// (matching the ghost-layer closure); used by the reference backup so
    /// both solvers treat the boundary identically.
    pub fn interpolate_extrapolating(&self, point: &[T]) -> T {
        let axes = self.grid.axes();
        debug_assert_eq!(point.len(), axes.len());
        let mut cells = [0usize; 8];
        let mut fracs = [T::zero(); 8];
        let cells = &mut cells[..axes.len()];
        let fracs = &mut fracs[..axes.len()];
        for (k, ax) in axes.iter().enumerate() {
            let (i, f) = ax.locate_extrapolating(point[k]);
            cells[k] = i;
            fracs[k] = f;
        }
        self.corner_sum(cells, fracs)
    }

    fn corner_sum(&self, cells: &[usize], fracs: &[T]) -> T {
        let naxes = cells.len();
        let strides = self.grid.strides();
        let corners = 1usize << naxes;
        let mut acc = T::zero();
        for corner in 0..corners {
            let mut idx = 0usize;
            let mut w = T::one();
            for k in 0..naxes {
                let hi = (corner >> k) & 1 == 1;
                idx += (cells[k] + hi as usize) * strides[k];
                w = w * if hi { fracs[k] } else { T::one() - fracs[k] };
            }
            acc = acc + w * self.values[idx];
        }
        acc
    }
}

/// Field values padded on every axis by `width` ghost layers, filled by
/// linear extrapolation from the two outermost interior layers.
#[derive(Clone, Debug)]
pub struct ExtendedField<T> {
    dims: Vec<usize>,
    strides: Vec<usize>,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> ExtendedField<T> {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Flat extended index of an interior node given its grid multi-index.
    #[inline]
    pub fn interior_flat(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(i, s)| (i + self.width) * s)
            .sum()
    }

    /// Stride of one step along axis `k` in the extended array.
    #[inline]
    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    #[inline]
    pub fn value(&self, flat: usize) -> T {
        self.values[flat]
    }
}

/// Pads a field with `width` ghost layers per axis.
///
/// Requires `width <= grid.ghost_width`. Constants and linear ramps extend
/// exactly; smooth fields pick up an O(spacing^2) extrapolation error.
pub fn ghost_extend<T: Scalar>(field: &ScalarField<T>, width: usize) -> Result<ExtendedField<T>, T> {
    let grid = field.grid();
    if width > grid.ghost_width() {
        return Err(HjError::config(format!(
            "requested ghost width {} exceeds the grid's {}",
            width,
            grid.ghost_width()
        )));
    }
    let mut ext = alloc_extended(grid, width);
    ghost_extend_into(grid, field.values(), &mut ext);
    Ok(ext)
}

/// Allocates an extended buffer matching `grid` with `width` ghost layers.
pub(crate) fn alloc_extended<T: Scalar>(grid: &Grid<T>, width: usize) -> ExtendedField<T> {
    let dims: Vec<usize> = grid.axes().iter().map(|a| a.count() + 2 * width).collect();
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len() - 1).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let total = dims.iter().product();
    ExtendedField {
        dims,
        strides,
        width,
        values: vec![T::zero(); total],
    }
}

/// Fills an extended buffer from raw field values, reusing its allocation.
pub(crate) fn ghost_extend_into<T: Scalar>(grid: &Grid<T>, values: &[T], ext: &mut ExtendedField<T>) {
    debug_assert_eq!(values.len(), grid.num_points());
    let naxes = grid.axes().len();
    let w = ext.width;
    let counts: Vec<usize> = grid.axes().iter().map(|a| a.count()).collect();

    // Interior copy. The innermost axis is contiguous in both layouts, so
    // copy one z-line at a time.
    let z_count = counts[naxes - 1];
    let lines = values.len() / z_count;
    let mut multi = vec![0usize; naxes];
    for line in 0..lines {
        let mut rem = line;
        for k in (0..naxes - 1).rev() {
            multi[k] = rem % counts[k];
            rem /= counts[k];
        }
        multi[naxes - 1] = 0;
        let dst = ext.interior_flat(&multi);
        let src = line * z_count;
        ext.values[dst..dst + z_count].copy_from_slice(&values[src..src + z_count]);
    }
    if w == 0 {
        return;
    }

    // Ghost fill, axis by axis. When filling axis k, transverse coordinates
    // range over the already-populated region: full extended range for axes
    // before k, interior range for axes after k. Corners are reached by the
    // later passes extrapolating the earlier ones.
    for k in 0..naxes {
        let stride = ext.strides[k];
        let c = counts[k];
        let mut trans_dims: Vec<(usize, usize, usize)> = Vec::new(); // (stride, extent, offset)
        for (ax, stride_ax) in ext.strides.iter().enumerate() {
            if ax == k {
                continue;
            }
            if ax < k {
                trans_dims.push((*stride_ax, ext.dims[ax], 0));
            } else {
                trans_dims.push((*stride_ax, counts[ax], w));
            }
        }
        let n_lines: usize = trans_dims.iter().map(|d| d.1).product();
        for line in 0..n_lines {
            let mut base = 0usize;
            let mut rem = line;
            for &(s, extent, off) in trans_dims.iter().rev() {
                base += (rem % extent + off) * s;
                rem /= extent;
            }
            // First/last interior values along axis k and their neighbors.
            let lo0 = ext.values[base + w * stride];
            let lo1 = ext.values[base + (w + 1) * stride];
            let hi0 = ext.values[base + (w + c - 1) * stride];
            let hi1 = ext.values[base + (w + c - 2) * stride];
            for g in 1..=w {
                let d = T::from_usize(g).unwrap();
                ext.values[base + (w - g) * stride] = lo0 - d * (lo1 - lo0);
                ext.values[base + (w + c - 1 + g) * stride] = hi0 + d * (hi0 - hi1);
            }
        }
    }
}
