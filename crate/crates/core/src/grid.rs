//! Box geometry and field containers.
//!
//! Scalars live at cell centers. Vector quantities (velocity, gradients,
//! fluxes, forces) live on cell faces in the staggered (MAC) layout: the
//! component along axis `a` is stored on the faces normal to `a`. Faces on
//! the domain boundary always hold zero, which encodes both homogeneous
//! Neumann data for gradients and the no-slip condition for velocity.
//!
//! Two-dimensional grids are stored as three-dimensional ones with a single
//! cell along the unused axis; operators only ever loop over `0..dim`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default ceiling on the total number of cells.
pub const DEFAULT_CELL_LIMIT: usize = 1 << 27;

/// Minimum cells per active axis.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("lengths and cells disagree in dimension ({lengths} vs {cells})")]
    Arity { lengths: usize, cells: usize },
    #[error("axis {axis}: at least {MIN_CELLS} cells required, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis}: length must be positive and finite, got {length}")]
    Length { axis: usize, length: f64 },
    #[error("grid has {cells} cells, above the limit of {limit}")]
    TooLarge { cells: usize, limit: usize },
    #[error("fields live on different grids")]
    Mismatch,
}

/// Uniform box `[0, L_0] x ... x [0, L_{dim-1}]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lengths: [f64; 3],
    cells: [usize; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(lengths: &[f64], cells: &[usize]) -> Result<Self, GridError> {
        Self::with_cell_limit(lengths, cells, DEFAULT_CELL_LIMIT)
    }

    pub fn with_cell_limit(
        lengths: &[f64],
        cells: &[usize],
        limit: usize,
    ) -> Result<Self, GridError> {
        let dim = cells.len();
        if !(2..=3).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if lengths.len() != dim {
            return Err(GridError::Arity {
                lengths: lengths.len(),
                cells: dim,
            });
        }
        let mut g = Grid {
            dim,
            lengths: [1.0; 3],
            cells: [1; 3],
            spacing: [1.0; 3],
        };
        let mut total: usize = 1;
        for a in 0..dim {
            if cells[a] < MIN_CELLS {
                return Err(GridError::TooFewCells {
                    axis: a,
                    cells: cells[a],
                });
            }
            if !(lengths[a].is_finite() && lengths[a] > 0.0) {
                return Err(GridError::Length {
                    axis: a,
                    length: lengths[a],
                });
            }
            total = total.saturating_mul(cells[a]);
            g.lengths[a] = lengths[a];
            g.cells[a] = cells[a];
            g.spacing[a] = lengths[a] / cells[a] as f64;
        }
        if total > limit {
            return Err(GridError::TooLarge {
                cells: total,
                limit,
            });
        }
        Ok(g)
    }

    /// Unit square/cube with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self, GridError> {
        Self::new(&vec![1.0; dim], &vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis; unused axes report 1.
    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing[..self.dim]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn strides(&self) -> [usize; 3] {
        [1, self.cells[0], self.cells[0] * self.cells[1]]
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        i[0] + self.cells[0] * (i[1] + self.cells[1] * i[2])
    }

    pub fn cell_center(&self, i: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (i[a] as f64 + 0.5) * self.spacing[a];
        }
        x
    }

    /// Shape of the face array normal to `axis`.
    pub fn face_shape(&self, axis: usize) -> [usize; 3] {
        let mut s = self.cells;
        s[axis] += 1;
        s
    }

    pub fn n_faces(&self, axis: usize) -> usize {
        self.face_shape(axis).iter().product()
    }

    #[inline]
    pub fn face_index(&self, axis: usize, i: [usize; 3]) -> usize {
        let s = self.face_shape(axis);
        i[0] + s[0] * (i[1] + s[1] * i[2])
    }

    pub fn face_strides(&self, axis: usize) -> [usize; 3] {
        let s = self.face_shape(axis);
        [1, s[0], s[0] * s[1]]
    }

    pub fn face_center(&self, axis: usize, i: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = if a == axis {
                i[a] as f64 * self.spacing[a]
            } else {
                (i[a] as f64 + 0.5) * self.spacing[a]
            };
        }
        x
    }

    /// True if the face lies on the domain boundary.
    #[inline]
    pub fn is_boundary_face(&self, axis: usize, i: [usize; 3]) -> bool {
        i[axis] == 0 || i[axis] == self.cells[axis]
    }
}

/// Visit every multi-index of `shape` in storage order (axis 0 fastest).
#[inline]
pub fn for_each_index(shape: [usize; 3], mut f: impl FnMut([usize; 3], usize)) {
    let mut n = 0;
    for k in 0..shape[2] {
        for j in 0..shape[1] {
            for i in 0..shape[0] {
                f([i, j, k], n);
                n += 1;
            }
        }
    }
}

/// Cell-centered scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![value; grid.n_cells()],
        }
    }

    /// Sample `f` at cell centers.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let mut values = vec![0.0; grid.n_cells()];
        for_each_index(grid.cells(), |i, n| values[n] = f(grid.cell_center(i)));
        ScalarField {
            grid: *grid,
            values,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_cells() {
            return Err(GridError::Mismatch);
        }
        Ok(ScalarField {
            grid: *grid,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Volume-weighted L2 inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        self.grid == other.grid
    }
}

/// Face-centered vector field in the MAC layout. Boundary-normal faces are
/// held at zero by every constructor.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    grid: Grid,
    comps: [Vec<f64>; 3],
}

/// Velocity on the staggered grid (no-slip: boundary faces are zero).
pub type VelocityField = FaceField;

impl FaceField {
    pub fn zeros(grid: &Grid) -> Self {
        let mut comps: [Vec<f64>; 3] = Default::default();
        for (a, c) in comps.iter_mut().enumerate().take(grid.dim()) {
            *c = vec![0.0; grid.n_faces(a)];
        }
        FaceField { grid: *grid, comps }
    }

    /// Sample component `f(axis, x)` at face centers; boundary faces stay 0.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(usize, [f64; 3]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for a in 0..grid.dim() {
            let comp = &mut out.comps[a];
            for_each_index(grid.face_shape(a), |i, n| {
                if !grid.is_boundary_face(a, i) {
                    comp[n] = f(a, grid.face_center(a, i));
                }
            });
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comp(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    /// Mutable component access. Callers must keep boundary faces at zero;
    /// [`FaceField::enforce_boundary`] restores the invariant.
    pub fn comp_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn enforce_boundary(&mut self) {
        let grid = self.grid;
        for a in 0..grid.dim() {
            let comp = &mut self.comps[a];
            for_each_index(grid.face_shape(a), |i, n| {
                if grid.is_boundary_face(a, i) {
                    comp[n] = 0.0;
                }
            });
        }
    }

    pub fn boundary_is_zero(&self) -> bool {
        let grid = self.grid;
        let mut ok = true;
        for a in 0..grid.dim() {
            let comp = &self.comps[a];
            for_each_index(grid.face_shape(a), |i, n| {
                if grid.is_boundary_face(a, i) && comp[n] != 0.0 {
                    ok = false;
                }
            });
        }
        ok
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute face component.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Volume-weighted inner product over faces. Interior faces carry the
    /// cell volume as weight; boundary faces hold zero so their weight is moot.
    pub fn dot(&self, other: &FaceField) -> f64 {
        let s: f64 = (0..self.grid.dim())
            .map(|a| {
                self.comps[a]
                    .iter()
                    .zip(&other.comps[a])
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
            })
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scale(&mut self, s: f64) {
        for c in self.comps.iter_mut() {
            c.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &FaceField) {
        for a in 0..self.grid.dim() {
            for (x, y) in self.comps[a].iter_mut().zip(&other.comps[a]) {
                *x += s * y;
            }
        }
    }

    /// Cell-centered magnitude from averaging the two faces of each cell.
    pub fn cell_speed(&self) -> ScalarField {
        let grid = self.grid;
        let mut out = ScalarField::zeros(&grid);
        let vals = out.values_mut();
        for a in 0..grid.dim() {
            let fs = grid.face_strides(a)[a];
            let comp = &self.comps[a];
            for_each_index(grid.cells(), |i, n| {
                let f = grid.face_index(a, i);
                let m = 0.5 * (comp[f] + comp[f + fs]);
                vals[n] += m * m;
            });
        }
        vals.iter_mut().for_each(|v| *v = v.sqrt());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(Grid::unit(1, 8), Err(GridError::Dimension(1)));
        assert!(matches!(
            Grid::new(&[1.0, 1.0], &[3, 8]),
            Err(GridError::TooFewCells { axis: 0, cells: 3 })
        ));
        assert!(matches!(
            Grid::new(&[1.0, -1.0], &[8, 8]),
            Err(GridError::Length { axis: 1, .. })
        ));
        assert!(matches!(
            Grid::new(&[1.0, 1.0, 1.0], &[1024, 1024, 256]),
            Err(GridError::TooLarge { .. })
        ));
        assert!(Grid::with_cell_limit(&[1.0, 1.0], &[8, 8], 63).is_err());
    }

    #[test]
    fn anisotropic_spacing() {
        let g = Grid::new(&[2.0, 1.0], &[8, 4]).unwrap();
        assert_eq!(g.spacing()[..2], [0.25, 0.25]);
        let g = Grid::new(&[2.0, 1.0, 3.0], &[4, 8, 6]).unwrap();
        assert_eq!(g.spacing(), [0.5, 0.125, 0.5]);
        assert!((g.domain_volume() - 6.0).abs() < 1e-15);
        assert!((g.cell_volume() * g.n_cells() as f64 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn face_constructor_pins_boundary() {
        let g = Grid::unit(2, 6).unwrap();
        let u = FaceField::from_fn(&g, |_, _| 1.0);
        assert!(u.boundary_is_zero());
        assert_eq!(u.comp(0).len(), 7 * 6);
    }
}
