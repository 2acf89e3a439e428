//! Discrete differential operators on the staggered box grid.
//!
//! All operators are conservative: the cell-sum of a divergence vanishes to
//! roundoff because boundary faces carry zero flux.

use crate::grid::{for_each_index, FaceField, Grid, ScalarField, VelocityField};

/// Two-point difference across each interior face; boundary faces are 0.
pub fn gradient_faces(f: &ScalarField) -> FaceField {
    let grid = *f.grid();
    let mut out = FaceField::zeros(&grid);
    let vals = f.values();
    let cs = grid.strides();
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let n_a = grid.cells()[a];
        let comp = out.comp_mut(a);
        for_each_index(grid.face_shape(a), |i, n| {
            let p = i[a];
            if p > 0 && p < n_a {
                let hi = grid.index(i);
                comp[n] = (vals[hi] - vals[hi - cs[a]]) * inv_h;
            }
        });
    }
    out
}

/// Net face flux per cell divided by cell volume.
pub fn divergence_faces(g: &FaceField) -> ScalarField {
    let grid = *g.grid();
    let mut out = ScalarField::zeros(&grid);
    let vals = out.values_mut();
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let fs = grid.face_strides(a)[a];
        let comp = g.comp(a);
        for_each_index(grid.cells(), |i, n| {
            let f = grid.face_index(a, i);
            vals[n] += (comp[f + fs] - comp[f]) * inv_h;
        });
    }
    out
}

/// Homogeneous-Neumann Laplacian: the `2*dim+1` point stencil with mirrored
/// ghost cells. Identical to `divergence_faces(gradient_faces(f))`.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let mut out = ScalarField::zeros(&grid);
    laplacian_neumann_into(&grid, f.values(), out.values_mut());
    out
}

/// Slice form of [`laplacian_neumann`], used inside the iterative solvers.
pub fn laplacian_neumann_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let cs = grid.strides();
    let cells = grid.cells();
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let s = cs[a];
        let n_a = cells[a];
        for_each_index(cells, |i, n| {
            let p = i[a];
            let mut acc = 0.0;
            if p + 1 < n_a {
                acc += (f[n + s] - f[n]) * inv_h;
            }
            if p > 0 {
                acc -= (f[n] - f[n - s]) * inv_h;
            }
            out[n] += acc * inv_h;
        });
    }
}

/// Flux-form donor-cell transport `div(u f)`. For discretely solenoidal `u`
/// this approximates `u . grad f`. Callers subtract `dt * advect_upwind` to
/// advance `f_t + u . grad f = 0`.
pub fn advect_upwind(f: &ScalarField, u: &VelocityField) -> ScalarField {
    let grid = *f.grid();
    let vals = f.values();
    let cs = grid.strides();
    let mut flux = FaceField::zeros(&grid);
    for a in 0..grid.dim() {
        let n_a = grid.cells()[a];
        let vel = u.comp(a);
        let fl = flux.comp_mut(a);
        for_each_index(grid.face_shape(a), |i, n| {
            let p = i[a];
            if p > 0 && p < n_a {
                let hi = grid.index(i);
                let w = vel[n];
                fl[n] = if w > 0.0 {
                    w * vals[hi - cs[a]]
                } else {
                    w * vals[hi]
                };
            }
        });
    }
    divergence_faces(&flux)
}

/// Midpoint quadrature over the box.
pub fn integrate(f: &ScalarField) -> f64 {
    f.sum() * f.grid().cell_volume()
}

/// Cell average of `|g|^2` for a face field: per axis, the mean of the two
/// squared face values bounding the cell.
pub fn face_sq_to_cells(g: &FaceField) -> ScalarField {
    let grid = *g.grid();
    let mut out = ScalarField::zeros(&grid);
    let vals = out.values_mut();
    for a in 0..grid.dim() {
        let fs = grid.face_strides(a)[a];
        let comp = g.comp(a);
        for_each_index(grid.cells(), |i, n| {
            let f = grid.face_index(a, i);
            vals[n] += 0.5 * (comp[f] * comp[f] + comp[f + fs] * comp[f + fs]);
        });
    }
    out
}

/// Largest outflow rate `sum(outgoing face speed) / h` over all cells. A
/// donor-cell update with `dt * rate <= 1` keeps every cell coefficient
/// nonnegative, hence preserves positivity.
pub fn max_outflow_rate(u: &FaceField) -> f64 {
    let grid = *u.grid();
    let mut rate = vec![0.0; grid.n_cells()];
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let fs = grid.face_strides(a)[a];
        let comp = u.comp(a);
        for_each_index(grid.cells(), |i, n| {
            let f = grid.face_index(a, i);
            rate[n] += (comp[f + fs].max(0.0) + (-comp[f]).max(0.0)) * inv_h;
        });
    }
    rate.into_iter().fold(0.0, f64::max)
}
