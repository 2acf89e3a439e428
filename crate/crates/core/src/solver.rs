//! Linear solvers for the implicit sub-steps.
//!
//! Every implicit solve in the stepper is a preconditioned conjugate-gradient
//! iteration run to a relative residual. On a uniform box the discrete
//! Laplacians (Neumann for scalars and pressure, no-slip for each velocity
//! component) are separable, so their eigenvectors are tensor products of
//! 1D cosine/sine modes. [`SeparableInverse`] applies the exact inverse in
//! that basis and serves as the preconditioner; CG then only has to mop up
//! roundoff.

use crate::grid::Grid;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e}, target {tol:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("non-finite value encountered in linear solve")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Iteration cap `10 * N^(1/dim)` for a grid with `N` cells.
pub fn iteration_cap(grid: &Grid) -> usize {
    let n = grid.n_cells() as f64;
    (10.0 * n.powf(1.0 / grid.dim() as f64)).ceil() as usize
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite operator. `x` holds the initial guess on entry.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats, SolverError> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if !b_norm.is_finite() {
        return Err(SolverError::NonFinite);
    }
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64], ap: &mut [f64]| {
        apply(x, ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        dot(r, r).sqrt() / b_norm
    };
    let mut rel = residual(x, &mut r, &mut ap);
    let mut iterations = 0;
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    'restart: while rel > tol {
        precond(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        loop {
            if iterations >= max_iter {
                return Err(SolverError::NotConverged {
                    iterations,
                    residual: rel,
                    tol,
                });
            }
            iterations += 1;
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap.is_finite() && rz.is_finite()) {
                return Err(SolverError::NonFinite);
            }
            if pap <= 0.0 {
                // Search direction fell into the null space; restart from
                // the true residual.
                rel = residual(x, &mut r, &mut ap);
                if rel <= tol {
                    break 'restart;
                }
                continue 'restart;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rel_rec = dot(&r, &r).sqrt() / b_norm;
            if rel_rec <= tol {
                // Confirm against the true residual before accepting.
                rel = residual(x, &mut r, &mut ap);
                if rel <= tol {
                    break 'restart;
                }
                continue 'restart;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            rel = rel_rec;
        }
    }
    Ok(SolveStats {
        iterations,
        relative_residual: rel,
    })
}

/// Boundary treatment of one axis of a separable operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisKind {
    /// Cell-centered values with mirrored ghosts (zero normal derivative).
    NeumannCell,
    /// Cell-centered values with antisymmetric ghosts (zero at the wall).
    DirichletCell,
    /// Face values on the axis they are normal to; the two end faces are
    /// fixed at zero and excluded from the unknowns.
    DirichletNode,
}

#[derive(Clone, Debug)]
struct Basis1d {
    offset: usize,
    m: usize,
    /// Orthonormal eigenvectors, `q[j * m + k]` is entry `j` of mode `k`.
    q: Vec<f64>,
    eig: Vec<f64>,
}

impl Basis1d {
    fn new(kind: AxisKind, cells: usize, h: f64) -> Self {
        let n = cells as f64;
        let lam = |k: f64| (2.0 - 2.0 * (k * PI / n).cos()) / (h * h);
        let (offset, m, modes): (usize, usize, Vec<f64>) = match kind {
            AxisKind::NeumannCell => (0, cells, (0..cells).map(|k| k as f64).collect()),
            AxisKind::DirichletCell => (0, cells, (1..=cells).map(|k| k as f64).collect()),
            AxisKind::DirichletNode => (1, cells - 1, (1..cells).map(|k| k as f64).collect()),
        };
        let mut q = vec![0.0; m * m];
        for (kk, &k) in modes.iter().enumerate() {
            let mut col: Vec<f64> = (0..m)
                .map(|j| {
                    let j = j as f64;
                    match kind {
                        AxisKind::NeumannCell => (k * PI * (j + 0.5) / n).cos(),
                        AxisKind::DirichletCell => (k * PI * (j + 0.5) / n).sin(),
                        AxisKind::DirichletNode => (k * PI * (j + 1.0) / n).sin(),
                    }
                })
                .collect();
            let norm = dot(&col, &col).sqrt();
            col.iter_mut().for_each(|v| *v /= norm);
            for j in 0..m {
                q[j * m + kk] = col[j];
            }
        }
        let eig = modes.iter().map(|&k| lam(k)).collect();
        Basis1d { offset, m, q, eig }
    }
}

/// Exact inverse of `shift * I + scale * L` for a separable negative
/// Laplacian `L` on a box, via tensor-product eigenvectors.
#[derive(Clone, Debug)]
pub struct SeparableInverse {
    shape: [usize; 3],
    dim: usize,
    bases: Vec<Basis1d>,
    /// Sum of axis eigenvalues per storage entry (NaN on inactive entries).
    lambda: Vec<f64>,
}

impl SeparableInverse {
    /// `kinds[a]` describes axis `a`; `shape` is the storage shape (face
    /// arrays are one longer along their normal axis).
    pub fn new(grid: &Grid, shape: [usize; 3], kinds: &[AxisKind]) -> Self {
        let dim = grid.dim();
        let bases: Vec<Basis1d> = (0..dim)
            .map(|a| Basis1d::new(kinds[a], grid.cells()[a], grid.spacing()[a]))
            .collect();
        let mut lambda = vec![f64::NAN; shape.iter().product()];
        crate::grid::for_each_index(shape, |i, n| {
            let mut s = 0.0;
            for (a, b) in bases.iter().enumerate() {
                let p = i[a];
                if p < b.offset || p >= b.offset + b.m {
                    return;
                }
                s += b.eig[p - b.offset];
            }
            lambda[n] = s;
        });
        SeparableInverse {
            shape,
            dim,
            bases,
            lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Eigenvalue sum for each storage entry; NaN marks entries outside the
    /// unknowns (pinned boundary faces).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    fn transform(&self, data: &mut [f64], forward: bool) {
        let strides = [1, self.shape[0], self.shape[0] * self.shape[1]];
        let mut line = Vec::new();
        let mut outl = Vec::new();
        for a in 0..self.dim {
            let b = &self.bases[a];
            let m = b.m;
            line.resize(m, 0.0);
            outl.resize(m, 0.0);
            let mut other = self.shape;
            other[a] = 1;
            crate::grid::for_each_index(other, |i, _| {
                let base = i[0] * strides[0] + i[1] * strides[1] + i[2] * strides[2];
                for j in 0..m {
                    line[j] = data[base + (j + b.offset) * strides[a]];
                }
                if forward {
                    outl.iter_mut().for_each(|v| *v = 0.0);
                    for j in 0..m {
                        let x = line[j];
                        let row = &b.q[j * m..(j + 1) * m];
                        for k in 0..m {
                            outl[k] += row[k] * x;
                        }
                    }
                } else {
                    for j in 0..m {
                        let row = &b.q[j * m..(j + 1) * m];
                        outl[j] = dot(row, &line);
                    }
                }
                for j in 0..m {
                    data[base + (j + b.offset) * strides[a]] = outl[j];
                }
            });
        }
    }

    /// `out = (shift + scale * L)^-1 rhs`. Null modes (zero denominator) are
    /// mapped to zero, which fixes the mean-zero gauge for the pure Neumann
    /// Poisson problem. Inactive entries are written as zero.
    pub fn apply(&self, shift: f64, scale: f64, rhs: &[f64], out: &mut [f64]) {
        for (o, (&r, l)) in out.iter_mut().zip(rhs.iter().zip(&self.lambda)) {
            *o = if l.is_nan() { 0.0 } else { r };
        }
        self.transform(out, true);
        for (o, &l) in out.iter_mut().zip(&self.lambda) {
            if l.is_nan() {
                continue;
            }
            let d = shift + scale * l;
            *o = if d.abs() > 1e-300 { *o / d } else { 0.0 };
        }
        self.transform(out, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;
    use crate::ops::laplacian_neumann_into;

    #[test]
    fn separable_inverse_solves_neumann_helmholtz() {
        let g = Grid::new(&[1.0, 2.0], &[6, 9]).unwrap();
        let inv = SeparableInverse::new(&g, g.cells(), &[AxisKind::NeumannCell; 3]);
        let b = ScalarField::from_fn(&g, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let mut x = vec![0.0; g.n_cells()];
        let dt = 0.3;
        inv.apply(1.0, dt, b.values(), &mut x);
        let mut lap = vec![0.0; g.n_cells()];
        laplacian_neumann_into(&g, &x, &mut lap);
        for i in 0..x.len() {
            assert!((x[i] - dt * lap[i] - b.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn unpreconditioned_cg_converges() {
        let g = Grid::unit(2, 12).unwrap();
        let b = ScalarField::from_fn(&g, |x| x[0] * (1.0 - x[1]));
        let mut x = b.values().to_vec();
        let apply = |v: &[f64], o: &mut [f64]| {
            laplacian_neumann_into(&g, v, o);
            for i in 0..v.len() {
                o[i] = v[i] - 0.01 * o[i];
            }
        };
        let stats = pcg(apply, |r, z| z.copy_from_slice(r), b.values(), &mut x, 1e-12, iteration_cap(&g)).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        assert!(stats.iterations > 1);
    }

    #[test]
    fn cap_exceeded_is_error() {
        let g = Grid::unit(2, 16).unwrap();
        let b = ScalarField::from_fn(&g, |x| (x[0] - 0.5) * x[1]);
        let mut bb = b.values().to_vec();
        let mean = bb.iter().sum::<f64>() / bb.len() as f64;
        bb.iter_mut().for_each(|v| *v -= mean);
        let mut x = vec![0.0; bb.len()];
        let apply = |v: &[f64], o: &mut [f64]| {
            laplacian_neumann_into(&g, v, o);
            o.iter_mut().for_each(|w| *w = -*w);
        };
        let err = pcg(apply, |r, z| z.copy_from_slice(r), &bb, &mut x, 1e-12, 3).unwrap_err();
        assert!(matches!(err, SolverError::NotConverged { iterations: 3, .. }));
    }
}
