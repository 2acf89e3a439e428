//! The discrete operators on a small staggered grid: summation by parts,
//! conservation, projection and Yosida smoothing.

use chemoflow::flow::{momentum_advection, project, yosida_apply, FlowSettings, PressureSolver, StokesOperator};
use chemoflow::grid::{FaceField, Grid, ScalarField};
use chemoflow::ops::{advect_upwind, divergence_faces, gradient_faces, integrate, laplacian_neumann};
use std::f64::consts::PI;

fn main() {
    let grid = Grid::new(&[1.0, 2.0], &[24, 48]).unwrap();
    let f = ScalarField::from_fn(&grid, |x| (PI * x[0]).cos() + x[1] * x[1]);
    let v = FaceField::from_fn(&grid, |a, x| if a == 0 { x[1].sin() } else { x[0] * x[1] });

    let lhs = gradient_faces(&f).dot(&v);
    let rhs = -f.dot(&divergence_faces(&v));
    println!("<grad f, v> = {lhs:.15}");
    println!("-<f, div v> = {rhs:.15}");

    println!("int lap f     = {:e}", integrate(&laplacian_neumann(&f)));
    println!("int div(f v)  = {:e}", integrate(&advect_upwind(&f, &v)));

    let settings = FlowSettings::default();
    let (w, _) = project(&PressureSolver::new(&grid), &v, &settings).unwrap();
    println!("max |div P v| = {:e}", divergence_faces(&w).max_abs());
    println!("<w, C(w) w>   = {:e}", w.dot(&momentum_advection(&w, &w)));

    let stokes = StokesOperator::new(&grid);
    for eps in [0.0, 1e-3, 1e-1] {
        let y = yosida_apply(&stokes, &w, eps, &settings).unwrap();
        println!("eps {eps:<6} |Y w|^2 / |w|^2 = {:.6}", y.norm_sq() / w.norm_sq());
    }
}
