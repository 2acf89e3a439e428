#![allow(dead_code)]

use chemoflow::grid::{FaceField, Grid, ScalarField};

pub fn lcg(seed: u64) -> impl FnMut() -> f64 {
    let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    move || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    }
}

pub fn random_cells(grid: &Grid, seed: u64, lo: f64, hi: f64) -> ScalarField {
    let mut r = lcg(seed);
    ScalarField::from_fn(grid, |_| lo + (hi - lo) * r())
}

pub fn random_faces(grid: &Grid, seed: u64) -> FaceField {
    let mut r = lcg(seed);
    FaceField::from_fn(grid, |_, _| r() - 0.5)
}

pub fn grid_of(dim: usize, cells: &[usize], lengths: &[f64]) -> Grid {
    Grid::new(&lengths[..dim], &cells[..dim]).unwrap()
}
