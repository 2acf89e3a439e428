//! Writes diagnostics, binary snapshots and a VTK file for a short run.
//!
//! cargo run --release --example snapshots [out_dir]

use chemoflow::harness::output::{read_snapshot, write_vtk};
use chemoflow::harness::stabilize::Case;
use chemoflow::harness::{run_scenario, RunOptions};
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/snapshots-example".into()));
    let cfg = Case::Coexistence
        .config(&["grid.cells=[32,32]".into(), "run.t_end=1".into(), "run.output_every=0.25".into()])
        .unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.clone()),
        snapshots: true,
        keep_frames: true,
        quiet: true,
    };
    let out = run_scenario(&cfg, &opts).unwrap();
    let last = out.frames.last().unwrap();
    write_vtk(&dir.join("final.vtk"), &[("n1", &last.n1), ("n2", &last.n2), ("c", &last.c)]).unwrap();
    let snap = read_snapshot(&dir.join("snapshots/n1_00004.bin")).unwrap();
    println!("{} at t = {}: shape {:?}, max {:.6}", snap.field, snap.time, snap.shape, snap.values.iter().copied().fold(f64::MIN, f64::max));
    println!("wrote {}", dir.display());
}
