//! Run artifacts: the diagnostics CSV, the JSON summary and field snapshots.
//!
//! Snapshot files (`<field>_<index>.bin`) start with a text header ending in
//! a line `end`, followed by little-endian `f64` values with the first axis
//! varying fastest:
//!
//! ```text
//! chemoflow-snapshot 1
//! field n1
//! time 2.5
//! shape 64 64 1
//! lengths 1 1 1
//! end
//! ```
//!
//! Velocity components are written on their face grids (`u0`, `u1`, `u2`),
//! so their shape has one extra entry along their own axis.

use crate::diagnostics::DiagnosticsRecord;
use crate::grid::{Grid, ScalarField};
use crate::transport::State;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> io::Result<()> {
    let mut out = DiagnosticsRecord::csv_header();
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    fs::write(path, out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}

fn write_array(path: &Path, field: &str, t: f64, shape: [usize; 3], grid: &Grid, values: &[f64]) -> io::Result<()> {
    let l = grid.lengths();
    let mut header = String::new();
    writeln!(header, "chemoflow-snapshot 1").unwrap();
    writeln!(header, "field {field}").unwrap();
    writeln!(header, "time {t}").unwrap();
    writeln!(header, "shape {} {} {}", shape[0], shape[1], shape[2]).unwrap();
    writeln!(header, "lengths {} {} {}", l[0], l[1], l[2]).unwrap();
    writeln!(header, "end").unwrap();
    let mut buf = header.into_bytes();
    buf.reserve(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)
}

/// Write every field of `state` into `dir` with the given frame index.
pub fn write_snapshot(dir: &Path, index: usize, state: &State) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let grid = *state.grid();
    for (name, f) in [("n1", &state.n1), ("n2", &state.n2), ("c", &state.c), ("p", &state.p)] {
        write_array(&dir.join(format!("{name}_{index:05}.bin")), name, state.t, grid.cells(), &grid, f.values())?;
    }
    for a in 0..grid.dim() {
        let name = format!("u{a}");
        write_array(
            &dir.join(format!("{name}_{index:05}.bin")),
            &name,
            state.t,
            grid.face_shape(a),
            &grid,
            state.u.comp(a),
        )?;
    }
    Ok(())
}

/// A snapshot read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: String,
    pub time: f64,
    pub shape: [usize; 3],
    pub lengths: [f64; 3],
    pub values: Vec<f64>,
}

pub fn read_snapshot(path: &Path) -> io::Result<Snapshot> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {m}", path.display()));
    let marker = b"\nend\n";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing header terminator"))?;
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|_| bad("header is not UTF-8"))?;
    let mut snap = Snapshot {
        field: String::new(),
        time: 0.0,
        shape: [0; 3],
        lengths: [0.0; 3],
        values: Vec::new(),
    };
    for line in header.lines() {
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or("");
        let rest: Vec<&str> = it.collect();
        match key {
            "chemoflow-snapshot" => {}
            "field" => snap.field = rest.join(" "),
            "time" => snap.time = rest.first().and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad time"))?,
            "shape" | "lengths" if rest.len() == 3 => {
                for k in 0..3 {
                    if key == "shape" {
                        snap.shape[k] = rest[k].parse().map_err(|_| bad("bad shape"))?;
                    } else {
                        snap.lengths[k] = rest[k].parse().map_err(|_| bad("bad lengths"))?;
                    }
                }
            }
            _ => return Err(bad(&format!("unexpected header line `{line}`"))),
        }
    }
    let data = &bytes[pos + marker.len()..];
    let n: usize = snap.shape.iter().product();
    if data.len() != 8 * n {
        return Err(bad("payload size does not match shape"));
    }
    snap.values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(snap)
}

/// Legacy-VTK structured-points export of cell fields.
pub fn write_vtk(path: &Path, fields: &[(&str, &ScalarField)]) -> io::Result<()> {
    let Some((_, first)) = fields.first() else {
        return Ok(());
    };
    let grid = *first.grid();
    let c = grid.cells();
    let h = grid.spacing();
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0\nchemoflow\nASCII\nDATASET STRUCTURED_POINTS").unwrap();
    writeln!(s, "DIMENSIONS {} {} {}", c[0] + 1, c[1] + 1, c[2] + 1).unwrap();
    writeln!(s, "ORIGIN 0 0 0").unwrap();
    writeln!(s, "SPACING {} {} {}", h[0], h[1], if grid.dim() == 2 { 1.0 } else { h[2] }).unwrap();
    writeln!(s, "CELL_DATA {}", grid.n_cells()).unwrap();
    for (name, f) in fields {
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in f.values() {
            writeln!(s, "{v:e}").unwrap();
        }
    }
    fs::write(path, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FaceField;

    #[test]
    fn snapshot_round_trip() {
        let dir = std::env::temp_dir().join(format!("chemoflow-snap-{}", std::process::id()));
        let g = Grid::new(&[1.0, 2.0], &[4, 5]).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0] + 10.0 * x[1]);
        let state = State {
            t: 0.25,
            n1: f.clone(),
            n2: f.clone(),
            c: f.clone(),
            u: FaceField::from_fn(&g, |a, x| a as f64 + x[0]),
            p: f.clone(),
        };
        write_snapshot(&dir, 3, &state).unwrap();
        let s = read_snapshot(&dir.join("n1_00003.bin")).unwrap();
        assert_eq!((s.field.as_str(), s.time, s.shape), ("n1", 0.25, [4, 5, 1]));
        assert_eq!(s.values, f.values());
        let u1 = read_snapshot(&dir.join("u1_00003.bin")).unwrap();
        assert_eq!(u1.shape, [4, 6, 1]);
        assert_eq!(u1.values, state.u.comp(1));
        fs::remove_dir_all(&dir).unwrap();
    }
}
