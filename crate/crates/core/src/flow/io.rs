//! Plain-text container for [`FlowField`].
//!
//! ```text
//! # nlk-flowfield v1
//! grid_nx,grid_ny,num_cells,l1,l2
//! <nx>,<ny>,<N>,<l1>,<l2>
//! [face_velocity_x] <nx+1> <ny>
//! <one comma-separated row per x index>
//! [face_velocity_y] <nx> <ny+1>
//! ...
//! [head] <nx> <ny>
//! ...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read
//! cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::{FlowField, Grid};
use crate::error::{Error, Result};

const MAGIC: &str = "# nlk-flowfield v1";

pub fn write_flow_field(flow: &FlowField, path: &Path) -> Result<()> {
    std::fs::write(path, encode(flow)).map_err(|e| Error::io(path, e))
}

pub fn read_flow_field(path: &Path) -> Result<FlowField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text)
}

pub(crate) fn encode(flow: &FlowField) -> String {
    let g = &flow.grid;
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "grid_nx,grid_ny,num_cells,l1,l2").unwrap();
    writeln!(out, "{},{},{},{},{}", g.nx, g.ny, g.num_cells, g.cell_width, g.layer_height).unwrap();
    for (name, a) in [
        ("face_velocity_x", &flow.face_velocity_x),
        ("face_velocity_y", &flow.face_velocity_y),
        ("head", &flow.head),
    ] {
        writeln!(out, "[{name}] {} {}", a.nrows(), a.ncols()).unwrap();
        for row in a.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
                first = false;
            }
            out.push('\n');
        }
    }
    out
}

pub(crate) fn decode(text: &str) -> Result<FlowField> {
    let mut lines = text.lines();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::format(format!("flow field truncated before {what}")))
    };
    if next("magic")?.trim() != MAGIC {
        return Err(Error::format("not an nlk flow field (bad magic line)"));
    }
    next("header names")?;
    let header: Vec<&str> = next("header")?.split(',').collect();
    if header.len() != 5 {
        return Err(Error::format("flow field header must have 5 fields"));
    }
    let parse_usize = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|e| Error::format(format!("bad integer {s:?}: {e}")))
    };
    let parse_f64 = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::format(format!("bad number {s:?}: {e}")))
    };
    let grid = Grid {
        nx: parse_usize(header[0])?,
        ny: parse_usize(header[1])?,
        num_cells: parse_usize(header[2])?,
        cell_width: parse_f64(header[3])?,
        layer_height: parse_f64(header[4])?,
    };
    if grid.nx == 0 || grid.ny == 0 || grid.num_cells == 0 {
        return Err(Error::format("flow field grid dimensions must be positive"));
    }

    let mut read_block = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
        let title = next(name)?;
        let expected = format!("[{name}] {rows} {cols}");
        if title.trim() != expected {
            return Err(Error::format(format!("expected block header {expected:?}, found {title:?}")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line = next(name)?;
            let before = data.len();
            for field in line.split(',') {
                data.push(parse_f64(field)?);
            }
            if data.len() - before != cols {
                return Err(Error::format(format!("{name} row {r} has {} values, expected {cols}", data.len() - before)));
            }
        }
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::format(e.to_string()))
    };
    let face_velocity_x = read_block("face_velocity_x", grid.nx + 1, grid.ny)?;
    let face_velocity_y = read_block("face_velocity_y", grid.nx, grid.ny + 1)?;
    let head = read_block("head", grid.nx, grid.ny)?;
    Ok(FlowField {
        grid,
        face_velocity_x,
        face_velocity_y,
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{build_conductivity, solve_darcy, MediumSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = MediumSpec {
            num_cells: 2,
            ..MediumSpec::reference()
        };
        let k = build_conductivity(&spec, 16, 6).unwrap();
        let flow = solve_darcy(&k, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.txt");
        write_flow_field(&flow, &path).unwrap();
        let back = read_flow_field(&path).unwrap();
        assert_eq!(back, flow);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(decode("hello"), Err(Error::Format(_))));
        let spec = MediumSpec {
            num_cells: 1,
            ..MediumSpec::reference()
        };
        let k = build_conductivity(&spec, 4, 3).unwrap();
        let flow = solve_darcy(&k, &spec).unwrap();
        let text = encode(&flow);
        let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(matches!(decode(&truncated), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let err = read_flow_field(Path::new("/nonexistent/flow.txt")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}
