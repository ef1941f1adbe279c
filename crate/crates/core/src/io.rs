//! Canonical mesh JSON and convergence-table CSV.
//!
//! Mesh files are `{"boundary_faces":[..],"cells":[..],"dim":3,"vertices":[..]}`
//! with keys in sorted order, no whitespace, 0-based indices, and coordinates
//! printed like C's `%.17g`, so `write(read(write(m)))` equals `write(m)` byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, YoError};
use crate::fem::SimplicialMesh;

/// Formats `x` as C's `printf("%.17g", x)`.
pub fn fmt_g17(x: f64) -> String {
    const P: i32 = 17;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Canonical text of a mesh file.
pub fn mesh_to_string(mesh: &SimplicialMesh) -> String {
    fn ints<const K: usize>(out: &mut String, rows: &[[usize; K]]) {
        out.push('[');
        for (r, row) in rows.iter().enumerate() {
            if r > 0 {
                out.push(',');
            }
            out.push('[');
            for (k, i) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{i}").expect("write to string");
            }
            out.push(']');
        }
        out.push(']');
    }
    let mut out = String::with_capacity(64 * mesh.num_vertices() + 40 * mesh.cells().len());
    out.push_str("{\"boundary_faces\":");
    ints(&mut out, mesh.boundary_faces());
    out.push_str(",\"cells\":");
    ints(&mut out, mesh.cells());
    out.push_str(",\"dim\":3,\"vertices\":[");
    for (r, v) in mesh.vertices().iter().enumerate() {
        if r > 0 {
            out.push(',');
        }
        write!(out, "[{},{},{}]", fmt_g17(v[0]), fmt_g17(v[1]), fmt_g17(v[2])).expect("write to string");
    }
    out.push_str("]}\n");
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    dim: u32,
    vertices: Vec<[f64; 3]>,
    cells: Vec<[usize; 4]>,
    boundary_faces: Vec<[usize; 3]>,
}

/// Byte offset of a 1-based (line, column) position reported by the JSON parser.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Parses and validates mesh JSON. Syntax and schema errors carry the byte offset.
pub fn mesh_from_str(text: &str) -> Result<SimplicialMesh> {
    let file: MeshFile = serde_json::from_str(text).map_err(|e| YoError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.dim != 3 {
        return Err(YoError::Mesh(format!("only dim = 3 meshes are supported, got {}", file.dim)));
    }
    SimplicialMesh::new(file.vertices, file.cells, file.boundary_faces)
}

pub fn read_mesh(path: &Path) -> Result<SimplicialMesh> {
    mesh_from_str(&std::fs::read_to_string(path)?)
}

pub fn write_mesh(path: &Path, mesh: &SimplicialMesh) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

/// One row of a refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    pub e_value: f64,
    pub i_value: f64,
    pub mu_estimate: f64,
    pub sharp_constant: f64,
    pub relative_error: f64,
    /// `log(err_prev / err) / log(h_prev / h)` against the previous row.
    pub order_estimate: Option<f64>,
}

/// Builds rows from `(level, h, E, I, mu)` samples sorted by level, filling in
/// relative errors against `sharp` and observed orders.
pub fn convergence_rows(samples: &[(u32, f64, f64, f64, f64)], sharp: f64) -> Vec<ConvergenceRow> {
    let mut sorted = samples.to_vec();
    sorted.sort_by_key(|s| s.0);
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(sorted.len());
    for (level, h, e, i, mu) in sorted {
        let relative_error = (mu - sharp).abs() / sharp;
        let order_estimate = rows.last().and_then(|prev| {
            let o = (prev.relative_error / relative_error).ln() / (prev.h / h).ln();
            o.is_finite().then_some(o)
        });
        rows.push(ConvergenceRow {
            level,
            h,
            e_value: e,
            i_value: i,
            mu_estimate: mu,
            sharp_constant: sharp,
            relative_error,
            order_estimate,
        });
    }
    rows
}

pub const REPORT_HEADER: &str = "level,h,E_value,I_value,mu_estimate,sharp_constant,relative_error,order_estimate";

/// CSV text of the rows in the given order; header only when empty.
pub fn report_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.level,
            fmt_g17(r.h),
            fmt_g17(r.e_value),
            fmt_g17(r.i_value),
            fmt_g17(r.mu_estimate),
            fmt_g17(r.sharp_constant),
            fmt_g17(r.relative_error),
            r.order_estimate.map(fmt_g17).unwrap_or_default()
        )
        .expect("write to string");
    }
    out
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn emit_report(dir: &Path, stem: &str, rows: &[ConvergenceRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), report_csv(rows))?;
    let json = serde_json::to_string_pretty(rows).map_err(|e| YoError::Input(e.to_string()))?;
    std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_ball_mesh;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.10000000000000001"),
            (-2.5, "-2.5"),
            (1e-5, "1.0000000000000001e-05"),
            (0.0001, "0.0001"),
            (1e17, "1e+17"),
            (1e16, "10000000000000000"),
            (123456.789, "123456.789"),
            (0.707_106_781_186_547_5, "0.70710678118654746"),
            (1e300, "1.0000000000000001e+300"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g17(x), s, "{x:e}");
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn mesh_round_trip_is_canonical() {
        for level in 0..=2 {
            let m = build_ball_mesh(level).unwrap();
            let text = mesh_to_string(&m);
            let back = mesh_from_str(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(mesh_to_string(&back), text);
        }
    }

    #[test]
    fn parse_errors_name_offsets() {
        let text = mesh_to_string(&build_ball_mesh(0).unwrap());
        let broken = text.replacen("[[", "[[x", 1);
        match mesh_from_str(&broken) {
            Err(YoError::Parse { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
        let bad_index = text.replacen("\"cells\":[[", "\"cells\":[[70", 1);
        assert!(matches!(mesh_from_str(&bad_index), Err(YoError::Mesh(_))));
        let multi = "{\n  \"dim\": 3,\n  \"vertices\": tru\n}";
        match mesh_from_str(multi) {
            Err(YoError::Parse { offset, .. }) => assert!((29..=33).contains(&offset), "{offset}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_rows() {
        assert_eq!(report_csv(&[]), format!("{REPORT_HEADER}\n"));
        let rows = convergence_rows(&[(3, 0.5, 1.1, 1.1, 1.1), (2, 1.0, 1.4, 1.4, 1.4)], 1.0);
        assert_eq!(rows[0].level, 2);
        assert!(rows[0].order_estimate.is_none());
        assert!((rows[1].order_estimate.unwrap() - 2.0).abs() < 1e-12);
        let csv = report_csv(&rows[..1]);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.ends_with(",1,0.39999999999999991,\n"));
    }
}
