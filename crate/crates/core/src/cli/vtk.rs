//! Legacy ASCII VTK unstructured grid output of nodal fields.

use std::fmt::Write as _;
use std::path::Path;

use crate::newton::NewtonReport;
use crate::{Error, Mesh, Result};

const VTK_TRIANGLE: u32 = 5;

/// Parsed contents of a file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u32>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Serializes triangle mesh point data. Values use shortest round-trip
/// scientific notation so that [`read_vtk`] recovers them exactly.
pub fn vtk_string(mesh: &Mesh, title: &str, scalars: &[(&str, &[f64])]) -> Result<String> {
    let np = mesh.num_nodes();
    let nt = mesh.triangles().len();
    for (name, values) in scalars {
        if values.len() != np {
            return Err(Error::InvalidArgument(format!(
                "field {name} has {} values, mesh has {np} nodes",
                values.len()
            )));
        }
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid field name {name:?}")));
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{}", title.lines().next().unwrap_or(""));
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {np} double");
    for p in mesh.nodes() {
        let _ = writeln!(out, "{:e} {:e} 0", p[0], p[1]);
    }
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(out, "{VTK_TRIANGLE}");
    }
    let _ = writeln!(out, "POINT_DATA {np}");
    for (name, values) in scalars {
        let _ = writeln!(out, "SCALARS {name} double 1");
        let _ = writeln!(out, "LOOKUP_TABLE default");
        for v in values.iter() {
            let _ = writeln!(out, "{v:e}");
        }
    }
    Ok(out)
}

pub fn write_vtk(path: &Path, mesh: &Mesh, title: &str, scalars: &[(&str, &[f64])]) -> Result<()> {
    std::fs::write(path, vtk_string(mesh, title, scalars)?)?;
    Ok(())
}

/// Writes `y_D`, the final `ỹ`, the final `u` and the multiplier (zero on the
/// boundary) of a Newton run.
pub fn export_fields(report: &NewtonReport, desired: &[f64], mesh: &Mesh, path: &Path) -> Result<()> {
    let lambda = mesh.extend_interior(report.final_lambda());
    write_vtk(
        path,
        mesh,
        "obstacle control fields",
        &[
            ("y_D", desired),
            ("y_tilde", report.final_y_tilde()),
            ("u", report.final_u()),
            ("lambda", &lambda),
        ],
    )
}

struct Tokens<'a> {
    inner: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.inner
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("unexpected end of file, expected {what}")))
    }

    fn expect(&mut self, keyword: &str) -> Result<()> {
        let tok = self.next(keyword)?;
        if tok != keyword {
            return Err(Error::InvalidInput(format!("expected {keyword}, found {tok}")));
        }
        Ok(())
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.next(what)?;
        tok.parse()
            .map_err(|_| Error::InvalidInput(format!("cannot parse {what} from {tok:?}")))
    }
}

pub fn parse_vtk(text: &str) -> Result<VtkData> {
    let mut lines = text.splitn(3, '\n');
    let version = lines.next().unwrap_or("");
    if !version.starts_with("# vtk DataFile") {
        return Err(Error::InvalidInput("missing VTK header".into()));
    }
    let title = lines.next().unwrap_or("").trim_end_matches('\r').to_string();
    let mut tok = Tokens {
        inner: lines.next().unwrap_or("").split_whitespace(),
    };
    tok.expect("ASCII")?;
    tok.expect("DATASET")?;
    tok.expect("UNSTRUCTURED_GRID")?;
    tok.expect("POINTS")?;
    let np: usize = tok.parse("point count")?;
    tok.next("point type")?;
    let mut points = Vec::with_capacity(np);
    for _ in 0..np {
        points.push([tok.parse("x")?, tok.parse("y")?, tok.parse("z")?]);
    }
    tok.expect("CELLS")?;
    let nc: usize = tok.parse("cell count")?;
    let _size: usize = tok.parse("cell list size")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let k: usize = tok.parse("cell size")?;
        let mut cell = Vec::with_capacity(k);
        for _ in 0..k {
            let v: usize = tok.parse("cell vertex")?;
            if v >= np {
                return Err(Error::InvalidInput(format!("cell vertex {v} out of range")));
            }
            cell.push(v);
        }
        cells.push(cell);
    }
    tok.expect("CELL_TYPES")?;
    let nt: usize = tok.parse("cell type count")?;
    let mut cell_types = Vec::with_capacity(nt);
    for _ in 0..nt {
        cell_types.push(tok.parse("cell type")?);
    }
    let mut scalars = Vec::new();
    if let Some(keyword) = tok.inner.next() {
        if keyword != "POINT_DATA" {
            return Err(Error::InvalidInput(format!("expected POINT_DATA, found {keyword}")));
        }
        let count: usize = tok.parse("point data count")?;
        if count != np {
            return Err(Error::InvalidInput("point data count differs from point count".into()));
        }
        while let Some(keyword) = tok.inner.next() {
            if keyword != "SCALARS" {
                return Err(Error::InvalidInput(format!("expected SCALARS, found {keyword}")));
            }
            let name = tok.next("scalar name")?.to_string();
            tok.next("scalar type")?;
            tok.next("component count")?;
            tok.expect("LOOKUP_TABLE")?;
            tok.next("lookup table name")?;
            let mut values = Vec::with_capacity(np);
            for _ in 0..np {
                values.push(tok.parse("scalar value")?);
            }
            scalars.push((name, values));
        }
    }
    Ok(VtkData {
        title,
        points,
        cells,
        cell_types,
        scalars,
    })
}

pub fn read_vtk(path: &Path) -> Result<VtkData> {
    parse_vtk(&std::fs::read_to_string(path)?)
}
