//! File output: probe series, snapshots and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::lattice::Lattice;
use crate::Vec2;

/// One probe sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub t: f64,
    pub u: Vec2,
}

pub const PROBE_HEADER: &str = "t,ux,uy";

pub fn write_probe_series(series: &[ProbeSample], path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{PROBE_HEADER}")?;
    for s in series {
        // `{:e}` prints the shortest representation that parses back exactly.
        writeln!(w, "{:e},{:e},{:e}", s.t, s.u[0], s.u[1])?;
    }
    w.flush()
}

pub fn read_probe_series(path: &Path) -> io::Result<Vec<ProbeSample>> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize| io::Error::new(io::ErrorKind::InvalidData, format!("{}: bad line {line}", path.display()));
    let mut lines = text.lines();
    if lines.next() != Some(PROBE_HEADER) {
        return Err(bad(1));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad(n + 2))?;
        if v.len() != 3 {
            return Err(bad(n + 2));
        }
        out.push(ProbeSample { t: v[0], u: [v[1], v[2]] });
    }
    Ok(out)
}

/// Nodal fields of one snapshot. Values at Outside nodes are ignored.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotFields<'a> {
    pub t: f64,
    pub u: &'a [Vec2],
    pub phi: &'a [f64],
    pub psi: &'a [f64],
    /// Consistency error, absent for the reference solver.
    pub error: Option<&'a [f64]>,
}

fn masked(lattice: &Lattice, k: usize, v: f64) -> f64 {
    if lattice.is_material(k) {
        v
    } else {
        0.0
    }
}

/// Legacy VTK structured-points file.
pub fn write_vtk(fields: &SnapshotFields, lattice: &Lattice, path: &Path) -> io::Result<()> {
    let n = lattice.len();
    let h = lattice.spacing();
    let mut s = String::with_capacity(n * 64);
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "elastolbm snapshot t={}", fields.t);
    let _ = writeln!(s, "ASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", lattice.nx(), lattice.ny());
    let _ = writeln!(s, "ORIGIN 0 0 0\nSPACING {h:e} {h:e} 1");
    let _ = writeln!(s, "POINT_DATA {n}");
    let _ = writeln!(s, "SCALARS material int 1\nLOOKUP_TABLE default");
    for k in 0..n {
        let _ = writeln!(s, "{}", lattice.is_material(k) as u8);
    }
    let mut scalars: Vec<(&str, &[f64])> = vec![("phi", fields.phi), ("psi", fields.psi)];
    if let Some(e) = fields.error {
        scalars.push(("e", e));
    }
    for (name, values) in scalars {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for (k, v) in values.iter().enumerate() {
            let _ = writeln!(s, "{:e}", masked(lattice, k, *v));
        }
    }
    let _ = writeln!(s, "VECTORS u double");
    for (k, u) in fields.u.iter().enumerate() {
        let _ = writeln!(s, "{:e} {:e} 0", masked(lattice, k, u[0]), masked(lattice, k, u[1]));
    }
    fs::write(path, s)
}

/// Plain CSV grid, one row per material node.
pub fn write_csv_grid(fields: &SnapshotFields, lattice: &Lattice, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "i,j,x,y,ux,uy,phi,psi")?;
    writeln!(w, "{}", if fields.error.is_some() { ",e" } else { "" })?;
    for k in lattice.material_nodes() {
        let (i, j) = lattice.coords(k);
        let [x, y] = lattice.position(k);
        write!(
            w,
            "{i},{j},{x:e},{y:e},{:e},{:e},{:e},{:e}",
            fields.u[k][0], fields.u[k][1], fields.phi[k], fields.psi[k]
        )?;
        match fields.error {
            Some(e) => writeln!(w, ",{:e}", e[k])?,
            None => writeln!(w)?,
        }
    }
    w.flush()
}

/// Writes `<stem>.vtk` and `<stem>.csv`.
pub fn write_snapshot(fields: &SnapshotFields, lattice: &Lattice, stem: &Path) -> io::Result<()> {
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        std::path::PathBuf::from(s)
    };
    write_vtk(fields, lattice, &with(".vtk"))?;
    write_csv_grid(fields, lattice, &with(".csv"))
}
