//! Legacy ASCII VTK output (`UNSTRUCTURED_GRID`).
//!
//! Snapshots use the P2 node set with quadratic triangles (cell type 22),
//! whose node order (vertices, then midpoints of edges 01, 12, 20) is the
//! local order of the velocity space.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::fem_space::{FeField, SpaceKind};
use crate::mesh::{BoundaryTag, Mesh};
use crate::porous_media::PorosityField;
use crate::{Error, Result};

const VTK_LINE: u8 = 3;
const VTK_TRIANGLE: u8 = 5;
const VTK_QUADRATIC_TRIANGLE: u8 = 22;

fn header<W: Write>(out: &mut W, title: &str) -> std::io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.replace('\n', " "))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")
}

fn tag_code(tag: BoundaryTag) -> u8 {
    match tag {
        BoundaryTag::Gamma0 => 0,
        BoundaryTag::Gamma1 => 1,
        BoundaryTag::Gamma2 => 2,
    }
}

/// Writes the triangulation plus its boundary edges as line cells. Cell
/// data `boundary_tag` is -1 on triangles and 0/1/2 on edges.
pub fn write_mesh<W: Write>(mesh: &Mesh, out: &mut W) -> std::io::Result<()> {
    header(out, "mesh")?;
    writeln!(out, "POINTS {} double", mesh.n_vertices())?;
    for p in mesh.vertices() {
        writeln!(out, "{} {} 0", p.x, p.y)?;
    }
    let nt = mesh.n_triangles();
    let nb = mesh.boundary_edges().len();
    writeln!(out, "CELLS {} {}", nt + nb, 4 * nt + 3 * nb)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    for e in mesh.boundary_edges() {
        writeln!(out, "2 {} {}", e.vertices[0], e.vertices[1])?;
    }
    writeln!(out, "CELL_TYPES {}", nt + nb)?;
    for _ in 0..nt {
        writeln!(out, "{VTK_TRIANGLE}")?;
    }
    for _ in 0..nb {
        writeln!(out, "{VTK_LINE}")?;
    }
    writeln!(out, "CELL_DATA {}", nt + nb)?;
    writeln!(out, "SCALARS boundary_tag int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for _ in 0..nt {
        writeln!(out, "-1")?;
    }
    for e in mesh.boundary_edges() {
        writeln!(out, "{}", tag_code(e.tag))?;
    }
    Ok(())
}

/// Writes velocity, its magnitude, pressure and porosity on the P2 nodes.
/// The P1 pressure is extended to midpoints linearly.
pub fn write_snapshot<W: Write>(
    u: &FeField,
    p: &FeField,
    phi: &PorosityField,
    t: f64,
    out: &mut W,
) -> Result<()> {
    if u.kind() != SpaceKind::P2Vector || p.kind() != SpaceKind::P1Scalar {
        return Err(Error::InvalidInput("snapshot needs a P2 velocity and a P1 pressure".into()));
    }
    let space = u.space();
    if !std::sync::Arc::ptr_eq(space.mesh(), p.space().mesh()) {
        return Err(Error::InvalidInput("velocity and pressure live on different meshes".into()));
    }
    let mesh = space.mesh();
    let nodes = space.node_coords();
    let nv = mesh.n_vertices();
    let pressure: Vec<f64> = (0..nodes.len())
        .map(|i| {
            if i < nv {
                p.coefficients()[i]
            } else {
                let [a, b] = space.edges()[i - nv];
                0.5 * (p.coefficients()[a] + p.coefficients()[b])
            }
        })
        .collect();

    header(out, &format!("porous flow snapshot t={t}"))?;
    writeln!(out, "FIELD FieldData 1")?;
    writeln!(out, "TIME 1 1 double")?;
    writeln!(out, "{t}")?;
    writeln!(out, "POINTS {} double", nodes.len())?;
    for x in nodes {
        writeln!(out, "{} {} 0", x.x, x.y)?;
    }
    let nt = mesh.n_triangles();
    writeln!(out, "CELLS {} {}", nt, 7 * nt)?;
    for e in 0..nt {
        let n = space.element_nodes(e);
        writeln!(out, "6 {} {} {} {} {} {}", n[0], n[1], n[2], n[3], n[4], n[5])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "{VTK_QUADRATIC_TRIANGLE}")?;
    }
    writeln!(out, "POINT_DATA {}", nodes.len())?;
    writeln!(out, "VECTORS velocity double")?;
    for i in 0..nodes.len() {
        let v = u.node_vector(i);
        writeln!(out, "{} {} 0", v.x, v.y)?;
    }
    writeln!(out, "SCALARS velocity_magnitude double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for i in 0..nodes.len() {
        writeln!(out, "{}", u.node_vector(i).norm())?;
    }
    writeln!(out, "SCALARS pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in &pressure {
        writeln!(out, "{v}")?;
    }
    writeln!(out, "SCALARS porosity double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for x in nodes {
        writeln!(out, "{}", phi.value(x))?;
    }
    Ok(())
}

pub fn write_snapshot_file(path: &Path, u: &FeField, p: &FeField, phi: &PorosityField, t: f64) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_snapshot(u, p, phi, t, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_mesh_file(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_mesh(mesh, &mut out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::Arc;

    use super::*;
    use crate::fem_space::{interpolate_scalar, interpolate_vector, FeSpace};
    use crate::mesh::{all_dirichlet, generate_rect_mesh, Rect};
    use crate::porous_media::BuiltinPorosity;
    use crate::Vector;

    /// Minimal reader: section keyword -> following numeric tokens.
    fn sections(text: &str) -> HashMap<String, Vec<f64>> {
        let mut out: HashMap<String, Vec<f64>> = HashMap::new();
        let mut current = String::new();
        for line in text.lines().skip(4) {
            let first = line.split_whitespace().next().unwrap_or("");
            if first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                if first == "LOOKUP_TABLE" {
                    continue;
                }
                current = match first {
                    "SCALARS" | "VECTORS" => line.split_whitespace().nth(1).unwrap().to_string(),
                    _ => first.to_string(),
                };
                out.entry(current.clone()).or_default();
            } else {
                out.get_mut(&current)
                    .unwrap()
                    .extend(line.split_whitespace().map(|t| t.parse::<f64>().unwrap()));
            }
        }
        out
    }

    fn fields(n: usize) -> (Arc<FeSpace>, Arc<FeSpace>, PorosityField) {
        let mesh = Arc::new(generate_rect_mesh((0.0, 2.0), (0.0, 1.0), n, None, all_dirichlet).unwrap());
        let phi = PorosityField::new(Arc::new(BuiltinPorosity::two_layer()), Rect::new((0.0, 2.0), (0.0, 1.0)));
        (FeSpace::p2_vector(mesh.clone()), FeSpace::p1_scalar(mesh), phi)
    }

    #[test]
    fn zero_snapshot_is_all_zero() {
        let (v, q, phi) = fields(4);
        let u = FeField::zeros(v.clone());
        let p = FeField::zeros(q);
        let mut buf = Vec::new();
        write_snapshot(&u, &p, &phi, 0.0, &mut buf).unwrap();
        let s = sections(std::str::from_utf8(&buf).unwrap());
        let n = v.n_nodes();
        assert_eq!(s["POINTS"].len(), 3 * n);
        assert_eq!(s["CELL_TYPES"].len(), v.mesh().n_triangles());
        assert!(s["CELL_TYPES"].iter().all(|&c| c == 22.0));
        assert_eq!(s["velocity"].len(), 3 * n);
        for key in ["velocity", "velocity_magnitude", "pressure"] {
            assert!(s[key].iter().all(|&x| x == 0.0), "{key}");
        }
        assert_eq!(s["porosity"].len(), n);
    }

    #[test]
    fn magnitude_and_pressure_extension() {
        let (v, q, phi) = fields(3);
        let u = interpolate_vector(&v, |x| Vector::new(x.x - 0.3, 2.0 * x.y * x.x));
        let p = interpolate_scalar(&q, |x| 1.0 + x.x - 3.0 * x.y);
        let mut buf = Vec::new();
        write_snapshot(&u, &p, &phi, 1.5, &mut buf).unwrap();
        let s = sections(std::str::from_utf8(&buf).unwrap());
        let vel = &s["velocity"];
        for (i, m) in s["velocity_magnitude"].iter().enumerate() {
            assert!((m - vel[3 * i].hypot(vel[3 * i + 1])).abs() <= 1e-12);
        }
        // P1 pressure is linear, so midpoint values are exact
        for (i, x) in v.node_coords().iter().enumerate() {
            assert!((s["pressure"][i] - (1.0 + x.x - 3.0 * x.y)).abs() < 1e-12);
            assert_eq!(s["porosity"][i], phi.value(x));
        }
        assert_eq!(s["TIME"], vec![1.5]);
    }

    #[test]
    fn output_is_deterministic() {
        let (v, q, phi) = fields(3);
        let u = interpolate_vector(&v, |x| Vector::new(x.y.sin(), x.x.cos()));
        let p = interpolate_scalar(&q, |x| x.x * x.y);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_snapshot(&u, &p, &phi, 0.25, &mut a).unwrap();
        write_snapshot(&u, &p, &phi, 0.25, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mesh_export_counts() {
        let mesh = generate_rect_mesh((0.0, 1.0), (0.0, 1.0), 2, None, all_dirichlet).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let s = sections(std::str::from_utf8(&buf).unwrap());
        assert_eq!(s["POINTS"].len(), 27);
        assert_eq!(s["CELL_TYPES"].iter().filter(|&&c| c == 5.0).count(), 8);
        assert_eq!(s["CELL_TYPES"].iter().filter(|&&c| c == 3.0).count(), 8);
        assert_eq!(s["boundary_tag"].iter().filter(|&&c| c == 0.0).count(), 8);
    }

    #[test]
    fn rejects_mismatched_kinds() {
        let (v, q, phi) = fields(2);
        let u = FeField::zeros(v);
        let p = FeField::zeros(q);
        assert!(write_snapshot(&p, &u, &phi, 0.0, &mut Vec::new()).is_err());
    }
}
