//! Legacy ASCII VTK output of quad meshes.

use std::io::{self, Write};

use super::mesh::{ElementKind, Mesh};

/// Named nodal or cell field
pub enum VtkField<'a> {
    Scalar(&'a str, &'a [f64]),
    /// In-plane vectors, written with a zero third component
    Vector(&'a str, &'a [[f64; 2]]),
}

fn write_field<W: Write>(w: &mut W, field: &VtkField) -> io::Result<()> {
    match field {
        VtkField::Scalar(name, v) => {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for x in v.iter() {
                writeln!(w, "{x:.12e}")?;
            }
        }
        VtkField::Vector(name, v) => {
            writeln!(w, "VECTORS {name} double")?;
            for x in v.iter() {
                writeln!(w, "{:.12e} {:.12e} 0", x[0], x[1])?;
            }
        }
    }
    Ok(())
}

/// Writes an unstructured grid with point and cell data. The output depends
/// only on the arguments, so repeated runs give identical bytes.
pub fn write_vtk<W: Write>(w: &mut W, title: &str, mesh: &Mesh, point_data: &[VtkField], cell_data: &[VtkField]) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for p in &mesh.nodes {
        writeln!(w, "{:.12e} {:.12e} 0", p[0], p[1])?;
    }
    let npe = mesh.kind.nodes_per_element();
    writeln!(w, "CELLS {} {}", mesh.n_elements(), mesh.n_elements() * (npe + 1))?;
    for conn in &mesh.elements {
        let ids: Vec<String> = conn.iter().map(|n| n.to_string()).collect();
        writeln!(w, "{npe} {}", ids.join(" "))?;
    }
    let cell_type = match mesh.kind {
        ElementKind::Line2 => 3,
        ElementKind::Quad4 => 9,
    };
    writeln!(w, "CELL_TYPES {}", mesh.n_elements())?;
    for _ in 0..mesh.n_elements() {
        writeln!(w, "{cell_type}")?;
    }
    if !point_data.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
        for f in point_data {
            write_field(w, f)?;
        }
    }
    if !cell_data.is_empty() {
        writeln!(w, "CELL_DATA {}", mesh.n_elements())?;
        for f in cell_data {
            write_field(w, f)?;
        }
    }
    Ok(())
}
