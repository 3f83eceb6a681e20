//! Plain-text dump of a [`ConicProgram`] for offline inspection.
//!
//! Each block is written as a Matrix Market `coordinate real general`
//! section preceded by a `%% block <name>` marker, so the file can be split
//! and loaded with any Matrix Market reader.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::ConicProgram;

fn write_matrix<W: Write>(out: &mut W, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    writeln!(out, "%% block {name}")?;
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), nnz)?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}

fn write_vector<W: Write>(out: &mut W, name: &str, v: &DVector<f64>) -> std::io::Result<()> {
    let as_matrix = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix(out, name, &as_matrix)
}

pub fn write_matrix_market<W: Write>(program: &ConicProgram, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "% conic program dump: n = {}", program.num_variables())?;
    writeln!(out, "% objective constant {:e}", program.objective_constant)?;
    write_matrix(out, "P", &program.objective_quadratic)?;
    write_vector(out, "q", &program.objective_linear)?;
    write_matrix(out, "G", &program.inequalities.matrix)?;
    write_vector(out, "h", &program.inequalities.rhs)?;
    write_matrix(out, "A", &program.equalities.matrix)?;
    write_vector(out, "b", &program.equalities.rhs)?;
    for (i, block) in program.soc_blocks.iter().enumerate() {
        write_matrix(out, &format!("soc{i}.F"), &block.f_mat)?;
        write_vector(out, &format!("soc{i}.f"), &block.f_vec)?;
        write_vector(out, &format!("soc{i}.c"), &block.c)?;
        writeln!(out, "%% block soc{i}.d {:e}", block.d)?;
    }
    Ok(())
}
