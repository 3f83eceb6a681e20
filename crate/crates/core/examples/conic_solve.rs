//! Projection of a point onto the intersection of a disc and a halfplane,
//! solved as a second-order cone program.

use nalgebra::{DMatrix, DVector};

use sparse_ampc::conic::{solve, verify, ConicProgram, LinearRows, SocBlock, SolverTolerances};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target = DVector::from_row_slice(&[2.0, 1.0]);
    // ‖x − target‖² = xᵀx − 2·targetᵀx + const, in the ½xᵀPx + qᵀx form.
    let program = ConicProgram::new(2)
        .with_quadratic_objective(DMatrix::identity(2, 2) * 2.0)
        .with_linear_objective(&target * -2.0)
        .with_inequalities(LinearRows::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.2),
        ))
        .with_soc(SocBlock {
            f_mat: DMatrix::identity(2, 2),
            f_vec: DVector::zeros(2),
            c: DVector::zeros(2),
            d: 1.0,
        });
    let tol = SolverTolerances::default();
    let sol = solve(&program, &tol)?;
    println!("status      {:?} after {} iterations", sol.status, sol.iterations);
    println!("minimizer   [{:.6}, {:.6}]", sol.primal[0], sol.primal[1]);
    println!("norm        {:.6}", sol.primal.norm());
    println!("x1 + x2     {:.6}", sol.primal.sum());
    println!("multiplier  {:.6}", sol.dual_inequalities[0]);
    let report = verify(&program, &sol.primal, 1e-7)?;
    println!("worst constraint violation {:.2e}", report.max_violation());
    Ok(())
}
