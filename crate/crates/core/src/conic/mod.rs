//! Dense conic programs: a convex quadratic objective with linear
//! inequalities, linear equalities and second-order cone constraints.
//!
//! ```text
//! minimize    ½ xᵀPx + qᵀx + c₀
//! subject to  Gx ≤ h
//!             Ax = b
//!             ‖Fᵢx + fᵢ‖₂ ≤ cᵢᵀx + dᵢ      for every SOC block i
//! ```
//!
//! Every optimization in the crate (BPDN, the mean projection, support
//! functions, redundancy LPs and the MPC itself) is expressed as a
//! [`ConicProgram`] and handed to [`solve`].

mod cones;
mod dump;
mod ipm;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};

pub use dump::write_matrix_market;
pub use ipm::solve;

/// Rows of a linear system `M x (≤ | =) rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRows {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl LinearRows {
    pub fn empty(n: usize) -> Self {
        LinearRows {
            matrix: DMatrix::zeros(0, n),
            rhs: DVector::zeros(0),
        }
    }

    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        LinearRows { matrix, rhs }
    }

    /// Builds from `(row, rhs)` pairs. Every row must have length `n`.
    pub fn from_rows<'a, I>(n: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut data = Vec::new();
        let mut rhs = Vec::new();
        for (row, r) in rows {
            assert_eq!(row.len(), n, "row length");
            data.extend_from_slice(row);
            rhs.push(r);
        }
        let m = rhs.len();
        LinearRows {
            matrix: DMatrix::from_row_slice(m, n, &data),
            rhs: DVector::from_vec(rhs),
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

/// `‖F x + f‖₂ ≤ cᵀx + d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SocBlock {
    pub f_mat: DMatrix<f64>,
    pub f_vec: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl SocBlock {
    pub fn dim(&self) -> usize {
        self.f_mat.nrows() + 1
    }

    /// `(cᵀx + d) − ‖Fx + f‖₂`; nonnegative when satisfied.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        let t = self.c.dot(x) + self.d;
        let v = &self.f_mat * x + &self.f_vec;
        t - v.norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    pub objective_quadratic: DMatrix<f64>,
    pub objective_linear: DVector<f64>,
    /// Constant added to the reported objective; never affects the argmin.
    pub objective_constant: f64,
    pub inequalities: LinearRows,
    pub equalities: LinearRows,
    pub soc_blocks: Vec<SocBlock>,
}

impl ConicProgram {
    /// An unconstrained program with zero objective over `n` variables.
    pub fn new(n: usize) -> Self {
        ConicProgram {
            objective_quadratic: DMatrix::zeros(n, n),
            objective_linear: DVector::zeros(n),
            objective_constant: 0.0,
            inequalities: LinearRows::empty(n),
            equalities: LinearRows::empty(n),
            soc_blocks: Vec::new(),
        }
    }

    pub fn num_variables(&self) -> usize {
        self.objective_linear.len()
    }

    pub fn with_linear_objective(mut self, q: DVector<f64>) -> Self {
        self.objective_linear = q;
        self
    }

    pub fn with_quadratic_objective(mut self, p: DMatrix<f64>) -> Self {
        self.objective_quadratic = p;
        self
    }

    pub fn with_inequalities(mut self, rows: LinearRows) -> Self {
        self.inequalities = rows;
        self
    }

    pub fn with_equalities(mut self, rows: LinearRows) -> Self {
        self.equalities = rows;
        self
    }

    pub fn with_soc(mut self, block: SocBlock) -> Self {
        self.soc_blocks.push(block);
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.objective_quadratic * x))
            + self.objective_linear.dot(x)
            + self.objective_constant
    }

    /// Checks that every block agrees on the variable count and that the
    /// quadratic term is square and symmetric.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_variables();
        check_dim(
            "objective_quadratic rows",
            n,
            self.objective_quadratic.nrows(),
        )?;
        check_dim(
            "objective_quadratic cols",
            n,
            self.objective_quadratic.ncols(),
        )?;
        check_dim("inequality cols", n, self.inequalities.matrix.ncols())?;
        check_dim(
            "inequality rhs",
            self.inequalities.matrix.nrows(),
            self.inequalities.rhs.len(),
        )?;
        check_dim("equality cols", n, self.equalities.matrix.ncols())?;
        check_dim(
            "equality rhs",
            self.equalities.matrix.nrows(),
            self.equalities.rhs.len(),
        )?;
        for block in &self.soc_blocks {
            check_dim("soc F cols", n, block.f_mat.ncols())?;
            check_dim("soc f", block.f_mat.nrows(), block.f_vec.len())?;
            check_dim("soc c", n, block.c.len())?;
        }
        let p = &self.objective_quadratic;
        let scale = p.amax().max(1.0);
        if (p - p.transpose()).amax() > 1e-12 * scale {
            return Err(crate::error::Error::InvalidArgument(
                "objective_quadratic is not symmetric".into(),
            ));
        }
        Ok(())
    }

    /// Rewrites the quadratic objective into an epigraph variable and one
    /// rotated-cone SOC block. The new last variable is the epigraph `t`
    /// with `½ xᵀPx ≤ t`; the first `n` entries of the solution are the
    /// original variables.
    pub fn epigraph_form(&self) -> ConicProgram {
        let n = self.num_variables();
        let factor = psd_factor(&self.objective_quadratic);
        let k = factor.ncols();
        let pad = |m: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(m.nrows(), n + 1);
            out.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
            out
        };

        let mut linear = DVector::zeros(n + 1);
        linear.rows_mut(0, n).copy_from(&self.objective_linear);
        linear[n] = 1.0;

        let mut out = ConicProgram::new(n + 1).with_linear_objective(linear);
        out.objective_constant = self.objective_constant;
        out.inequalities = LinearRows::new(
            pad(&self.inequalities.matrix),
            self.inequalities.rhs.clone(),
        );
        out.equalities = LinearRows::new(pad(&self.equalities.matrix), self.equalities.rhs.clone());
        for block in &self.soc_blocks {
            let mut c = DVector::zeros(n + 1);
            c.rows_mut(0, n).copy_from(&block.c);
            out.soc_blocks.push(SocBlock {
                f_mat: pad(&block.f_mat),
                f_vec: block.f_vec.clone(),
                c,
                d: block.d,
            });
        }

        if k > 0 {
            // ½‖Lᵀx‖² ≤ t  ⇔  ‖(Lᵀx, t − ½)‖ ≤ t + ½
            let mut f_mat = DMatrix::zeros(k + 1, n + 1);
            f_mat
                .view_mut((0, 0), (k, n))
                .copy_from(&factor.transpose());
            f_mat[(k, n)] = 1.0;
            let mut f_vec = DVector::zeros(k + 1);
            f_vec[k] = -0.5;
            let mut c = DVector::zeros(n + 1);
            c[n] = 1.0;
            out.soc_blocks.push(SocBlock {
                f_mat,
                f_vec,
                c,
                d: 0.5,
            });
        } else {
            // No curvature: t only needs a floor to stay bounded.
            let m = out.inequalities.len();
            let mut g = out.inequalities.matrix.clone().insert_row(m, 0.0);
            g[(m, n)] = -1.0;
            let h = out.inequalities.rhs.clone().push(0.0);
            out.inequalities = LinearRows::new(g, h);
        }
        out
    }
}

/// `L` with `P = L Lᵀ`, dropping numerically zero eigen-directions.
pub(crate) fn psd_factor(p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    if n == 0 || p.amax() == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let eig = p.clone().symmetric_eigen();
    let cutoff = 1e-12 * eig.eigenvalues.amax().max(1.0);
    let cols: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > cutoff)
        .map(|(i, &l)| eig.eigenvectors.column(i) * l.sqrt())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverTolerances {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: SolveStatus,
    pub primal: DVector<f64>,
    /// Multipliers of the linear inequalities (nonnegative at optimum).
    pub dual_inequalities: DVector<f64>,
    pub dual_equalities: DVector<f64>,
    pub objective_value: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Worst violation of each constraint class at a candidate point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualReport {
    pub linear_inequality: f64,
    pub linear_equality: f64,
    pub soc: f64,
    pub tol: f64,
}

impl ResidualReport {
    pub fn max_violation(&self) -> f64 {
        self.linear_inequality
            .max(self.linear_equality)
            .max(self.soc)
    }

    pub fn passes(&self) -> bool {
        self.max_violation() <= self.tol
    }
}

/// Independent feasibility check of `candidate` against `program`; it
/// shares no code with the solver.
pub fn verify(
    program: &ConicProgram,
    candidate: &DVector<f64>,
    tol: f64,
) -> Result<ResidualReport> {
    program.validate()?;
    check_dim("verify candidate", program.num_variables(), candidate.len())?;

    let ineq = &program.inequalities;
    let linear_inequality = (0..ineq.len())
        .map(|i| ineq.matrix.row(i).dot(&candidate.transpose()) - ineq.rhs[i])
        .fold(0.0_f64, f64::max);

    let eq = &program.equalities;
    let linear_equality = (0..eq.len())
        .map(|i| (eq.matrix.row(i).dot(&candidate.transpose()) - eq.rhs[i]).abs())
        .fold(0.0_f64, f64::max);

    let soc = program
        .soc_blocks
        .iter()
        .map(|b| -b.slack(candidate))
        .fold(0.0_f64, f64::max);

    Ok(ResidualReport {
        linear_inequality,
        linear_equality,
        soc,
        tol,
    })
}
