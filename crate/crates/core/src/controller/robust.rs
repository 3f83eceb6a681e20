//! Robust counterparts of `E·H·Φ(k) + κ·√(Φ̄ᵀΓΦ̄) ≤ p` for all `H ∈ ℱ`.

use nalgebra::{DMatrix, DVector};

use super::{MpcProblem, Robustification};
use crate::conic::{ConicProgram, LinearRows, SocBlock};
use crate::error::Result;
use crate::polytope::DEFAULT_VERTEX_DIM_LIMIT;

/// Rows to append to a program whose first variables are the reduced
/// decision vector, followed by `extra_variables` auxiliaries.
#[derive(Clone, Debug)]
pub struct RobustRows {
    pub extra_variables: usize,
    pub inequalities: Vec<(DVector<f64>, f64)>,
    pub equalities: Vec<(DVector<f64>, f64)>,
    pub socs: Vec<SocBlock>,
}

impl RobustRows {
    fn new(extra_variables: usize) -> Self {
        RobustRows {
            extra_variables,
            inequalities: Vec::new(),
            equalities: Vec::new(),
            socs: Vec::new(),
        }
    }

    /// Appends the rows to `base`, which must already carry the auxiliaries.
    pub fn apply(self, mut base: ConicProgram) -> ConicProgram {
        let n = base.num_variables();
        base.inequalities = stack(&base.inequalities, &self.inequalities, n);
        base.equalities = stack(&base.equalities, &self.equalities, n);
        base.soc_blocks.extend(self.socs);
        base
    }
}

fn stack(existing: &LinearRows, rows: &[(DVector<f64>, f64)], n: usize) -> LinearRows {
    let total = existing.len() + rows.len();
    let mut matrix = DMatrix::zeros(total, n);
    let mut rhs = DVector::zeros(total);
    matrix.rows_mut(0, existing.len()).copy_from(&existing.matrix);
    rhs.rows_mut(0, existing.len()).copy_from(&existing.rhs);
    for (i, (row, r)) in rows.iter().enumerate() {
        matrix.row_mut(existing.len() + i).copy_from(&row.transpose());
        rhs[existing.len() + i] = *r;
    }
    LinearRows::new(matrix, rhs)
}

/// `c_k(v) = Eᵀ ⊗ Φ(k)` as `(offset, gain)` so that `E·H·Φ(k) = vec(H)ᵀc_k`.
fn direction_affine(problem: &MpcProblem, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let (off, gain) = problem.map.regressor_affine(k);
    let e = &problem.config.output_row;
    let len = off.len();
    let n_v = gain.ncols();
    let mut c0 = DVector::zeros(e.len() * len);
    let mut c1 = DMatrix::zeros(e.len() * len, n_v);
    for (j, &ej) in e.iter().enumerate() {
        c0.rows_mut(j * len, len).copy_from(&(off * ej));
        c1.rows_mut(j * len, len).copy_from(&(gain * ej));
    }
    (c0, c1)
}

pub(super) fn direction(problem: &MpcProblem, k: usize, decision: &DVector<f64>) -> DVector<f64> {
    let (c0, c1) = direction_affine(problem, k);
    c0 + c1 * decision
}

/// `κ·√(Φ̄ᵀΓΦ̄)` when it is a constant.
fn constant_tightening(problem: &MpcProblem) -> Option<f64> {
    problem
        .gamma
        .constant_std()
        .map(|s| problem.config.tightening_factor() * s)
}

/// `‖κ·Lᵀ·Φ̄(k)‖ ≤ cᵀx + d` with `Φ̄(k)` affine in the decision vector.
fn tightening_cone(problem: &MpcProblem, k: usize, n: usize, c: DVector<f64>, d: f64) -> SocBlock {
    let kappa = problem.config.tightening_factor();
    let lt = problem.gamma.factor().transpose() * kappa;
    let (off, gain) = problem.map.regressor_affine(k);
    let len = off.len();
    let mut bar_gain = DMatrix::zeros(len + 2, n);
    bar_gain.view_mut((0, 0), (len, gain.ncols())).copy_from(gain);
    let mut bar_off = DVector::from_element(len + 2, 1.0);
    bar_off.rows_mut(0, len).copy_from(off);
    SocBlock {
        f_mat: &lt * bar_gain,
        f_vec: &lt * bar_off,
        c,
        d,
    }
}

/// Worst case of the tightened output at step `k` and the maximizing model.
pub(super) fn worst_case(problem: &MpcProblem, k: usize, decision: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let support = problem.fps.support(&direction(problem, k, decision))?;
    let phi = problem.map.regressor(k, decision);
    let spread = problem.config.tightening_factor() * problem.gamma.std_at(&phi);
    Ok((support.value + spread, support.maximizer))
}

/// `fᵀc_k(v) + κ·√(Φ̄ᵀΓΦ̄) ≤ p` for every listed `(k, f)`.
pub(super) fn cut_rows(problem: &MpcProblem, cuts: &[(usize, DVector<f64>)]) -> RobustRows {
    let n_v = problem.map.n_decision();
    let p = problem.config.output_limit;
    let tight = constant_tightening(problem);
    let mut rows = RobustRows::new(0);
    for (k, f) in cuts {
        let (c0, c1) = direction_affine(problem, *k);
        let row = c1.transpose() * f;
        let offset = f.dot(&c0);
        match tight {
            Some(t) => rows.inequalities.push((row, p - offset - t)),
            None => rows.socs.push(tightening_cone(problem, *k, n_v, -row, p - offset)),
        }
    }
    rows
}

pub(super) fn vertex_rows(problem: &MpcProblem) -> Result<RobustRows> {
    let vertices = problem
        .fps
        .enumerate_vertices(DEFAULT_VERTEX_DIM_LIMIT, 1e-9)?;
    let cuts: Vec<(usize, DVector<f64>)> = (1..=problem.map.horizon())
        .flat_map(|k| vertices.iter().map(move |f| (k, f.clone())))
        .collect();
    Ok(cut_rows(problem, &cuts))
}

/// Per step `k`: `λ_k ≥ 0`, `A_pᵀλ_k = c_k(v)`, `b_pᵀλ_k + κ·√(Φ̄ᵀΓΦ̄) ≤ p`.
pub(super) fn dual_rows(problem: &MpcProblem) -> RobustRows {
    let n_v = problem.map.n_decision();
    let r = problem.fps.len();
    let horizon = problem.map.horizon();
    let n = n_v + horizon * r;
    let a = problem.fps.normals();
    let b = problem.fps.offsets();
    let p = problem.config.output_limit;
    let tight = constant_tightening(problem);
    let mut rows = RobustRows::new(horizon * r);
    for k in 1..=horizon {
        let slot = n_v + (k - 1) * r;
        let (c0, c1) = direction_affine(problem, k);
        for i in 0..a.ncols() {
            let mut row = DVector::zeros(n);
            row.rows_mut(slot, r).copy_from(&a.column(i));
            for j in 0..n_v {
                row[j] = -c1[(i, j)];
            }
            rows.equalities.push((row, c0[i]));
        }
        for i in 0..r {
            let mut row = DVector::zeros(n);
            row[slot + i] = -1.0;
            rows.inequalities.push((row, 0.0));
        }
        let mut budget = DVector::zeros(n);
        budget.rows_mut(slot, r).copy_from(b);
        match tight {
            Some(t) => rows.inequalities.push((budget, p - t)),
            None => rows.socs.push(tightening_cone(problem, k, n, -budget, p)),
        }
    }
    rows
}

/// Robust output rows of the given mode for `problem`. Constraint
/// generation has no static rows and yields the dual form.
pub fn robust_output_rows(problem: &MpcProblem, mode: Robustification) -> Result<RobustRows> {
    match mode {
        Robustification::VertexEnumeration => vertex_rows(problem),
        _ => Ok(dual_rows(problem)),
    }
}
