//! H-representation polytopes for set-membership identification.
//!
//! The parameter is the row-major vectorized impulse response. The first
//! `2·dim` rows of every polytope built by [`init_fps`] are the prior box
//! (`+eᵢ` then `−eᵢ` per coordinate); measurement cuts follow in arrival
//! order.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProgram, LinearRows, SolveStatus, SolverTolerances};
use crate::error::{check_dim, Error, Result};
use crate::plant::Regressor;

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;
pub const DEFAULT_ROW_CAP: usize = 120;
pub const DEFAULT_VERTEX_DIM_LIMIT: usize = 6;

/// Slack above which an LP-certified bound counts as strict.
const REDUNDANCY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
    box_rows: usize,
}

/// Bookkeeping of one pruning pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PruneReport {
    pub removed: usize,
    /// Cuts folded into the bounding box because the cap was still exceeded.
    pub merged: usize,
}

/// Result of one support-function LP.
#[derive(Clone, Debug)]
pub struct Support {
    pub value: f64,
    pub maximizer: DVector<f64>,
    /// `λ ≥ 0` with `Aᵀλ = direction` and `bᵀλ = value` at optimum.
    pub multipliers: DVector<f64>,
}

/// Axis-aligned prior set `lower ≤ h ≤ upper`.
pub fn init_fps(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<Polytope> {
    check_dim("box bounds", lower.len(), upper.len())?;
    for i in 0..lower.len() {
        if !(lower[i] <= upper[i]) {
            return Err(Error::InvalidBounds {
                index: i,
                lower: lower[i],
                upper: upper[i],
            });
        }
    }
    let dim = lower.len();
    let mut normals = DMatrix::zeros(2 * dim, dim);
    let mut offsets = DVector::zeros(2 * dim);
    for i in 0..dim {
        normals[(2 * i, i)] = 1.0;
        offsets[2 * i] = upper[i];
        normals[(2 * i + 1, i)] = -1.0;
        offsets[2 * i + 1] = -lower[i];
    }
    Ok(Polytope {
        normals,
        offsets,
        box_rows: 2 * dim,
    })
}

impl Polytope {
    /// A polytope from raw rows; none of them is treated as prior box.
    pub fn from_rows(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        check_dim("polytope offsets", normals.nrows(), offsets.len())?;
        Ok(Polytope {
            normals,
            offsets,
            box_rows: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn len(&self) -> usize {
        self.normals.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    /// Number of leading prior-box rows.
    pub fn box_rows(&self) -> usize {
        self.box_rows
    }

    pub fn as_linear_rows(&self) -> LinearRows {
        LinearRows::new(self.normals.clone(), self.offsets.clone())
    }

    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        point.len() == self.dim()
            && (&self.normals * point - &self.offsets)
                .iter()
                .all(|&r| r <= tol)
    }

    /// Appends rows, skipping exact zero normals with a satisfied offset.
    pub fn with_rows(&self, normals: &DMatrix<f64>, offsets: &DVector<f64>) -> Result<Polytope> {
        check_dim("appended normals", self.dim(), normals.ncols())?;
        check_dim("appended offsets", normals.nrows(), offsets.len())?;
        let keep: Vec<usize> = (0..normals.nrows())
            .filter(|&i| normals.row(i).iter().any(|v| *v != 0.0) || offsets[i] < 0.0)
            .collect();
        let total = self.len() + keep.len();
        let mut a = DMatrix::zeros(total, self.dim());
        let mut b = DVector::zeros(total);
        a.rows_mut(0, self.len()).copy_from(&self.normals);
        b.rows_mut(0, self.len()).copy_from(&self.offsets);
        for (r, &i) in keep.iter().enumerate() {
            a.set_row(self.len() + r, &normals.row(i));
            b[self.len() + r] = offsets[i];
        }
        Ok(Polytope {
            normals: a,
            offsets: b,
            box_rows: self.box_rows,
        })
    }

    fn keep_rows(&self, keep: &[usize]) -> Polytope {
        let mut a = DMatrix::zeros(keep.len(), self.dim());
        let mut b = DVector::zeros(keep.len());
        for (r, &i) in keep.iter().enumerate() {
            a.set_row(r, &self.normals.row(i));
            b[r] = self.offsets[i];
        }
        let box_rows = keep.iter().filter(|&&i| i < self.box_rows).count();
        Polytope {
            normals: a,
            offsets: b,
            box_rows,
        }
    }

    /// `max directionᵀh` over the polytope.
    pub fn support(&self, direction: &DVector<f64>) -> Result<Support> {
        check_dim("support direction", self.dim(), direction.len())?;
        let program = ConicProgram::new(self.dim())
            .with_linear_objective(-direction)
            .with_inequalities(self.as_linear_rows());
        let sol = conic::solve(&program, &SolverTolerances::default())?;
        match sol.status {
            SolveStatus::Optimal => Ok(Support {
                value: -sol.objective_value,
                maximizer: sol.primal,
                multipliers: sol.dual_inequalities,
            }),
            SolveStatus::Unbounded => Err(Error::UnboundedDirection),
            SolveStatus::Infeasible => Err(Error::EmptyDomain),
            status => Err(Error::SolverFailure {
                context: "evaluating a support function",
                status,
            }),
        }
    }

    pub fn support_function(&self, direction: &DVector<f64>) -> Result<f64> {
        if direction.iter().all(|d| *d == 0.0) {
            check_dim("support direction", self.dim(), direction.len())?;
            return Ok(0.0);
        }
        Ok(self.support(direction)?.value)
    }

    /// Whether row `i` is implied by the remaining rows in `active`.
    fn row_is_redundant(&self, i: usize, active: &[usize]) -> Result<bool> {
        let others: Vec<usize> = active.iter().copied().filter(|&j| j != i).collect();
        let rest = self.keep_rows(&others);
        match rest.support(&self.normals.row(i).transpose()) {
            Ok(s) => Ok(s.value <= self.offsets[i] + REDUNDANCY_TOL * (1.0 + self.offsets[i].abs())),
            Err(Error::UnboundedDirection) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Removes LP-certified redundant rows among `candidates`, oldest first.
    /// Prior-box rows are never removed.
    pub fn prune_rows(&self, candidates: &[usize]) -> Result<(Polytope, usize)> {
        let mut active: Vec<usize> = (0..self.len()).collect();
        let mut removed = 0;
        for &i in candidates {
            if i < self.box_rows || i >= self.len() {
                continue;
            }
            if self.row_is_redundant(i, &active)? {
                active.retain(|&j| j != i);
                removed += 1;
            }
        }
        Ok((self.keep_rows(&active), removed))
    }

    /// Componentwise bounding box of the polytope.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let dim = self.dim();
        let mut lower = DVector::zeros(dim);
        let mut upper = DVector::zeros(dim);
        for i in 0..dim {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            upper[i] = self.support(&e)?.value;
            e[i] = -1.0;
            lower[i] = -self.support(&e)?.value;
        }
        Ok((lower, upper))
    }

    /// All vertices; a small-dimension oracle.
    pub fn enumerate_vertices(&self, dim_limit: usize, tol: f64) -> Result<Vec<DVector<f64>>> {
        let dim = self.dim();
        if dim > dim_limit {
            return Err(Error::DimensionTooLarge {
                dim,
                limit: dim_limit,
            });
        }
        let mut vertices: Vec<DVector<f64>> = Vec::new();
        for rows in (0..self.len()).combinations(dim) {
            let a = DMatrix::from_fn(dim, dim, |r, c| self.normals[(rows[r], c)]);
            let b = DVector::from_fn(dim, |r, _| self.offsets[rows[r]]);
            let lu = a.lu();
            if lu.determinant().abs() < 1e-12 {
                continue;
            }
            let Some(x) = lu.solve(&b) else { continue };
            if self.contains(&x, tol) && !vertices.iter().any(|v| (v - &x).amax() <= tol.max(1e-9)) {
                vertices.push(x);
            }
        }
        Ok(vertices)
    }
}

/// Two halfspaces per output: `±(eⱼ ⊗ Φ)ᵀh ≤ ±yⱼ + w̄ⱼ`.
pub fn add_measurement_cut(
    fps: &Polytope,
    regressor: &Regressor,
    outputs: &DVector<f64>,
    noise_bounds: &DVector<f64>,
) -> Result<Polytope> {
    let n_y = outputs.len();
    check_dim("cut noise bounds", n_y, noise_bounds.len())?;
    check_dim("cut parameter", n_y * regressor.len(), fps.dim())?;
    let len = regressor.len();
    let mut normals = DMatrix::zeros(2 * n_y, fps.dim());
    let mut offsets = DVector::zeros(2 * n_y);
    for j in 0..n_y {
        for i in 0..len {
            normals[(2 * j, j * len + i)] = regressor[i];
            normals[(2 * j + 1, j * len + i)] = -regressor[i];
        }
        offsets[2 * j] = outputs[j] + noise_bounds[j];
        offsets[2 * j + 1] = -outputs[j] + noise_bounds[j];
    }
    fps.with_rows(&normals, &offsets)
}

/// Exact LP redundancy removal over all cut rows, then, if more than `cap`
/// rows remain, the prior box is tightened to the current bounding box and
/// the oldest cuts are dropped. The second stage can only enlarge the set.
pub fn prune_redundant(fps: &Polytope, cap: usize) -> Result<(Polytope, PruneReport)> {
    if cap < 2 * fps.dim() {
        return Err(Error::InvalidArgument(format!(
            "row cap {cap} is below the 2·dim = {} box rows",
            2 * fps.dim()
        )));
    }
    let candidates: Vec<usize> = (fps.box_rows()..fps.len()).collect();
    let (pruned, removed) = fps.prune_rows(&candidates)?;
    if pruned.len() <= cap {
        return Ok((pruned, PruneReport { removed, merged: 0 }));
    }
    let (lower, upper) = pruned.bounding_box()?;
    let boxed = init_fps(&lower, &upper)?;
    let excess = pruned.len() - cap;
    let cuts_kept = (pruned.box_rows()..pruned.len()).skip(excess);
    let a = DMatrix::from_fn(cuts_kept.len(), fps.dim(), |r, c| {
        pruned.normals[(pruned.box_rows() + excess + r, c)]
    });
    let b = DVector::from_iterator(cuts_kept.len(), cuts_kept.map(|i| pruned.offsets[i]));
    let merged = boxed.with_rows(&a, &b)?;
    Ok((
        merged,
        PruneReport {
            removed,
            merged: excess,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(dim: usize) -> Polytope {
        init_fps(&DVector::from_element(dim, -1.0), &DVector::from_element(dim, 1.0)).unwrap()
    }

    #[test]
    fn support_of_box_is_l1_norm() {
        let p = unit_box(3);
        let c = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
        assert!((p.support_function(&c).unwrap() - 3.5).abs() < 1e-7);
    }

    #[test]
    fn merging_keeps_cap_and_contents() {
        let mut p = unit_box(2);
        let pts = [DVector::from_row_slice(&[0.1, 0.2]), DVector::from_row_slice(&[-0.3, 0.4])];
        for k in 0..6 {
            let angle = k as f64;
            let n = DMatrix::from_row_slice(1, 2, &[angle.cos(), angle.sin()]);
            p = p
                .with_rows(&n, &DVector::from_element(1, 0.9))
                .unwrap();
        }
        let (q, report) = prune_redundant(&p, 6).unwrap();
        assert!(q.len() <= 6);
        assert!(report.merged > 0 || report.removed > 0);
        for x in &pts {
            assert!(p.contains(x, 1e-9));
            assert!(q.contains(x, 1e-9));
        }
    }
}
