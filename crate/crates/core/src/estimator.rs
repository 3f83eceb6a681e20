//! Recursive least squares on the vectorized impulse response and the
//! weighted projection of its mean onto the point-estimate domain.

use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProgram, SocBlock, SolveStatus, SolverTolerances};
use crate::error::{check_dim, Error, Result};
use crate::plant::{ImpulseResponse, Regressor};
use crate::polytope::{init_fps, Polytope};
use crate::recovery::Fsps;

/// `diag(Φᵀ, …, Φᵀ)` with `n_outputs` blocks, so that `𝚽·vec(H) = HΦ` for
/// the row-major `vec`.
pub fn lift_regressor(regressor: &Regressor, n_outputs: usize) -> DMatrix<f64> {
    let len = regressor.len();
    let mut lifted = DMatrix::zeros(n_outputs, n_outputs * len);
    for j in 0..n_outputs {
        for i in 0..len {
            lifted[(j, j * len + i)] = regressor[i];
        }
    }
    lifted
}

/// Inverse of the row-major vectorization.
pub fn reshape_mean(mean: &DVector<f64>, n_outputs: usize, regressor_len: usize) -> Result<ImpulseResponse> {
    check_dim("vectorized mean", n_outputs * regressor_len, mean.len())?;
    Ok(ImpulseResponse::dense(DMatrix::from_row_slice(
        n_outputs,
        regressor_len,
        mean.as_slice(),
    )))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlsState {
    pub mean: DVector<f64>,
    /// Symmetric positive definite.
    pub covariance: DMatrix<f64>,
}

impl RlsState {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_dim("prior covariance", mean.len(), covariance.nrows())?;
        check_dim("prior covariance", mean.len(), covariance.ncols())?;
        if covariance.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument(
                "prior covariance must be positive definite".into(),
            ));
        }
        Ok(RlsState { mean, covariance })
    }

    /// One measurement update with Joseph-form covariance.
    pub fn update(&self, regressor: &Regressor, outputs: &DVector<f64>, noise_variance: &DMatrix<f64>) -> Result<RlsState> {
        let n_y = outputs.len();
        check_dim("RLS parameter", n_y * regressor.len(), self.mean.len())?;
        check_dim("RLS noise variance", n_y, noise_variance.nrows())?;
        if regressor.iter().all(|v| *v == 0.0) {
            return Ok(self.clone());
        }
        let lifted = lift_regressor(regressor, n_y);
        let p = &self.covariance;
        let p_lt = p * lifted.transpose();
        let innovation = &lifted * &p_lt + noise_variance;
        let inv = innovation
            .clone()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularInnovation)?;
        let gain = &p_lt * inv;
        let mean = &self.mean + &gain * (outputs - &lifted * &self.mean);
        let dim = self.mean.len();
        let i_kl = DMatrix::identity(dim, dim) - &gain * &lifted;
        let joseph = &i_kl * p * i_kl.transpose() + &gain * noise_variance * gain.transpose();
        let covariance = (&joseph + joseph.transpose()) * 0.5;
        Ok(RlsState { mean, covariance })
    }
}

/// How the sparse set enters the projection domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SparseSetShape {
    /// ℓ∞ outer box, keeping the domain polytopic.
    #[default]
    Box,
    /// Exact ℓ₂ balls, one per output row.
    Ball,
}

/// Set onto which the RLS mean is projected.
#[derive(Clone, Debug)]
pub struct PointEstimateDomain {
    pub fps: Polytope,
    /// Stacked `(lower, upper)` of the sparse set's outer box, if any.
    pub fsps_box: Option<(DVector<f64>, DVector<f64>)>,
    /// `fps` intersected with `fsps_box`.
    pub combined: Polytope,
    /// Per-row `(center, radius)` when the exact balls are used.
    pub balls: Vec<(DVector<f64>, f64)>,
}

impl PointEstimateDomain {
    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        if !self.combined.contains(point, tol) {
            return false;
        }
        let len = if self.balls.is_empty() { 0 } else { point.len() / self.balls.len() };
        self.balls.iter().enumerate().all(|(i, (c, r))| {
            (point.rows(i * len, len) - c).norm() <= r + tol
        })
    }

    fn soc_blocks(&self) -> Vec<SocBlock> {
        let dim = self.combined.dim();
        let len = if self.balls.is_empty() { 0 } else { dim / self.balls.len() };
        self.balls
            .iter()
            .enumerate()
            .map(|(i, (center, radius))| {
                let mut f_mat = DMatrix::zeros(len, dim);
                for k in 0..len {
                    f_mat[(k, i * len + k)] = 1.0;
                }
                SocBlock {
                    f_mat,
                    f_vec: -center,
                    c: DVector::zeros(dim),
                    d: *radius,
                }
            })
            .collect()
    }
}

/// `ℱ ∩ box(FSPS)` with the sparse set, `ℱ` alone without it.
pub fn point_estimate_domain(fps: &Polytope, fsps: Option<&Fsps>, shape: SparseSetShape) -> Result<PointEstimateDomain> {
    let domain = match fsps {
        None => PointEstimateDomain {
            fps: fps.clone(),
            fsps_box: None,
            combined: fps.clone(),
            balls: Vec::new(),
        },
        Some(fsps) => {
            check_dim("sparse set dimension", fps.dim(), fsps.n_outputs() * fsps.dim())?;
            let (lower, upper) = fsps.stacked_box();
            let boxed = init_fps(&lower, &upper)?;
            let combined = fps.with_rows(boxed.normals(), boxed.offsets())?;
            let balls = match shape {
                SparseSetShape::Box => Vec::new(),
                SparseSetShape::Ball => (0..fsps.n_outputs())
                    .map(|i| (fsps.centers.row(i).transpose(), fsps.radii[i]))
                    .collect(),
            };
            PointEstimateDomain {
                fps: fps.clone(),
                fsps_box: Some((lower, upper)),
                combined,
                balls,
            }
        }
    };
    // Feasibility check.
    let program = ConicProgram::new(domain.combined.dim()).with_inequalities(domain.combined.as_linear_rows());
    let program = domain.soc_blocks().into_iter().fold(program, ConicProgram::with_soc);
    let sol = conic::solve(&program, &SolverTolerances::default())?;
    match sol.status {
        SolveStatus::Optimal => Ok(domain),
        SolveStatus::Infeasible => Err(Error::EmptyDomain),
        status => Err(Error::SolverFailure {
            context: "checking the point-estimate domain",
            status,
        }),
    }
}

/// `argmin (X − μ)ᵀP⁻¹(X − μ)` over the domain; `μ` itself when inside.
pub fn project_mean(state: &RlsState, domain: &PointEstimateDomain, tol: &SolverTolerances) -> Result<DVector<f64>> {
    let mu = &state.mean;
    check_dim("projected mean", domain.combined.dim(), mu.len())?;
    if domain.contains(mu, 0.0) {
        return Ok(mu.clone());
    }
    let weight = state
        .covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalBreakdown("covariance lost positive definiteness".into()))?
        .inverse();
    let weight = (&weight + weight.transpose()) * 0.5;
    // Objective is scaled by 1/‖P⁻¹‖ to keep the KKT system well balanced.
    let scale = 1.0 / weight.amax().max(1e-300);
    let quad = &weight * (2.0 * scale);
    let lin = -(&weight * mu) * (2.0 * scale);
    let program = ConicProgram::new(mu.len())
        .with_quadratic_objective(quad)
        .with_linear_objective(lin)
        .with_inequalities(domain.combined.as_linear_rows());
    let program = domain.soc_blocks().into_iter().fold(program, ConicProgram::with_soc);
    let sol = conic::solve(&program, tol)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.primal),
        SolveStatus::Infeasible => Err(Error::EmptyDomain),
        status => Err(Error::SolverFailure {
            context: "projecting the parameter mean",
            status,
        }),
    }
}
