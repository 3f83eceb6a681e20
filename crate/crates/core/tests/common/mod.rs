//! Independent oracles shared by the integration tests and the acceptance
//! suite. None of them calls the conic solver.

#![allow(dead_code)]

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use sparse_ampc::conic::{self, SolverTolerances};
use sparse_ampc::controller::{build_gamma, AppendedCovariance, MpcConfig, MpcProblem, Robustification};
use sparse_ampc::plant::{ImpulseResponse, ShiftOperators};
use sparse_ampc::polytope::{init_fps, Polytope};

/// Vertices of `{x : Ax ≤ b}` by solving every `dim × dim` subsystem.
pub fn brute_force_vertices(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Vec<DVector<f64>> {
    let dim = a.ncols();
    let mut vertices: Vec<DVector<f64>> = Vec::new();
    for rows in (0..a.nrows()).combinations(dim) {
        let sub = DMatrix::from_fn(dim, dim, |i, j| a[(rows[i], j)]);
        let rhs = DVector::from_fn(dim, |i, _| b[rows[i]]);
        let Some(x) = sub.lu().solve(&rhs) else { continue };
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        let feasible = (0..a.nrows()).all(|i| a.row(i).transpose().dot(&x) <= b[i] + tol);
        if feasible && !vertices.iter().any(|v| (v - &x).norm() < 1e-7) {
            vertices.push(x);
        }
    }
    vertices
}

/// `max_v cᵀv` over explicit vertices.
pub fn vertex_max(vertices: &[DVector<f64>], c: &DVector<f64>) -> f64 {
    vertices.iter().map(|v| c.dot(v)).fold(f64::NEG_INFINITY, f64::max)
}

/// Sparsest exact solution of `Ax = y` among supports of size ≤ `max_support`,
/// ties broken by smaller ℓ₁ norm.
pub fn brute_force_sparse(a: &DMatrix<f64>, y: &DVector<f64>, max_support: usize) -> Option<DVector<f64>> {
    let dim = a.ncols();
    let mut best: Option<DVector<f64>> = None;
    for size in 0..=max_support {
        for support in (0..dim).combinations(size) {
            let sub = DMatrix::from_fn(a.nrows(), size, |i, j| a[(i, support[j])]);
            let coef = if size == 0 {
                DVector::zeros(0)
            } else {
                let normal = sub.transpose() * &sub;
                normal.cholesky()?.solve(&(sub.transpose() * y))
            };
            let residual = (&sub * &coef - y).norm();
            if residual <= 1e-9 * y.norm().max(1.0) {
                let mut x = DVector::zeros(dim);
                for (k, &i) in support.iter().enumerate() {
                    x[i] = coef[k];
                }
                if best.as_ref().is_none_or(|b| x.lp_norm(1) < b.lp_norm(1)) {
                    best = Some(x);
                }
            }
        }
        if best.is_some() {
            return best;
        }
    }
    best
}

/// Regularized batch least squares:
/// `(P₀⁻¹ + Σ ΦᵢΦᵢᵀ/σ²)⁻¹ (P₀⁻¹μ₀ + Σ Φᵢyᵢ/σ²)` for scalar outputs.
pub fn batch_least_squares(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    regressors: &[DVector<f64>],
    outputs: &[f64],
    noise_var: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let info0 = prior_cov.clone().try_inverse().expect("invertible prior");
    let mut info = info0.clone();
    let mut vec = &info0 * prior_mean;
    for (phi, y) in regressors.iter().zip(outputs) {
        info += phi * phi.transpose() / noise_var;
        vec += phi * (*y / noise_var);
    }
    let cov = info.try_inverse().expect("invertible information");
    (&cov * vec, cov)
}

/// Box `[-half, half]^dim` cut by `cuts` random halfspaces that keep
/// `anchor` strictly inside.
pub fn random_polytope<R: Rng>(rng: &mut R, dim: usize, half: f64, cuts: usize) -> (Polytope, DVector<f64>) {
    let anchor = DVector::from_fn(dim, |_, _| rng.random_range(-0.5 * half..0.5 * half));
    let base = init_fps(&DVector::from_element(dim, -half), &DVector::from_element(dim, half)).unwrap();
    let normals = DMatrix::from_fn(cuts, dim, |_, _| rng.random_range(-1.0..1.0));
    let offsets = DVector::from_fn(cuts, |i, _| {
        normals.row(i).transpose().dot(&anchor) + rng.random_range(0.05..0.5)
    });
    (base.with_rows(&normals, &offsets).unwrap(), anchor)
}

/// Small single-output MPC instance with parameter dimension `memory`.
pub struct MpcInstance {
    pub config: MpcConfig,
    pub ops: ShiftOperators,
    pub mean: ImpulseResponse,
    pub fps: Polytope,
    pub gamma: AppendedCovariance,
    pub regressor: DVector<f64>,
    pub output: DVector<f64>,
}

pub fn random_mpc_instance<R: Rng>(rng: &mut R, memory: usize, general_gamma: bool) -> MpcInstance {
    let ops = ShiftOperators::new(1, memory).unwrap();
    let cuts = rng.random_range(1..4);
    let (fps, anchor) = random_polytope(rng, memory, 2.0, cuts);
    let mean = ImpulseResponse::dense(DMatrix::from_row_slice(1, memory, anchor.as_slice()));
    let gamma = if general_gamma {
        let l = DMatrix::from_fn(memory + 2, memory + 2, |_, _| rng.random_range(-0.2..0.2));
        AppendedCovariance::new(&l * l.transpose()).unwrap()
    } else {
        build_gamma(&DVector::from_element(1, 1.0), &DMatrix::from_element(1, 1, 0.01 / 3.0), memory).unwrap()
    };
    let config = MpcConfig {
        horizon: memory + rng.random_range(1..4),
        output_weight: DMatrix::from_element(1, 1, rng.random_range(1.0..20.0)),
        input_weight: DMatrix::from_element(1, 1, rng.random_range(0.5..2.0)),
        violation_probability: 0.1,
        output_row: DVector::from_element(1, if rng.random_bool(0.5) { 1.0 } else { -1.0 }),
        output_limit: 1e3,
        input_matrix: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
        input_limits: DVector::from_element(2, 1.0),
        robustification: Robustification::DualLp,
    };
    MpcInstance {
        config,
        ops,
        mean,
        fps,
        gamma,
        regressor: DVector::from_fn(memory, |_, _| rng.random_range(-1.0..1.0)),
        output: DVector::from_element(1, rng.random_range(-1.0..1.0)),
    }
}

/// Basis-pursuit optimum `min ‖x‖₁ s.t. Ax = y` by enumerating every basic
/// solution: an optimal vertex has support of size at most `rank(A)`.
pub fn min_l1_basic_solution(a: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let dim = a.ncols();
    let rank = a.rank(1e-10);
    let mut best: Option<DVector<f64>> = None;
    for size in 0..=rank {
        for support in (0..dim).combinations(size) {
            let sub = DMatrix::from_fn(a.nrows(), size, |i, j| a[(i, support[j])]);
            let coef = if size == 0 {
                DVector::zeros(0)
            } else {
                let Some(chol) = (sub.transpose() * &sub).cholesky() else { continue };
                chol.solve(&(sub.transpose() * y))
            };
            if (&sub * &coef - y).norm() > 1e-9 * y.norm().max(1.0) {
                continue;
            }
            let mut x = DVector::zeros(dim);
            for (k, &i) in support.iter().enumerate() {
                x[i] = coef[k];
            }
            if best.as_ref().is_none_or(|b| x.lp_norm(1) < b.lp_norm(1)) {
                best = Some(x);
            }
        }
    }
    best
}

/// Sets the output limit halfway between the worst case of the zero input
/// and of the unconstrained optimum, so the robust rows are active.
pub fn activate_limit(inst: &mut MpcInstance, tol: &SolverTolerances) {
    let problem = MpcProblem::new(&inst.config, &inst.ops, &inst.mean, &inst.fps, &inst.gamma, &inst.regressor, &inst.output).unwrap();
    let free = conic::solve(&problem.program(Robustification::DualLp).unwrap(), tol).unwrap();
    let free = free.primal.rows(0, problem.map.n_decision()).into_owned();
    let at_free = problem.worst_output(&free).unwrap();
    let at_zero = problem.worst_output(&DVector::zeros(free.len())).unwrap();
    if at_free > at_zero {
        inst.config.output_limit = 0.5 * (at_free + at_zero);
    }
}
