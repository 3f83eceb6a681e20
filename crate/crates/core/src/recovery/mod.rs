//! Offline sparse recovery: Gaussian excitation, Basis Pursuit Denoising
//! per output row, and the feasible sparse parameter set around the
//! recovered rows.

mod file;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, Normal};

use crate::conic::{self, ConicProgram, LinearRows, SocBlock, SolverTolerances};
use crate::error::{check_dim, Error, Result};
use crate::plant::{rng_stream, DisturbanceModel, ImpulseResponse};

pub use file::{read_fsps, write_fsps, FSPS_FORMAT_VERSION};

/// Rejection sampling gives up after this many draws of one noise column.
const MAX_NOISE_DRAWS: usize = 10_000;

/// `⌈2·C̃·k̄·ln(dim/(2k̄))/δ̄²⌉`, floored at `dim + 1`.
pub fn required_sample_count(
    sparsity: usize,
    dim: usize,
    rip_delta: f64,
    sample_constant: f64,
) -> Result<usize> {
    if sparsity == 0 || 2 * sparsity >= dim {
        return Err(Error::InvalidSparsity {
            twice_k: 2 * sparsity,
            dim,
        });
    }
    if !(sample_constant > 0.0) || !(rip_delta > 0.0 && rip_delta < 2f64.sqrt() - 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sample constant {sample_constant} must be positive and RIP level {rip_delta} in (0, √2 − 1)"
        )));
    }
    let ratio = dim as f64 / (2 * sparsity) as f64;
    let q = (2.0 * sample_constant * sparsity as f64 * ratio.ln() / (rip_delta * rip_delta)).ceil();
    Ok((q as usize).max(dim + 1))
}

/// `q × dim` matrix with i.i.d. `N(0, 1/q)` entries.
pub fn generate_offline_regressors<R: Rng + ?Sized>(q: usize, dim: usize, rng: &mut R) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 1.0 / (q as f64).sqrt()).expect("positive std");
    DMatrix::from_fn(q, dim, |_, _| normal.sample(rng))
}

/// Offline outputs `regressors·Hᵀ + noise`, one column per output. Noise
/// columns whose ℓ₂ norm exceeds `√q·w̄ᵢ` are redrawn.
pub fn collect_offline_outputs<R: Rng + ?Sized>(
    truth: &ImpulseResponse,
    regressors: &DMatrix<f64>,
    disturbance: &DisturbanceModel,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    check_dim("offline regressors", truth.regressor_len(), regressors.ncols())?;
    check_dim("offline disturbance", truth.n_outputs(), disturbance.bounds().len())?;
    let q = regressors.nrows();
    let clean = regressors * truth.coefficients().transpose();
    let mut noise = DMatrix::zeros(q, truth.n_outputs());
    for t in 0..q {
        noise.set_row(t, &disturbance.sample(rng).transpose());
    }
    for (j, &bound) in disturbance.bounds().iter().enumerate() {
        let budget = (q as f64).sqrt() * bound;
        let mut attempts = 1;
        while noise.column(j).norm() > budget {
            if attempts >= MAX_NOISE_DRAWS {
                return Err(Error::NoiseBudgetExceeded { row: j, attempts });
            }
            for t in 0..q {
                noise[(t, j)] = disturbance.sample(rng)[j];
            }
            attempts += 1;
        }
    }
    Ok(clean + noise)
}

/// Basis Pursuit Denoising `min ‖x‖₁ s.t. ‖Ax − y‖₂ ≤ budget`.
///
/// A zero budget is solved as basis pursuit on the row space of `A`, since
/// the cone `‖·‖ ≤ 0` has empty interior.
pub fn bpdn_recover(
    sensing: &DMatrix<f64>,
    measurements: &DVector<f64>,
    budget: f64,
    tol: &SolverTolerances,
) -> Result<DVector<f64>> {
    check_dim("BPDN measurements", sensing.nrows(), measurements.len())?;
    if !(budget >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative BPDN budget {budget}")));
    }
    let dim = sensing.ncols();
    let svd = sensing.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let cutoff = 1e-12 * svd.singular_values.max().max(1.0);
    let rank_idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cutoff)
        .collect();

    // Distance from y to range(A).
    let mut projected = DVector::zeros(measurements.len());
    for &i in &rank_idx {
        let col = u.column(i);
        projected += col * col.dot(measurements);
    }
    let distance = (measurements - &projected).norm();
    let slack = 1e-9 * (1.0 + measurements.norm());
    if distance > budget + slack {
        return Err(Error::InfeasibleBudget { budget });
    }

    // Variables [x; t], minimize Σt with −t ≤ x ≤ t.
    let n = 2 * dim;
    let mut objective = DVector::zeros(n);
    objective.rows_mut(dim, dim).fill(1.0);
    let mut abs_rows = DMatrix::zeros(2 * dim, n);
    for i in 0..dim {
        abs_rows[(2 * i, i)] = 1.0;
        abs_rows[(2 * i, dim + i)] = -1.0;
        abs_rows[(2 * i + 1, i)] = -1.0;
        abs_rows[(2 * i + 1, dim + i)] = -1.0;
    }
    let mut program = ConicProgram::new(n)
        .with_linear_objective(objective)
        .with_inequalities(LinearRows::new(abs_rows, DVector::zeros(2 * dim)));

    if budget <= slack {
        // Σᵣ Vᵣᵀ x = Uᵣᵀ y on the numerical range.
        let mut eq = DMatrix::zeros(rank_idx.len(), n);
        let mut rhs = DVector::zeros(rank_idx.len());
        for (r, &i) in rank_idx.iter().enumerate() {
            let s = svd.singular_values[i];
            for j in 0..dim {
                eq[(r, j)] = s * v_t[(i, j)];
            }
            rhs[r] = u.column(i).dot(measurements);
        }
        program = program.with_equalities(LinearRows::new(eq, rhs));
    } else {
        let mut f_mat = DMatrix::zeros(sensing.nrows(), n);
        f_mat.view_mut((0, 0), (sensing.nrows(), dim)).copy_from(sensing);
        program = program.with_soc(SocBlock {
            f_mat,
            f_vec: -measurements,
            c: DVector::zeros(n),
            d: budget,
        });
    }

    let sol = conic::solve(&program, tol)?;
    if !sol.is_optimal() {
        return Err(Error::SolverFailure {
            context: "recovering a sparse impulse-response row",
            status: sol.status,
        });
    }
    Ok(sol.primal.rows(0, dim).into_owned())
}

/// Per-output ℓ₂ balls around the recovered rows, with their ℓ∞ outer boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct Fsps {
    /// One recovered row per output.
    pub centers: DMatrix<f64>,
    pub radii: DVector<f64>,
    pub c_bar: f64,
    /// Offline sample count.
    pub samples: usize,
    pub seed: u64,
}

impl Fsps {
    pub fn n_outputs(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    /// Componentwise bounds `x̂ᵢ ± rᵢ·1` of row `i`.
    pub fn box_outer(&self, row: usize) -> (DVector<f64>, DVector<f64>) {
        let center = self.centers.row(row).transpose();
        let r = self.radii[row];
        (center.add_scalar(-r), center.add_scalar(r))
    }

    /// Bounds of the box over the row-major vectorized parameter.
    pub fn stacked_box(&self) -> (DVector<f64>, DVector<f64>) {
        let dim = self.dim();
        let mut lower = DVector::zeros(self.n_outputs() * dim);
        let mut upper = DVector::zeros(self.n_outputs() * dim);
        for i in 0..self.n_outputs() {
            let (lo, hi) = self.box_outer(i);
            lower.rows_mut(i * dim, dim).copy_from(&lo);
            upper.rows_mut(i * dim, dim).copy_from(&hi);
        }
        (lower, upper)
    }

    /// Whether `row` of an impulse response lies in the ℓ₂ ball of that row.
    pub fn ball_contains(&self, row: usize, point: &DVector<f64>, tol: f64) -> bool {
        (point - self.centers.row(row).transpose()).norm() <= self.radii[row] + tol
    }

    pub fn contains(&self, h: &ImpulseResponse, tol: f64) -> bool {
        (0..self.n_outputs()).all(|i| self.ball_contains(i, &h.coefficients().row(i).transpose(), tol))
    }
}

/// Radii `C̄·√q·w̄ᵢ` around the recovered rows.
pub fn build_fsps(
    centers: DMatrix<f64>,
    noise_bounds: &DVector<f64>,
    samples: usize,
    c_bar: f64,
    seed: u64,
) -> Result<Fsps> {
    check_dim("FSPS noise bounds", centers.nrows(), noise_bounds.len())?;
    let radii = noise_bounds.map(|w| c_bar * (samples as f64).sqrt() * w);
    Ok(Fsps {
        centers,
        radii,
        c_bar,
        samples,
        seed,
    })
}

/// Offline design parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDesign {
    pub sparsity: usize,
    pub rip_delta: f64,
    pub sample_constant: f64,
    /// Overrides the sample-count formula when set.
    pub samples: Option<usize>,
    pub c_bar: f64,
    /// Standard deviation of the physical offline inputs. `None` applies
    /// the normalized `N(0, 1/q)` regressors directly.
    pub input_std: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct OfflineDataset {
    /// Normalized sensing matrix with `N(0, 1/q)` entries.
    pub sensing: DMatrix<f64>,
    /// Factor between the applied regressors and `sensing`.
    pub excitation_gain: f64,
    /// Outputs measured under the applied regressors, one column per output.
    pub outputs: DMatrix<f64>,
}

impl OfflineDataset {
    pub fn samples(&self) -> usize {
        self.sensing.nrows()
    }
}

/// Full offline phase: draw, measure, recover, build the set.
///
/// Regressors use stream 0 of `seed` and noise uses stream 1. Recovery
/// runs in normalized units, so with excitation gain `g` the measurements
/// become `y/g`, the budget `√q·w̄/g` and the radii `C̄·√q·w̄/g`.
pub fn run_offline(
    truth: &ImpulseResponse,
    disturbance: &DisturbanceModel,
    design: &OfflineDesign,
    seed: u64,
    tol: &SolverTolerances,
) -> Result<(OfflineDataset, Fsps)> {
    let dim = truth.regressor_len();
    let q = match design.samples {
        Some(q) => q,
        None => required_sample_count(design.sparsity, dim, design.rip_delta, design.sample_constant)?,
    };
    let gain = match design.input_std {
        Some(std) if std > 0.0 => std * (q as f64).sqrt(),
        Some(std) => {
            return Err(Error::InvalidArgument(format!(
                "offline input standard deviation {std} must be positive"
            )))
        }
        None => 1.0,
    };
    let sensing = generate_offline_regressors(q, dim, &mut rng_stream(seed, 0));
    let applied = &sensing * gain;
    let outputs = collect_offline_outputs(truth, &applied, disturbance, &mut rng_stream(seed, 1))?;

    let scaled_bounds = disturbance.bounds() / gain;
    let mut centers = DMatrix::zeros(truth.n_outputs(), dim);
    for i in 0..truth.n_outputs() {
        let y = outputs.column(i) / gain;
        let budget = (q as f64).sqrt() * scaled_bounds[i];
        let x = bpdn_recover(&sensing, &y, budget, tol)?;
        centers.set_row(i, &x.transpose());
    }
    let fsps = build_fsps(centers, &scaled_bounds, q, design.c_bar, seed)?;
    Ok((
        OfflineDataset {
            sensing,
            excitation_gain: gain,
            outputs,
        },
        fsps,
    ))
}
