//! Stochastic MPC with outputs robustified over the feasible parameter set.
//!
//! The decision vector is reduced by the terminal condition: the last
//! `memory` inputs of the horizon are equal, so only the first
//! `horizon − memory` inputs and one terminal input are free. Every
//! predicted regressor is then an affine function of that vector.

mod robust;

use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProgram, LinearRows, ResidualReport, SolveStatus, SolverTolerances};
use crate::error::{check_dim, Error, Result};
use crate::plant::{ImpulseResponse, Regressor, ShiftOperators};
use crate::polytope::Polytope;

pub use robust::{robust_output_rows, RobustRows};

/// How the output constraint is enforced for every model in the set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Robustification {
    /// LP duality: one multiplier vector per prediction step.
    DualLp,
    /// One row per polytope vertex; small dimensions only.
    VertexEnumeration,
    /// Cutting planes from support-function maximizers until no step is
    /// violated. Same optimum as the other two.
    ConstraintGeneration,
}

#[derive(Clone, Debug)]
pub struct MpcConfig {
    pub horizon: usize,
    /// `n_y × n_y`.
    pub output_weight: DMatrix<f64>,
    /// `n_u × n_u`.
    pub input_weight: DMatrix<f64>,
    pub violation_probability: f64,
    /// Row `E` of the output constraint `E·y ≤ p`.
    pub output_row: DVector<f64>,
    pub output_limit: f64,
    /// Input constraint `C·u ≤ g`.
    pub input_matrix: DMatrix<f64>,
    pub input_limits: DVector<f64>,
    pub robustification: Robustification,
}

impl MpcConfig {
    /// `√((1 − ε)/ε)`.
    pub fn tightening_factor(&self) -> f64 {
        let eps = self.violation_probability;
        ((1.0 - eps) / eps).sqrt()
    }

    pub fn validate(&self, ops: &ShiftOperators) -> Result<()> {
        if self.horizon <= ops.memory() {
            return Err(Error::InvalidArgument(format!(
                "horizon {} must exceed the FIR memory {}",
                self.horizon,
                ops.memory()
            )));
        }
        let eps = self.violation_probability;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "violation probability {eps} must lie in (0, 1)"
            )));
        }
        let n_y = self.output_row.len();
        check_dim("output weight", n_y, self.output_weight.nrows())?;
        check_dim("output weight", n_y, self.output_weight.ncols())?;
        check_dim("input weight", ops.n_inputs(), self.input_weight.nrows())?;
        check_dim("input weight", ops.n_inputs(), self.input_weight.ncols())?;
        check_dim("input constraint", ops.n_inputs(), self.input_matrix.ncols())?;
        check_dim("input limits", self.input_matrix.nrows(), self.input_limits.len())?;
        // A semidefinite output weight keeps the cost strictly convex because
        // the input weight is definite.
        let output_sym = (&self.output_weight + self.output_weight.transpose()) * 0.5;
        if output_sym.symmetric_eigenvalues().min() < -1e-12 * output_sym.amax().max(1.0) {
            return Err(Error::InvalidArgument("output weight must be positive semidefinite".into()));
        }
        if ((&self.input_weight + self.input_weight.transpose()) * 0.5).cholesky().is_none() {
            return Err(Error::InvalidArgument("input weight must be positive definite".into()));
        }
        Ok(())
    }
}

/// Covariance `Γ` of the appended regressor `Φ̄ = [Φ; 1; 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AppendedCovariance {
    gamma: DMatrix<f64>,
}

/// `Γ = diag(0, E·σ²·Eᵀ, 0)` for a regressor of length `regressor_len`.
pub fn build_gamma(output_row: &DVector<f64>, noise_variance: &DMatrix<f64>, regressor_len: usize) -> Result<AppendedCovariance> {
    check_dim("noise variance", output_row.len(), noise_variance.nrows())?;
    let dim = regressor_len + 2;
    let mut gamma = DMatrix::zeros(dim, dim);
    gamma[(regressor_len, regressor_len)] = (output_row.transpose() * noise_variance * output_row)[(0, 0)];
    AppendedCovariance::new(gamma)
}

impl AppendedCovariance {
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        if gamma.nrows() != gamma.ncols() || gamma.nrows() < 2 {
            return Err(Error::InvalidArgument("Γ must be square of size ≥ 2".into()));
        }
        let sym = (&gamma + gamma.transpose()) * 0.5;
        if sym.symmetric_eigenvalues().min() < -1e-12 * sym.amax().max(1.0) {
            return Err(Error::InvalidArgument("Γ must be positive semidefinite".into()));
        }
        Ok(AppendedCovariance { gamma: sym })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn regressor_len(&self) -> usize {
        self.gamma.nrows() - 2
    }

    /// `√(Φ̄ᵀΓΦ̄)` when it does not depend on `Φ`, i.e. when only the entry
    /// of the noise slot is nonzero.
    pub fn constant_std(&self) -> Option<f64> {
        let slot = self.regressor_len();
        let only_slot = self
            .gamma
            .iter()
            .enumerate()
            .all(|(idx, v)| *v == 0.0 || (idx % self.gamma.nrows() == slot && idx / self.gamma.nrows() == slot));
        only_slot.then(|| self.gamma[(slot, slot)].max(0.0).sqrt())
    }

    /// `√(Φ̄ᵀΓΦ̄)` at a given regressor.
    pub fn std_at(&self, regressor: &Regressor) -> f64 {
        let bar = appended(regressor);
        (bar.transpose() * &self.gamma * &bar)[(0, 0)].max(0.0).sqrt()
    }

    /// `L` with `Γ = LLᵀ`.
    pub(crate) fn factor(&self) -> DMatrix<f64> {
        let eig = self.gamma.clone().symmetric_eigen();
        let mut l = eig.eigenvectors.clone();
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            let s = lam.max(0.0).sqrt();
            l.column_mut(j).scale_mut(s);
        }
        l
    }
}

fn appended(regressor: &Regressor) -> DVector<f64> {
    let n = regressor.len();
    let mut bar = DVector::from_element(n + 2, 1.0);
    bar.rows_mut(0, n).copy_from(regressor);
    bar
}

/// `Φ(t+1|t) … Φ(t+N|t)` under the input sequence.
pub fn predict_regressors(regressor: &Regressor, inputs: &[DVector<f64>], ops: &ShiftOperators) -> Result<Vec<Regressor>> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut current = regressor.clone();
    for u in inputs {
        current = ops.shift(&current, u)?;
        out.push(current.clone());
    }
    Ok(out)
}

/// Equalities on the stacked inputs `[u(t); …; u(t+N−1)]` forcing
/// `Φ(t+N|t) = WΦ(t+N|t) + Zu(t+N−1|t)`: the last `memory` inputs agree.
pub fn terminal_constraint_rows(ops: &ShiftOperators, horizon: usize) -> LinearRows {
    let n_u = ops.n_inputs();
    let m = ops.memory().min(horizon);
    let cols = horizon * n_u;
    let rows = (m - 1) * n_u;
    let mut matrix = DMatrix::zeros(rows, cols);
    let last = horizon - 1;
    for j in 1..m {
        for c in 0..n_u {
            let r = (j - 1) * n_u + c;
            matrix[(r, (last - j) * n_u + c)] = 1.0;
            matrix[(r, last * n_u + c)] = -1.0;
        }
    }
    LinearRows::new(matrix, DVector::zeros(rows))
}

/// Affine description of the horizon in the reduced decision vector `v`.
#[derive(Clone, Debug)]
pub struct HorizonMap {
    n_inputs: usize,
    horizon: usize,
    free_steps: usize,
    /// Stacked inputs `U = expand · v`.
    expand: DMatrix<f64>,
    /// `Φ(t+k|t) = regressor_offset[k−1] + regressor_gain[k−1]·v`.
    regressor_offset: Vec<DVector<f64>>,
    regressor_gain: Vec<DMatrix<f64>>,
}

impl HorizonMap {
    pub fn new(regressor: &Regressor, ops: &ShiftOperators, horizon: usize) -> Result<Self> {
        check_dim("current regressor", ops.regressor_len(), regressor.len())?;
        let n_u = ops.n_inputs();
        let free_steps = horizon - ops.memory();
        let n_v = (free_steps + 1) * n_u;
        let mut expand = DMatrix::zeros(horizon * n_u, n_v);
        for k in 0..horizon {
            let block = k.min(free_steps);
            for c in 0..n_u {
                expand[(k * n_u + c, block * n_u + c)] = 1.0;
            }
        }
        let mut regressor_offset = Vec::with_capacity(horizon);
        let mut regressor_gain = Vec::with_capacity(horizon);
        let mut offset = regressor.clone();
        let mut gain = DMatrix::zeros(ops.regressor_len(), n_v);
        for k in 0..horizon {
            offset = ops.delay() * &offset;
            gain = ops.delay() * &gain + ops.injection() * expand.rows(k * n_u, n_u);
            regressor_offset.push(offset.clone());
            regressor_gain.push(gain.clone());
        }
        Ok(HorizonMap {
            n_inputs: n_u,
            horizon,
            free_steps,
            expand,
            regressor_offset,
            regressor_gain,
        })
    }

    pub fn n_decision(&self) -> usize {
        self.expand.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn inputs(&self, decision: &DVector<f64>) -> Vec<DVector<f64>> {
        let stacked = &self.expand * decision;
        (0..self.horizon)
            .map(|k| stacked.rows(k * self.n_inputs, self.n_inputs).into_owned())
            .collect()
    }

    /// `Φ(t+k|t)` for `k = 1..N`.
    pub fn regressor(&self, k: usize, decision: &DVector<f64>) -> Regressor {
        &self.regressor_offset[k - 1] + &self.regressor_gain[k - 1] * decision
    }

    pub(crate) fn regressor_affine(&self, k: usize) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.regressor_offset[k - 1], &self.regressor_gain[k - 1])
    }

    /// Reduced vector of the shifted sequence that repeats the last input.
    pub fn shifted(&self, decision: &DVector<f64>) -> DVector<f64> {
        let n_u = self.n_inputs;
        let mut next = DVector::zeros(decision.len());
        let last = decision.rows(self.free_steps * n_u, n_u).into_owned();
        for b in 0..self.free_steps {
            let src = b + 1;
            let block = if src < self.free_steps {
                decision.rows(src * n_u, n_u).into_owned()
            } else {
                last.clone()
            };
            next.rows_mut(b * n_u, n_u).copy_from(&block);
        }
        next.rows_mut(self.free_steps * n_u, n_u).copy_from(&last);
        next
    }
}

/// Optimal input sequence and its predictions.
#[derive(Clone, Debug)]
pub struct ControlSolution {
    pub status: SolveStatus,
    pub inputs: Vec<DVector<f64>>,
    pub predicted_regressors: Vec<Regressor>,
    pub nominal_outputs: Vec<DVector<f64>>,
    /// Includes the measured-output term `y(t)ᵀQy(t)`.
    pub objective_value: f64,
    /// Reduced decision vector.
    pub decision: DVector<f64>,
    /// Last program solved (the relaxed one under constraint generation).
    pub program: ConicProgram,
    /// Cutting planes added by constraint generation.
    pub generated_cuts: usize,
}

impl ControlSolution {
    pub fn first_input(&self) -> &DVector<f64> {
        &self.inputs[0]
    }
}

/// One MPC instance at time `t`.
#[derive(Clone, Debug)]
pub struct MpcProblem<'a> {
    pub config: &'a MpcConfig,
    pub mean: &'a ImpulseResponse,
    pub fps: &'a Polytope,
    pub gamma: &'a AppendedCovariance,
    pub output: DVector<f64>,
    pub map: HorizonMap,
}

/// Robust constraints are met up to this slack under constraint generation.
const GENERATION_TOL: f64 = 1e-9;
const MAX_GENERATION_ROUNDS: usize = 200;

impl<'a> MpcProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: &'a MpcConfig,
        ops: &ShiftOperators,
        mean: &'a ImpulseResponse,
        fps: &'a Polytope,
        gamma: &'a AppendedCovariance,
        regressor: &Regressor,
        output: &DVector<f64>,
    ) -> Result<Self> {
        config.validate(ops)?;
        check_dim("mean regressor length", ops.regressor_len(), mean.regressor_len())?;
        check_dim("mean outputs", config.output_row.len(), mean.n_outputs())?;
        check_dim("measured output", mean.n_outputs(), output.len())?;
        check_dim("parameter set", mean.n_outputs() * ops.regressor_len(), fps.dim())?;
        check_dim("Γ size", ops.regressor_len(), gamma.regressor_len())?;
        Ok(MpcProblem {
            config,
            mean,
            fps,
            gamma,
            output: output.clone(),
            map: HorizonMap::new(regressor, ops, config.horizon)?,
        })
    }

    /// Nominal cost and hard input rows over `[v; extra]`.
    fn base_program(&self, extra: usize) -> ConicProgram {
        let n_v = self.map.n_decision();
        let n = n_v + extra;
        let n_u = self.map.n_inputs;
        let q_w = &self.config.output_weight;
        let mut hess = DMatrix::zeros(n_v, n_v);
        let mut lin = DVector::zeros(n_v);
        let mut constant = (self.output.transpose() * q_w * &self.output)[(0, 0)];
        let h = self.mean.coefficients();
        for k in 1..=self.map.horizon {
            let (off, gain) = self.map.regressor_affine(k);
            let a = h * off;
            let b = h * gain;
            hess += b.transpose() * q_w * &b;
            lin += b.transpose() * q_w * &a;
            constant += (a.transpose() * q_w * &a)[(0, 0)];
        }
        for k in 0..self.map.horizon {
            let t = self.map.expand.rows(k * n_u, n_u);
            hess += t.transpose() * &self.config.input_weight * t;
        }
        // ½vᵀPv convention: P = 2·hess, symmetrized.
        let hess = &hess + hess.transpose();
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (n_v, n_v)).copy_from(&hess);
        let mut q = DVector::zeros(n);
        q.rows_mut(0, n_v).copy_from(&(lin * 2.0));

        let c = &self.config.input_matrix;
        let blocks = n_v / n_u;
        let mut rows = DMatrix::zeros(blocks * c.nrows(), n);
        let mut rhs = DVector::zeros(blocks * c.nrows());
        for b in 0..blocks {
            rows.view_mut((b * c.nrows(), b * n_u), (c.nrows(), n_u)).copy_from(c);
            rhs.rows_mut(b * c.nrows(), c.nrows()).copy_from(&self.config.input_limits);
        }
        let mut program = ConicProgram::new(n)
            .with_quadratic_objective(p)
            .with_linear_objective(q)
            .with_inequalities(LinearRows::new(rows, rhs));
        program.objective_constant = constant;
        program
    }

    /// Full program for the given exact mode (`DualLp` or
    /// `VertexEnumeration`). Constraint generation maps to `DualLp`.
    pub fn program(&self, mode: Robustification) -> Result<ConicProgram> {
        let rows = match mode {
            Robustification::VertexEnumeration => robust::vertex_rows(self)?,
            _ => robust::dual_rows(self),
        };
        let base = self.base_program(rows.extra_variables);
        Ok(rows.apply(base))
    }

    pub fn solve(&self, tol: &SolverTolerances) -> Result<ControlSolution> {
        match self.config.robustification {
            Robustification::ConstraintGeneration => self.solve_by_generation(tol),
            mode => {
                let program = self.program(mode)?;
                let sol = conic::solve(&program, tol)?;
                Ok(self.finish(sol.status, sol.primal, program, 0))
            }
        }
    }

    fn solve_by_generation(&self, tol: &SolverTolerances) -> Result<ControlSolution> {
        let mut cuts: Vec<(usize, DVector<f64>)> = Vec::new();
        for _ in 0..MAX_GENERATION_ROUNDS {
            let rows = robust::cut_rows(self, &cuts);
            let program = rows.apply(self.base_program(0));
            let sol = conic::solve(&program, tol)?;
            if sol.status != SolveStatus::Optimal {
                return Ok(self.finish(sol.status, sol.primal, program, cuts.len()));
            }
            let mut added = false;
            for k in 1..=self.map.horizon {
                let (value, maximizer) = robust::worst_case(self, k, &sol.primal)?;
                if value > self.config.output_limit + GENERATION_TOL {
                    cuts.push((k, maximizer));
                    added = true;
                }
            }
            if !added {
                return Ok(self.finish(sol.status, sol.primal, program, cuts.len()));
            }
        }
        Err(Error::NumericalBreakdown(
            "constraint generation did not terminate".into(),
        ))
    }

    fn finish(&self, status: SolveStatus, primal: DVector<f64>, program: ConicProgram, cuts: usize) -> ControlSolution {
        let decision = primal.rows(0, self.map.n_decision()).into_owned();
        let inputs = self.map.inputs(&decision);
        let predicted: Vec<Regressor> = (1..=self.map.horizon).map(|k| self.map.regressor(k, &decision)).collect();
        let nominal = predicted.iter().map(|phi| self.mean.coefficients() * phi).collect();
        let objective_value = program.objective(&primal);
        ControlSolution {
            status,
            inputs,
            predicted_regressors: predicted,
            nominal_outputs: nominal,
            objective_value,
            decision,
            program,
            generated_cuts: cuts,
        }
    }

    /// Largest `E·H·Φ(k) + κ·√(Φ̄ᵀΓΦ̄)` over the set and the horizon.
    pub fn worst_output(&self, decision: &DVector<f64>) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for k in 1..=self.map.horizon {
            worst = worst.max(robust::worst_case(self, k, decision)?.0);
        }
        Ok(worst)
    }

    /// Checks a reduced decision vector against the exact dual program,
    /// with multipliers taken from the support-function LPs.
    pub fn check_candidate(&self, decision: &DVector<f64>, tol: f64) -> Result<ResidualReport> {
        check_dim("candidate", self.map.n_decision(), decision.len())?;
        let program = self.program(Robustification::DualLp)?;
        let mut point = DVector::zeros(program.num_variables());
        point.rows_mut(0, decision.len()).copy_from(decision);
        let mut offset = decision.len();
        for k in 1..=self.map.horizon {
            let direction = robust::direction(self, k, decision);
            let support = self.fps.support(&direction)?;
            point.rows_mut(offset, self.fps.len()).copy_from(&support.multipliers);
            offset += self.fps.len();
        }
        conic::verify(&program, &point, tol)
    }
}

/// Builds the exact program of the configured mode (`DualLp` when the
/// configured mode is constraint generation).
#[allow(clippy::too_many_arguments)]
pub fn build_mpc(
    mean: &ImpulseResponse,
    fps: &Polytope,
    regressor: &Regressor,
    output: &DVector<f64>,
    config: &MpcConfig,
    ops: &ShiftOperators,
    gamma: &AppendedCovariance,
) -> Result<ConicProgram> {
    MpcProblem::new(config, ops, mean, fps, gamma, regressor, output)?.program(config.robustification)
}
