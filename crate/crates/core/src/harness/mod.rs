//! Closed-loop simulation, paired Monte Carlo and reporting.

mod config;
mod report;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

pub use config::{
    ControllerSection, EstimatorSection, ExperimentConfig, ExperimentSection, Mode, OfflineSection,
    PlantSection, RobustificationName, ShapeName, TABLE_I,
};
pub use report::{
    read_tables, summarize, write_report, write_tables, CostRow, DeltaRow, FailureRow, Summary, Tables,
    TrajectoryRow,
};

use crate::conic::{write_matrix_market, SolveStatus, SolverTolerances};
use crate::controller::{ControlSolution, MpcProblem};
use crate::error::{Error, Result};
use crate::estimator::{point_estimate_domain, project_mean, reshape_mean};
use crate::plant::{rng_stream, step, Regressor};
use crate::polytope::{prune_redundant, add_measurement_cut, Polytope};
use crate::recovery::{run_offline, Fsps};

/// Membership slack used by the logged safety checks.
pub const CHECK_TOL: f64 = 1e-7;
/// Residual tolerance of the shifted-candidate check.
pub const CANDIDATE_TOL: f64 = 1e-6;
/// Random directions per step used to sample points of the new set.
const NESTING_SAMPLES: usize = 3;
/// Stream of the run seed reserved for the nesting samples.
const NESTING_STREAM_OFFSET: u64 = 1 << 32;

#[derive(Clone, Debug, Default)]
pub struct ClosedLoopOptions {
    /// Log truth membership, nesting and shifted-candidate checks.
    pub checks: bool,
    /// Directory for matrix-market dumps of programs that fail.
    pub dump_dir: Option<PathBuf>,
    pub tolerances: SolverTolerances,
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: usize,
    pub output: DVector<f64>,
    /// `None` at the final step, where nothing is applied.
    pub input: Option<DVector<f64>>,
    pub regressor: Regressor,
    pub stage_cost: f64,
    pub status: Option<SolveStatus>,
    pub fps_rows: usize,
    pub merged_rows: usize,
    /// `‖projected mean − vec(H)‖₂`.
    pub estimate_error: f64,
    pub generated_cuts: usize,
    /// The true parameter lies in the current set.
    pub truth_contained: Option<bool>,
    /// Sampled points of the new set lie in the previous one.
    pub nesting_ok: Option<bool>,
    /// Largest residual of last step's shifted solution against this
    /// step's exact program.
    pub candidate_violation: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryLog {
    pub mode: Mode,
    pub run: usize,
    pub steps: Vec<StepRecord>,
    /// Sum of the logged stage costs.
    pub total_cost: f64,
}

impl TrajectoryLog {
    pub fn outputs(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| s.output.clone()).collect()
    }

    pub fn inputs(&self) -> Vec<DVector<f64>> {
        self.steps.iter().filter_map(|s| s.input.clone()).collect()
    }
}

fn quad(x: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (x.transpose() * m * x)[(0, 0)]
}

/// `Σ y(t)ᵀQy(t) + Σ u(t)ᵀSu(t)` over the logged trajectory.
pub fn closed_loop_cost(log: &TrajectoryLog, output_weight: &DMatrix<f64>, input_weight: &DMatrix<f64>) -> f64 {
    log.steps
        .iter()
        .map(|s| quad(&s.output, output_weight) + s.input.as_ref().map_or(0.0, |u| quad(u, input_weight)))
        .sum()
}

/// Disturbance sequence of run `run`, shared by both modes.
pub fn draw_disturbances(cfg: &ExperimentConfig, run: usize) -> Result<Vec<DVector<f64>>> {
    let model = cfg.disturbance()?;
    let mut rng = rng_stream(cfg.experiment.run_seed_base, run as u64);
    Ok((0..=cfg.controller.t_end).map(|_| model.sample(&mut rng)).collect())
}

/// Offline phase with the configured design and seed.
pub fn offline_phase(cfg: &ExperimentConfig, tol: &SolverTolerances) -> Result<Fsps> {
    let (_, fsps) = run_offline(
        &cfg.truth()?,
        &cfg.disturbance()?,
        &cfg.offline_design(),
        cfg.experiment.offline_seed,
        tol,
    )?;
    Ok(fsps)
}

/// Projects `u` onto `{Cu ≤ g}` when it violates a row by solver round-off.
fn enforce_input_rows(u: &DVector<f64>, c: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let mut u = u.clone();
    for _ in 0..8 {
        let mut changed = false;
        for i in 0..c.nrows() {
            let row = c.row(i).transpose();
            let excess = row.dot(&u) - g[i];
            let norm2 = row.norm_squared();
            if excess > 0.0 && norm2 > 0.0 {
                u -= &row * (excess / norm2);
                // Land strictly on the feasible side.
                while row.dot(&u) > g[i] {
                    u -= &row * (f64::EPSILON * g[i].abs().max(1.0) / norm2);
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    u
}

fn dump_failure(dir: &Path, run: usize, mode: Mode, t: usize, solution: &ControlSolution) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("run{run}_{}_t{t}.mtx", mode.as_str()));
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix_market(&solution.program, &mut out)?;
    Ok(())
}

/// Points of `fps` spread over its boundary.
fn sample_points(fps: &Polytope, run_seed: u64, run: usize, t: usize) -> Result<Vec<DVector<f64>>> {
    let mut rng = rng_stream(run_seed, NESTING_STREAM_OFFSET + (run as u64) * 4096 + t as u64);
    let mut points = Vec::with_capacity(NESTING_SAMPLES);
    for _ in 0..NESTING_SAMPLES {
        let d = DVector::from_fn(fps.dim(), |_, _| rng.random_range(-1.0..1.0));
        points.push(fps.support(&d)?.maximizer);
    }
    Ok(points)
}

/// A closed-loop run that stopped early.
#[derive(Debug)]
pub struct RunFailure {
    pub run: usize,
    pub mode: Mode,
    /// Step at which the error occurred.
    pub t: usize,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run {} ({}) failed at t = {}: {}", self.run, self.mode.as_str(), self.t, self.error)
    }
}

impl std::error::Error for RunFailure {}

/// One closed-loop run. Baseline mode projects the estimate onto the
/// feasible parameter set alone and ignores `fsps`.
pub fn run_closed_loop(
    cfg: &ExperimentConfig,
    mode: Mode,
    fsps: Option<&Fsps>,
    disturbances: &[DVector<f64>],
    run: usize,
    opts: &ClosedLoopOptions,
) -> std::result::Result<TrajectoryLog, RunFailure> {
    let mut t = 0;
    simulate(cfg, mode, fsps, disturbances, run, opts, &mut t).map_err(|error| RunFailure { run, mode, t, error })
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    cfg: &ExperimentConfig,
    mode: Mode,
    fsps: Option<&Fsps>,
    disturbances: &[DVector<f64>],
    run: usize,
    opts: &ClosedLoopOptions,
    t_reached: &mut usize,
) -> Result<TrajectoryLog> {
    let fsps = match mode {
        Mode::Sparse => Some(fsps.ok_or_else(|| {
            Error::InvalidArgument("sparse mode needs a feasible sparse parameter set".into())
        })?),
        Mode::Baseline => None,
    };
    let t_end = cfg.controller.t_end;
    if disturbances.len() < t_end + 1 {
        return Err(Error::dim("disturbance sequence", t_end + 1, disturbances.len()));
    }
    let truth = cfg.truth()?;
    let truth_vec = truth.vectorize();
    let ops = cfg.shift_operators()?;
    let mpc = cfg.mpc_config()?;
    let gamma = cfg.gamma()?;
    let noise = cfg.disturbance()?;
    let noise_variance = noise.variance();
    let shape = cfg.sparse_set_shape();
    let (n_y, len) = (cfg.plant.n_outputs, cfg.regressor_len());

    let mut fps = cfg.initial_fps()?;
    let mut rls = cfg.prior()?;
    let mut phi = cfg.initial_regressor()?;
    let mut previous: Option<ControlSolution> = None;
    let mut steps = Vec::with_capacity(t_end + 1);
    let mut total_cost = 0.0;

    for (t, w) in disturbances.iter().enumerate().take(t_end + 1) {
        *t_reached = t;
        let y = step(&truth, &phi, w)?;
        let before = fps.clone();
        let cut = add_measurement_cut(&fps, &phi, &y, noise.bounds())?;
        let new_rows: Vec<usize> = (fps.len()..cut.len()).collect();
        let (mut pruned, _) = cut.prune_rows(&new_rows)?;
        let mut merged_rows = 0;
        if pruned.len() > cfg.estimator.row_cap {
            let (p, report) = prune_redundant(&pruned, cfg.estimator.row_cap)?;
            pruned = p;
            merged_rows = report.merged;
        }
        fps = pruned;

        let (truth_contained, nesting_ok) = if opts.checks {
            let inside = fps.contains(&truth_vec, CHECK_TOL);
            let nested = sample_points(&fps, cfg.experiment.run_seed_base, run, t)?
                .iter()
                .all(|x| before.contains(x, CHECK_TOL));
            (Some(inside), Some(nested))
        } else {
            (None, None)
        };

        rls = rls.update(&phi, &y, &noise_variance)?;
        let domain = point_estimate_domain(&fps, fsps, shape)?;
        let estimate = project_mean(&rls, &domain, &opts.tolerances)?;
        let estimate_error = (&estimate - &truth_vec).norm();
        let mean = reshape_mean(&estimate, n_y, len)?;

        let mut record = StepRecord {
            t,
            output: y.clone(),
            input: None,
            regressor: phi.clone(),
            stage_cost: quad(&y, &mpc.output_weight),
            status: None,
            fps_rows: fps.len(),
            merged_rows,
            estimate_error,
            generated_cuts: 0,
            truth_contained,
            nesting_ok,
            candidate_violation: None,
        };
        if t == t_end {
            total_cost += record.stage_cost;
            steps.push(record);
            break;
        }

        let problem = MpcProblem::new(&mpc, &ops, &mean, &fps, &gamma, &phi, &y)?;
        if opts.checks {
            if let Some(prev) = &previous {
                let candidate = problem.map.shifted(&prev.decision);
                let report = problem.check_candidate(&candidate, CANDIDATE_TOL)?;
                record.candidate_violation = Some(report.max_violation());
            }
        }
        let solution = problem.solve(&opts.tolerances)?;
        record.status = Some(solution.status);
        record.generated_cuts = solution.generated_cuts;
        if solution.status != SolveStatus::Optimal {
            if let Some(dir) = &opts.dump_dir {
                dump_failure(dir, run, mode, t, &solution)?;
            }
            return Err(Error::InfeasibleAtRuntime {
                t,
                status: solution.status,
            });
        }
        let u = enforce_input_rows(solution.first_input(), &mpc.input_matrix, &mpc.input_limits);
        record.stage_cost += quad(&u, &mpc.input_weight);
        total_cost += record.stage_cost;
        phi = ops.shift(&phi, &u)?;
        record.input = Some(u);
        steps.push(record);
        previous = Some(solution);
    }
    Ok(TrajectoryLog {
        mode,
        run,
        steps,
        total_cost,
    })
}

/// Both modes of one run, under the same disturbance sequence.
#[derive(Debug)]
pub struct PairedRun {
    pub run: usize,
    pub sparse: std::result::Result<TrajectoryLog, RunFailure>,
    pub baseline: std::result::Result<TrajectoryLog, RunFailure>,
}

impl PairedRun {
    pub fn failures(&self) -> impl Iterator<Item = &RunFailure> {
        self.sparse.as_ref().err().into_iter().chain(self.baseline.as_ref().err())
    }

    /// Both logs when neither mode failed.
    pub fn both(&self) -> Option<(&TrajectoryLog, &TrajectoryLog)> {
        Some((self.sparse.as_ref().ok()?, self.baseline.as_ref().ok()?))
    }
}

/// Runs `0..n_runs` in parallel. A failing run is kept with its error
/// instead of aborting the batch.
pub fn monte_carlo(cfg: &ExperimentConfig, fsps: &Fsps, n_runs: usize, opts: &ClosedLoopOptions) -> Result<Vec<PairedRun>> {
    // Surface configuration errors once, before spawning work.
    cfg.validate()?;
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let w = draw_disturbances(cfg, run)?;
            Ok(PairedRun {
                run,
                sparse: run_closed_loop(cfg, Mode::Sparse, Some(fsps), &w, run, opts),
                baseline: run_closed_loop(cfg, Mode::Baseline, Some(fsps), &w, run, opts),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(runs)
}
