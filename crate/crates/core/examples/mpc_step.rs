//! One controller step of the reference problem under each way of enforcing
//! the output constraint robustly.

use std::time::Instant;

use nalgebra::DVector;

use sparse_ampc::conic::SolverTolerances;
use sparse_ampc::controller::{MpcProblem, Robustification};
use sparse_ampc::estimator::reshape_mean;
use sparse_ampc::harness::ExperimentConfig;
use sparse_ampc::plant::step;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::table_i();
    let ops = cfg.shift_operators()?;
    let fps = cfg.initial_fps()?;
    let gamma = cfg.gamma()?;
    let mean = reshape_mean(&cfg.prior()?.mean, cfg.plant.n_outputs, cfg.regressor_len())?;
    let phi = cfg.initial_regressor()?;
    let y = step(&cfg.truth()?, &phi, &DVector::zeros(cfg.plant.n_outputs))?;
    let tol = SolverTolerances::default();

    for mode in [Robustification::DualLp, Robustification::ConstraintGeneration] {
        let mut mpc = cfg.mpc_config()?;
        mpc.robustification = mode;
        let problem = MpcProblem::new(&mpc, &ops, &mean, &fps, &gamma, &phi, &y)?;
        let start = Instant::now();
        let sol = problem.solve(&tol)?;
        let elapsed = start.elapsed();
        let inputs: Vec<String> = sol.inputs.iter().map(|u| format!("{:.3}", u[0])).collect();
        println!("{mode:?}: {:?} in {elapsed:.2?}, objective {:.5}", sol.status, sol.objective_value);
        println!("  inputs       [{}]", inputs.join(", "));
        println!("  worst output {:.5} (limit {})", problem.worst_output(&sol.decision)?, mpc.output_limit);
        println!("  cuts         {}", sol.generated_cuts);
    }
    Ok(())
}
