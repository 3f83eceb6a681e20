//! Recursive least squares under closed-loop-like excitation, with the mean
//! projected onto the feasible set alone and onto its intersection with the
//! sparse set.

use nalgebra::DVector;
use rand::Rng;

use sparse_ampc::conic::SolverTolerances;
use sparse_ampc::estimator::{point_estimate_domain, project_mean};
use sparse_ampc::harness::{offline_phase, ExperimentConfig};
use sparse_ampc::plant::{rng_stream, step};
use sparse_ampc::polytope::{add_measurement_cut, prune_redundant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::table_i();
    let tol = SolverTolerances::default();
    let truth = cfg.truth()?;
    let truth_vec = truth.vectorize();
    let noise = cfg.disturbance()?;
    let fsps = offline_phase(&cfg, &tol)?;
    let shape = cfg.sparse_set_shape();

    let mut rng = rng_stream(6, 0);
    let mut fps = cfg.initial_fps()?;
    let mut rls = cfg.prior()?;
    println!("step  |mean-h|  |fps proj-h|  |sparse proj-h|");
    for t in 1..=15 {
        // Small inputs, as seen by a regulating controller.
        let phi = DVector::from_fn(truth.regressor_len(), |_, _| rng.random_range(-0.2..0.2));
        let y = step(&truth, &phi, &noise.sample(&mut rng))?;
        fps = add_measurement_cut(&fps, &phi, &y, noise.bounds())?;
        (fps, _) = prune_redundant(&fps, cfg.estimator.row_cap)?;
        rls = rls.update(&phi, &y, &noise.variance())?;
        let plain = project_mean(&rls, &point_estimate_domain(&fps, None, shape)?, &tol)?;
        let sparse = project_mean(&rls, &point_estimate_domain(&fps, Some(&fsps), shape)?, &tol)?;
        println!(
            "{t:4} {:9.4} {:13.4} {:16.4}",
            (&rls.mean - &truth_vec).norm(),
            (plain - &truth_vec).norm(),
            (sparse - &truth_vec).norm()
        );
    }
    Ok(())
}
