//! Shrinking the feasible parameter set with bounded-noise measurements and
//! keeping its description small with redundancy pruning.

use nalgebra::DVector;
use rand::Rng;

use sparse_ampc::harness::ExperimentConfig;
use sparse_ampc::plant::{rng_stream, step};
use sparse_ampc::polytope::{add_measurement_cut, prune_redundant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::table_i();
    let truth = cfg.truth()?;
    let noise = cfg.disturbance()?;
    let mut fps = cfg.initial_fps()?;
    let mut rng = rng_stream(5, 0);
    println!("step  rows  width(h1)  width(h9)  truth inside");
    for t in 1..=40 {
        let phi = DVector::from_fn(truth.regressor_len(), |_, _| rng.random_range(-1.0..1.0));
        let y = step(&truth, &phi, &noise.sample(&mut rng))?;
        fps = add_measurement_cut(&fps, &phi, &y, noise.bounds())?;
        (fps, _) = prune_redundant(&fps, cfg.estimator.row_cap)?;
        if t % 5 == 0 {
            let (lower, upper) = fps.bounding_box()?;
            println!(
                "{t:4} {:5} {:10.4} {:10.4}  {}",
                fps.len(),
                upper[0] - lower[0],
                upper[8] - lower[8],
                fps.contains(&truth.vectorize(), 1e-9)
            );
        }
    }
    Ok(())
}
