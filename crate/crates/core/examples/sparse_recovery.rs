//! Offline identification of the reference impulse response: random
//! excitation, noisy measurements, ℓ₁ recovery and the resulting ball.

use sparse_ampc::conic::SolverTolerances;
use sparse_ampc::harness::ExperimentConfig;
use sparse_ampc::recovery::{required_sample_count, run_offline};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::table_i();
    let truth = cfg.truth()?;
    let design = cfg.offline_design();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(cfg.experiment.offline_seed);
    let q = required_sample_count(design.sparsity, truth.regressor_len(), design.rip_delta, design.sample_constant)?;
    println!("samples for sparsity {} in dimension {}: {q}", design.sparsity, truth.regressor_len());

    let (data, fsps) = run_offline(&truth, &cfg.disturbance()?, &design, seed, &SolverTolerances::default())?;
    let truth_row = truth.coefficients().row(0);
    let center = fsps.centers.row(0);
    println!("excitation gain {:.4}", data.excitation_gain);
    println!("  k    truth  recovered");
    for k in 0..truth.regressor_len() {
        println!("{k:3} {:8.4} {:10.5}", truth_row[k], center[k]);
    }
    let error = (center - truth_row).norm();
    println!("recovery error {error:.5}, radius {:.5}", fsps.radii[0]);
    println!("truth inside the ball: {}", fsps.contains(&truth, 0.0));
    Ok(())
}
