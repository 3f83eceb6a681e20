//! A small paired batch of both controllers and its summary.

use std::time::Instant;

use sparse_ampc::conic::SolverTolerances;
use sparse_ampc::harness::{monte_carlo, offline_phase, summarize, ClosedLoopOptions, ExperimentConfig, Tables};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::table_i();
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let fsps = offline_phase(&cfg, &SolverTolerances::default())?;
    let start = Instant::now();
    let results = monte_carlo(&cfg, &fsps, runs, &ClosedLoopOptions::default())?;
    println!("{runs} paired runs in {:.2?}\n", start.elapsed());
    for failure in results.iter().flat_map(|r| r.failures()) {
        println!("failed: {failure}");
    }
    print!("{}", summarize(&Tables::from_runs(&results, &cfg))?);
    Ok(())
}
