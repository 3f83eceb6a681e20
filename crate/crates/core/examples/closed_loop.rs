//! Offline recovery followed by one closed-loop run in each mode under the
//! same disturbance sequence.

use std::time::Instant;

use sparse_ampc::conic::SolverTolerances;
use sparse_ampc::harness::{
    draw_disturbances, offline_phase, run_closed_loop, ClosedLoopOptions, ExperimentConfig, Mode,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::table_i();
    let tol = SolverTolerances::default();
    let start = Instant::now();
    let fsps = offline_phase(&cfg, &tol)?;
    println!("offline phase: {} samples, radius {:.4} ({:.2?})", fsps.samples, fsps.radii[0], start.elapsed());

    let run = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let w = draw_disturbances(&cfg, run)?;
    let opts = ClosedLoopOptions {
        checks: true,
        ..Default::default()
    };
    for mode in [Mode::Sparse, Mode::Baseline] {
        let start = Instant::now();
        let log = run_closed_loop(&cfg, mode, Some(&fsps), &w, run, &opts)?;
        println!("\n{} mode: cost {:.4} ({:.2?})", mode.as_str(), log.total_cost, start.elapsed());
        println!("  t        y         u   rows  cuts  |err|   truth nest  cand");
        for s in &log.steps {
            println!(
                "{:3} {:9.4} {:9.4} {:6} {:5} {:6.3} {:>6} {:>4} {:>9}",
                s.t,
                s.output[0],
                s.input.as_ref().map_or(f64::NAN, |u| u[0]),
                s.fps_rows,
                s.generated_cuts,
                s.estimate_error,
                s.truth_contained.unwrap_or(false),
                s.nesting_ok.unwrap_or(false),
                s.candidate_violation.map_or("-".to_string(), |v| format!("{v:.1e}")),
            );
        }
    }
    Ok(())
}
