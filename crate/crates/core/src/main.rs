use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparse_ampc::conic::SolverTolerances;
use sparse_ampc::harness::{
    draw_disturbances, monte_carlo, offline_phase, read_tables, run_closed_loop, summarize, write_report,
    write_tables, ClosedLoopOptions, ExperimentConfig, Mode, PairedRun, Tables,
};
use sparse_ampc::recovery::{read_fsps, write_fsps, Fsps};
use sparse_ampc::Error;

/// Name of the sparse-set artifact inside an output directory.
const FSPS_FILE: &str = "fsps.txt";
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "sparse-ampc", version, about = "Adaptive stochastic MPC for sparse FIR systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the impulse response offline and write the sparse parameter set.
    Offline(Common),
    /// Run one closed loop.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "sparse")]
        mode: Mode,
        /// Run index selecting the disturbance stream.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Paired Monte Carlo batch of both modes.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Number of runs; defaults to the configured value.
        #[arg(long)]
        runs: Option<usize>,
        /// Also log set containment, nesting and candidate checks.
        #[arg(long)]
        checks: bool,
    },
    /// Recompute the report from the CSV tables in `--out`.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; the bundled table when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the offline seed (`offline`) or the run seed base.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Sparse-set file; `<out>/fsps.txt` when omitted.
    #[arg(long)]
    fsps: Option<PathBuf>,
    /// Write matrix-market dumps of failing programs here.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

impl Common {
    fn config(&self, offline: bool) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::table_i(),
        };
        if let Some(seed) = self.seed {
            if offline {
                cfg.experiment.offline_seed = seed;
            } else {
                cfg.experiment.run_seed_base = seed;
            }
        }
        Ok(cfg)
    }

    fn fsps_path(&self) -> PathBuf {
        self.fsps.clone().unwrap_or_else(|| self.out.join(FSPS_FILE))
    }

    fn options(&self, checks: bool) -> ClosedLoopOptions {
        ClosedLoopOptions {
            checks,
            dump_dir: self.dump_dir.clone(),
            tolerances: SolverTolerances::default(),
        }
    }
}

fn load_fsps(path: &Path) -> Result<Fsps, Error> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "sparse parameter set {} not found; run `sparse-ampc offline` first",
            path.display()
        )));
    }
    read_fsps(path)
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    let tol = SolverTolerances::default();
    match cli.command {
        Command::Offline(common) => {
            let cfg = common.config(true)?;
            let fsps = offline_phase(&cfg, &tol)?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.fsps_path();
            write_fsps(&fsps, &path)?;
            println!("{} samples, radii {:?}", fsps.samples, fsps.radii.as_slice());
            println!("wrote {}", path.display());
        }
        Command::Run { common, mode, run } => {
            let cfg = common.config(false)?;
            let fsps = match mode {
                Mode::Sparse => Some(load_fsps(&common.fsps_path())?),
                Mode::Baseline => None,
            };
            let w = draw_disturbances(&cfg, run)?;
            let log = run_closed_loop(&cfg, mode, fsps.as_ref(), &w, run, &common.options(true))
                .map_err(|f| f.error)?;
            let mut tables = Tables::default();
            tables.push_log(&log, &cfg);
            write_tables(&common.out, &tables)?;
            println!("{} run {run}: cost {}", mode.as_str(), tables.costs[0].cost);
        }
        Command::Montecarlo { common, runs, checks } => {
            let cfg = common.config(false)?;
            let fsps = load_fsps(&common.fsps_path())?;
            let n_runs = runs.unwrap_or(cfg.experiment.n_runs);
            if n_runs == 0 {
                return Err(Error::Config("`--runs` must be at least 1".into()));
            }
            let results = monte_carlo(&cfg, &fsps, n_runs, &common.options(checks))?;
            let tables = Tables::from_runs(&results, &cfg);
            write_tables(&common.out, &tables)?;
            for f in results.iter().flat_map(PairedRun::failures) {
                eprintln!("{f}");
            }
            let summary = summarize(&tables)?;
            write_report(&common.out, &summary)?;
            print!("{summary}");
            let infeasible = results
                .iter()
                .flat_map(PairedRun::failures)
                .any(|f| matches!(f.error, Error::InfeasibleAtRuntime { .. }));
            if infeasible {
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Report { out } => {
            let summary = summarize(&read_tables(&out)?)?;
            write_report(&out, &summary)?;
            print!("{summary}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::FspsFormat { .. } | Error::DimensionMismatch { .. } => EXIT_CONFIG,
                Error::InfeasibleAtRuntime { .. } => EXIT_INFEASIBLE,
                _ => 1,
            })
        }
    }
}
