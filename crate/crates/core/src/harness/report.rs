//! CSV tables of a Monte Carlo batch and the summary derived from them.
//!
//! The summary is computed from the tables alone, so `report` on a saved
//! directory reproduces the numbers printed by the batch.

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{ExperimentConfig, Mode, PairedRun, TrajectoryLog};
use crate::error::{Error, Result};

pub const COSTS_FILE: &str = "costs.csv";
pub const DELTA_Y_FILE: &str = "delta_y.csv";
pub const DELTA_U_FILE: &str = "delta_u.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub run: usize,
    pub mode: Mode,
    pub cost: f64,
}

/// `delta = ‖x_baseline(t)‖ − ‖x_sparse(t)‖`; negative when the sparse
/// variant is larger in magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaRow {
    pub run: usize,
    pub t: usize,
    pub delta: f64,
}

/// Vectors are written as space-separated entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub run: usize,
    pub mode: Mode,
    pub t: usize,
    pub y: String,
    pub u: String,
    /// `p − E·y(t)`; negative on a constraint violation.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub run: usize,
    pub mode: Mode,
    pub t: usize,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tables {
    pub costs: Vec<CostRow>,
    pub delta_y: Vec<DeltaRow>,
    pub delta_u: Vec<DeltaRow>,
    pub trajectories: Vec<TrajectoryRow>,
    pub failures: Vec<FailureRow>,
}

fn join(v: &DVector<f64>) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn trajectory_rows(log: &TrajectoryLog, cfg: &ExperimentConfig) -> Vec<TrajectoryRow> {
    let e = DVector::from_row_slice(&cfg.controller.output_row);
    log.steps
        .iter()
        .map(|s| TrajectoryRow {
            run: log.run,
            mode: log.mode,
            t: s.t,
            y: join(&s.output),
            u: s.input.as_ref().map(join).unwrap_or_default(),
            margin: cfg.controller.output_limit - e.dot(&s.output),
        })
        .collect()
}

impl Tables {
    /// Adds the cost and trajectory rows of one log.
    pub fn push_log(&mut self, log: &TrajectoryLog, cfg: &ExperimentConfig) {
        self.costs.push(CostRow {
            run: log.run,
            mode: log.mode,
            cost: log.total_cost,
        });
        self.trajectories.extend(trajectory_rows(log, cfg));
    }

    /// Deltas use outputs at `t = 1..=t_end` and inputs at `t = 0..t_end`,
    /// from runs where both modes completed.
    pub fn from_runs(runs: &[PairedRun], cfg: &ExperimentConfig) -> Self {
        let mut tables = Tables::default();
        for pair in runs {
            for log in [&pair.sparse, &pair.baseline].into_iter().flatten() {
                tables.push_log(log, cfg);
            }
            for f in pair.failures() {
                tables.failures.push(FailureRow {
                    run: f.run,
                    mode: f.mode,
                    t: f.t,
                    error: f.error.to_string(),
                });
            }
            if let Some((sparse, baseline)) = pair.both() {
                for (s, b) in sparse.steps.iter().zip(&baseline.steps).skip(1) {
                    tables.delta_y.push(DeltaRow {
                        run: pair.run,
                        t: s.t,
                        delta: b.output.norm() - s.output.norm(),
                    });
                }
                for (s, b) in sparse.steps.iter().zip(&baseline.steps) {
                    if let (Some(us), Some(ub)) = (&s.input, &b.input) {
                        tables.delta_u.push(DeltaRow {
                            run: pair.run,
                            t: s.t,
                            delta: ub.norm() - us.norm(),
                        });
                    }
                }
            }
        }
        tables
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::Config(format!("missing table {}", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

/// Delta tables carry a file-specific name for the value column.
fn write_deltas(path: &Path, column: &str, rows: &[DeltaRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run", "t", column])?;
    for r in rows {
        w.serialize((r.run, r.t, r.delta))?;
    }
    w.flush()?;
    Ok(())
}

fn read_deltas(path: &Path) -> Result<Vec<DeltaRow>> {
    read_csv::<(usize, usize, f64)>(path)
        .map(|rows| rows.into_iter().map(|(run, t, delta)| DeltaRow { run, t, delta }).collect())
}

pub fn write_tables(dir: &Path, tables: &Tables) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join(COSTS_FILE), &tables.costs)?;
    write_deltas(&dir.join(DELTA_Y_FILE), "delta_abs_y", &tables.delta_y)?;
    write_deltas(&dir.join(DELTA_U_FILE), "delta_abs_u", &tables.delta_u)?;
    write_csv(&dir.join(TRAJECTORIES_FILE), &tables.trajectories)?;
    write_csv(&dir.join(FAILURES_FILE), &tables.failures)?;
    Ok(())
}

pub fn read_tables(dir: &Path) -> Result<Tables> {
    Ok(Tables {
        costs: read_csv(&dir.join(COSTS_FILE))?,
        delta_y: read_deltas(&dir.join(DELTA_Y_FILE))?,
        delta_u: read_deltas(&dir.join(DELTA_U_FILE))?,
        trajectories: read_csv(&dir.join(TRAJECTORIES_FILE))?,
        failures: read_csv(&dir.join(FAILURES_FILE))?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// Runs in which both modes completed.
    pub paired_runs: usize,
    pub failures: usize,
    pub mean_cost_sparse: f64,
    pub mean_cost_baseline: f64,
    /// `1 − mean_sparse / mean_baseline`.
    pub cost_reduction: f64,
    /// Fraction of paired runs with a strictly lower sparse cost.
    pub dominance: f64,
    pub delta_y_count: usize,
    pub delta_y_negative: f64,
    pub delta_u_count: usize,
    pub delta_u_negative: f64,
    pub violation_rate_sparse: f64,
    pub violation_rate_baseline: f64,
}

fn fraction(n: usize, d: usize) -> f64 {
    if d == 0 {
        f64::NAN
    } else {
        n as f64 / d as f64
    }
}

/// Sum in run order divided by the count.
fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fails when no run completed in both modes.
pub fn summarize(tables: &Tables) -> Result<Summary> {
    use std::collections::BTreeMap;
    let mut by_run: BTreeMap<usize, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for c in &tables.costs {
        let e = by_run.entry(c.run).or_default();
        match c.mode {
            Mode::Sparse => e.0 = Some(c.cost),
            Mode::Baseline => e.1 = Some(c.cost),
        }
    }
    let pairs: Vec<(f64, f64)> = by_run.values().filter_map(|(s, b)| Some(((*s)?, (*b)?))).collect();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no run completed in both modes".into()));
    }
    let sparse: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let baseline: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (ms, mb) = (mean(&sparse), mean(&baseline));
    let negative = |rows: &[DeltaRow]| fraction(rows.iter().filter(|r| r.delta < 0.0).count(), rows.len());
    let violations = |mode: Mode| {
        let rows: Vec<&TrajectoryRow> = tables.trajectories.iter().filter(|r| r.mode == mode).collect();
        fraction(rows.iter().filter(|r| r.margin < 0.0).count(), rows.len())
    };
    Ok(Summary {
        paired_runs: pairs.len(),
        failures: tables.failures.len(),
        mean_cost_sparse: ms,
        mean_cost_baseline: mb,
        cost_reduction: 1.0 - ms / mb,
        dominance: fraction(pairs.iter().filter(|(s, b)| s < b).count(), pairs.len()),
        delta_y_count: tables.delta_y.len(),
        delta_y_negative: negative(&tables.delta_y),
        delta_u_count: tables.delta_u.len(),
        delta_u_negative: negative(&tables.delta_u),
        violation_rate_sparse: violations(Mode::Sparse),
        violation_rate_baseline: violations(Mode::Baseline),
    })
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "paired runs              {}", self.paired_runs)?;
        writeln!(f, "failed runs              {}", self.failures)?;
        writeln!(f, "mean cost (sparse)       {:.6}", self.mean_cost_sparse)?;
        writeln!(f, "mean cost (baseline)     {:.6}", self.mean_cost_baseline)?;
        writeln!(f, "relative cost reduction  {:.2}%", 100.0 * self.cost_reduction)?;
        writeln!(f, "runs with lower cost     {:.2}%", 100.0 * self.dominance)?;
        writeln!(
            f,
            "delta |y| < 0            {:.2}% of {} steps",
            100.0 * self.delta_y_negative,
            self.delta_y_count
        )?;
        writeln!(
            f,
            "delta |u| < 0            {:.2}% of {} steps",
            100.0 * self.delta_u_negative,
            self.delta_u_count
        )?;
        writeln!(f, "violations (sparse)      {:.4}%", 100.0 * self.violation_rate_sparse)?;
        writeln!(f, "violations (baseline)    {:.4}%", 100.0 * self.violation_rate_baseline)
    }
}

pub fn write_report(dir: &Path, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORT_FILE), summary.to_string())?;
    Ok(())
}
