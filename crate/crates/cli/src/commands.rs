//! The `run`, `compare` and `solve-are` subcommands.
//!
//! Each command writes its report to `out`, diagnostics to `err`, and
//! returns the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::{Duration, Instant};

use clap::Args;
use sdre_core::controllers::{
    conventional_sdre_run, initial_gain, irl_sdre_run, open_loop_run, CostReport, IrlRunStats,
};
use sdre_core::dynamics::{RunStatus, Trajectory};
use sdre_core::irl::{irl_solve, rollout_start, FrozenLinearPlant};
use sdre_core::riccati::{are_residual, kleinman_solve_are, KleinmanOptions};
use sdre_core::{Error, Matrix, SymmetricMatrix};

use crate::config::{parse_matrix, ConfigError, Controller, ExperimentConfig, IrlArgs};
use crate::trajectory_csv::write_trajectory;

pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_SOLVER_FAILED: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

pub fn exit_code(status: RunStatus) -> i32 {
    match status {
        RunStatus::Completed => EXIT_COMPLETED,
        RunStatus::Diverged(_) => EXIT_DIVERGED,
        RunStatus::SolverFailed(_) => EXIT_SOLVER_FAILED,
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub controller: Controller,
    pub trajectory: Trajectory,
    pub report: CostReport,
    /// Present for `irl-sdre`.
    pub stats: Option<IrlRunStats>,
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn summary_line(&self) -> String {
        let r = &self.report;
        format!(
            "controller={} cost={} final_norm={:e} steps={} status={}",
            self.controller.name(),
            r.total_cost,
            r.final_state_norm,
            r.steps,
            r.status.label()
        )
    }
}

/// Runs the configured controller on the configured system.
pub fn execute(cfg: &ExperimentConfig) -> sdre_core::Result<RunRecord> {
    let model = cfg.model();
    let settings = cfg.settings();
    let started = Instant::now();
    let (trajectory, report, stats) = match cfg.controller {
        Controller::Sdre => {
            let run = conventional_sdre_run(&model, &cfg.x0, &settings)?;
            (run.trajectory, run.report, None)
        }
        Controller::IrlSdre => {
            let run = irl_sdre_run(&model, &cfg.x0, &settings, &cfg.irl())?;
            (run.trajectory, run.report, Some(run.stats))
        }
        Controller::OpenLoop => {
            let run = open_loop_run(&model, &cfg.x0, &settings)?;
            (run.trajectory, run.report, None)
        }
    };
    Ok(RunRecord { controller: cfg.controller, trajectory, report, stats, wall_time: started.elapsed() })
}

fn stats_line(stats: &IrlRunStats) -> String {
    format!(
        "irl: gain_updates={} mean_iterations={:.3} max_iterations={} unconverged_steps={} fallback_steps={} excitation_retries={}",
        stats.gain_updates,
        stats.mean_iterations(),
        stats.max_iterations,
        stats.unconverged_steps,
        stats.fallback_steps,
        stats.excitation_retries
    )
}

/// Executes one run, writes the CSV if requested and prints the summary.
pub fn run_command(cfg: &ExperimentConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let csv = match &cfg.output_path {
        Some(path) => match File::create(path) {
            Ok(file) => Some((path, BufWriter::new(file))),
            Err(e) => {
                let _ = writeln!(err, "cannot create {}: {e}", path.display());
                return EXIT_IO;
            }
        },
        None => None,
    };
    let record = match execute(cfg) {
        Ok(record) => record,
        Err(e) => {
            let _ = writeln!(err, "run failed: {e}");
            return EXIT_SOLVER_FAILED;
        }
    };
    if let Some((path, file)) = csv {
        let model = cfg.model();
        if let Err(e) = write_trajectory(file, &record.trajectory, model.state_dim(), model.input_dim()) {
            let _ = writeln!(err, "cannot write {}: {e}", path.display());
            return EXIT_IO;
        }
    }
    if let Some(stats) = &record.stats {
        let _ = writeln!(err, "{}", stats_line(stats));
    }
    if writeln!(out, "{}", record.summary_line()).is_err() {
        return EXIT_IO;
    }
    exit_code(record.report.status)
}

/// One table row per controller.
pub fn compare_rows(cfg: &ExperimentConfig) -> Vec<(Controller, sdre_core::Result<RunRecord>)> {
    let configs: Vec<ExperimentConfig> = Controller::ALL
        .iter()
        .map(|&controller| ExperimentConfig { controller, output_path: None, ..cfg.clone() })
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || execute(c))).collect();
        configs.iter().zip(handles).map(|(c, h)| (c.controller, h.join().expect("run thread panicked"))).collect()
    })
}

/// Runs every controller with shared settings and prints a comparison table.
pub fn compare_command(cfg: &ExperimentConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if let Err(e) = cfg.irl().validate(cfg.model().state_dim()) {
        let _ = writeln!(err, "{}", ConfigError::new("irl", None, e.to_string()));
        return EXIT_USAGE;
    }
    let rows = compare_rows(cfg);
    let mut table = format!("{:<10} {:<22} {:>12} {}\n", "approach", "cost", "wall_time_s", "status");
    for (controller, result) in &rows {
        let line = match result {
            Ok(r) => format!(
                "{:<10} {:<22} {:>12.4} {}",
                controller.name(),
                r.report.total_cost.to_string(),
                r.wall_time.as_secs_f64(),
                r.report.status.label()
            ),
            Err(e) => format!("{:<10} {:<22} {:>12} error: {e}", controller.name(), "-", "-"),
        };
        table.push_str(&line);
        table.push('\n');
    }
    if out.write_all(table.as_bytes()).is_err() {
        return EXIT_IO;
    }
    EXIT_COMPLETED
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AreMethod {
    Kleinman,
    Irl,
}

/// Flags of `solve-are`. Matrices are written row by row, `1,1;1,-1`.
#[derive(Args, Clone, Debug)]
pub struct SolveAreArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a: String,
    #[arg(long, allow_hyphen_values = true)]
    pub b: String,
    /// Defaults to the identity
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    /// Defaults to the identity
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<String>,
    /// Stabilizing initial gain; pole placement at {-1, …, -n} when absent
    #[arg(long, allow_hyphen_values = true)]
    pub k0: Option<String>,
    #[arg(long, value_enum, default_value_t = AreMethod::Kleinman)]
    pub method: AreMethod,
    /// Exploration seed for the learner (falls back to $SDRE_SEED)
    #[arg(long)]
    pub seed: Option<String>,
    #[command(flatten)]
    pub irl: IrlArgs,
}

#[derive(Clone, Debug)]
pub struct AreProblem {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub k0: Option<Matrix>,
    pub method: AreMethod,
    pub learner: ExperimentConfig,
}

impl SolveAreArgs {
    pub fn resolve(&self, seed_env: Option<&str>) -> Result<AreProblem, ConfigError> {
        let matrix = |key: &str, text: &str| parse_matrix(text).map_err(|e| ConfigError::new(key, None, e));
        let a = matrix("a", &self.a)?;
        let b = matrix("b", &self.b)?;
        let n = a.rows();
        if !a.is_square() || b.rows() != n {
            return Err(ConfigError::new(
                "b",
                None,
                format!("A is {}x{}, B is {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
            ));
        }
        let q = self.q.as_deref().map(|t| matrix("q", t)).transpose()?.unwrap_or_else(|| Matrix::identity(n));
        let r = self.r.as_deref().map(|t| matrix("r", t)).transpose()?.unwrap_or_else(|| Matrix::identity(b.cols()));
        if q.rows() != n || !q.is_square() {
            return Err(ConfigError::new("q", None, format!("expected {n}x{n}")));
        }
        if r.rows() != b.cols() || !r.is_square() {
            return Err(ConfigError::new("r", None, format!("expected {0}x{0}", b.cols())));
        }
        let k0 = self.k0.as_deref().map(|t| matrix("k0", t)).transpose()?;
        if let Some(k) = &k0 {
            if k.rows() != b.cols() || k.cols() != n {
                return Err(ConfigError::new("k0", None, format!("expected {}x{n}", b.cols())));
            }
        }
        let mut learner = ExperimentConfig::default();
        if let Some(value) = seed_env {
            learner.set("seed", value, None).map_err(|e| ConfigError::new(crate::config::SEED_ENV, None, e.message))?;
        }
        if let Some(seed) = &self.seed {
            learner.set("seed", seed, None)?;
        }
        self.irl.apply(&mut learner)?;
        if self.method == AreMethod::Irl {
            learner.irl().validate(n).map_err(|e| ConfigError::new("irl", None, e.to_string()))?;
        }
        Ok(AreProblem { a, b, q, r, k0, method: self.method, learner })
    }
}

#[derive(Clone, Debug)]
pub struct AreReport {
    pub p: SymmetricMatrix,
    pub gain: Matrix,
    pub residual: f64,
    pub iterations: usize,
}

pub fn solve_are(problem: &AreProblem) -> sdre_core::Result<AreReport> {
    let AreProblem { a, b, q, r, .. } = problem;
    let k0 = match &problem.k0 {
        Some(k) => k.clone(),
        None => initial_gain(a, b, None)?,
    };
    match problem.method {
        AreMethod::Kleinman => {
            let sol = kleinman_solve_are(a, b, q, r, &k0, &KleinmanOptions::default())?;
            Ok(AreReport { p: sol.p, gain: sol.gain, residual: sol.residual, iterations: sol.iterations })
        }
        AreMethod::Irl => {
            let config = problem.learner.irl();
            let mut plant = FrozenLinearPlant::new(a.clone(), b.clone(), q.clone(), r.clone(), config.clone(), 0)?;
            let start = rollout_start(&vec![0.0; a.rows()]);
            let sol = irl_solve(&mut plant, b, q, r, &k0, &start, &config)?;
            let residual = are_residual(a, b, q, r, &sol.p)?;
            Ok(AreReport { p: sol.p, gain: sol.gain, residual, iterations: sol.iterations })
        }
    }
}

/// Same row syntax as the input flags.
pub fn format_matrix(m: &Matrix) -> String {
    (0..m.rows())
        .map(|i| m.row_slice(i).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn solve_are_command(problem: &AreProblem, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match solve_are(problem) {
        Ok(report) => {
            let text = format!(
                "method={} iterations={}\nP={}\nK={}\nresidual={:e}\n",
                match problem.method {
                    AreMethod::Kleinman => "kleinman",
                    AreMethod::Irl => "irl",
                },
                report.iterations,
                format_matrix(&report.p.to_matrix()),
                format_matrix(&report.gain),
                report.residual
            );
            if out.write_all(text.as_bytes()).is_err() {
                return EXIT_IO;
            }
            EXIT_COMPLETED
        }
        Err(e) => {
            let _ = writeln!(err, "solve-are failed: {e}");
            match e {
                Error::DimensionMismatch(_) | Error::InvalidConfig(_) => EXIT_USAGE,
                _ => EXIT_SOLVER_FAILED,
            }
        }
    }
}
