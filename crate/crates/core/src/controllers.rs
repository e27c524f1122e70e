//! Closed-loop strategies: conventional SDRE, IRL-based SDRE and open loop.
//!
//! Both SDRE variants freeze `A(x)`, `B(x)`, `Q(x)`, `R(x)` at every grid
//! point, compute a gain for that linear problem and hold `u = −Kx` until
//! the next grid point. They differ only in how the gain is found: a
//! Newton-Kleinman ARE solve, or policy iteration on data from the frozen
//! linearization.

use crate::dynamics::{
    simulate_closed_loop, GainDiagnostics, GainUpdate, RunStatus, SdcModel, SimulationSettings, Trajectory,
};
use crate::error::{Error, Result};
use crate::irl::{irl_solve, rollout_start, FrozenLinearPlant, IrlConfig};
use crate::linalg::{is_hurwitz, norm2, Matrix};
use crate::riccati::{ackermann_gain, default_poles, kleinman_solve_are, KleinmanOptions};

/// A run is aborted after this many gain failures in a row.
pub const MAX_CONSECUTIVE_FAILURES: usize = 10;

/// Integrated performance of one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostReport {
    /// Trapezoid integral of `xᵀQx + uᵀRu`; `+∞` for diverged runs.
    pub total_cost: f64,
    pub final_state_norm: f64,
    pub steps: usize,
    pub status: RunStatus,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: CostReport,
}

/// Per-run summary of the learner's effort.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IrlRunStats {
    pub gain_updates: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    /// Steps whose gain came from an iteration-capped (unconverged) solve.
    pub unconverged_steps: usize,
    /// Steps that reused a stale gain after a failure.
    pub fallback_steps: usize,
    /// Evaluations repeated with fresh excitation.
    pub excitation_retries: usize,
}

impl IrlRunStats {
    pub fn mean_iterations(&self) -> f64 {
        if self.gain_updates == 0 {
            0.0
        } else {
            self.total_iterations as f64 / self.gain_updates as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct IrlRunOutput {
    pub trajectory: Trajectory,
    pub report: CostReport,
    pub stats: IrlRunStats,
}

/// Trapezoid rule over the sample grid on `xᵀQ(x)x + uᵀR(x)u`.
pub fn accumulate_cost(trajectory: &Trajectory, model: &SdcModel) -> CostReport {
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for s in &trajectory.samples {
        let integrand = model.running_cost(&s.x, &s.u);
        if let Some((t_prev, f_prev)) = prev {
            total += 0.5 * (s.t - t_prev) * (f_prev + integrand);
        }
        prev = Some((s.t, integrand));
    }
    if let RunStatus::Diverged(_) = trajectory.status {
        total = f64::INFINITY;
    }
    CostReport {
        total_cost: total,
        final_state_norm: trajectory.last().map_or(0.0, |s| norm2(&s.x)),
        steps: trajectory.steps(),
        status: trajectory.status,
    }
}

/// Stabilizing seed gain for a frozen `(A, B)`: the previous gain when it
/// still stabilizes, otherwise pole placement at `{−1, …, −n}` (single
/// input), otherwise zero when `A` itself is Hurwitz.
pub fn initial_gain(a: &Matrix, b: &Matrix, previous: Option<&Matrix>) -> Result<Matrix> {
    if let Some(k) = previous {
        if is_hurwitz(&(a - &(b * k))) {
            return Ok(k.clone());
        }
    }
    if b.cols() == 1 {
        let k = ackermann_gain(a, b, &default_poles(a.rows()))?;
        if is_hurwitz(&(a - &(b * &k))) {
            return Ok(k);
        }
    }
    if is_hurwitz(a) {
        return Ok(Matrix::zeros(b.cols(), a.rows()));
    }
    Err(Error::NotStabilizing)
}

/// Linear problem frozen at one state.
#[derive(Clone, Debug)]
pub struct FrozenProblem {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
}

impl FrozenProblem {
    pub fn at(model: &SdcModel, x: &[f64]) -> Self {
        Self { a: model.a(x), b: model.b(x), q: model.q(x), r: model.r(x) }
    }
}

/// Warm-started per-state gain synthesis with the failure policy: a failed
/// solve reuses the last good gain, and [`MAX_CONSECUTIVE_FAILURES`] in a
/// row abort the run.
struct GainSchedule<'m, S> {
    model: &'m SdcModel,
    solve: S,
    last_gain: Option<Matrix>,
    failures: usize,
    step: u64,
}

impl<'m, S> GainSchedule<'m, S>
where
    S: FnMut(&FrozenProblem, &Matrix, &[f64], u64) -> Result<(Matrix, GainDiagnostics)>,
{
    fn new(model: &'m SdcModel, solve: S) -> Self {
        Self { model, solve, last_gain: None, failures: 0, step: 0 }
    }

    fn gain_at(&mut self, x: &[f64]) -> Result<GainUpdate> {
        let step = self.step;
        self.step += 1;
        let problem = FrozenProblem::at(self.model, x);
        let attempt = initial_gain(&problem.a, &problem.b, self.last_gain.as_ref())
            .and_then(|k0| (self.solve)(&problem, &k0, x, step));
        match attempt {
            Ok((gain, diagnostics)) => {
                self.failures = 0;
                self.last_gain = Some(gain.clone());
                Ok(GainUpdate::new(gain, diagnostics))
            }
            Err(err) => {
                self.failures += 1;
                match &self.last_gain {
                    Some(gain) if self.failures < MAX_CONSECUTIVE_FAILURES => Ok(GainUpdate::new(
                        gain.clone(),
                        GainDiagnostics { iterations: 0, converged: false, fallback: true },
                    )),
                    _ => {
                        Err(Error::SolverFailed(format!("no gain after {} consecutive failures: {err}", self.failures)))
                    }
                }
            }
        }
    }
}

fn check_initial_state(model: &SdcModel, x0: &[f64]) -> Result<()> {
    if x0.len() != model.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, model {} has {} states",
            x0.len(),
            model.name(),
            model.state_dim()
        )));
    }
    Ok(())
}

/// SDRE with a Newton-Kleinman ARE solve at every grid point.
pub fn conventional_sdre_run(model: &SdcModel, x0: &[f64], settings: &SimulationSettings) -> Result<RunOutput> {
    check_initial_state(model, x0)?;
    let options = KleinmanOptions::default();
    let mut schedule = GainSchedule::new(model, |p: &FrozenProblem, k0: &Matrix, _: &[f64], _| {
        let sol = kleinman_solve_are(&p.a, &p.b, &p.q, &p.r, k0, &options)?;
        Ok((sol.gain, GainDiagnostics { iterations: sol.iterations, converged: true, fallback: false }))
    });
    let trajectory = simulate_closed_loop(model, |_, x| schedule.gain_at(x), x0, settings)?;
    let report = accumulate_cost(&trajectory, model);
    Ok(RunOutput { trajectory, report })
}

/// SDRE where each per-state gain is learned by integral reinforcement
/// learning on the frozen linearization. Rollouts are virtual: the
/// physical plant only advances under the learned gain.
///
/// A solve that hits the iteration cap still contributes its last gain.
pub fn irl_sdre_run(
    model: &SdcModel,
    x0: &[f64],
    settings: &SimulationSettings,
    config: &IrlConfig,
) -> Result<IrlRunOutput> {
    check_initial_state(model, x0)?;
    config.validate(model.state_dim())?;
    let mut stats = IrlRunStats::default();
    let trajectory = {
        let stats = &mut stats;
        let mut schedule = GainSchedule::new(model, |p: &FrozenProblem, k0: &Matrix, x: &[f64], step: u64| {
            // four streams per step leave room for the excitation retries
            let mut plant = FrozenLinearPlant::new(
                p.a.clone(),
                p.b.clone(),
                p.q.clone(),
                p.r.clone(),
                config.clone(),
                step.wrapping_mul(4),
            )?;
            let solution = match irl_solve(&mut plant, &p.b, &p.q, &p.r, k0, &rollout_start(x), config) {
                Ok(sol) => sol,
                Err(Error::IrlNoConvergence { last }) => *last,
                Err(err) => return Err(err),
            };
            if !is_hurwitz(&(&p.a - &(&p.b * &solution.gain))) {
                return Err(Error::SolverFailed("learned gain does not stabilize the frozen plant".into()));
            }
            stats.gain_updates += 1;
            stats.total_iterations += solution.iterations;
            stats.max_iterations = stats.max_iterations.max(solution.iterations);
            stats.excitation_retries += solution.retries;
            if !solution.converged {
                stats.unconverged_steps += 1;
            }
            Ok((
                solution.gain,
                GainDiagnostics { iterations: solution.iterations, converged: solution.converged, fallback: false },
            ))
        });
        simulate_closed_loop(model, |_, x| schedule.gain_at(x), x0, settings)?
    };
    stats.fallback_steps = trajectory.samples.iter().filter(|s| s.diagnostics.fallback).count();
    let report = accumulate_cost(&trajectory, model);
    Ok(IrlRunOutput { trajectory, report, stats })
}

/// Uncontrolled run: `u ≡ 0`, gains recorded as zero.
pub fn open_loop_run(model: &SdcModel, x0: &[f64], settings: &SimulationSettings) -> Result<RunOutput> {
    check_initial_state(model, x0)?;
    let zero = Matrix::zeros(model.input_dim(), model.state_dim());
    let trajectory = simulate_closed_loop(
        model,
        |_, _| Ok(GainUpdate::new(zero.clone(), GainDiagnostics { iterations: 0, converged: true, fallback: false })),
        x0,
        settings,
    )?;
    let report = accumulate_cost(&trajectory, model);
    Ok(RunOutput { trajectory, report })
}
