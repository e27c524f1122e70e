//! State-dependent coefficient plants and fixed-step closed-loop simulation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};

type MatrixFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// Input-affine plant `ẋ = A(x)x + B(x)u` with running cost
/// `xᵀQ(x)x + uᵀR(x)u`.
///
/// The factorization `f(x) = A(x)x` is not unique for more than one state;
/// whichever one is stored here is the one every controller linearizes.
#[derive(Clone)]
pub struct SdcModel {
    name: String,
    n: usize,
    m: usize,
    a_of: MatrixFn,
    b_of: MatrixFn,
    q_of: MatrixFn,
    r_of: MatrixFn,
}

impl SdcModel {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        a_of: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
        b_of: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
        q_of: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
        r_of: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            m,
            a_of: Arc::new(a_of),
            b_of: Arc::new(b_of),
            q_of: Arc::new(q_of),
            r_of: Arc::new(r_of),
        }
    }

    /// Constant-coefficient (linear time-invariant) model.
    pub fn linear(name: impl Into<String>, a: Matrix, b: Matrix, q: Matrix, r: Matrix) -> Self {
        let (n, m) = (a.rows(), b.cols());
        Self::new(name, n, m, move |_| a.clone(), move |_| b.clone(), move |_| q.clone(), move |_| r.clone())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn a(&self, x: &[f64]) -> Matrix {
        (self.a_of)(x)
    }

    pub fn b(&self, x: &[f64]) -> Matrix {
        (self.b_of)(x)
    }

    pub fn q(&self, x: &[f64]) -> Matrix {
        (self.q_of)(x)
    }

    pub fn r(&self, x: &[f64]) -> Matrix {
        (self.r_of)(x)
    }

    /// `A(x)x + B(x)u`.
    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = self.a(x).mul_vec(x);
        for (d, bu) in dx.iter_mut().zip(self.b(x).mul_vec(u)) {
            *d += bu;
        }
        dx
    }

    /// `xᵀQ(x)x + uᵀR(x)u`.
    pub fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        self.q(x).quadratic_form(x) + self.r(x).quadratic_form(u)
    }
}

impl fmt::Debug for SdcModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdcModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish_non_exhaustive()
    }
}

/// Drift of the two-state benchmark, evaluated directly:
/// `ẋ₁ = x₁ − x₁³ + x₂`, `ẋ₂ = x₁ + x₁²x₂ − x₂`.
pub fn benchmark2d_drift(x: &[f64]) -> [f64; 2] {
    let (x1, x2) = (x[0], x[1]);
    [x1 - x1 * x1 * x1 + x2, x1 + x1 * x1 * x2 - x2]
}

/// The two-state nonlinear benchmark with `A(x) = [[1 − x₁², 1], [1 + x₁x₂, −1]]`,
/// `B = [1, 1]ᵀ`, `Q = I₂` and `R = 1`.
///
/// `(A(0), B)` is controllable: the controllability matrix `[B, A(0)B]` is
/// `[[1, 2], [1, 0]]` with determinant `−2`.
pub fn benchmark2d() -> SdcModel {
    SdcModel::new(
        "benchmark2d",
        2,
        1,
        |x| Matrix::from_rows(&[[1.0 - x[0] * x[0], 1.0], [1.0 + x[0] * x[1], -1.0]]),
        |_| Matrix::column(&[1.0, 1.0]),
        |_| Matrix::identity(2),
        |_| Matrix::identity(1),
    )
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(deriv: F, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(ai, bi)| ai + s * bi).collect() };
    let k1 = deriv(x);
    let k2 = deriv(&axpy(x, 0.5 * dt, &k1));
    let k3 = deriv(&axpy(x, 0.5 * dt, &k2));
    let k4 = deriv(&axpy(x, dt, &k3));
    let next: Vec<f64> = (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFiniteState)
    }
}

/// How a simulation ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Norm guard tripped (or the state overflowed) at this time.
    Diverged(f64),
    /// The gain provider gave up at this time.
    SolverFailed(f64),
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Diverged(_) => "diverged",
            RunStatus::SolverFailed(_) => "solver_failed",
        }
    }
}

/// Book-keeping returned alongside every gain.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GainDiagnostics {
    /// Solver iterations spent on this gain.
    pub iterations: usize,
    /// Whether the solver met its own stopping rule.
    pub converged: bool,
    /// The gain is a stale one reused after a solver failure.
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct GainUpdate {
    pub gain: Matrix,
    pub diagnostics: GainDiagnostics,
}

impl GainUpdate {
    pub fn new(gain: Matrix, diagnostics: GainDiagnostics) -> Self {
        Self { gain, diagnostics }
    }
}

/// One grid point of a closed-loop run. `u` and `gain` are the values held
/// over the following integration step.
#[derive(Clone, Debug)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub gain: Matrix,
    /// Trapezoid integral of the running cost from `0` to `t`.
    pub running_cost: f64,
    pub diagnostics: GainDiagnostics,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Number of integration steps taken.
    pub fn steps(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }
}

/// Grid and guard shared by every closed-loop run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationSettings {
    pub dt: f64,
    pub t_final: f64,
    /// `‖x‖₂` above which a run is declared diverged.
    pub guard: f64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { dt: 1e-3, t_final: 10.0, guard: 1e6 }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_final must be at least dt, got {}", self.t_final)));
        }
        if self.guard.is_nan() || self.guard <= 0.0 {
            return Err(Error::InvalidConfig(format!("guard must be positive, got {}", self.guard)));
        }
        Ok(())
    }

    /// Number of integration steps; `t_final` is rounded onto the `dt` grid.
    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }
}

/// Runs `ẋ = A(x)x + B(x)u` with `u = −Kx`, querying `gain_provider` at every
/// grid point and holding `u` over the step while `A` and `B` are
/// re-evaluated inside the Runge-Kutta stages.
pub fn simulate_closed_loop<G>(
    model: &SdcModel,
    mut gain_provider: G,
    x0: &[f64],
    settings: &SimulationSettings,
) -> Result<Trajectory>
where
    G: FnMut(f64, &[f64]) -> Result<GainUpdate>,
{
    settings.validate()?;
    if x0.len() != model.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, model has {} states",
            x0.len(),
            model.state_dim()
        )));
    }
    let steps = settings.steps();
    let dt = settings.dt;
    let mut samples: Vec<Sample> = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    let mut status = RunStatus::Completed;
    let mut running_cost = 0.0;
    let mut prev_integrand = 0.0;

    for k in 0..=steps {
        let t = k as f64 * dt;
        let update = match gain_provider(t, &x) {
            Ok(update) => update,
            Err(_) => {
                status = RunStatus::SolverFailed(t);
                break;
            }
        };
        let u: Vec<f64> = update.gain.mul_vec(&x).into_iter().map(|v| -v).collect();
        let integrand = model.running_cost(&x, &u);
        if k > 0 {
            running_cost += 0.5 * (t - (k - 1) as f64 * dt) * (prev_integrand + integrand);
        }
        prev_integrand = integrand;
        samples.push(Sample {
            t,
            x: x.clone(),
            u: u.clone(),
            gain: update.gain.clone(),
            running_cost,
            diagnostics: update.diagnostics,
        });
        if k == steps {
            break;
        }

        let t_next = (k + 1) as f64 * dt;
        let next = match rk4_step(|y| model.dynamics(y, &u), &x, dt) {
            Ok(next) => next,
            Err(_) => {
                status = RunStatus::Diverged(t_next);
                break;
            }
        };
        if norm2(&next) > settings.guard {
            // terminal sample carries the input that drove the state out
            let integrand = model.running_cost(&next, &u);
            if integrand.is_finite() {
                running_cost += 0.5 * (t_next - t) * (prev_integrand + integrand);
            }
            samples.push(Sample {
                t: t_next,
                x: next,
                u,
                gain: update.gain,
                running_cost,
                diagnostics: update.diagnostics,
            });
            status = RunStatus::Diverged(t_next);
            break;
        }
        x = next;
    }

    Ok(Trajectory { samples, status })
}
