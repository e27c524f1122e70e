//! Integral reinforcement learning for the continuous-time LQR.
//!
//! Policy iteration where evaluation never touches the drift matrix. For a
//! gain `K_i` the plant is driven with `u = −K_i x + ξ(t)` and, on each
//! interval `[t_k, t_k + δ]`, the integral Bellman identity
//!
//! ```text
//! x(t_k)ᵀ P_i x(t_k) − x(t_k + δ)ᵀ P_i x(t_k + δ) = ∫ (xᵀQx + uᵀRu) dt
//! ```
//!
//! is linear in `vech(P_i)`. Stacking the intervals and solving in the
//! least-squares sense gives `P_i`; the improved gain is `R⁻¹BᵀP_i`.
//!
//! The learner ([`irl_solve`], [`policy_evaluation`], [`policy_improvement`])
//! only sees `B`, `Q`, `R` and [`BellmanBatch`]es. The drift lives behind the
//! [`RolloutSource`] trait; [`FrozenLinearPlant`] is the implementation used
//! by the SDRE controller, where the "plant" is the linearization frozen at
//! the current state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{norm2, solve_least_squares, Matrix, SymmetricMatrix};
use crate::riccati::gain_from_p;

/// Rollouts whose state norm exceeds this are abandoned.
pub const ROLLOUT_DIVERGENCE_LIMIT: f64 = 1e8;
/// Evaluation attempts beyond the first when excitation is insufficient.
pub const MAX_EXCITATION_RETRIES: usize = 3;

/// Exploration signal `ξ(t)` added to the policy during data collection.
#[derive(Clone, Debug, PartialEq)]
pub enum ExplorationSpec {
    /// Zero-mean Gaussian with standard deviation `magnitude`, drawn once
    /// per sampling period and held.
    GaussianWhite { magnitude: f64, seed: u64 },
    /// `Σ aₖ sin(ωₖ t)`, applied to every input channel.
    SinusoidSum { amplitudes: Vec<f64>, frequencies: Vec<f64> },
}

impl ExplorationSpec {
    /// No excitation at all. Useful for checks on exact data; rejected by
    /// [`IrlConfig::validate`].
    pub fn silent() -> Self {
        ExplorationSpec::SinusoidSum { amplitudes: Vec::new(), frequencies: Vec::new() }
    }

    pub fn is_exciting(&self) -> bool {
        match self {
            ExplorationSpec::GaussianWhite { magnitude, .. } => *magnitude > 0.0,
            ExplorationSpec::SinusoidSum { amplitudes, .. } => amplitudes.iter().any(|a| *a != 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ExplorationSpec::GaussianWhite { magnitude, .. } if !magnitude.is_finite() => {
                Err(Error::InvalidConfig(format!("noise magnitude {magnitude} is not finite")))
            }
            ExplorationSpec::SinusoidSum { amplitudes, frequencies } if amplitudes.len() != frequencies.len() => Err(
                Error::InvalidConfig(format!("{} amplitudes for {} frequencies", amplitudes.len(), frequencies.len())),
            ),
            _ if !self.is_exciting() => {
                Err(Error::InvalidConfig("exploration signal is identically zero (no persistent excitation)".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Evaluates `Σ aₖ sin(ωₖ t)`.
pub fn sinusoid_sum(t: f64, amplitudes: &[f64], frequencies: &[f64]) -> f64 {
    amplitudes.iter().zip(frequencies).map(|(a, w)| a * (w * t).sin()).sum()
}

/// Stateful generator behind an [`ExplorationSpec`].
///
/// Gaussian draws come from a ChaCha stream keyed by `(seed, stream)`, so a
/// given pair always reproduces the same sequence. Call
/// [`ExcitationSource::sample`] once per sampling instant, in time order.
#[derive(Clone, Debug)]
pub struct ExcitationSource {
    spec: ExplorationSpec,
    inputs: usize,
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl ExcitationSource {
    pub fn new(spec: &ExplorationSpec, inputs: usize, stream: u64) -> Self {
        let (seed, normal) = match spec {
            ExplorationSpec::GaussianWhite { magnitude, seed } => (*seed, Normal::new(0.0, magnitude.abs()).ok()),
            ExplorationSpec::SinusoidSum { .. } => (0, None),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { spec: spec.clone(), inputs, rng, normal }
    }

    /// `ξ(t)`, written into `out` (length = number of inputs).
    pub fn sample_into(&mut self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.inputs);
        match &self.spec {
            ExplorationSpec::GaussianWhite { .. } => {
                let normal = self.normal.expect("normal distribution");
                for v in out.iter_mut() {
                    *v = normal.sample(&mut self.rng);
                }
            }
            ExplorationSpec::SinusoidSum { amplitudes, frequencies } => {
                out.fill(sinusoid_sum(t, amplitudes, frequencies));
            }
        }
    }

    pub fn sample(&mut self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        self.sample_into(t, &mut out);
        out
    }
}

/// Learner hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct IrlConfig {
    /// Sample points per rollout; the rollout yields `intervals − 1`
    /// Bellman equations.
    pub intervals: usize,
    /// Interval length `δ` in seconds.
    pub interval_length: f64,
    /// Sampling (and integration) period `Ts` in seconds.
    pub sample_period: f64,
    /// Policy-iteration cap.
    pub max_iterations: usize,
    /// Stop once `‖K_{i+1} − K_i‖∞` falls below this.
    pub tolerance: f64,
    pub exploration: ExplorationSpec,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            intervals: 15,
            interval_length: 0.1,
            sample_period: 0.001,
            max_iterations: 100,
            tolerance: 1e-4,
            exploration: ExplorationSpec::GaussianWhite { magnitude: 0.01, seed: 0 },
        }
    }
}

impl IrlConfig {
    /// Integration steps inside one interval.
    pub fn steps_per_interval(&self) -> usize {
        (self.interval_length / self.sample_period).round() as usize
    }

    /// Bellman equations produced by one rollout.
    pub fn equations(&self) -> usize {
        self.intervals.saturating_sub(1)
    }

    /// Checks the structural invariants for an `n`-state problem.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.validate_timing()?;
        let unknowns = SymmetricMatrix::vech_len(n);
        if self.equations() < unknowns {
            return Err(Error::InvalidConfig(format!(
                "{} Bellman equations cannot determine {unknowns} unknowns (need intervals ≥ {})",
                self.equations(),
                unknowns + 1
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        self.exploration.validate()
    }

    fn validate_timing(&self) -> Result<()> {
        let (delta, ts) = (self.interval_length, self.sample_period);
        if !(ts > 0.0 && delta > ts && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need interval_length > sample_period > 0, got δ = {delta}, Ts = {ts}"
            )));
        }
        let ratio = delta / ts;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::InvalidConfig(format!(
                "interval_length {delta} is not a multiple of sample_period {ts}"
            )));
        }
        Ok(())
    }
}

/// Quadratic basis with `φ(x)·vech(P) = xᵀPx`: `xᵢ²` on the diagonal and
/// `2xᵢxⱼ` for `i < j`, in `vech` order.
pub fn quadratic_basis(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut phi = Vec::with_capacity(SymmetricMatrix::vech_len(n));
    for i in 0..n {
        phi.push(x[i] * x[i]);
        for j in i + 1..n {
            phi.push(2.0 * x[i] * x[j]);
        }
    }
    phi
}

/// Stacked integral Bellman equations `rows · vech(P) = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct BellmanBatch {
    /// Row `k` is `φ(x(t_k)) − φ(x(t_k + δ))`.
    pub rows: Matrix,
    /// Integral cost over each interval.
    pub rhs: Vec<f64>,
}

impl BellmanBatch {
    /// Batch from `(x(t_k), x(t_k + δ))` pairs and the matching interval costs.
    pub fn from_intervals(endpoints: &[(Vec<f64>, Vec<f64>)], costs: &[f64]) -> Result<Self> {
        if endpoints.len() != costs.len() || costs.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} interval endpoints for {} costs",
                endpoints.len(),
                costs.len()
            )));
        }
        let n = endpoints[0].0.len();
        let p = SymmetricMatrix::vech_len(n);
        let mut data = Vec::with_capacity(costs.len() * p);
        for (start, end) in endpoints {
            let (start, end) = (quadratic_basis(start), quadratic_basis(end));
            data.extend(start.iter().zip(&end).map(|(a, b)| a - b));
        }
        Ok(Self { rows: Matrix::new(costs.len(), p, data)?, rhs: costs.to_vec() })
    }
}

/// Output of [`collect_rollout`].
#[derive(Clone, Debug)]
pub struct Rollout {
    pub batch: BellmanBatch,
    /// `(x(t_k), x(t_k + δ))` for every interval.
    pub endpoints: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Linear time-invariant plant frozen from an SDC model, with the cost
/// weights needed to measure the integral reward.
///
/// This is the only place the drift matrix is used.
#[derive(Clone, Debug)]
pub struct FrozenLinearPlant {
    a: Matrix,
    b: Matrix,
    q: Matrix,
    r: Matrix,
    config: IrlConfig,
    stream: u64,
}

impl FrozenLinearPlant {
    pub fn new(a: Matrix, b: Matrix, q: Matrix, r: Matrix, config: IrlConfig, stream: u64) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() || b.rows() != n || q.rows() != n || !q.is_square() || r.rows() != b.cols() {
            return Err(Error::DimensionMismatch(format!(
                "frozen plant A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols(),
                q.rows(),
                q.cols(),
                r.rows(),
                r.cols()
            )));
        }
        config.validate_timing()?;
        Ok(Self { a, b, q, r, config, stream })
    }

    pub fn config(&self) -> &IrlConfig {
        &self.config
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

/// RK4 step of `ẋ = Mx + c` with `c` held, as `x⁺ = T x + S c`:
/// `T = Σ_{j≤4} (hM)ʲ/j!` and `S = h Σ_{j≤3} (hM)ʲ/(j+1)!`.
fn rk4_linear_propagator(m: &Matrix, h: f64) -> (Matrix, Matrix) {
    let n = m.rows();
    let hm = m.scale(h);
    let hm2 = &hm * &hm;
    let hm3 = &hm2 * &hm;
    let hm4 = &hm3 * &hm;
    let id = Matrix::identity(n);
    let t = &(&(&(&id + &hm) + &hm2.scale(0.5)) + &hm3.scale(1.0 / 6.0)) + &hm4.scale(1.0 / 24.0);
    let s = &(&(&id + &hm.scale(0.5)) + &hm2.scale(1.0 / 6.0)) + &hm3.scale(1.0 / 24.0);
    (t, s.scale(h))
}

/// Start states for the intervals of one rollout: `x_start` itself, then
/// seeded random directions scaled to `‖x_start‖`.
pub fn interval_starts(x_start: &[f64], count: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    let n = x_start.len();
    let radius = norm2(x_start);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5DEE_CE66_D1CE_4E5B);
    rng.set_stream(stream);
    let mut starts = Vec::with_capacity(count);
    if count > 0 {
        starts.push(x_start.to_vec());
    }
    while starts.len() < count {
        let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = norm2(&dir);
        if len > 1e-8 {
            starts.push(dir.iter().map(|v| radius * v / len).collect());
        }
    }
    starts
}

/// Runs the frozen plant under `u = −K x + ξ(t)` and measures one Bellman
/// equation per interval.
///
/// Each of the `intervals − 1` intervals is a separate trajectory of length
/// `δ`; the first starts at `x_start`, the others at seeded directions of
/// the same norm (see [`interval_starts`]). A single trajectory is not
/// enough: when the closed-loop eigenvalues nearly coincide its quadratic
/// features become almost collinear. Integration is RK4 at the sampling
/// period with `ξ` held between samples; the interval cost is the trapezoid
/// rule on the sampling grid of `xᵀQx + uᵀRu`, using the input held over
/// each step.
pub fn collect_rollout(plant: &FrozenLinearPlant, gain: &Matrix, x_start: &[f64]) -> Result<Rollout> {
    let n = plant.a.rows();
    let m = plant.b.cols();
    if gain.rows() != m || gain.cols() != n || x_start.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "gain {}x{} and start state of length {} for a plant with n = {n}, m = {m}",
            gain.rows(),
            gain.cols(),
            x_start.len()
        )));
    }
    let cfg = &plant.config;
    let h = cfg.sample_period;
    let per_interval = cfg.steps_per_interval();
    let seed = match cfg.exploration {
        ExplorationSpec::GaussianWhite { seed, .. } => seed,
        ExplorationSpec::SinusoidSum { .. } => 0,
    };
    let starts = interval_starts(x_start, cfg.equations(), seed, plant.stream);

    let a_cl = &plant.a - &(&plant.b * gain);
    let (trans, forcing) = rk4_linear_propagator(&a_cl, h);
    let forcing = &forcing * &plant.b;

    let mut source = ExcitationSource::new(&cfg.exploration, m, plant.stream);
    let mut xi = vec![0.0; m];
    let mut u = vec![0.0; m];
    let mut next = vec![0.0; n];

    let integrand = |x: &[f64], xi: &[f64], u: &mut [f64]| -> f64 {
        let kx = gain.mul_vec(x);
        for j in 0..m {
            u[j] = xi[j] - kx[j];
        }
        plant.q.quadratic_form(x) + plant.r.quadratic_form(u)
    };

    let mut endpoints = Vec::with_capacity(starts.len());
    let mut costs = Vec::with_capacity(starts.len());
    let mut step = 0usize;
    for start in starts {
        let mut x = start.clone();
        let mut cost = 0.0;
        for _ in 0..per_interval {
            source.sample_into(step as f64 * h, &mut xi);
            let f_start = integrand(&x, &xi, &mut u);
            let tx = trans.mul_vec(&x);
            let gx = forcing.mul_vec(&xi);
            for i in 0..n {
                next[i] = tx[i] + gx[i];
            }
            std::mem::swap(&mut x, &mut next);
            let f_end = integrand(&x, &xi, &mut u);
            cost += 0.5 * h * (f_start + f_end);
            step += 1;
            if !x.iter().all(|v| v.is_finite()) || norm2(&x) > ROLLOUT_DIVERGENCE_LIMIT {
                return Err(Error::NonFiniteState);
            }
        }
        costs.push(cost);
        endpoints.push((start, x));
    }

    let batch = BellmanBatch::from_intervals(&endpoints, &costs)?;
    Ok(Rollout { batch, endpoints })
}

/// Least-squares estimate of the value matrix from a batch.
pub fn policy_evaluation(batch: &BellmanBatch, n: usize) -> Result<SymmetricMatrix> {
    if batch.rows.cols() != SymmetricMatrix::vech_len(n) {
        return Err(Error::DimensionMismatch(format!(
            "batch has {} columns, an {n}-state value matrix has {}",
            batch.rows.cols(),
            SymmetricMatrix::vech_len(n)
        )));
    }
    let theta = solve_least_squares(&batch.rows, &batch.rhs)?;
    // vech already symmetric by construction
    let p = SymmetricMatrix::from_vech(n, theta)?;
    if !p.is_positive_definite() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(p)
}

/// `K_{i+1} = R⁻¹BᵀP_i`.
pub fn policy_improvement(p: &SymmetricMatrix, b: &Matrix, r: &Matrix) -> Result<Matrix> {
    gain_from_p(b, r, p)
}

/// Anything that can run the current policy and report Bellman data.
pub trait RolloutSource {
    fn rollout(&mut self, gain: &Matrix, x_start: &[f64]) -> Result<BellmanBatch>;

    /// Switches to fresh exploration noise after an ill-conditioned batch.
    fn refresh_excitation(&mut self);
}

impl RolloutSource for FrozenLinearPlant {
    fn rollout(&mut self, gain: &Matrix, x_start: &[f64]) -> Result<BellmanBatch> {
        collect_rollout(self, gain, x_start).map(|r| r.batch)
    }

    fn refresh_excitation(&mut self) {
        self.stream = self.stream.wrapping_add(1);
    }
}

/// Result of a policy-iteration run.
#[derive(Clone, Debug, PartialEq)]
pub struct IrlSolution {
    /// Value matrix of the last evaluated policy.
    pub p: SymmetricMatrix,
    /// Improved gain `R⁻¹BᵀP`.
    pub gain: Matrix,
    pub iterations: usize,
    pub converged: bool,
    /// Evaluations repeated with fresh excitation.
    pub retries: usize,
}

/// Policy iteration from the stabilizing gain `k0`.
///
/// Hitting `max_iterations` yields [`Error::IrlNoConvergence`] carrying the
/// last iterate, which callers may still choose to apply.
pub fn irl_solve<S: RolloutSource + ?Sized>(
    source: &mut S,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    k0: &Matrix,
    x_start: &[f64],
    config: &IrlConfig,
) -> Result<IrlSolution> {
    let n = b.rows();
    config.validate(n)?;
    if q.rows() != n || k0.cols() != n || k0.rows() != b.cols() || x_start.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "B {}x{}, Q {}x{}, K0 {}x{}, start state of length {}",
            b.rows(),
            b.cols(),
            q.rows(),
            q.cols(),
            k0.rows(),
            k0.cols(),
            x_start.len()
        )));
    }

    let mut gain = k0.clone();
    let mut retries = 0;
    let mut last = None;
    for iteration in 1..=config.max_iterations {
        let mut attempt = 0;
        let p = loop {
            let batch = source.rollout(&gain, x_start)?;
            match policy_evaluation(&batch, n) {
                Ok(p) => break p,
                Err(err @ (Error::RankDeficient { .. } | Error::NotPositiveDefinite)) => {
                    if attempt == MAX_EXCITATION_RETRIES {
                        return Err(Error::SolverFailed(format!(
                            "policy evaluation failed after {} retries: {err}",
                            MAX_EXCITATION_RETRIES
                        )));
                    }
                    attempt += 1;
                    retries += 1;
                    source.refresh_excitation();
                }
                Err(err) => return Err(err),
            }
        };
        let next = policy_improvement(&p, b, r)?;
        let step = (&next - &gain).norm_inf();
        gain = next;
        let converged = step < config.tolerance;
        let solution = IrlSolution { p, gain: gain.clone(), iterations: iteration, converged, retries };
        if converged {
            return Ok(solution);
        }
        last = Some(solution);
    }
    Err(Error::IrlNoConvergence { last: Box::new(last.expect("max_iterations ≥ 1")) })
}

/// Initial state for a rollout taken at plant state `x`: the direction of
/// `x` scaled to unit norm, or the unit probe `(1/√n, …, 1/√n)` when `x` is
/// numerically zero.
///
/// The frozen plant is linear, so the value matrix does not depend on the
/// start scale; the exploration noise does not shrink with the state, so a
/// fixed scale keeps its relative size constant as the plant approaches the
/// origin.
pub fn rollout_start(x: &[f64]) -> Vec<f64> {
    let norm = norm2(x);
    if norm < 1e-6 {
        let v = 1.0 / (x.len() as f64).sqrt();
        vec![v; x.len()]
    } else {
        x.iter().map(|v| v / norm).collect()
    }
}
