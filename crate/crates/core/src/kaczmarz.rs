//! Matrix-form solvers: randomized Kaczmarz and its accelerated variant.
//!
//! The accelerated method keeps three vectors. Each step forms
//! `y = α v + (1 − α) x`, projects `y` onto the sampled row's hyperplane to
//! get the next `x`, and moves `v` towards `y` minus a `γ`-scaled copy of the
//! same correction. `(α, β, γ)` come from a [`ParamSchedule`].

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, uniform_index, SimRng};
use crate::spectral::SpectralSummary;
use crate::topology::IncidenceSystem;
use crate::trace::{should_record, ErrorMeter, Trace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl StepParams {
    /// `(1, 1, 1)`: `y = v` and both `x` and `v` follow the plain Kaczmarz
    /// trajectory started from `v⁰`.
    pub const PLAIN: StepParams = StepParams {
        alpha: 1.0,
        beta: 1.0,
        gamma: 1.0,
    };
}

/// Recurrence schedule: `γ_k` is the largest root of
/// `γ² − γ/m = (1 − γλ/m) γ_{k−1}²` with `γ_{−1} = 0`, and
/// `α_k = (m − γ_kλ) / (γ_k (m² − λ))`, `β_k = 1 − γ_kλ/m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Option1Schedule {
    m: f64,
    lambda: f64,
    prev_gamma: f64,
    k: usize,
}

impl Option1Schedule {
    pub fn new(m: usize, lambda: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("row count must be positive"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Option1Schedule {
            m: m as f64,
            lambda,
            prev_gamma: 0.0,
            k: 0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `γ_{k−1}` for the next call (`0` before the first step).
    pub fn prev_gamma(&self) -> f64 {
        self.prev_gamma
    }

    pub fn steps_taken(&self) -> usize {
        self.k
    }

    pub fn next_params(&mut self) -> StepParams {
        let gamma = next_gamma(self.prev_gamma, self.m, self.lambda);
        self.prev_gamma = gamma;
        self.k += 1;
        let (m, lambda) = (self.m, self.lambda);
        let denom = m * m - lambda;
        // m² = λ only happens for the single-row system with λ = 1. There γ is
        // stuck at 1 and α is 0/0; use its limit as λ → 1, which is 1 on the
        // first step and 1/2 afterwards.
        let alpha = if denom.abs() <= 1e-9 * m * m {
            if self.k == 1 {
                1.0
            } else {
                0.5
            }
        } else {
            (m - gamma * lambda) / (gamma * denom)
        };
        StepParams {
            alpha,
            beta: 1.0 - gamma * lambda / m,
            gamma,
        }
    }
}

/// Largest root of `γ² + γ (λ g² − 1)/m − g² = 0` for `g = γ_{k−1}`.
///
/// Uses the cancellation-free form: with `b = (λg² − 1)/m`, `c = −g²`, the
/// larger root is `(−b + √(b² − 4c))/2` when `b ≤ 0` and `2c / (−b − √·)`
/// otherwise.
pub fn next_gamma(prev: f64, m: f64, lambda: f64) -> f64 {
    let g2 = prev * prev;
    let b = (lambda * g2 - 1.0) / m;
    let c = -g2;
    let disc = (b * b - 4.0 * c).sqrt();
    if b <= 0.0 {
        (-b + disc) / 2.0
    } else {
        2.0 * c / (-b - disc)
    }
}

/// `γ² − γ/m − (1 − γλ/m) g²`, zero at an exact root.
pub fn gamma_residual(gamma: f64, prev: f64, m: f64, lambda: f64) -> f64 {
    gamma * gamma - gamma / m - (1.0 - gamma * lambda / m) * prev * prev
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamSchedule {
    Option1(Option1Schedule),
    /// Constant `(α, β, γ)`; the fixed-constant option and [`StepParams::PLAIN`].
    Fixed(StepParams),
}

impl ParamSchedule {
    pub fn next_params(&mut self) -> StepParams {
        match self {
            ParamSchedule::Option1(s) => s.next_params(),
            ParamSchedule::Fixed(p) => *p,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ParamSchedule::Option1(s) => format!("option1 lambda={}", s.lambda),
            ParamSchedule::Fixed(p) => {
                format!("fixed alpha={} beta={} gamma={}", p.alpha, p.beta, p.gamma)
            }
        }
    }
}

pub fn option1_schedule(m: usize, lambda: f64) -> Result<ParamSchedule> {
    Ok(ParamSchedule::Option1(Option1Schedule::new(m, lambda)?))
}

/// `β = 1 − √(λ⁺min(W)/ν)`, `γ = 1/√(λ⁺min(W)·ν)`, `α = 1/(1 + γν)`.
pub fn option2_params(summary: &SpectralSummary) -> StepParams {
    let lw = summary.lambda_min_plus_w;
    let nu = summary.nu;
    let gamma = (1.0 / (lw * nu)).sqrt();
    StepParams {
        alpha: 1.0 / (1.0 + gamma * nu),
        beta: (1.0 - (lw / nu).sqrt()).max(0.0),
        gamma,
    }
}

pub fn option2_schedule(summary: &SpectralSummary) -> ParamSchedule {
    ParamSchedule::Fixed(option2_params(summary))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub k: usize,
}

impl SolverState {
    pub fn new(x0: DVector<f64>) -> Self {
        SolverState {
            v: x0.clone(),
            x: x0,
            k: 0,
        }
    }
}

/// `(A_r·x − b_r) / ‖A_r‖²`.
fn row_coefficient(system: &IncidenceSystem, x: &DVector<f64>, row: usize) -> f64 {
    let a = system.a().row(row);
    let residual = (a * x)[(0, 0)] - system.b()[row];
    residual / a.norm_squared()
}

/// One Kaczmarz projection onto row `row`.
pub fn rk_step(system: &IncidenceSystem, x: &DVector<f64>, row: usize) -> DVector<f64> {
    let coef = row_coefficient(system, x, row);
    x - coef * system.a().row(row).transpose()
}

/// One accelerated step with the given parameters.
pub fn accrk_step(
    system: &IncidenceSystem,
    state: &SolverState,
    params: StepParams,
    row: usize,
) -> SolverState {
    let StepParams { alpha, beta, gamma } = params;
    let y = state
        .v
        .zip_map(&state.x, |v, x| alpha * v + (1.0 - alpha) * x);
    let coef = row_coefficient(system, &y, row);
    let t = coef * system.a().row(row).transpose();
    let x = &y - &t;
    let v = DVector::from_fn(y.len(), |l, _| {
        beta * state.v[l] + (1.0 - beta) * y[l] - gamma * t[l]
    });
    SolverState {
        x,
        v,
        k: state.k + 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Rk,
    Accelerated(ParamSchedule),
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Rk => "rk",
            Method::Accelerated(ParamSchedule::Option1(_)) => "accrk-opt1",
            Method::Accelerated(ParamSchedule::Fixed(_)) => "accrk-opt2",
        }
    }
}

/// Runs `iterations` steps with rows drawn uniformly from a generator seeded
/// with `seed`.
pub fn solve(
    system: &IncidenceSystem,
    x0: &DVector<f64>,
    method: Method,
    iterations: usize,
    seed: u64,
    record_every: usize,
) -> Trace {
    let mut rng = rng_from_seed(seed);
    let m = system.rows();
    let rows = (0..iterations).map(move |_| uniform_index(&mut rng, m));
    let mut trace = solve_rows(system, x0, method, rows, record_every, |_| {});
    trace.seed = seed;
    trace
}

/// Row stream for [`solve_rows`] drawn from an existing generator.
pub fn sample_rows(rng: &mut SimRng, m: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| uniform_index(rng, m)).collect()
}

/// Runs one step per item of `rows`. `observe` sees the state after every
/// step and once before the first.
pub fn solve_rows<I, F>(
    system: &IncidenceSystem,
    x0: &DVector<f64>,
    mut method: Method,
    rows: I,
    record_every: usize,
    mut observe: F,
) -> Trace
where
    I: IntoIterator<Item = usize>,
    I::IntoIter: ExactSizeIterator,
    F: FnMut(&SolverState),
{
    let rows = rows.into_iter();
    let last = rows.len();
    let meter = ErrorMeter::from_vector(x0);
    let mut trace = Trace::new(method.label(), 0, system.cols(), system.rows());
    let mut state = SolverState::new(x0.clone());
    observe(&state);
    trace.push(0, meter.relative_error(state.x.as_slice()));

    for row in rows {
        state = match &mut method {
            Method::Rk => {
                let x = rk_step(system, &state.x, row);
                SolverState {
                    v: x.clone(),
                    x,
                    k: state.k + 1,
                }
            }
            Method::Accelerated(schedule) => {
                let params = schedule.next_params();
                accrk_step(system, &state, params, row)
            }
        };
        observe(&state);
        trace.max_mean_drift = trace
            .max_mean_drift
            .max(meter.mean_drift(state.x.as_slice()));
        if should_record(state.k, record_every, last) {
            trace.push(state.k, meter.relative_error(state.x.as_slice()));
        }
    }
    trace
}
