//! Multi-trial experiments and their verification.
//!
//! Trials fan out over rayon. Each trial's randomness comes from streams
//! derived from the master seed by trial index (and method id for edge
//! activations), so results do not depend on scheduling.

mod bounds;
mod output;

pub use bounds::{
    conservation_report, verify_option1_bound, verify_option2_bound, verify_rk_bound, BoundCheck,
    BoundReport, ROUNDOFF_FLOOR,
};
pub use output::{emit_csv, emit_svg, render_csv, render_svg};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gossip::{drive, sample_activations, GossipMethod, MethodContext, MethodRegistry};
use crate::rng::{derive_rng, SimRng, Stream};
use crate::spectral::{rates, summarize, PsdSpectrum, SpectralSummary, TheoreticalRates};
use crate::topology::{build_system, Graph, IncidenceSystem};
use crate::trace::{default_record_every, ErrorMeter, Trace, TracePoint};

/// Number of Lyapunov samples kept per trial (evenly strided over the run).
pub const LYAPUNOV_SAMPLES: usize = 500;

/// A topology with its incidence system and spectral data.
#[derive(Debug, Clone)]
pub struct Setup {
    pub label: String,
    pub graph: Graph,
    pub system: IncidenceSystem,
    pub summary: SpectralSummary,
    gram_pinv: DMatrix<f64>,
}

impl Setup {
    pub fn new(label: impl Into<String>, graph: Graph) -> Result<Self> {
        let system = build_system(&graph);
        let summary = summarize(&system)?;
        let gram_pinv = PsdSpectrum::new(&system.gram(), None)?.pseudo_inverse();
        Ok(Setup {
            label: label.into(),
            graph,
            system,
            summary,
            gram_pinv,
        })
    }

    /// `(AᵀA)†`.
    pub fn gram_pinv(&self) -> &DMatrix<f64> {
        &self.gram_pinv
    }

    /// `W† = m (AᵀA)†`.
    pub fn w_pinv(&self) -> DMatrix<f64> {
        &self.gram_pinv * self.summary.m as f64
    }

    pub fn lyapunov(&self, mu: Option<f64>) -> Result<Lyapunov> {
        let mu = mu.unwrap_or(self.summary.lambda_min_plus_w);
        if !(mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {mu}")));
        }
        Ok(Lyapunov {
            w_pinv: self.w_pinv(),
            mu,
        })
    }

    /// `‖u‖²_{(AᵀA)†} / ‖u‖²` for `u = c − c̄·1`.
    pub fn pinv_energy_ratio(&self, c: &[f64]) -> f64 {
        let mean = crate::trace::mean(c);
        let u = DVector::from_iterator(c.len(), c.iter().map(|v| v - mean));
        let den = u.norm_squared();
        if den == 0.0 {
            return 0.0;
        }
        (u.transpose() * &self.gram_pinv * &u)[(0, 0)] / den
    }
}

/// `Ψ = ‖v − x*‖²_{W†} + ‖x − x*‖² / μ`.
#[derive(Debug, Clone)]
pub struct Lyapunov {
    w_pinv: DMatrix<f64>,
    mu: f64,
}

impl Lyapunov {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn psi(&self, x: &[f64], v: &[f64], target: f64) -> f64 {
        let dv = DVector::from_iterator(v.len(), v.iter().map(|a| a - target));
        let dx: f64 = x.iter().map(|a| (a - target) * (a - target)).sum();
        (dv.transpose() * &self.w_pinv * &dv)[(0, 0)] + dx / self.mu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub mu: f64,
    pub points: Vec<(usize, f64)>,
}

/// Mean and envelope of relative error across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTrace {
    pub method: String,
    pub seed: u64,
    pub iterations: Vec<usize>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub trials: usize,
}

impl AggregateTrace {
    /// All traces must share their recorded iterations.
    pub fn from_traces(method: &str, seed: u64, traces: &[Trace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::invalid("cannot aggregate zero traces"))?;
        let iterations: Vec<usize> = first.records.iter().map(|p| p.iteration).collect();
        let len = iterations.len();
        let mut mean = vec![0.0; len];
        let mut min = vec![f64::INFINITY; len];
        let mut max = vec![f64::NEG_INFINITY; len];
        for t in traces {
            if t.records.len() != len
                || t.records
                    .iter()
                    .zip(&iterations)
                    .any(|(p, &k)| p.iteration != k)
            {
                return Err(Error::invalid("traces record different iterations"));
            }
            for (idx, p) in t.records.iter().enumerate() {
                mean[idx] += p.relative_error;
                min[idx] = min[idx].min(p.relative_error);
                max[idx] = max[idx].max(p.relative_error);
            }
        }
        let count = traces.len() as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        Ok(AggregateTrace {
            method: method.to_string(),
            seed,
            iterations,
            mean,
            min,
            max,
            trials: traces.len(),
        })
    }

    /// The mean curve as a [`Trace`].
    pub fn mean_trace(&self, n: usize, m: usize) -> Trace {
        let mut t = Trace::new(self.method.clone(), self.seed, n, m);
        t.records = self
            .iterations
            .iter()
            .zip(&self.mean)
            .map(|(&iteration, &relative_error)| TracePoint {
                iteration,
                relative_error,
            })
            .collect();
        t
    }

    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.iterations
            .iter()
            .position(|&i| i == k)
            .map(|idx| self.mean[idx])
    }
}

/// Everything recorded for one method.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub name: String,
    pub aggregate: AggregateTrace,
    /// Per-trial Lyapunov samples (fixed-constant schedule only).
    pub lyapunov: Vec<LyapunovSeries>,
    /// Per-trial `‖c − c̄‖²_{(AᵀA)†} / ‖c − c̄‖²` (recurrence schedule only).
    pub pinv_ratios: Vec<f64>,
    /// Largest `|mean(x^k) − c̄| / ‖c‖∞` over all trials and rounds.
    pub max_relative_drift: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub setup: Setup,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodRun>,
}

impl ExperimentRun {
    pub fn aggregates(&self) -> Vec<&AggregateTrace> {
        self.methods.iter().map(|m| &m.aggregate).collect()
    }

    pub fn mean_traces(&self) -> Vec<Trace> {
        let (n, m) = (self.setup.summary.n, self.setup.summary.m);
        self.methods
            .iter()
            .map(|r| r.aggregate.mean_trace(n, m))
            .collect()
    }

    pub fn method(&self, name: &str) -> Option<&MethodRun> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Standard normal vector of length `n`.
pub fn gaussian_vector(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Initial values for `trial`.
pub fn trial_values(master_seed: u64, trial: usize, n: usize) -> Vec<f64> {
    gaussian_vector(
        &mut derive_rng(master_seed, Stream::InitialValues, trial as u64),
        n,
    )
}

pub fn method_context<'a>(setup: &'a Setup, config: &ExperimentConfig) -> MethodContext<'a> {
    MethodContext {
        summary: &setup.summary,
        lambda: config.lambda,
        momentum_beta: config.momentum_beta,
    }
}

struct TrialOutput {
    trace: Trace,
    lyapunov: Option<LyapunovSeries>,
    pinv_ratio: f64,
    relative_drift: f64,
}

/// Runs every configured method for every trial.
pub fn run_experiment(
    config: &ExperimentConfig,
    registry: &MethodRegistry,
) -> Result<ExperimentRun> {
    config.validate(registry)?;
    let graph = config.topology.build()?;
    let setup = Setup::new(config.topology.label(), graph)?;
    let ctx = method_context(&setup, config);
    // Surface bad method parameters before any simulation.
    for name in &config.methods {
        registry.create(name, &ctx)?;
    }
    let record_every = config
        .record_every
        .unwrap_or_else(|| default_record_every(setup.summary.n, setup.summary.m));
    let lyapunov = setup.lyapunov(config.mu)?;
    let stride = (config.rounds / LYAPUNOV_SAMPLES).max(1);

    let mut methods = Vec::with_capacity(config.methods.len());
    for name in &config.methods {
        let id = registry.id(name).expect("validated");
        let wants_psi = name == "accgossip-opt2";
        let outputs: Vec<TrialOutput> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let c = trial_values(config.seed, trial, setup.summary.n);
                let mut method = registry.create(name, &ctx)?;
                let mut rng = derive_rng(config.seed, Stream::Activations(id), trial as u64);
                let log = sample_activations(&setup.graph, &mut rng, config.rounds);
                let target = ErrorMeter::new(&c).target();
                let mut series = LyapunovSeries {
                    mu: lyapunov.mu(),
                    points: Vec::new(),
                };
                let mut trace = drive(
                    &setup.graph,
                    &c,
                    method.as_mut(),
                    log.edges(),
                    record_every,
                    |s| {
                        let k = s.round();
                        if wants_psi && (k % stride == 0 || k == config.rounds) {
                            series
                                .points
                                .push((k, lyapunov.psi(&s.x(), &s.v(), target)));
                        }
                        true
                    },
                )?;
                trace.seed = config.seed;
                let scale = c
                    .iter()
                    .fold(0.0_f64, |a, v| a.max(v.abs()))
                    .max(f64::MIN_POSITIVE);
                Ok(TrialOutput {
                    relative_drift: trace.max_mean_drift / scale,
                    lyapunov: wants_psi.then_some(series),
                    pinv_ratio: if name == "accgossip-opt1" {
                        setup.pinv_energy_ratio(&c)
                    } else {
                        0.0
                    },
                    trace,
                })
            })
            .collect::<Result<_>>()?;

        let traces: Vec<Trace> = outputs.iter().map(|o| o.trace.clone()).collect();
        methods.push(MethodRun {
            name: name.clone(),
            aggregate: AggregateTrace::from_traces(name, config.seed, &traces)?,
            max_relative_drift: outputs.iter().map(|o| o.relative_drift).fold(0.0, f64::max),
            pinv_ratios: if name == "accgossip-opt1" {
                outputs.iter().map(|o| o.pinv_ratio).collect()
            } else {
                Vec::new()
            },
            lyapunov: outputs.into_iter().filter_map(|o| o.lyapunov).collect(),
        });
    }
    Ok(ExperimentRun {
        setup,
        config: config.clone(),
        methods,
    })
}

/// Runs every applicable check: the plain-Kaczmarz bound for `pairwise`, the
/// recurrence-schedule bound for `accgossip-opt1`, the Lyapunov bound for
/// `accgossip-opt2`, and mean conservation for every method.
pub fn verify(run: &ExperimentRun) -> Result<Vec<BoundReport>> {
    let summary = &run.setup.summary;
    let lambda = run.config.lambda.unwrap_or(summary.lambda_min_plus_ata);
    let th: TheoreticalRates = rates(summary, lambda)?;
    let mut reports = Vec::new();
    for m in &run.methods {
        match m.name.as_str() {
            "pairwise" => reports.push(verify_rk_bound(&m.aggregate, &th)),
            "accgossip-opt1" => {
                let ratio = m.pinv_ratios.iter().sum::<f64>() / m.pinv_ratios.len().max(1) as f64;
                reports.push(verify_option1_bound(&m.aggregate, &th, ratio));
            }
            "accgossip-opt2" => reports.push(verify_option2_bound(&m.lyapunov, &th)),
            _ => {}
        }
        reports.push(conservation_report(
            &m.name,
            m.aggregate.trials,
            m.max_relative_drift,
        ));
    }
    Ok(reports)
}

/// Rounds until the relative error first drops to `tol`, for one trial.
/// `None` if `max_rounds` is not enough.
pub fn rounds_to_tolerance(
    graph: &Graph,
    c: &[f64],
    method: &mut dyn GossipMethod,
    rng: &mut SimRng,
    tol: f64,
    max_rounds: usize,
) -> Result<Option<usize>> {
    let meter = ErrorMeter::new(c);
    let mut hit = None;
    let mut x = vec![0.0; c.len()];
    let edges =
        (0..max_rounds).map(|_| graph.edge(crate::rng::uniform_index(rng, graph.edge_count())));
    // `map` over a range keeps the exact size needed by `drive`.
    drive(graph, c, method, edges, usize::MAX, |s| {
        for (dst, a) in x.iter_mut().zip(s.agents()) {
            *dst = a.x;
        }
        if meter.relative_error(&x) <= tol {
            hit = Some(s.round());
            return false;
        }
        true
    })?;
    Ok(hit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundsSummary {
    pub mean: f64,
    pub trials: usize,
    /// Trials that never reached the tolerance.
    pub unreached: usize,
}

/// Mean of [`rounds_to_tolerance`] over `trials` Gaussian starts.
pub fn mean_rounds_to_tolerance(
    setup: &Setup,
    registry: &MethodRegistry,
    ctx: &MethodContext<'_>,
    method: &str,
    trials: usize,
    tol: f64,
    max_rounds: usize,
    master_seed: u64,
) -> Result<RoundsSummary> {
    let id = registry
        .id(method)
        .ok_or_else(|| Error::invalid(format!("unknown method `{method}`")))?;
    let hits: Vec<Option<usize>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let c = trial_values(master_seed, trial, setup.summary.n);
            let mut m = registry.create(method, ctx)?;
            let mut rng = derive_rng(master_seed, Stream::Activations(id), trial as u64);
            rounds_to_tolerance(&setup.graph, &c, m.as_mut(), &mut rng, tol, max_rounds)
        })
        .collect::<Result<_>>()?;
    let reached: Vec<usize> = hits.iter().flatten().copied().collect();
    Ok(RoundsSummary {
        mean: reached.iter().sum::<usize>() as f64 / reached.len().max(1) as f64,
        trials,
        unreached: trials - reached.len(),
    })
}
