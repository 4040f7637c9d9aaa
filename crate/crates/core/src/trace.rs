//! Per-run convergence records.

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub method: String,
    pub seed: u64,
    pub records: Vec<TracePoint>,
    /// Largest `|mean(x^k) − mean(x⁰)|` seen over every iteration of the run.
    pub max_mean_drift: f64,
    pub n: usize,
    pub m: usize,
}

impl Trace {
    pub fn new(method: impl Into<String>, seed: u64, n: usize, m: usize) -> Self {
        Trace {
            method: method.into(),
            seed,
            records: Vec::new(),
            max_mean_drift: 0.0,
            n,
            m,
        }
    }

    pub fn push(&mut self, iteration: usize, relative_error: f64) {
        self.records.push(TracePoint {
            iteration,
            relative_error,
        });
    }

    pub fn last(&self) -> Option<&TracePoint> {
        self.records.last()
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|p| p.relative_error)
    }

    /// First recorded iteration whose error is at or below `tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|p| p.relative_error <= tol)
            .map(|p| p.iteration)
    }
}

/// `1` for `n ≤ 100`, otherwise one epoch of `m` iterations.
pub fn default_record_every(n: usize, m: usize) -> usize {
    if n <= 100 {
        1
    } else {
        m.max(1)
    }
}

pub(crate) fn should_record(k: usize, record_every: usize, last: usize) -> bool {
    k % record_every.max(1) == 0 || k == last
}

/// Tracks `‖x − c̄·1‖² / ‖x⁰ − c̄·1‖²` and the drift of the mean.
#[derive(Debug, Clone, Copy)]
pub struct ErrorMeter {
    mean: f64,
    initial: f64,
}

impl ErrorMeter {
    pub fn new(x0: &[f64]) -> Self {
        let mean = mean(x0);
        let initial = sq_dist_to(x0, mean);
        ErrorMeter { mean, initial }
    }

    pub fn from_vector(x0: &DVector<f64>) -> Self {
        Self::new(x0.as_slice())
    }

    /// The consensus value `c̄`.
    pub fn target(&self) -> f64 {
        self.mean
    }

    /// Zero when `x⁰` is already at consensus.
    pub fn relative_error(&self, x: &[f64]) -> f64 {
        if self.initial == 0.0 {
            return 0.0;
        }
        sq_dist_to(x, self.mean) / self.initial
    }

    pub fn mean_drift(&self, x: &[f64]) -> f64 {
        (mean(x) - self.mean).abs()
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sq_dist_to(x: &[f64], c: f64) -> f64 {
    x.iter().map(|v| (v - c) * (v - c)).sum()
}
