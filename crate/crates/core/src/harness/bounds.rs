use std::fmt::Write as _;

use super::{AggregateTrace, LyapunovSeries};
use crate::spectral::TheoreticalRates;

/// Values this small relative to the starting error are rounding noise; a
/// check never fails on them.
pub const ROUNDOFF_FLOOR: f64 = 1e-24;

/// Mean conservation tolerance, relative to `‖c‖∞`.
pub const CONSERVATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub k: usize,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub check: &'static str,
    pub method: String,
    pub trials: usize,
    /// Statistical slack `3/√trials` folded into every bound.
    pub envelope: f64,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Check with the largest `observed / bound`.
    pub fn worst(&self) -> Option<&BoundCheck> {
        self.checks.iter().max_by(|a, b| {
            let ra = a.observed / a.bound.max(f64::MIN_POSITIVE);
            let rb = b.observed / b.bound.max(f64::MIN_POSITIVE);
            ra.total_cmp(&rb)
        })
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "check={}", self.check);
        let _ = writeln!(out, "method={}", self.method);
        let _ = writeln!(out, "trials={}", self.trials);
        let _ = writeln!(out, "points={}", self.checks.len());
        if let Some(w) = self.worst() {
            let _ = writeln!(out, "worst_k={}", w.k);
            let _ = writeln!(out, "worst_observed={:e}", w.observed);
            let _ = writeln!(out, "worst_bound={:e}", w.bound);
        }
        let failing: Vec<String> = self.failures().map(|c| c.k.to_string()).collect();
        let _ = writeln!(out, "pass={}", self.passed());
        if !failing.is_empty() {
            const SHOWN: usize = 20;
            let more = failing.len().saturating_sub(SHOWN);
            let mut list = failing[..failing.len().min(SHOWN)].join(",");
            if more > 0 {
                let _ = write!(list, ",...(+{more})");
            }
            let _ = writeln!(out, "failing_k={list}");
        }
        out
    }
}

fn envelope(trials: usize) -> f64 {
    3.0 / (trials.max(1) as f64).sqrt()
}

fn check(k: usize, observed: f64, bound: f64, floor: f64) -> BoundCheck {
    BoundCheck {
        k,
        observed,
        bound,
        pass: observed <= bound + floor,
    }
}

/// Mean relative error against `ρ^k (1 + 3/√trials)`.
pub fn verify_rk_bound(aggregate: &AggregateTrace, rates: &TheoreticalRates) -> BoundReport {
    let eps = envelope(aggregate.trials);
    let checks = aggregate
        .iterations
        .iter()
        .zip(&aggregate.mean)
        .map(|(&k, &mean)| {
            check(
                k,
                mean,
                rates.rho.powi(k as i32) * (1.0 + eps),
                ROUNDOFF_FLOOR,
            )
        })
        .collect();
    BoundReport {
        check: "rk_bound",
        method: aggregate.method.clone(),
        trials: aggregate.trials,
        envelope: eps,
        checks,
    }
}

/// Mean relative error against
/// `4λ/(σ₁^k − σ₂^k)² · r · (1 + 3/√trials)`, where `r` is the trial mean of
/// `‖x⁰ − x*‖²_{(AᵀA)†} / ‖x⁰ − x*‖²`. At `k = 0` the bound is 1.
pub fn verify_option1_bound(
    aggregate: &AggregateTrace,
    rates: &TheoreticalRates,
    pinv_ratio: f64,
) -> BoundReport {
    let eps = envelope(aggregate.trials);
    let checks = aggregate
        .iterations
        .iter()
        .zip(&aggregate.mean)
        .map(|(&k, &mean)| {
            let bound = if k == 0 {
                1.0
            } else {
                rates.option1_transient_factor(k) * pinv_ratio
            };
            check(k, mean, bound * (1.0 + eps), ROUNDOFF_FLOOR)
        })
        .collect();
    BoundReport {
        check: "option1_bound",
        method: aggregate.method.clone(),
        trials: aggregate.trials,
        envelope: eps,
        checks,
    }
}

/// Mean `Ψ^k` against `(1 − √(λ⁺min(W)/ν))^k · mean Ψ⁰ · (1 + 3/√trials)`.
pub fn verify_option2_bound(series: &[LyapunovSeries], rates: &TheoreticalRates) -> BoundReport {
    let trials = series.len();
    let eps = envelope(trials);
    let mut checks = Vec::new();
    if let Some(first) = series.first() {
        let count = trials as f64;
        let mean_at = |idx: usize| series.iter().map(|s| s.points[idx].1).sum::<f64>() / count;
        let psi0 = mean_at(0);
        for (idx, &(k, _)) in first.points.iter().enumerate() {
            let bound = rates.option2_rate.powi(k as i32) * psi0 * (1.0 + eps);
            checks.push(check(k, mean_at(idx), bound, ROUNDOFF_FLOOR * psi0));
        }
    }
    BoundReport {
        check: "option2_lyapunov",
        method: "accgossip-opt2".to_string(),
        trials,
        envelope: eps,
        checks,
    }
}

/// `max |mean(x^k) − c̄| / ‖c‖∞ ≤ 1e-10`.
pub fn conservation_report(method: &str, trials: usize, max_relative_drift: f64) -> BoundReport {
    BoundReport {
        check: "conservation",
        method: method.to_string(),
        trials,
        envelope: 0.0,
        checks: vec![check(0, max_relative_drift, CONSERVATION_TOLERANCE, 0.0)],
    }
}
