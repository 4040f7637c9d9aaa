//! The flat `key=value` experiment file.
//!
//! ```text
//! # cycle of 30 nodes, all four protocols
//! topology = cycle
//! n = 30
//! methods = pairwise, shb, accgossip-opt1, accgossip-opt2
//! trials = 100
//! rounds = 3000
//! seed = 1
//! csv = out/cycle30.csv
//! svg = out/cycle30.svg
//! ```
//!
//! Blank lines and `#` comments (whole-line or trailing) are ignored. Unknown keys are errors.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gossip::{MethodRegistry, DEFAULT_MOMENTUM_BETA};
use crate::topology::{make_cycle, make_grid, make_rgg, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Cycle { n: usize },
    Grid { side: usize },
    Rgg { n: usize, graph_seed: u64 },
}

impl Topology {
    pub fn build(&self) -> Result<Graph> {
        match *self {
            Topology::Cycle { n } => make_cycle(n),
            Topology::Grid { side } => make_grid(side),
            Topology::Rgg { n, graph_seed } => make_rgg(n, graph_seed),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Topology::Cycle { n } => format!("cycle n={n}"),
            Topology::Grid { side } => format!("grid {side}x{side}"),
            Topology::Rgg { n, .. } => format!("rgg n={n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub methods: Vec<String>,
    pub trials: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Recurrence-schedule λ; defaults to `λ⁺min(AᵀA)`.
    pub lambda: Option<f64>,
    /// Lyapunov weight μ; defaults to `λ⁺min(W)`.
    pub mu: Option<f64>,
    pub momentum_beta: f64,
    /// Defaults to [`crate::trace::default_record_every`].
    pub record_every: Option<usize>,
    pub verify: bool,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(topology: Topology) -> Self {
        ExperimentConfig {
            topology,
            methods: MethodRegistry::builtin()
                .names()
                .map(String::from)
                .collect(),
            trials: 1,
            rounds: 0,
            seed: 0,
            lambda: None,
            mu: None,
            momentum_beta: DEFAULT_MOMENTUM_BETA,
            record_every: None,
            verify: true,
            csv: None,
            svg: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), &[])
    }

    /// Parses `text`, then applies `overrides` (each `key=value`) on top.
    pub fn parse(text: &str, origin: &str, overrides: &[String]) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            raw.set_line(line).map_err(|msg| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg,
            })?;
        }
        for o in overrides {
            raw.set_line(o)
                .map_err(|msg| Error::invalid(format!("override `{o}`: {msg}")))?;
        }
        raw.finish()
    }

    /// Checks method names against `registry`.
    pub fn validate(&self, registry: &MethodRegistry) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods configured"));
        }
        for m in &self.methods {
            if !registry.contains(m) {
                let known: Vec<_> = registry.names().collect();
                return Err(Error::invalid(format!(
                    "unknown method `{m}` (known: {})",
                    known.join(", ")
                )));
            }
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be positive"));
        }
        if self.record_every == Some(0) {
            return Err(Error::invalid("record_every must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum_beta) {
            return Err(Error::invalid("momentum_beta must lie in [0, 1)"));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::invalid("lambda must be positive"));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::invalid("mu must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct RawConfig {
    topology: Option<String>,
    n: Option<usize>,
    side: Option<usize>,
    graph_seed: Option<u64>,
    methods: Option<Vec<String>>,
    trials: Option<usize>,
    rounds: Option<usize>,
    seed: Option<u64>,
    lambda: Option<f64>,
    mu: Option<f64>,
    momentum_beta: Option<f64>,
    record_every: Option<usize>,
    verify: Option<bool>,
    csv: Option<PathBuf>,
    svg: Option<PathBuf>,
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

impl RawConfig {
    fn set_line(&mut self, line: &str) -> std::result::Result<(), String> {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("expected `key = value`, got `{line}`"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "topology" => self.topology = Some(value.to_ascii_lowercase()),
            "n" => self.n = Some(num(key, value)?),
            "side" => self.side = Some(num(key, value)?),
            "graph_seed" => self.graph_seed = Some(num(key, value)?),
            "methods" => {
                self.methods = Some(
                    value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect(),
                )
            }
            "trials" => self.trials = Some(num(key, value)?),
            "rounds" => self.rounds = Some(num(key, value)?),
            "seed" => self.seed = Some(num(key, value)?),
            "lambda" => self.lambda = Some(num(key, value)?),
            "mu" => self.mu = Some(num(key, value)?),
            "momentum_beta" => self.momentum_beta = Some(num(key, value)?),
            "record_every" => self.record_every = Some(num(key, value)?),
            "verify" => self.verify = Some(num(key, value)?),
            "csv" => self.csv = Some(PathBuf::from(value)),
            "svg" => self.svg = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn finish(self) -> Result<ExperimentConfig> {
        let seed = self.seed.unwrap_or(0);
        let topology = match self.topology.as_deref() {
            Some("cycle") => Topology::Cycle {
                n: self.n.ok_or_else(|| Error::invalid("cycle needs `n`"))?,
            },
            Some("grid") => Topology::Grid {
                side: self
                    .side
                    .ok_or_else(|| Error::invalid("grid needs `side`"))?,
            },
            Some("rgg") => Topology::Rgg {
                n: self.n.ok_or_else(|| Error::invalid("rgg needs `n`"))?,
                graph_seed: self.graph_seed.unwrap_or(seed),
            },
            Some(other) => return Err(Error::invalid(format!("unknown topology `{other}`"))),
            None => return Err(Error::invalid("missing `topology`")),
        };
        let mut cfg = ExperimentConfig::new(topology);
        cfg.seed = seed;
        if let Some(m) = self.methods {
            cfg.methods = m;
        }
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        cfg.rounds = self
            .rounds
            .ok_or_else(|| Error::invalid("missing `rounds`"))?;
        cfg.lambda = self.lambda;
        cfg.mu = self.mu;
        cfg.momentum_beta = self.momentum_beta.unwrap_or(cfg.momentum_beta);
        cfg.record_every = self.record_every;
        cfg.verify = self.verify.unwrap_or(true);
        cfg.csv = self.csv;
        cfg.svg = self.svg;
        Ok(cfg)
    }
}
