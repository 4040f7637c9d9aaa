//! Node-centric gossip protocols.
//!
//! Every node owns two registers `(x, v)`. One edge is activated per round;
//! only its endpoints exchange values, but depending on the protocol every
//! node may update its own registers. Protocols implement [`GossipMethod`] and
//! are looked up by name in a [`MethodRegistry`].

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kaczmarz::{option1_schedule, option2_schedule, ParamSchedule, StepParams};
use crate::rng::{rng_from_seed, uniform_index, SimRng};
use crate::spectral::SpectralSummary;
use crate::topology::Graph;
use crate::trace::{should_record, ErrorMeter, Trace};

/// Default heavy-ball momentum.
pub const DEFAULT_MOMENTUM_BETA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GossipNetworkState {
    agents: Vec<AgentState>,
    graph: Graph,
    k: usize,
}

impl GossipNetworkState {
    /// Every node starts with `x = v = c_ℓ`.
    pub fn new(graph: &Graph, c: &[f64]) -> Result<Self> {
        if c.len() != graph.node_count() {
            return Err(Error::invalid(format!(
                "{} initial values for {} nodes",
                c.len(),
                graph.node_count()
            )));
        }
        Ok(GossipNetworkState {
            agents: c.iter().map(|&c| AgentState { x: c, v: c }).collect(),
            graph: graph.clone(),
            k: 0,
        })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn round(&self) -> usize {
        self.k
    }

    pub fn x(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.x).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.v).collect()
    }

    /// Zeroes every `v` register (the heavy-ball displacement memory).
    pub fn clear_v(&mut self) {
        for a in &mut self.agents {
            a.v = 0.0;
        }
    }

    fn check_edge(&self, (i, j): (usize, usize)) -> Result<()> {
        match self.graph.edge_index(i, j) {
            Some(_) if i != j => Ok(()),
            _ => Err(Error::invalid(format!(
                "({i}, {j}) is not an edge of the graph"
            ))),
        }
    }
}

/// Accelerated round: every node forms `y = α v + (1 − α) x`; the endpoints
/// of `edge` average their `y` values.
pub fn acc_gossip_round(
    state: &mut GossipNetworkState,
    params: StepParams,
    edge: (usize, usize),
) -> Result<()> {
    state.check_edge(edge)?;
    let StepParams { alpha, beta, gamma } = params;
    let (i, j) = edge;
    let y = |a: &AgentState| alpha * a.v + (1.0 - alpha) * a.x;
    let (yi, yj) = (y(&state.agents[i]), y(&state.agents[j]));

    for (l, agent) in state.agents.iter_mut().enumerate() {
        let yl = y(agent);
        let correction = if l == i {
            (yi - yj) / 2.0
        } else if l == j {
            (yj - yi) / 2.0
        } else {
            0.0
        };
        agent.x = yl - correction;
        agent.v = beta * agent.v + (1.0 - beta) * yl - gamma * correction;
    }
    state.k += 1;
    Ok(())
}

/// Plain pairwise averaging of the endpoints' `x`.
pub fn pairwise_gossip_round(state: &mut GossipNetworkState, edge: (usize, usize)) -> Result<()> {
    state.check_edge(edge)?;
    let (i, j) = edge;
    let avg = (state.agents[i].x + state.agents[j].x) / 2.0;
    state.agents[i].x = avg;
    state.agents[j].x = avg;
    state.k += 1;
    Ok(())
}

/// Heavy-ball round: `x' = P x + β (x − x_prev)` where `P` averages the
/// endpoints. The `v` register holds each node's last displacement
/// `x − x_prev`, so inactive nodes also coast by `β v`; it must start at zero
/// (see [`GossipNetworkState::clear_v`]).
pub fn shb_gossip_round(
    state: &mut GossipNetworkState,
    edge: (usize, usize),
    momentum_beta: f64,
) -> Result<()> {
    state.check_edge(edge)?;
    if !(0.0..1.0).contains(&momentum_beta) {
        return Err(Error::invalid(format!(
            "momentum beta {momentum_beta} outside [0, 1)"
        )));
    }
    let (i, j) = edge;
    let avg = (state.agents[i].x + state.agents[j].x) / 2.0;
    for (l, agent) in state.agents.iter_mut().enumerate() {
        let base = if l == i || l == j { avg } else { agent.x };
        let next = base + momentum_beta * agent.v;
        agent.v = next - agent.x;
        agent.x = next;
    }
    state.k += 1;
    Ok(())
}

/// A gossip protocol. Implementations may carry per-run state (a parameter
/// schedule), so create a fresh instance per run.
pub trait GossipMethod: Send {
    fn name(&self) -> &str;

    /// Called once on the initial state before the first round.
    fn prepare(&mut self, _state: &mut GossipNetworkState) {}

    fn round(&mut self, state: &mut GossipNetworkState, edge: (usize, usize)) -> Result<()>;

    fn describe(&self) -> String {
        self.name().to_string()
    }
}

pub struct Pairwise;

impl GossipMethod for Pairwise {
    fn name(&self) -> &str {
        "pairwise"
    }

    fn round(&mut self, state: &mut GossipNetworkState, edge: (usize, usize)) -> Result<()> {
        pairwise_gossip_round(state, edge)
    }
}

pub struct HeavyBall {
    pub beta: f64,
}

impl GossipMethod for HeavyBall {
    fn name(&self) -> &str {
        "shb"
    }

    fn prepare(&mut self, state: &mut GossipNetworkState) {
        state.clear_v();
    }

    fn round(&mut self, state: &mut GossipNetworkState, edge: (usize, usize)) -> Result<()> {
        shb_gossip_round(state, edge, self.beta)
    }

    fn describe(&self) -> String {
        format!("shb momentum_beta={}", self.beta)
    }
}

pub struct AccGossip {
    name: String,
    schedule: ParamSchedule,
}

impl AccGossip {
    pub fn new(name: impl Into<String>, schedule: ParamSchedule) -> Self {
        AccGossip {
            name: name.into(),
            schedule,
        }
    }
}

impl GossipMethod for AccGossip {
    fn name(&self) -> &str {
        &self.name
    }

    fn round(&mut self, state: &mut GossipNetworkState, edge: (usize, usize)) -> Result<()> {
        state.check_edge(edge)?;
        let params = self.schedule.next_params();
        acc_gossip_round(state, params, edge)
    }

    fn describe(&self) -> String {
        format!("{} {}", self.name, self.schedule.describe())
    }
}

/// Inputs a factory may need to parameterize a method for one topology.
#[derive(Debug, Clone, Copy)]
pub struct MethodContext<'a> {
    pub summary: &'a SpectralSummary,
    /// Recurrence-schedule λ; `None` means `λ⁺min(AᵀA)`.
    pub lambda: Option<f64>,
    pub momentum_beta: f64,
}

impl<'a> MethodContext<'a> {
    pub fn new(summary: &'a SpectralSummary) -> Self {
        MethodContext {
            summary,
            lambda: None,
            momentum_beta: DEFAULT_MOMENTUM_BETA,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(self.summary.lambda_min_plus_ata)
    }
}

pub type MethodFactory = fn(&MethodContext<'_>) -> Result<Box<dyn GossipMethod>>;

struct Entry {
    name: &'static str,
    factory: MethodFactory,
}

/// Name → factory table. Lookup order is registration order, and a
/// method's position doubles as its stable id for RNG stream derivation.
pub struct MethodRegistry {
    entries: Vec<Entry>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            entries: Vec::new(),
        }
    }

    /// `pairwise`, `shb`, `accgossip-opt1`, `accgossip-opt2`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("pairwise", |_| Ok(Box::new(Pairwise)));
        r.register("shb", |ctx| {
            if !(0.0..1.0).contains(&ctx.momentum_beta) {
                return Err(Error::invalid(format!(
                    "momentum beta {} outside [0, 1)",
                    ctx.momentum_beta
                )));
            }
            Ok(Box::new(HeavyBall {
                beta: ctx.momentum_beta,
            }))
        });
        r.register("accgossip-opt1", |ctx| {
            let lambda = ctx.lambda();
            if lambda > ctx.summary.lambda_min_plus_ata * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "lambda {lambda} exceeds lambda_min_plus_ata {}",
                    ctx.summary.lambda_min_plus_ata
                )));
            }
            let schedule = option1_schedule(ctx.summary.m, lambda)?;
            Ok(Box::new(AccGossip::new("accgossip-opt1", schedule)))
        });
        r.register("accgossip-opt2", |ctx| {
            Ok(Box::new(AccGossip::new(
                "accgossip-opt2",
                option2_schedule(ctx.summary),
            )))
        });
        r
    }

    /// Adds or replaces `name`.
    pub fn register(&mut self, name: &'static str, factory: MethodFactory) {
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => e.factory = factory,
            None => self.entries.push(Entry { name, factory }),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|e| e.name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.id(name).is_some()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(|p| p as u32)
    }

    pub fn create(&self, name: &str, ctx: &MethodContext<'_>) -> Result<Box<dyn GossipMethod>> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| {
                let known: Vec<_> = self.names().collect();
                Error::invalid(format!(
                    "unknown method `{name}` (known: {})",
                    known.join(", ")
                ))
            })?;
        (entry.factory)(ctx)
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Activation {
    pub round: usize,
    pub i: usize,
    pub j: usize,
}

/// The edge activated in each round, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivationLog {
    entries: Vec<Activation>,
}

impl ActivationLog {
    pub fn push(&mut self, round: usize, (i, j): (usize, usize)) {
        debug_assert!(self.entries.last().map_or(true, |a| a.round < round));
        self.entries.push(Activation { round, i, j });
    }

    pub fn entries(&self) -> &[Activation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.entries.iter().map(|a| (a.i, a.j))
    }

    /// Row indices of the activated edges in `graph`'s edge order.
    pub fn edge_indices(&self, graph: &Graph) -> Result<Vec<usize>> {
        self.entries
            .iter()
            .map(|a| {
                graph.edge_index(a.i, a.j).ok_or_else(|| {
                    Error::invalid(format!(
                        "round {}: ({}, {}) is not an edge",
                        a.round, a.i, a.j
                    ))
                })
            })
            .collect()
    }

    /// One `k i j` line per activation.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.entries.len() * 12);
        for a in &self.entries {
            let _ = writeln!(out, "{} {} {}", a.round, a.i, a.j);
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut log = ActivationLog::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg,
            };
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(format!("bad integer `{t}`"))))
                .collect::<Result<_>>()?;
            let [round, i, j] = nums[..] else {
                return Err(err(format!("expected `k i j`, got `{line}`")));
            };
            if log.entries.last().is_some_and(|a| a.round >= round) {
                return Err(err(format!("round {round} is not increasing")));
            }
            log.entries.push(Activation { round, i, j });
        }
        Ok(log)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Draws `rounds` edges uniformly.
pub fn sample_activations(graph: &Graph, rng: &mut SimRng, rounds: usize) -> ActivationLog {
    let mut log = ActivationLog::default();
    for k in 0..rounds {
        log.push(k, graph.edge(uniform_index(rng, graph.edge_count())));
    }
    log
}

/// Applies `method` once per edge in `edges`, recording the relative error
/// every `record_every` rounds. `observe` sees the state before the first
/// round and after each one; returning `false` stops the run early.
pub fn drive<I, F>(
    graph: &Graph,
    c: &[f64],
    method: &mut dyn GossipMethod,
    edges: I,
    record_every: usize,
    mut observe: F,
) -> Result<Trace>
where
    I: IntoIterator<Item = (usize, usize)>,
    I::IntoIter: ExactSizeIterator,
    F: FnMut(&GossipNetworkState) -> bool,
{
    let edges = edges.into_iter();
    let last = edges.len();
    let mut state = GossipNetworkState::new(graph, c)?;
    method.prepare(&mut state);
    let meter = ErrorMeter::new(c);
    let mut trace = Trace::new(method.name(), 0, graph.node_count(), graph.edge_count());
    let mut x = state.x();
    trace.push(0, meter.relative_error(&x));
    if !observe(&state) {
        return Ok(trace);
    }
    for edge in edges {
        method.round(&mut state, edge)?;
        for (dst, a) in x.iter_mut().zip(state.agents()) {
            *dst = a.x;
        }
        trace.max_mean_drift = trace.max_mean_drift.max(meter.mean_drift(&x));
        let keep_going = observe(&state);
        if should_record(state.k, record_every, last) || !keep_going {
            trace.push(state.k, meter.relative_error(&x));
        }
        if !keep_going {
            break;
        }
    }
    Ok(trace)
}

/// Samples one edge per round from a generator seeded with `seed` and runs
/// `method`.
pub fn run_protocol(
    graph: &Graph,
    c: &[f64],
    method: &mut dyn GossipMethod,
    rounds: usize,
    seed: u64,
    record_every: usize,
) -> Result<(Trace, ActivationLog)> {
    let mut rng = rng_from_seed(seed);
    let log = sample_activations(graph, &mut rng, rounds);
    let mut trace = drive(graph, c, method, log.edges(), record_every, |_| true)?;
    trace.seed = seed;
    Ok((trace, log))
}

/// Re-runs `method` on a recorded activation sequence.
pub fn replay(
    graph: &Graph,
    c: &[f64],
    method: &mut dyn GossipMethod,
    log: &ActivationLog,
    record_every: usize,
) -> Result<Trace> {
    drive(graph, c, method, log.edges(), record_every, |_| true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::summarize;
    use crate::topology::{build_system, make_cycle, make_grid};

    fn single_edge() -> Graph {
        Graph::new(2, [(0, 1)]).unwrap()
    }

    #[test]
    fn acc_round_single_edge_reaches_consensus() {
        let g = single_edge();
        let summary = summarize(&build_system(&g)).unwrap();
        let params = crate::kaczmarz::option2_params(&summary);
        let mut s = GossipNetworkState::new(&g, &[1.0, 0.0]).unwrap();
        acc_gossip_round(&mut s, params, (0, 1)).unwrap();
        for a in s.agents() {
            assert!((a.x - 0.5).abs() < 1e-7);
        }
        assert_eq!(s.round(), 1);
    }

    #[test]
    fn consensus_is_a_fixed_point() {
        let g = make_cycle(5).unwrap();
        let c = [0.7; 5];
        let params = StepParams {
            alpha: 0.3,
            beta: 0.8,
            gamma: 2.5,
        };
        let mut s = GossipNetworkState::new(&g, &c).unwrap();
        acc_gossip_round(&mut s, params, (1, 2)).unwrap();
        for a in s.agents() {
            assert!((a.x - 0.7).abs() < 1e-15 && (a.v - 0.7).abs() < 1e-15);
        }
        assert_eq!(s.round(), 1);

        let mut s = GossipNetworkState::new(&g, &c).unwrap();
        pairwise_gossip_round(&mut s, (0, 4)).unwrap();
        assert_eq!(s.x(), c);

        let mut s = GossipNetworkState::new(&g, &[0.0; 5]).unwrap();
        shb_gossip_round(&mut s, (3, 4), 0.4).unwrap();
        assert_eq!(s.x(), vec![0.0; 5]);
        assert_eq!(s.v(), vec![0.0; 5]);
    }

    #[test]
    fn acc_round_conserves_both_sums() {
        let g = make_cycle(3).unwrap();
        let c = [3.0, -1.0, 0.25];
        let total: f64 = c.iter().sum();
        let params = StepParams {
            alpha: 0.2,
            beta: 0.9,
            gamma: 1.7,
        };
        let mut s = GossipNetworkState::new(&g, &c).unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..1000 {
            let e = g.edge(uniform_index(&mut rng, 3));
            acc_gossip_round(&mut s, params, e).unwrap();
            let sx: f64 = s.x().iter().sum();
            let sv: f64 = s.v().iter().sum();
            assert!((sx - total).abs() < 1e-12, "{sx}");
            assert!((sv - total).abs() < 1e-12, "{sv}");
        }
    }

    #[test]
    fn pairwise_examples() {
        let g = single_edge();
        let mut s = GossipNetworkState::new(&g, &[1.0, 0.0]).unwrap();
        pairwise_gossip_round(&mut s, (0, 1)).unwrap();
        assert_eq!(s.x(), vec![0.5, 0.5]);
        let before = s.clone();
        pairwise_gossip_round(&mut s, (1, 0)).unwrap();
        assert_eq!(s.x(), before.x());

        let g = make_cycle(3).unwrap();
        let mut s = GossipNetworkState::new(&g, &[3.0, 0.0, 0.0]).unwrap();
        pairwise_gossip_round(&mut s, (0, 1)).unwrap();
        assert_eq!(s.x(), vec![1.5, 1.5, 0.0]);
    }

    #[test]
    fn rejects_non_edges() {
        let g = make_grid(2).unwrap();
        let mut s = GossipNetworkState::new(&g, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(pairwise_gossip_round(&mut s, (0, 3)).is_err());
        assert!(shb_gossip_round(&mut s, (0, 0), 0.4).is_err());
        assert!(acc_gossip_round(&mut s, StepParams::PLAIN, (1, 2)).is_err());
        assert_eq!(s.round(), 0);
        assert!(GossipNetworkState::new(&g, &[1.0]).is_err());
    }

    #[test]
    fn shb_without_momentum_is_pairwise() {
        let g = make_cycle(6).unwrap();
        let c = [1.0, -2.0, 0.5, 4.0, 0.0, 1.0];
        let mut a = GossipNetworkState::new(&g, &c).unwrap();
        let mut b = a.clone();
        a.clear_v();
        let mut rng = rng_from_seed(9);
        for _ in 0..300 {
            let e = g.edge(uniform_index(&mut rng, 6));
            shb_gossip_round(&mut a, e, 0.0).unwrap();
            pairwise_gossip_round(&mut b, e).unwrap();
            assert_eq!(a.x(), b.x());
        }
    }

    #[test]
    fn shb_two_step_overshoot() {
        let g = single_edge();
        let mut s = GossipNetworkState::new(&g, &[1.0, 0.0]).unwrap();
        s.clear_v();
        shb_gossip_round(&mut s, (0, 1), 0.4).unwrap();
        assert_eq!(s.x(), vec![0.5, 0.5]);
        assert_eq!(s.v(), vec![-0.5, 0.5]);
        shb_gossip_round(&mut s, (0, 1), 0.4).unwrap();
        // pair mean 0.5 plus 0.4 × previous displacement (∓0.5)
        let x = s.x();
        assert!((x[0] - 0.3).abs() < 1e-15 && (x[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn shb_conserves_sum_on_grid() {
        let g = make_grid(4).unwrap();
        let c: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let total: f64 = c.iter().sum();
        let mut s = GossipNetworkState::new(&g, &c).unwrap();
        s.clear_v();
        let mut rng = rng_from_seed(2);
        for _ in 0..1000 {
            let e = g.edge(uniform_index(&mut rng, g.edge_count()));
            shb_gossip_round(&mut s, e, 0.4).unwrap();
            assert!((s.x().iter().sum::<f64>() - total).abs() < 1e-12);
        }
    }

    #[test]
    fn registry_lookup() {
        let reg = MethodRegistry::builtin();
        let names: Vec<_> = reg.names().collect();
        assert_eq!(
            names,
            ["pairwise", "shb", "accgossip-opt1", "accgossip-opt2"]
        );
        let summary = summarize(&build_system(&make_cycle(4).unwrap())).unwrap();
        let ctx = MethodContext::new(&summary);
        for name in names {
            assert_eq!(reg.create(name, &ctx).unwrap().name(), name);
        }
        assert!(matches!(
            reg.create("nope", &ctx),
            Err(Error::InvalidArgument(_))
        ));

        let mut bad = ctx;
        bad.momentum_beta = 1.0;
        assert!(reg.create("shb", &bad).is_err());
        bad.lambda = Some(10.0);
        assert!(reg.create("accgossip-opt1", &bad).is_err());
    }

    #[test]
    fn run_protocol_determinism() {
        let g = make_cycle(8).unwrap();
        let c: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let (t0, l0) = run_protocol(&g, &c, &mut Pairwise, 0, 1, 1).unwrap();
        assert_eq!(t0.errors().collect::<Vec<_>>(), vec![1.0]);
        assert!(l0.is_empty());

        let (ta, la) = run_protocol(&g, &c, &mut Pairwise, 400, 1, 1).unwrap();
        let (tb, lb) = run_protocol(&g, &c, &mut Pairwise, 400, 1, 1).unwrap();
        assert_eq!((ta.clone(), la.clone()), (tb, lb));
        let tr = replay(&g, &c, &mut Pairwise, &la, 1).unwrap();
        assert_eq!(tr.records, ta.records);
    }

    #[test]
    fn activation_log_text() {
        let g = make_cycle(5).unwrap();
        let log = sample_activations(&g, &mut rng_from_seed(4), 20);
        let text = log.to_text();
        assert_eq!(text.lines().count(), 20);
        assert_eq!(ActivationLog::parse(&text, "mem").unwrap(), log);
        assert!(ActivationLog::parse("0 1 2\n0 2 3\n", "mem").is_err());
        assert!(ActivationLog::parse("0 1\n", "mem").is_err());
        let bad = ActivationLog::parse("0 0 2\n", "mem").unwrap();
        assert!(bad.edge_indices(&g).is_err());
    }

    #[test]
    fn early_stop() {
        let g = make_cycle(4).unwrap();
        let c = [1.0, 0.0, 0.0, 0.0];
        let log = sample_activations(&g, &mut rng_from_seed(0), 50);
        let t = drive(&g, &c, &mut Pairwise, log.edges(), 10, |s| s.round() < 3).unwrap();
        assert_eq!(t.last().unwrap().iteration, 3);
    }
}
