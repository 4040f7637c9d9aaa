use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use accgossip::config::{ExperimentConfig, Topology};
use accgossip::gossip::{sample_activations, ActivationLog, MethodContext, MethodRegistry};
use accgossip::harness::{self, Setup};
use accgossip::kaczmarz::{option1_schedule, option2_schedule, solve_rows, Method};
use accgossip::rng::rng_from_seed;
use accgossip::spectral::fmt_num;
use accgossip::topology::Graph;
use accgossip::Error;

const EXIT_DATA: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// Replay equivalence tolerance, per coordinate.
const REPLAY_TOLERANCE: f64 = 1e-12;

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "accgossip",
    version,
    about = "Accelerated randomized gossip simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Cycle,
    Grid,
    Rgg,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology and write its edge list.
    Gen {
        topology: TopologyArg,
        /// Node count (cycle, rgg) or side length (grid).
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also sample this many uniform edge activations...
        #[arg(long, requires = "log_out")]
        activations: Option<usize>,
        /// ...and write them here as `k i j` lines.
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Print the spectral summary of an edge-list file.
    Spectral { graph: PathBuf },
    /// Run an experiment from a key=value config file.
    Run {
        config: PathBuf,
        /// Override a config entry, e.g. `--set trials=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Replay an activation log through the node protocol and the matrix solver.
    Replay {
        graph: PathBuf,
        log: PathBuf,
        #[arg(long, default_value = "accgossip-opt2")]
        method: String,
        /// Seed for the Gaussian initial values.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = accgossip::gossip::DEFAULT_MOMENTUM_BETA)]
        momentum_beta: f64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }

    fn data(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

/// Invalid arguments are usage errors; everything else is a data error.
fn classify(e: Error) -> Failure {
    match e {
        Error::InvalidArgument(_) => Failure::usage(e),
        _ => Failure::data(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            topology,
            size,
            seed,
            out,
            activations,
            log_out,
        } => cmd_gen(topology, size, seed, out, activations.zip(log_out)),
        Command::Spectral { graph } => cmd_spectral(&graph),
        Command::Run { config, overrides } => cmd_run(&config, &overrides),
        Command::Replay {
            graph,
            log,
            method,
            seed,
            lambda,
            momentum_beta,
        } => cmd_replay(&graph, &log, &method, seed, lambda, momentum_beta),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_gen(
    topology: TopologyArg,
    size: usize,
    seed: u64,
    out: Option<PathBuf>,
    log: Option<(usize, PathBuf)>,
) -> Result<(), Failure> {
    let topology = match topology {
        TopologyArg::Cycle => Topology::Cycle { n: size },
        TopologyArg::Grid => Topology::Grid { side: size },
        TopologyArg::Rgg => Topology::Rgg {
            n: size,
            graph_seed: seed,
        },
    };
    let graph = topology.build().map_err(classify)?;
    match out {
        Some(path) => graph.write(&path).map_err(Failure::data)?,
        None => print!("{}", graph.to_edge_list()),
    }
    if let Some((rounds, path)) = log {
        let log = sample_activations(&graph, &mut rng_from_seed(seed), rounds);
        log.write(&path).map_err(Failure::data)?;
    }
    Ok(())
}

fn load_graph(path: &std::path::Path) -> Result<Graph, Failure> {
    Graph::read(path).map_err(Failure::data)
}

fn cmd_spectral(path: &std::path::Path) -> Result<(), Failure> {
    let graph = load_graph(path)?;
    let setup = Setup::new(path.display().to_string(), graph).map_err(Failure::data)?;
    print!("{}", setup.summary.to_key_values());
    let r = accgossip::spectral::rates(&setup.summary, setup.summary.lambda_min_plus_ata)
        .map_err(Failure::data)?;
    say!("rho={}", fmt_num(r.rho));
    say!("sigma1={}", fmt_num(r.sigma1));
    say!("sigma2={}", fmt_num(r.sigma2));
    say!("option2_rate={}", fmt_num(r.option2_rate));
    Ok(())
}

fn cmd_run(path: &std::path::Path, overrides: &[String]) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::data(Error::Io {
            path: path.into(),
            source: e,
        })
    })?;
    let config = ExperimentConfig::parse(&text, &path.display().to_string(), overrides)
        .map_err(Failure::usage)?;
    let registry = MethodRegistry::builtin();
    config.validate(&registry).map_err(Failure::usage)?;

    let run = harness::run_experiment(&config, &registry).map_err(classify)?;
    let s = &run.setup.summary;
    say!("topology={}", run.setup.label);
    print!("{}", s.to_key_values());
    say!("trials={}", config.trials);
    say!("rounds={}", config.rounds);
    say!("seed={}", config.seed);
    for m in &run.methods {
        say!();
        say!("method={}", m.name);
        if let Some(last) = m.aggregate.mean.last() {
            say!("final_mean_relative_error={last:e}");
        }
        say!("max_relative_mean_drift={:e}", m.max_relative_drift);
    }

    let traces = run.mean_traces();
    if let Some(csv) = &config.csv {
        harness::emit_csv(&traces, csv).map_err(Failure::data)?;
    }
    if let Some(svg) = &config.svg {
        let doc = harness::render_svg(&traces, &run.setup.label).map_err(Failure::data)?;
        if let Some(dir) = svg.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| {
                Failure::data(Error::Io {
                    path: dir.into(),
                    source: e,
                })
            })?;
        }
        std::fs::write(svg, doc).map_err(|e| {
            Failure::data(Error::Io {
                path: svg.clone(),
                source: e,
            })
        })?;
    }

    if !config.verify {
        return Ok(());
    }
    let reports = harness::verify(&run).map_err(classify)?;
    let mut failing = Vec::new();
    for r in &reports {
        say!();
        print!("{}", r.to_key_values());
        failing.extend(r.failures().map(|c| format!("({}, {})", r.method, c.k)));
    }
    if failing.is_empty() {
        Ok(())
    } else {
        const SHOWN: usize = 20;
        let mut message = format!("{} bound checks failed: ", failing.len());
        message.push_str(&failing[..failing.len().min(SHOWN)].join(" "));
        Err(Failure {
            code: EXIT_VERIFY,
            message,
        })
    }
}

fn cmd_replay(
    graph_path: &std::path::Path,
    log_path: &std::path::Path,
    method: &str,
    seed: u64,
    lambda: Option<f64>,
    momentum_beta: f64,
) -> Result<(), Failure> {
    let registry = MethodRegistry::builtin();
    if !registry.contains(method) {
        return Err(Failure::usage(format!("unknown method `{method}`")));
    }
    let graph = load_graph(graph_path)?;
    let log = ActivationLog::read(log_path).map_err(Failure::data)?;
    let rows = log.edge_indices(&graph).map_err(Failure::data)?;
    let setup = Setup::new(graph_path.display().to_string(), graph).map_err(Failure::data)?;
    let ctx = MethodContext {
        summary: &setup.summary,
        lambda,
        momentum_beta,
    };
    let c = harness::trial_values(seed, 0, setup.summary.n);

    let matrix_method = match method {
        "pairwise" => Some(Method::Rk),
        "accgossip-opt1" => Some(Method::Accelerated(
            option1_schedule(setup.summary.m, ctx.lambda()).map_err(classify)?,
        )),
        "accgossip-opt2" => Some(Method::Accelerated(option2_schedule(&setup.summary))),
        _ => None,
    };

    let mut node_states = Vec::with_capacity(rows.len() + 1);
    let mut gossip = registry.create(method, &ctx).map_err(classify)?;
    let trace = accgossip::gossip::drive(&setup.graph, &c, gossip.as_mut(), log.edges(), 1, |s| {
        node_states.push((s.x(), s.v()));
        true
    })
    .map_err(classify)?;

    say!("method={method}");
    say!("rounds={}", log.len());
    if let Some(last) = trace.last() {
        say!("final_relative_error={:e}", last.relative_error);
    }
    say!("max_mean_drift={:e}", trace.max_mean_drift);

    let Some(matrix_method) = matrix_method else {
        return Ok(());
    };
    let x0 = DVector::from_column_slice(&c);
    let mut max_diff = 0.0_f64;
    let mut step = 0;
    let uses_v = !matches!(matrix_method, Method::Rk);
    solve_rows(&setup.system, &x0, matrix_method, rows, 1, |state| {
        let (x, v) = &node_states[step];
        for l in 0..x.len() {
            max_diff = max_diff.max((x[l] - state.x[l]).abs());
            if uses_v {
                max_diff = max_diff.max((v[l] - state.v[l]).abs());
            }
        }
        step += 1;
    });
    say!("max_coordinate_difference={max_diff:e}");
    say!("equivalent={}", max_diff <= REPLAY_TOLERANCE);
    if max_diff <= REPLAY_TOLERANCE {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("node and matrix trajectories differ by {max_diff:e}"),
        })
    }
}
