//! Command-line front end: single runs, population sweeps, the worked
//! fixture, and scenario dumps.
//!
//! Exit codes: 0 when the requested work completed (a failed discovery
//! is still a completed run), 2 for configuration or i/o problems, 3
//! when an internal invariant tripped.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crp_sim::engine::SimTime;
use crp_sim::error::ConfigError;
use crp_sim::fixture::{self, Variant};
use crp_sim::harness::{
    self, aggregated_csv, compare, figure_series_csv, per_run_csv, Metric, SweepResult,
};
use crp_sim::model::{generate_scenario, NodeId, SimConfig};
use crp_sim::plot::{line_chart, Series};
use crp_sim::protocol::{ProtocolKind, Sim};

#[derive(Parser)]
#[command(
    name = "crp-sim",
    version,
    about = "Deterministic simulator for cluster-based route discovery in cognitive radio networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one discovery episode and print its metrics.
    Run(RunArgs),
    /// Sweep population sizes for both protocols and report the trends.
    Sweep(SweepArgs),
    /// Run the built-in four-cluster walk-through topology.
    Fixture(FixtureArgs),
    /// Generate a scenario and write it as JSON.
    Gen(GenArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON file with simulation parameters; defaults apply to every
    /// field the file leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SimConfig, CliError> {
        let mut cfg: SimConfig = match &self.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => SimConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Protocol to run.
    #[arg(long, default_value = "crp")]
    protocol: ProtocolKind,
    /// Write the event trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of seeds per cell, counted up from the master seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Total population sizes to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [20usize, 40, 60, 80, 100])]
    ncr: Vec<usize>,
    /// Restrict the sweep to one protocol (skips the comparison).
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    /// Directory for the result tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render one SVG chart per metric into the output directory.
    #[arg(long, requires = "out")]
    svg: bool,
}

#[derive(Args)]
struct FixtureArgs {
    /// Topology perturbation: standard, no-relay, or moved-dst.
    #[arg(long, default_value = "standard")]
    variant: Variant,
    /// Write the event trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the (perturbed) world itself as JSON instead of running it.
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config file: {0}")]
    Json(#[from] serde_json::Error),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("error: internal invariant violated, aborting");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Run(args) => run_cmd(args),
        Cmd::Sweep(args) => sweep_cmd(args),
        Cmd::Fixture(args) => fixture_cmd(args),
        Cmd::Gen(args) => gen_cmd(args),
    }
}

fn write_trace(path: &Path, sim: &Sim) -> Result<(), CliError> {
    fs::write(path, sim.trace.to_text())?;
    Ok(())
}

fn print_episode(sim: &Sim, src: NodeId, dst: NodeId) {
    let world = &sim.world;
    let name = |id: NodeId| world.node(id).display_name();
    println!(
        "episode {} -> {}: rreq {} rrep {} {}",
        name(src),
        name(dst),
        sim.metrics.rreq_count,
        sim.metrics.rrep_count,
        match sim.metrics.routing_delay {
            Some(d) => format!("established in {d} time units"),
            None => "no route".into(),
        }
    );
    if let Some(route) = sim.sources.get(&src).and_then(|s| s.routes.get(&dst)) {
        let heads: Vec<String> = route.head_path.iter().map(|&h| name(h)).collect();
        let nodes: Vec<String> = route.node_route.iter().map(|&n| name(n)).collect();
        println!("  heads: {}", heads.join(" -> "));
        println!("  route: {}", nodes.join(" -> "));
    }
    if !sim.drops.is_empty() {
        let drops: Vec<String> = sim
            .drops
            .iter()
            .map(|((node, reason), count)| format!("{} at {} x{}", reason, name(*node), count))
            .collect();
        println!("  drops: {}", drops.join(", "));
    }
}

fn run_cmd(args: RunArgs) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    let run = harness::run_single(&cfg, args.protocol, cfg.seed)?;
    print_episode(&run.sim, run.src, run.dst);
    if let Some(path) = &args.trace {
        write_trace(path, &run.sim)?;
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    if args.seeds == 0 {
        return Err(ConfigError::field("seeds", "need at least one seed").into());
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| cfg.seed + i).collect();
    let protocols: Vec<ProtocolKind> = match args.protocol {
        Some(p) => vec![p],
        None => vec![ProtocolKind::Crp, ProtocolKind::Aodv],
    };
    let SweepResult { runs, points } = harness::run_sweep(&cfg, &args.ncr, &seeds, &protocols)?;

    print!("{}", aggregated_csv(&points));
    let report = compare(&points, cfg.link_delay);
    let comparing = protocols.len() == 2;
    if comparing {
        println!();
        print!("{}", report.render());
        if args.seeds == 1 {
            println!("note: single-seed sweep, verdicts are low-confidence");
        }
    } else {
        println!("(single protocol, nothing to compare)");
    }

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("runs.csv"), per_run_csv(&runs))?;
        fs::write(dir.join("summary.csv"), aggregated_csv(&points))?;
        for metric in Metric::ALL {
            let name = format!("fig_{}.csv", metric.name());
            fs::write(dir.join(name), figure_series_csv(&points, metric))?;
        }
        if comparing {
            fs::write(dir.join("verdicts.txt"), report.render())?;
        }
        if args.svg {
            for metric in Metric::ALL {
                let chart = metric_chart(&points, metric);
                fs::write(dir.join(format!("{}.svg", metric.name())), chart)?;
            }
        }
        println!("results written to {}", dir.display());
    }
    Ok(())
}

fn metric_chart(points: &[harness::SweepPoint], metric: Metric) -> String {
    let mut grid: Vec<usize> = points.iter().map(|p| p.n_cr).collect();
    grid.sort_unstable();
    grid.dedup();
    let values = |proto: ProtocolKind| {
        grid.iter()
            .map(|&n| {
                points
                    .iter()
                    .find(|p| p.n_cr == n && p.protocol == proto)
                    .and_then(|p| metric.of(p))
            })
            .collect()
    };
    let (title, y_label) = match metric {
        Metric::Rreq => ("route requests", "mean transmissions"),
        Metric::Rrep => ("route replies", "mean transmissions"),
        Metric::Delay => ("routing delay", "mean time units"),
        Metric::Success => ("discovery success", "fraction of runs"),
    };
    line_chart(
        title,
        y_label,
        &grid,
        &[
            Series {
                name: "crp",
                color: "#1b6ca8",
                values: values(ProtocolKind::Crp),
            },
            Series {
                name: "aodv",
                color: "#c23b22",
                values: values(ProtocolKind::Aodv),
            },
        ],
    )
}

fn fixture_cmd(args: FixtureArgs) -> Result<(), CliError> {
    let world = fixture::four_cluster_variant(args.variant);
    if let Some(path) = &args.emit {
        fs::write(path, serde_json::to_string_pretty(&world)?)?;
        return Ok(());
    }
    let mut sim = Sim::from_preformed(world, ProtocolKind::Crp)?;
    sim.start_discovery(fixture::SRC, fixture::DST, SimTime::ZERO);
    sim.run();
    println!("four-cluster fixture, variant {}", args.variant.name());
    print_episode(&sim, fixture::SRC, fixture::DST);
    if let Some(path) = &args.trace {
        write_trace(path, &sim)?;
    }
    Ok(())
}

fn gen_cmd(args: GenArgs) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    let world = generate_scenario(&cfg)?;
    let json = serde_json::to_string_pretty(&world)?;
    match &args.out {
        Some(path) => fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}
