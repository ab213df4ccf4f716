mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rolecast::pipeline::{load_edges, run_bench, run_until, RunConfig, Stage};

use crate::config::UsageError;
use crate::output::Outputs;

/// Role discovery, role dynamics and transition anomalies for dynamic networks.
#[derive(Parser, Debug)]
#[command(name = "rolecast", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config with sections such as [input], [roles], [anomaly].
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Edge list to read instead of generating a synthetic graph.
    #[arg(long, short, global = true)]
    input: Option<PathBuf>,
    /// Snapshot interval length in timestamp units.
    #[arg(long, global = true)]
    interval: Option<f64>,
    /// Treat the input as undirected.
    #[arg(long, global = true)]
    symmetrize: bool,
    /// Accept untimed input as a single snapshot.
    #[arg(long, global = true)]
    static_graph: bool,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Fixed role count instead of description-length selection.
    #[arg(long, global = true)]
    rank: Option<usize>,
    /// Seed for the generator and the factorization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all available cores.
    #[arg(long, short = 'j', global = true, default_value_t = 0)]
    threads: usize,
    /// Override any config value, e.g. `--set roles.max_rank=6`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_key_value)]
    sets: Vec<(String, String)>,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic edge list and its pattern labels.
    Generate,
    /// Window the input into snapshots and report counts.
    Ingest,
    /// Discover and export node features.
    Features,
    /// Learn roles and per-snapshot memberships.
    Roles,
    /// Fit stacked and summary transition models.
    Transitions,
    /// Score the forecasting models against each other.
    Predict,
    /// Score node transition anomalies.
    Anomalies,
    /// Relate roles to classical measures and cluster node dynamics.
    Analyze,
    /// Run every stage and write all outputs.
    Pipeline,
    /// Time the pipeline on synthetic graphs of growing size.
    Bench {
        /// Scale factors applied to the generator's structure counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
        scales: Vec<usize>,
    },
}

impl Command {
    fn last_stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Features => Stage::Features,
            Command::Roles => Stage::Roles,
            Command::Transitions => Stage::Transitions,
            Command::Predict => Stage::Predictions,
            Command::Anomalies => Stage::Anomalies,
            Command::Analyze | Command::Pipeline => Stage::Analysis,
            Command::Generate | Command::Bench { .. } => return None,
        })
    }
}

fn effective_config(c: &Common) -> anyhow::Result<RunConfig> {
    let mut sets = Vec::new();
    let mut push = |k: &str, v: String| sets.push((k.to_string(), v));
    if let Some(p) = &c.input {
        push("input.path", toml::Value::String(p.display().to_string()).to_string());
    }
    if let Some(i) = c.interval {
        push("input.interval_length", format!("{i:?}"));
    }
    if c.symmetrize {
        push("input.symmetrize", "true".into());
    }
    if c.static_graph {
        push("input.static_graph", "true".into());
    }
    if let Some(o) = &c.out {
        push("output_dir", toml::Value::String(o.display().to_string()).to_string());
    }
    if let Some(r) = c.rank {
        push("roles.rank", r.to_string());
    }
    if let Some(s) = c.seed {
        push("generator.seed", s.to_string());
        push("roles.nmf.seed", s.to_string());
    }
    sets.extend(c.sets.iter().cloned());
    config::load(c.config.as_deref(), &sets)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = effective_config(&cli.common)?;
    let hash = config::hash(&cfg);
    let out = Outputs::new(&cfg.output_dir, hash.clone())?;
    out.text("config.toml", &format!("# config_hash={hash}\n{}", config::to_toml(&cfg)))?;

    match &cli.command {
        Command::Generate => {
            if cfg.input.path.is_some() {
                return Err(UsageError("generate takes no --input; it writes a synthetic graph".into()).into());
            }
            let (edges, labels) = load_edges(&cfg)?;
            output::write_generated(&out, &edges, labels.as_ref())?;
            println!("nodes={} edges={} timesteps={}", edges.num_nodes(), edges.edges.len(), cfg.generator.timesteps);
        }
        Command::Bench { scales } => {
            let rows = run_bench(&cfg, scales)?;
            output::write_bench(&out, &rows)?;
            println!("{:>8} {:>10} {:>12} {:>12}", "factor", "nodes", "edges", "seconds");
            for r in &rows {
                println!("{:>8} {:>10} {:>12} {:>12.3}", r.factor, r.nodes, r.edges, r.total_seconds);
            }
        }
        cmd => {
            let stage = cmd.last_stage().expect("pipeline command");
            let run = run_until(&cfg, stage)?;
            output::write_run(&out, &cfg, &run)?;
            let s = run.summary();
            let opt = |x: Option<usize>| x.map_or("-".to_string(), |v| v.to_string());
            println!(
                "nodes={} edges={} snapshots={} features={} roles={} seconds={:.3}",
                s.nodes,
                s.edges,
                s.snapshots,
                opt(s.features),
                opt(s.roles),
                s.seconds
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let input = err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<rolecast::Error>().is_some_and(|e| e.is_input_error())
    });
    if input {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = cli.common.threads;
    match rolecast::par::with_threads(threads, || run(cli).context("rolecast failed")) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
