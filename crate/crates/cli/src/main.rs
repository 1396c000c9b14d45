use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use swarmlink_core::bench::{compute_metrics, run_comparison, BenchConfig};
use swarmlink_core::haptic::{encode_pattern, PatternConfig, PatternLabel};
use swarmlink_core::sim::trace::{read_csv, rows_to_csv, TRACE_FILE};
use swarmlink_core::sim::{read_recording, replay, run_config, ScenarioConfig};
use swarmlink_core::topology::formation_offsets;
use swarmlink_core::trajectory::parse_reference_csv;

#[derive(Parser)]
#[command(name = "swarmlink", version, about = "Impedance-coupled drone swarm simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv and events.jsonl.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Square-trajectory benchmark.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Print the schedule of one or all vibrotactile patterns.
    Pattern(PatternArgs),
    /// Re-run a recorded live session and compare drone traces.
    Replay {
        /// Directory written by `serve --record`.
        #[arg(long)]
        dir: PathBuf,
        /// Where to write the replayed trace.csv and events.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Live steering service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory receiving trace.csv, events.jsonl and config.json.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// UI bundle served at `/`.
        #[arg(long, default_value = "steer-ui/dist")]
        static_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run all four configurations and write the comparison report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = swarmlink_core::bench::comparison::DEFAULT_REPEATS)]
        repeats: u32,
        #[arg(long, default_value_t = swarmlink_core::bench::comparison::DEFAULT_SEED)]
        seed: u64,
    },
    /// Metrics of one trace against a reference CSV.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Scenario the trace came from, for the formation offsets.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PatternArgs {
    /// Label such as `RR` or `SF`; all twelve when omitted.
    label: Option<String>,
    /// Emit actuator edges as timed log lines in real time.
    #[arg(long)]
    play: bool,
    #[arg(long)]
    json: bool,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => run(&config, &out, seed),
        Command::Bench(BenchCommand::Run { config, out, repeats, seed }) => bench_run(&config, &out, repeats, seed),
        Command::Bench(BenchCommand::Metrics { trace, reference, config }) => {
            bench_metrics(&trace, &reference, config.as_deref())
        }
        Command::Pattern(args) => pattern(args),
        Command::Replay { dir, out } => replay_session(&dir, out.as_deref()),
        Command::Serve { config, bind, record, speed, static_dir } => {
            let scenario = load(&config)?;
            if !(speed > 0.0 && speed.is_finite()) {
                bail!("--speed must be positive, got {speed}");
            }
            let options =
                swarmlink_server::ServerOptions { scenario, bind, record, speed, static_dir, ..Default::default() };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(swarmlink_server::serve(options))?;
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::from_file(path).with_context(|| format!("loading {}", path.display()))
}

fn run(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let trace = run_config(&cfg)?;
    trace.write_dir(out)?;
    println!(
        "{} ticks, {} rows, {} events -> {}",
        cfg.tick_count(),
        trace.rows.len(),
        trace.events.len(),
        out.display()
    );
    Ok(())
}

fn replay_session(dir: &Path, out: Option<&Path>) -> Result<()> {
    let (config, rows, events) = read_recording(dir)?;
    let trace = replay(&config, &rows, &events)?;
    if let Some(out) = out {
        trace.write_dir(out)?;
    }
    let recorded = std::fs::read_to_string(dir.join(TRACE_FILE))?;
    if rows_to_csv(&trace.rows) == recorded {
        println!("replay identical: {} rows", trace.rows.len());
        Ok(())
    } else {
        bail!("replayed trace differs from {}", dir.join(TRACE_FILE).display())
    }
}

fn bench_run(config: &Path, out: &Path, repeats: u32, seed: u64) -> Result<()> {
    if repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let bench = BenchConfig { base: load(config)?, repeats, seed };
    let comparison = run_comparison(&bench)?;
    comparison.write_dir(out)?;
    print!("{}", comparison.report.to_text());
    Ok(())
}

fn bench_metrics(trace: &Path, reference: &Path, config: Option<&Path>) -> Result<()> {
    let rows = read_csv(trace)?;
    let text = std::fs::read_to_string(reference).with_context(|| format!("reading {}", reference.display()))?;
    let samples = parse_reference_csv(&text).map_err(anyhow::Error::msg)?;
    let offsets = match config {
        Some(p) => {
            let cfg = load(p)?;
            cfg.topology.build(cfg.impedance.params()?)?.offsets
        }
        None => {
            let drones = rows.iter().map(|r| r.drone_id + 1).max().unwrap_or(0);
            let t = swarmlink_core::topology::TopologyConfig::default();
            formation_offsets(drones, t.spacing_m, t.height_m)
        }
    };
    let m = compute_metrics(&rows, &samples, &offsets)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn pattern(args: PatternArgs) -> Result<()> {
    let labels: Vec<PatternLabel> = match &args.label {
        Some(l) => vec![l.parse()?],
        None => PatternLabel::all().collect(),
    };
    let cfg = PatternConfig::default();
    for label in labels {
        let schedule = encode_pattern(label.surface, label.direction, &cfg)?;
        if args.json {
            println!("{}", schedule.to_json());
        } else if args.play {
            let start = std::time::Instant::now();
            println!("{label} start");
            for edge in schedule.edges() {
                let due = Duration::from_secs_f64(edge.at_ms / 1000.0);
                if let Some(wait) = due.checked_sub(start.elapsed()) {
                    std::thread::sleep(wait);
                }
                match edge.drive {
                    Some(d) => println!(
                        "{label} {:>6.1} ms finger {} on {} Hz amplitude {}",
                        edge.at_ms, edge.finger, d.frequency_hz, d.amplitude
                    ),
                    None => println!("{label} {:>6.1} ms finger {} off", edge.at_ms, edge.finger),
                }
            }
        } else {
            println!("{label} ({} ms)", schedule.duration_ms());
            for (finger, events) in schedule.actuators.iter().enumerate() {
                let parts: Vec<String> = events
                    .iter()
                    .map(|e| format!("{}+{} ms @ {} Hz x{}", e.onset_ms, e.duration_ms, e.frequency_hz, e.amplitude))
                    .collect();
                println!("  finger {finger}: {}", parts.join(", "));
            }
        }
    }
    Ok(())
}
