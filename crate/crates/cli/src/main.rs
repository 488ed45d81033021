use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sslnet::config::ScenarioConfig;
use sslnet::experiment::{self, ExperimentOutput};
use sslnet::metrics::summary_table;
use sslnet::node::{LiveBridge, LiveConfig};

#[derive(Parser)]
#[command(
    name = "sslnet",
    version,
    about = "Robot soccer radio network simulator"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// TOML scenario file with dotted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV output path; stdout gets the summary either way.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    repeat: Option<usize>,
    /// Write the dispatched event list next to the CSV (or to stderr).
    #[arg(long, global = true)]
    trace: bool,
    /// Override a config key, e.g. --set channel.p_loss=0.01
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single robot across send intervals.
    IntervalSweep {
        #[arg(value_delimiter = ',', default_values_t = experiment::DEFAULT_INTERVALS_US.to_vec())]
        intervals_us: Vec<u64>,
    },
    /// Control slowdown under telemetry load.
    TelemetrySweep {
        #[arg(value_delimiter = ',', default_values_t = experiment::DEFAULT_SAMPLING_MS.to_vec())]
        sampling_ms: Vec<u64>,
    },
    /// Single robot at several distances.
    DistanceSweep {
        #[arg(value_delimiter = ',', default_values_t = experiment::DEFAULT_DISTANCES_M.to_vec())]
        distances_m: Vec<f64>,
    },
    /// Round-robin control of N robots.
    MultiRobot {
        #[arg(value_delimiter = ',', default_values_t = experiment::DEFAULT_ROBOT_COUNTS.to_vec())]
        counts: Vec<usize>,
    },
    /// Live UDP bridge until Ctrl-C or serve.duration_s.
    Serve,
    /// The configured scenario as-is.
    Run,
}

fn load_config(g: &Global) -> Result<ScenarioConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            ScenarioConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?
        }
        None => ScenarioConfig::default(),
    };
    for o in &g.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(r) = g.repeat {
        cfg.repeat = r;
    }
    cfg.trace |= g.trace;
    cfg.validate()?;
    Ok(cfg)
}

fn report(out: &ExperimentOutput, cfg: &ScenarioConfig, g: &Global) -> Result<bool> {
    print!("{}", summary_table(&out.rows));
    for n in &out.notes {
        println!("{n}");
    }
    println!("trace digest {}", out.trace_digest());
    if let Some(path) = &g.out {
        out.write(path, cfg)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    if cfg.trace {
        let lines: Vec<String> = out
            .runs
            .iter()
            .flat_map(|r| {
                std::iter::once(format!(
                    "# param={} seed={} hash={}",
                    r.param, r.seed, r.trace_hash
                ))
                .chain(r.trace.iter().cloned())
            })
            .collect();
        match &g.out {
            Some(p) => {
                let tp = p.with_extension("trace");
                std::fs::write(&tp, lines.join("\n") + "\n")?;
                println!("wrote {}", tp.display());
            }
            None => eprintln!("{}", lines.join("\n")),
        }
    }
    let ok = out.all_satisfied();
    if !ok {
        let bad = out.runs.iter().filter(|r| !r.satisfied).count();
        eprintln!("{bad} run(s) did not fill their measurement window");
    }
    Ok(ok)
}

fn serve(cfg: &ScenarioConfig) -> Result<()> {
    let bridge = LiveBridge::start(LiveConfig {
        control_port: cfg.control_port,
        telemetry_port: cfg.telemetry_port,
        base_station: cfg.base_station.clone(),
        control_radio: cfg.control_radio.clone(),
        channel: cfg.channel.clone(),
        robot_count: cfg.robot_count,
        telemetry_interval_ms: cfg.telemetry_interval_ms,
        seed: cfg.seed,
        ..Default::default()
    })?;
    println!(
        "listening on {}, telemetry to sender:{}",
        bridge.control_addr(),
        cfg.telemetry_port
    );
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .context("installing Ctrl-C handler")?;
    if cfg.serve_duration_s > 0.0 {
        let _ = rx.recv_timeout(Duration::from_secs_f64(cfg.serve_duration_s));
    } else {
        let _ = rx.recv();
    }
    let c = bridge.shutdown();
    println!("ingress            {}", c.ingress);
    println!("malformed          {}", c.malformed);
    println!("bs_drops           {}", c.bs_drops);
    println!("control_sent       {}", c.control_sent);
    println!("robot_receptions   {}", c.robot_receptions);
    println!("telemetry_out      {}", c.telemetry_out);
    println!("telemetry_unrouted {}", c.telemetry_unrouted);
    println!("control_blocked_us {}", c.control_blocked_us);
    println!("telemetry_hold_us  {}", c.telemetry_hold_us);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.global)?;
    let out = match cli.cmd {
        Cmd::IntervalSweep { intervals_us } => experiment::interval_sweep(&cfg, &intervals_us)?,
        Cmd::TelemetrySweep { sampling_ms } => experiment::telemetry_sweep(&cfg, &sampling_ms)?,
        Cmd::DistanceSweep { distances_m } => experiment::distance_sweep(&cfg, &distances_m)?,
        Cmd::MultiRobot { counts } => experiment::multi_robot(&cfg, &counts)?,
        Cmd::Run => experiment::run_scenario(&cfg)?,
        Cmd::Serve => {
            serve(&cfg)?;
            return Ok(true);
        }
    };
    report(&out, &cfg, &cli.global)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
