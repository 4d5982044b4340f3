//! Command-line front end: run one simulation, sweep one axis, evaluate the
//! analytical model, or validate a configuration document.
//!
//! Exit codes: 0 on success, 2 for configuration problems (the message names
//! the offending key), 1 for anything else. The `PONSIM_LOG` environment
//! variable sets log verbosity (error, warn, info, debug, trace); warnings
//! are on by default.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use ponsim_core::analysis::{
    build_rx_chain, build_tx_chain, expected_power, kind_occupancy, predict_upstream, stationary,
    ChainParams,
};
use ponsim_core::sim::{run_simulation, sweep_point_config, SimConfig, SimMetrics};

use config::{load, ConfigError, FileConfig};
use output::{analyze_csv, fmt_g6, metrics_csv, run_report, sweep_report, AnalyzeRow};

#[derive(Parser)]
#[command(name = "ponsim", version, about = "Cycle-driven EPON sleep-mode simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation; writes metrics.csv and report.txt.
    Run(CommonArgs),
    /// Run one simulation per [sweep] value; the CSV puts the axis first.
    Sweep(CommonArgs),
    /// Evaluate the analytical model; writes analysis.csv.
    Analyze(CommonArgs),
    /// Parse a configuration document and check every invariant.
    Validate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file; the built-in defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory receiving the output files.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Override one key, e.g. --set traffic.ds.load_bps=40e6 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replace the seed; wins over --set sim.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads running sweep points.
    #[arg(long, value_name = "N", default_value_t = 1)]
    parallel: usize,
}

/// A failure tagged with the exit code it maps to.
enum Failure {
    /// Bad configuration or override: exit 2.
    Config(String),
    /// IO or solver trouble after a valid configuration: exit 1.
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

/// Configuration-domain errors from the core map to exit 2.
fn core_err(e: ponsim_core::Error) -> Failure {
    Failure::Config(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PONSIM_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Analyze(args) => cmd_analyze(args),
        Cmd::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Load the document, apply overrides, and run every invariant check.
fn load_checked(args: &CommonArgs) -> Result<FileConfig, Failure> {
    let file = load(args.config.as_deref(), &args.set, args.seed)?;
    file.validate().map_err(Failure::Config)?;
    Ok(file)
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Failure::Runtime(format!("cannot create output directory {}: {e}", dir.display()))
    })?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Surface the quality flags a caller should not overlook.
fn warn_about(m: &SimMetrics) {
    if m.saving_clamped {
        log::warn!("energy saving fell outside [0, 1] and was clamped");
    }
    if m.saturated {
        log::warn!("offered load saturates the line; delays depend on the horizon");
    }
    if m.mirror_divergences > 0 || m.ts_divergences > 0 {
        log::warn!(
            "head-end replicas diverged ({} state, {} grant-start)",
            m.mirror_divergences,
            m.ts_divergences
        );
    }
    if m.conservation_violations > 0 {
        log::warn!("{} cycles failed packet conservation", m.conservation_violations);
    }
}

fn cmd_run(args: &CommonArgs) -> Result<(), Failure> {
    let file = load_checked(args)?;
    let cfg = file.sim_config();
    let metrics = run_simulation(&cfg).map_err(core_err)?;
    warn_about(&metrics);
    let rows = vec![(None, cfg.seed, metrics)];
    write_out(&args.out, "metrics.csv", &metrics_csv(&rows))?;
    write_out(&args.out, "report.txt", &run_report(&cfg, &rows[0].2))?;
    println!("wrote metrics.csv and report.txt to {}", args.out.display());
    Ok(())
}

/// Run one simulation per configuration, optionally across worker threads;
/// results come back in input order either way.
fn run_points(configs: &[SimConfig], threads: usize) -> Result<Vec<SimMetrics>, Failure> {
    let n = configs.len();
    if threads <= 1 || n <= 1 {
        return configs.iter().map(|cfg| run_simulation(cfg).map_err(core_err)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ponsim_core::Result<SimMetrics>>>> = Mutex::new(vec![None; n]);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = run_simulation(&configs[i]);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every sweep point visited").map_err(core_err))
        .collect()
}

fn cmd_sweep(args: &CommonArgs) -> Result<(), Failure> {
    let file = load_checked(args)?;
    let (axis, values) = file.sweep_spec().map_err(Failure::Config)?;
    let base = file.sim_config();
    let configs: Vec<SimConfig> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| sweep_point_config(&base, axis, v, i))
        .collect::<ponsim_core::Result<_>>()
        .map_err(core_err)?;
    let metrics = run_points(&configs, args.parallel.max(1))?;
    let rows: Vec<(Option<f64>, u64, SimMetrics)> = values
        .iter()
        .zip(configs.iter())
        .zip(metrics)
        .map(|((&v, cfg), m)| (Some(v), cfg.seed, m))
        .collect();
    for (_, _, m) in &rows {
        warn_about(m);
    }
    write_out(&args.out, "metrics.csv", &metrics_csv(&rows))?;
    write_out(&args.out, "report.txt", &sweep_report(&base, axis.label(), &rows))?;
    println!(
        "wrote metrics.csv ({} points) and report.txt to {}",
        rows.len(),
        args.out.display()
    );
    Ok(())
}

/// Evaluate the queueing model and both occupancy chains for one setup.
fn analyze_one(file: &FileConfig, cfg: &SimConfig) -> Result<AnalyzeRow, Failure> {
    let p = predict_upstream(
        &cfg.us_traffic,
        &cfg.thresholds_s,
        cfg.us_rate_bps,
        cfg.propagation_s,
        cfg.cycle_s,
        cfg.pk_numerator,
    )
    .map_err(core_err)?;
    let inputs = file.analyze_inputs(cfg);

    let rx_chain = build_rx_chain(&ChainParams {
        lambda_pps: cfg.ds_traffic.packet_rate_pps(),
        mu_pps: inputs.mu_ds_pps,
        cycle_s: cfg.cycle_s,
        listen: cfg.fsm.rx_listen,
        sleep: cfg.fsm.rx_sleep,
        q_max: inputs.q_max,
    })
    .map_err(core_err)?;
    let tx_chain = build_tx_chain(&ChainParams {
        lambda_pps: cfg.us_traffic.packet_rate_pps(),
        mu_pps: inputs.mu_us_pps,
        cycle_s: cfg.cycle_s,
        listen: cfg.fsm.tx_listen,
        sleep: p.budget.cycles,
        q_max: inputs.q_max,
    })
    .map_err(core_err)?;
    if !rx_chain.truncation_ok || !tx_chain.truncation_ok {
        log::warn!("analysis.q_max = {} truncates meaningful arrival mass", inputs.q_max);
    }
    let rx_pi = stationary(&rx_chain).map_err(|e| Failure::Runtime(e.to_string()))?;
    let tx_pi = stationary(&tx_chain).map_err(|e| Failure::Runtime(e.to_string()))?;
    let rx_occ = kind_occupancy(&rx_chain, &rx_pi.pi);
    let tx_occ = kind_occupancy(&tx_chain, &tx_pi.pi);

    let finite = |v: f64| v.is_finite().then_some(v);
    Ok(AnalyzeRow {
        lambda_us_pps: p.lambda_pps.iter().sum(),
        rho_us: (0..3).map(|i| p.lambda_pps[i] * p.service_mean_s[i]).sum(),
        waits_s: p.waits_s,
        delays_s: p.delays_s,
        sleeps_s: core::array::from_fn(|i| finite(p.budget.per_class_s[i])),
        tx_sleep_s: finite(p.budget.tx_sleep_s),
        tx_sleep_cycles: p.budget.cycles,
        rx_occ,
        tx_occ,
        expected_watts: expected_power(&rx_occ, &tx_occ, &cfg.power),
        saturated: p.saturated.is_some(),
    })
}

fn cmd_analyze(args: &CommonArgs) -> Result<(), Failure> {
    let file = load_checked(args)?;
    let base = file.sim_config();
    let mut rows = Vec::new();
    if file.sweep.is_some() {
        let (axis, values) = file.sweep_spec().map_err(Failure::Config)?;
        for (i, &v) in values.iter().enumerate() {
            let cfg = sweep_point_config(&base, axis, v, i).map_err(core_err)?;
            rows.push((Some(v), analyze_one(&file, &cfg)?));
        }
    } else {
        rows.push((None, analyze_one(&file, &base)?));
    }
    if rows.iter().any(|(_, r)| r.saturated) {
        log::warn!("some predictions are saturated; their delay cells are empty");
    }
    write_out(&args.out, "analysis.csv", &analyze_csv(&rows))?;
    println!("wrote analysis.csv ({} rows) to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_validate(args: &CommonArgs) -> Result<(), Failure> {
    let file = load_checked(args)?;
    let cfg = file.sim_config();
    println!("config ok");
    println!(
        "  {} onus | cycle_s {} | ds_rate_bps {} | us_rate_bps {}",
        cfg.n_onus,
        fmt_g6(cfg.cycle_s),
        fmt_g6(cfg.ds_rate_bps),
        fmt_g6(cfg.us_rate_bps)
    );
    println!(
        "  fsm rx_listen {} | rx_sleep {} | tx_listen {}",
        cfg.fsm.rx_listen, cfg.fsm.rx_sleep, cfg.fsm.tx_listen
    );
    println!(
        "  power full {} W | deepest sleep {} W",
        fmt_g6(cfg.power.full_power()),
        fmt_g6(cfg.power.watts[2][2])
    );
    let model = |t: &ponsim_core::traffic::TrafficConfig| match t.model {
        ponsim_core::traffic::TrafficModel::Poisson => "poisson",
        ponsim_core::traffic::TrafficModel::SelfSimilar => "self-similar",
    };
    println!(
        "  traffic ds {} at {} bps/onu | us {} at {} bps/onu",
        model(&cfg.ds_traffic),
        fmt_g6(cfg.ds_traffic.load_bps),
        model(&cfg.us_traffic),
        fmt_g6(cfg.us_traffic.load_bps)
    );
    println!(
        "  thresholds_s {} / {} / {} | horizons warmup {} measured {}",
        fmt_g6(cfg.thresholds_s[0]),
        fmt_g6(cfg.thresholds_s[1]),
        fmt_g6(cfg.thresholds_s[2]),
        cfg.warmup_cycles,
        cfg.measured_cycles
    );
    if file.sweep.is_some() {
        let (axis, values) = file.sweep_spec().map_err(Failure::Config)?;
        println!("  sweep {} over {} values", axis.label(), values.len());
    }
    Ok(())
}
