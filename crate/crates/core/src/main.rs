use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use teleop_kf::metrics::AccuracyMetric;
use teleop_kf::netsim::NetworkScenario;
use teleop_kf::pipeline::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "teleop-kf", version, about = "MOESP identification and Kalman tracking over an impaired channel")]
struct Cli {
    /// TOML experiment config
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accuracy metric (nrmse_range, one_minus_rmse, nmae)
    #[arg(long, global = true)]
    metric: Option<AccuracyMetric>,
    /// Override any config key, e.g. `--set identify.block_rows=10`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify a state-space model and write model.json and the scree CSV
    Identify {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        block_rows: Option<usize>,
    },
    /// Open-loop fit of a model on a validation trial
    Validate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Impair, bootstrap Q/R, filter and score every scenario
    Sweep {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Channel-only dry run for one scenario
    Impair {
        #[arg(long, default_value_t = 0.0)]
        nd_ms: f64,
        #[arg(long, default_value_t = 0.0)]
        nj_ms: f64,
        /// Loss probability as a fraction
        #[arg(long, conflicts_with = "np_percent")]
        np: Option<f64>,
        /// Loss probability in percent
        #[arg(long)]
        np_percent: Option<f64>,
    },
    /// Score accuracy formulas against the published RMSE/accuracy pairs
    CalibrateAccuracy,
}

fn build_config(cli: &Cli) -> teleop_kf::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p, &cli.overrides)?,
        None => ExperimentConfig::from_toml_with_overrides("", &cli.overrides)?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(m) = cli.metric {
        cfg.metrics.metric = m;
    }
    match &cli.command {
        Command::Identify { data, block_rows } => {
            if let Some(d) = data {
                cfg.data.path = Some(d.clone());
            }
            if let Some(d) = block_rows {
                cfg.identify.block_rows = *d;
            }
        }
        Command::Validate { model, data } => {
            if let Some(m) = model {
                cfg.identify.model_path = Some(m.clone());
            }
            if let Some(d) = data {
                cfg.data.validation_path = Some(d.clone());
            }
        }
        Command::Sweep { model } => {
            if let Some(m) = model {
                cfg.identify.model_path = Some(m.clone());
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> teleop_kf::Result<()> {
    let cfg = build_config(cli)?;
    let out = cfg.output_dir.display();
    match &cli.command {
        Command::Identify { .. } => {
            let o = pipeline::cmd_identify(&cfg)?;
            println!(
                "order {} (energy {:.3}), spectral radius {:.4}, {} singular values -> {out}",
                o.log.order,
                o.log.energy_ratio,
                o.log.spectral_radius,
                o.log.n_singular_values
            );
            for w in &o.log.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Validate { .. } => {
            let o = pipeline::cmd_validate(&cfg)?;
            for (i, name) in o.report.channel_names.iter().enumerate() {
                println!(
                    "{name}: rmse {:.4} accuracy {:.2}% ({})",
                    o.report.rmse[i], o.report.accuracy_pct[i], o.report.metric_def
                );
            }
        }
        Command::Sweep { .. } => {
            let o = pipeline::cmd_sweep(&cfg)?;
            for (row, acc) in o.rows.iter().zip(o.mean_accuracies()) {
                let label = row.scenario.label.clone().unwrap_or_default();
                match (&row.outcome, acc) {
                    (Ok(_), Some(a)) => println!("{label}: mean accuracy {a:.2}%"),
                    (Err(e), _) => println!("{label}: failed: {e}"),
                    _ => {}
                }
            }
            println!("summary -> {out}/sweep_summary.csv");
        }
        Command::Impair {
            nd_ms,
            nj_ms,
            np,
            np_percent,
        } => {
            let np = np.or(np_percent.map(|p| p / 100.0)).unwrap_or(0.0);
            let s = NetworkScenario::new(*nd_ms, *nj_ms, np, cfg.seed)?;
            let stream = pipeline::cmd_impair(&cfg, &s)?;
            println!(
                "{} samples, loss rate {:.5} -> {out}/impaired.csv",
                stream.len(),
                stream.loss_rate()
            );
        }
        Command::CalibrateAccuracy => {
            let c = pipeline::cmd_calibrate_accuracy(&cfg)?;
            for s in &c.candidates {
                let range = s.fitted_range.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:<16} range {range:>7}  rms err {:.3}  max err {:.3}",
                    s.metric.as_str(),
                    s.rms_error,
                    s.max_abs_error
                );
            }
            println!("best: {}", c.best);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
