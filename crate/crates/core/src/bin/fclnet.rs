//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fclnet::baselines::Forecaster;
use fclnet::data::{
    correlation_profile, parse_grid, read_orders, read_weather, synthesize, synthesize_orders, write_orders, write_weather, Dataset, GridSpec,
    Prepared, Scenario,
};
use fclnet::eval::{evaluate, export_heatmap, ComparisonTable, Scale};
use fclnet::forest::{count_feature_dimension, select_features, CategoryWindows, ForestConfig, SpatialForest};
use fclnet::model::{Checkpoint, FclNet};
use fclnet::pipeline::{self, demand_only_config, parse_windows, windows_text, RunConfig};

#[derive(Parser)]
#[command(name = "fclnet", version, about = "Passenger-demand forecasting with fused conv-LSTM networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Full,
    DemandOnly,
    Selected,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic city as an aggregated dataset directory.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long, default_value_t = 24 * 7 * 8)]
        buckets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 7)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        cols: usize,
        /// Also write per-order and weather CSV files.
        #[arg(long)]
        records: bool,
    },
    /// Aggregate order and weather CSV files onto a grid.
    Ingest {
        #[arg(long)]
        orders: PathBuf,
        #[arg(long)]
        weather: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid file of key=value lines; defaults to the 7x7 hourly grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        max_fill: usize,
    },
    /// Mean lagged correlation with target demand by cell distance.
    Correlate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_lag: usize,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
    },
    /// Forest importance by category and lag, and the selected windows.
    Importance {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        window: usize,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
    },
    /// Train a network and save a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration whose `network.*` keys shape the model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        variant: Variant,
        /// Windows for the selected variant, e.g. `d=4,tau=8,h=2,at=2`.
        #[arg(long)]
        windows: Option<String>,
        /// Extra `key=value` settings applied after the config file.
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
    },
    /// Score checkpoints on the test slice.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
        /// Score in demand units instead of standardized values.
        #[arg(long)]
        demand_units: bool,
    },
    /// Print a run's tables, or render heatmaps from a checkpoint.
    Report {
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target index for the heatmaps; defaults to the first test step.
        #[arg(long)]
        step: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
    },
    /// Run every stage from one configuration file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn apply_sets(cfg: &mut RunConfig, sets: &[String]) -> AnyResult<()> {
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
        cfg.set(k, v)?;
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> AnyResult<RunConfig> {
    Ok(match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            if text.starts_with("fclnet-run") {
                pipeline::config_from_manifest(&text)?
            } else {
                RunConfig::parse(&text)?
            }
        }
        None => RunConfig::default(),
    })
}

fn prepared(dir: &Path, split: f64) -> AnyResult<(Dataset, Prepared)> {
    let ds = Dataset::load_dir(dir)?;
    let data = Prepared::new(&ds, split)?;
    Ok((ds, data))
}

fn execute(cmd: Command) -> Result<(), (&'static str, Box<dyn std::error::Error>)> {
    match cmd {
        Command::Simulate { out, scenario, buckets, seed, rows, cols, records } => (|| -> AnyResult<()> {
            let scenario: Scenario = scenario.parse()?;
            let ds = synthesize(&GridSpec::with_size(rows, cols), buckets, seed, scenario)?;
            ds.save_dir(&out)?;
            if records {
                let (orders, weather) = synthesize_orders(&ds, seed);
                write_orders(std::fs::File::create(out.join("orders.csv"))?, &orders)?;
                write_weather(std::fs::File::create(out.join("weather_records.csv"))?, &weather)?;
            }
            println!("wrote {} buckets of a {rows}x{cols} {} city to {}", ds.len(), scenario.name(), out.display());
            Ok(())
        })()
        .map_err(|e| ("simulate", e)),
        Command::Ingest { orders, weather, out, grid, max_fill } => (|| -> AnyResult<()> {
            let spec = match grid {
                Some(p) => parse_grid(&std::fs::read_to_string(p)?)?,
                None => GridSpec::default(),
            };
            let orders = read_orders(std::fs::File::open(orders)?)?;
            let weather = read_weather(std::fs::File::open(weather)?)?;
            let (ds, report) = Dataset::from_records(&orders, &weather, &spec, max_fill)?;
            ds.save_dir(&out)?;
            println!("{report:#?}");
            println!("wrote {} buckets to {}", ds.len(), out.display());
            Ok(())
        })()
        .map_err(|e| ("ingest", e)),
        Command::Correlate { data, max_lag, split } => (|| -> AnyResult<()> {
            let (ds, p) = prepared(&data, split)?;
            let profile = correlation_profile(&ds.demand.slice(0..p.train_len), &ds.ttr.slice(0..p.train_len), max_lag)?;
            profile.write_csv(std::io::stdout().lock())?;
            Ok(())
        })()
        .map_err(|e| ("correlate", e)),
        Command::Importance { data, out, window, trees, seed, split } => (|| -> AnyResult<()> {
            let (_, p) = prepared(&data, split)?;
            let windows = CategoryWindows::uniform(window);
            let sf = SpatialForest::fit(&p, windows, &ForestConfig { trees, seed, ..ForestConfig::default() })?;
            let report = sf.importance();
            match &out {
                Some(path) => report.write_csv(std::fs::File::create(path)?)?,
                None => report.write_csv(std::io::stdout().lock())?,
            }
            let selected = select_features(&report, &Default::default());
            println!("selected windows: {}", windows_text(&selected));
            println!(
                "features per observation: {} -> {}",
                count_feature_dimension(p.rows, p.cols, &windows),
                count_feature_dimension(p.rows, p.cols, &selected)
            );
            Ok(())
        })()
        .map_err(|e| ("importance", e)),
        Command::Train { data, out, config, variant, windows, set, split } => (|| -> AnyResult<()> {
            let mut cfg = load_config(config.as_deref())?;
            apply_sets(&mut cfg, &set)?;
            let (ds, p) = prepared(&data, split)?;
            let net = match variant {
                Variant::Full => cfg.network.clone(),
                Variant::DemandOnly => demand_only_config(&cfg.network),
                Variant::Selected => {
                    let w = windows.as_deref().ok_or("--windows is required for the selected variant")?;
                    parse_windows(w)?.apply(&cfg.network)
                }
            };
            let (model, log) = FclNet::train(net, &p)?;
            println!("best validation rmse {:.6} at epoch {} of {}", log.best_validation_rmse, log.best_epoch, log.epochs.len());
            Checkpoint { model, grid: ds.grid, scaling: p.scaling }.save(&out)?;
            println!("saved {}", out.display());
            Ok(())
        })()
        .map_err(|e| ("train", e)),
        Command::Evaluate { data, checkpoint, split, demand_units } => (|| -> AnyResult<()> {
            let (_, p) = prepared(&data, split)?;
            let ckpts: Vec<(String, Checkpoint)> =
                checkpoint.iter().map(|c| Ok((c.display().to_string(), Checkpoint::load(c)?))).collect::<AnyResult<_>>()?;
            for (name, c) in &ckpts {
                if c.scaling != p.scaling {
                    eprintln!("warning: {name} was fitted with a different standardization");
                }
            }
            let models: Vec<(&str, &dyn Forecaster)> = ckpts.iter().map(|(n, c)| (n.as_str(), &c.model as &dyn Forecaster)).collect();
            let scale = if demand_units { Scale::Demand } else { Scale::Standardized };
            ComparisonTable::compare(&models, &p, scale)?.write_csv(std::io::stdout().lock())?;
            Ok(())
        })()
        .map_err(|e| ("evaluate", e)),
        Command::Report { run, checkpoint, data, step, out, split } => (|| -> AnyResult<()> {
            if let Some(dir) = run {
                for file in ["comparison.csv", "importance.csv", "manifest.txt"] {
                    println!("== {file}");
                    println!("{}", std::fs::read_to_string(dir.join(file))?);
                }
                return Ok(());
            }
            let (Some(ckpt), Some(data)) = (checkpoint, data) else {
                return Err("report needs --run, or --checkpoint with --data".into());
            };
            let c = Checkpoint::load(&ckpt)?;
            let (_, p) = prepared(&data, split)?;
            let t = step.unwrap_or(p.train_len);
            let out = out.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out)?;
            export_heatmap(&p.raw_demand[t], p.rows, p.cols, &out.join(format!("truth_t{t}")))?;
            export_heatmap(&c.predict(&p, t)?, p.rows, p.cols, &out.join(format!("predicted_t{t}")))?;
            let m = evaluate(&c.model, &p, Scale::Standardized)?;
            println!("test rmse {:.6} r2 {:.4} mae {:.6}; heatmaps for step {t} in {}", m.rmse, m.r2, m.mae, out.display());
            Ok(())
        })()
        .map_err(|e| ("report", e)),
        Command::Run { config, set, out } => (|| -> AnyResult<()> {
            let mut cfg = load_config(config.as_deref())?;
            apply_sets(&mut cfg, &set)?;
            if let Some(o) = out {
                cfg.output = o;
            }
            let summary = pipeline::run(&cfg)?;
            print!("{}", summary.table.to_csv_string());
            println!("selected windows: {}", windows_text(&summary.selected));
            println!("run directory: {}", summary.dir.display());
            Ok(())
        })()
        .map_err(|e| ("run", e)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, e)) => {
            eprintln!("error [{stage}]: {e}");
            ExitCode::FAILURE
        }
    }
}
