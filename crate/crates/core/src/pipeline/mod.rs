//! End-to-end runs: data, correlation, importance, training, baselines,
//! evaluation and reports, driven by one [`RunConfig`].

mod config;

pub use config::{BaselineToggles, RunConfig, Source, StageSeeds};

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Timelike;
use sha2::{Digest, Sha256};

use crate::baselines::{Ann, Arima, BaselineError, CellLstm, Forecaster, HistoricalAverage, MovingAverage};
use crate::data::{correlation_profile, read_orders, read_weather, synthesize, DataError, Dataset, Prepared};
use crate::eval::{export_heatmap, ComparisonTable, EvalError, Scale};
use crate::forest::{count_feature_dimension, select_features, Category, CategoryWindows, ForestError, SpatialForest};
use crate::model::{Checkpoint, FclNet, FclNetConfig, ModelError, TrainLog};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("[{stage}] {message}")]
    Stage { stage: &'static str, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub const CONV_LSTM: &str = "Conv-LSTM (demand only)";
pub const FCLNET_FULL: &str = "FCL-Net (full)";
pub const FCLNET_SELECTED: &str = "FCL-Net (selected)";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash of everything the aggregated dataset depends on.
pub fn cache_key(cfg: &RunConfig) -> Result<String> {
    let mut h = Sha256::new();
    let mut grid = Vec::new();
    crate::data::write_grid(&mut grid, &cfg.grid)?;
    h.update(&grid);
    match &cfg.source {
        Source::Synthetic { scenario, buckets } => {
            h.update(format!("synthetic {} {buckets} {}", scenario.name(), cfg.seeds().data).as_bytes());
        }
        Source::Directory(dir) => {
            h.update(b"directory");
            for name in ["grid.txt", "demand.csv", "ttr.csv", "weather.csv"] {
                h.update(std::fs::read(dir.join(name))?);
            }
        }
        Source::Records { orders, weather } => {
            h.update(format!("records {}", cfg.max_fill).as_bytes());
            h.update(std::fs::read(orders)?);
            h.update(std::fs::read(weather)?);
        }
    }
    Ok(hex(&h.finalize()))
}

/// Builds the dataset from the configured source, reusing a cached copy
/// under `<output>/cache/<key>` when present.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, String)> {
    let key = cache_key(cfg)?;
    let dir = cfg.output.join("cache").join(&key);
    if cfg.cache && dir.join("demand.csv").exists() {
        if let Ok(ds) = Dataset::load_dir(&dir) {
            log::info!("using cached dataset {key}");
            return Ok((ds, key));
        }
    }
    let ds = match &cfg.source {
        Source::Synthetic { scenario, buckets } => synthesize(&cfg.grid, *buckets, cfg.seeds().data, *scenario)?,
        Source::Directory(d) => Dataset::load_dir(d)?,
        Source::Records { orders, weather } => {
            let orders = read_orders(std::fs::File::open(orders)?)?;
            let weather = read_weather(std::fs::File::open(weather)?)?;
            let (ds, report) = Dataset::from_records(&orders, &weather, &cfg.grid, cfg.max_fill)?;
            log::info!("ingest: {report:?}");
            ds
        }
    };
    if cfg.cache {
        ds.save_dir(&dir)?;
    }
    Ok((ds, key))
}

/// The demand-only network matching `full`.
pub fn demand_only_config(full: &FclNetConfig) -> FclNetConfig {
    FclNetConfig { ttr: None, calendar: None, weather: None, ..full.clone() }
}

/// Windows a network configuration actually feeds: every input of a vector
/// branch gets that branch's window.
pub fn realized_windows(cfg: &FclNetConfig) -> CategoryWindows {
    let mut w = CategoryWindows::default();
    w.set(Category::Demand, cfg.demand.window);
    if let Some(b) = &cfg.ttr {
        w.set(Category::Ttr, b.window);
    }
    if let Some(b) = &cfg.calendar {
        for &i in &b.inputs {
            w.set([Category::Hour, Category::Week][i], b.window);
        }
    }
    if let Some(b) = &cfg.weather {
        for &i in &b.inputs {
            w.set([Category::Temperature, Category::Humidity, Category::WeatherState, Category::WindSpeed, Category::Visibility][i], b.window);
        }
    }
    w
}

/// Uniform look-back used for the importance forest: the longest window of
/// the full network.
pub fn importance_windows(full: &FclNetConfig) -> CategoryWindows {
    CategoryWindows::uniform(realized_windows(full).max())
}

pub fn windows_text(w: &CategoryWindows) -> String {
    Category::ALL.iter().filter(|&&c| w.get(c) > 0).map(|&c| format!("{}={}", c.code(), w.get(c))).collect::<Vec<_>>().join(",")
}

pub fn parse_windows(text: &str) -> Result<CategoryWindows> {
    let mut w = CategoryWindows::default();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| PipelineError::Config(format!("expected category=window, got {part:?}")))?;
        let c: Category = k.trim().parse()?;
        w.set(c, v.trim().parse().map_err(|_| PipelineError::Config(format!("bad window {v:?}")))?);
    }
    Ok(w)
}

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub table: ComparisonTable,
    pub selected: CategoryWindows,
}

struct Manifest {
    lines: Vec<(String, String)>,
    stages: Vec<(&'static str, String)>,
}

impl Manifest {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn write(&self, cfg: &RunConfig, path: &Path) -> std::io::Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "fclnet-run 1");
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "[config]");
        s.push_str(&cfg.to_text());
        let _ = writeln!(s, "[seeds]");
        let seeds = cfg.seeds();
        for (k, v) in [("data", seeds.data), ("network", seeds.network), ("forest", seeds.forest), ("ann", seeds.ann), ("lstm", seeds.lstm)] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "[run]");
        for (k, v) in &self.lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "[stages]");
        for (k, v) in &self.stages {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "[notes]");
        for n in [
            "fusion network: demand branch trained alone first, then all branches jointly with zero exogenous fusion weights",
            "metrics on min-max standardized demand; comparison_demand.csv holds demand units",
            "mae is the mean absolute error",
            "importance normalized globally over all cell forests; negative raw values floored at 0",
            "vector branches use the longest selected window among their inputs",
        ] {
            let _ = writeln!(s, "- {n}");
        }
        std::fs::write(path, s)
    }
}

/// Reads the `[config]` section of a run manifest.
pub fn config_from_manifest(text: &str) -> Result<RunConfig> {
    let mut in_config = false;
    let mut body = String::new();
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with('[') && t.ends_with(']') {
            in_config = t == "[config]";
            continue;
        }
        if in_config {
            body.push_str(line);
            body.push('\n');
        }
    }
    RunConfig::parse(&body)
}

fn stage<T, E: std::fmt::Display>(m: &mut Manifest, name: &'static str, r: std::result::Result<T, E>) -> Result<T> {
    match r {
        Ok(v) => {
            m.stages.push((name, "ok".into()));
            Ok(v)
        }
        Err(e) => {
            m.stages.push((name, format!("failed: {e}")));
            Err(PipelineError::Stage { stage: name, message: e.to_string() })
        }
    }
}

fn write_logs(path: &Path, logs: &[(&str, &TrainLog)]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "model,epoch,train_loss,validation_rmse")?;
    for (name, log) in logs {
        for e in &log.epochs {
            writeln!(w, "{name},{},{},{}", e.epoch, e.train_loss, e.validation_rmse)?;
        }
    }
    w.flush()
}

/// Runs every stage and writes the run directory. A failing stage is
/// recorded in the manifest and returned as [`PipelineError::Stage`].
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let cfg = config.with_derived_seeds();
    let dir = cfg.output.clone();
    std::fs::create_dir_all(dir.join("checkpoints"))?;
    std::fs::create_dir_all(dir.join("heatmaps"))?;
    let mut m = Manifest { lines: Vec::new(), stages: Vec::new() };
    let result = run_stages(&cfg, &dir, &mut m);
    m.write(&cfg, &dir.join("manifest.txt"))?;
    result
}

fn run_stages(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<RunSummary> {
    let (ds, key) = stage(m, "data", load_dataset(cfg))?;
    m.note("dataset_key", &key);
    let data = stage(m, "prepare", Prepared::new(&ds, cfg.split))?;
    m.note("buckets", data.len());
    m.note("train_buckets", data.train_len);

    let profile = stage(m, "correlate", correlation_profile(&ds.demand.slice(0..data.train_len), &ds.ttr.slice(0..data.train_len), 3))?;
    profile.write_csv(std::fs::File::create(dir.join("correlation.csv"))?)?;

    let full_cfg = cfg.network.clone();
    let uniform = importance_windows(&full_cfg);
    let sf = stage(m, "importance", SpatialForest::fit(&data, uniform, &cfg.forest))?;
    let report = sf.importance();
    report.write_csv(std::fs::File::create(dir.join("importance.csv"))?)?;
    let selected = select_features(&report, &cfg.selection);
    let selected_cfg = selected.apply(&full_cfg);
    m.note("selected_windows", windows_text(&selected));
    let (r, c) = (data.rows, data.cols);
    for (name, net) in [("full", &full_cfg), ("selected", &selected_cfg)] {
        let counted = count_feature_dimension(r, c, &realized_windows(net));
        let fed = net.input_dimension(r, c);
        if counted != fed {
            return Err(PipelineError::Stage { stage: "importance", message: format!("{name} network reads {fed} inputs, expected {counted}") });
        }
        m.note(&format!("input_dimension.{name}"), fed);
    }
    m.note("input_dimension.demand_only", demand_only_config(&full_cfg).input_dimension(r, c));

    let train = || -> Result<_> {
        let (conv, conv_log) = FclNet::train(demand_only_config(&full_cfg), &data)?;
        let (full, full_log) = FclNet::train_from(full_cfg.clone(), &data, Some(&conv))?;
        let (sel, sel_log) = FclNet::train_from(selected_cfg.clone(), &data, Some(&conv))?;
        Ok((conv, conv_log, full, full_log, sel, sel_log))
    };
    let (conv, conv_log, full, full_log, sel, sel_log) = stage(m, "train", train())?;
    for (file, net) in [("conv_lstm.ckpt", &conv), ("fclnet_full.ckpt", &full), ("fclnet_selected.ckpt", &sel)] {
        Checkpoint { model: net.clone(), grid: ds.grid.clone(), scaling: data.scaling.clone() }.save(&dir.join("checkpoints").join(file))?;
    }

    let b = cfg.baselines;
    let baselines = || -> Result<_> {
        let ha = if b.ha { Some(HistoricalAverage::fit(&data)?) } else { None };
        let ma = b.ma.then(|| MovingAverage { window: cfg.ma_window });
        let arima = if b.arima { Some(Arima::fit(&data, cfg.arima)?) } else { None };
        let ann = if b.ann { Some(Ann::fit(&data, &cfg.ann)?) } else { None };
        let lstm = if b.lstm { Some(CellLstm::fit(&data, &cfg.lstm)?) } else { None };
        Ok((ha, ma, arima, ann, lstm))
    };
    let (ha, ma, arima, ann, lstm) = stage(m, "baselines", baselines())?;
    let mut logs: Vec<(&str, &TrainLog)> = vec![(CONV_LSTM, &conv_log), (FCLNET_FULL, &full_log), (FCLNET_SELECTED, &sel_log)];
    let cell_logs: Vec<(String, &TrainLog)> = ann
        .iter()
        .flat_map(|(_, l)| l.iter().enumerate().map(|(c, l)| (format!("ANN cell {c}"), l)))
        .chain(lstm.iter().flat_map(|(_, l)| l.iter().enumerate().map(|(c, l)| (format!("LSTM cell {c}"), l))))
        .collect();
    logs.extend(cell_logs.iter().map(|(n, l)| (n.as_str(), *l)));
    write_logs(&dir.join("train_logs.csv"), &logs)?;

    let mut models: Vec<(&str, &dyn Forecaster)> = Vec::new();
    if let Some(x) = &ha {
        models.push(("HA", x));
    }
    if let Some(x) = &ma {
        models.push(("MA", x));
    }
    if let Some(x) = &arima {
        models.push(("ARIMA", x));
    }
    if let Some((x, _)) = &ann {
        models.push(("ANN", x));
    }
    if let Some((x, _)) = &lstm {
        models.push(("LSTM", x));
    }
    models.push((CONV_LSTM, &conv));
    models.push((FCLNET_FULL, &full));
    models.push((FCLNET_SELECTED, &sel));
    let evaluate = || -> Result<_> {
        Ok((ComparisonTable::compare(&models, &data, Scale::Standardized)?, ComparisonTable::compare(&models, &data, Scale::Demand)?))
    };
    let (table, table_demand) = stage(m, "evaluate", evaluate())?;
    table.write_csv(std::fs::File::create(dir.join("comparison.csv"))?)?;
    table_demand.write_csv(std::fs::File::create(dir.join("comparison_demand.csv"))?)?;

    let heatmaps = || -> Result<()> {
        for &h in &cfg.heatmap_hours {
            let Some(t) = data.test_range().find(|&t| data.timestamps[t].hour() == h) else { continue };
            export_heatmap(&data.raw_demand[t], r, c, &dir.join("heatmaps").join(format!("truth_h{h:02}")))?;
            let p = full.predict(&data, t)?;
            export_heatmap(&p, r, c, &dir.join("heatmaps").join(format!("fclnet_full_h{h:02}")))?;
        }
        Ok(())
    };
    stage(m, "report", heatmaps())?;
    Ok(RunSummary { dir: dir.to_path_buf(), table, selected })
}
