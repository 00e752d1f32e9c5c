//! Run configuration in a plain `key = value` text format.

use std::fmt::Write as _;
use std::path::PathBuf;

use super::{PipelineError, Result};
use crate::baselines::{ArimaOrder, NeuralConfig};
use crate::data::{GridSpec, Scenario};
use crate::forest::{derive_seed, ForestConfig, SelectionRules};
use crate::model::FclNetConfig;

/// Where the run gets its data.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Synthetic { scenario: Scenario, buckets: usize },
    /// A directory written by `Dataset::save_dir`.
    Directory(PathBuf),
    /// Raw order and weather CSV files.
    Records { orders: PathBuf, weather: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineToggles {
    pub ha: bool,
    pub ma: bool,
    pub arima: bool,
    pub ann: bool,
    pub lstm: bool,
}

impl BaselineToggles {
    pub fn all() -> Self {
        Self { ha: true, ma: true, arima: true, ann: true, lstm: true }
    }

    pub fn none() -> Self {
        Self { ha: false, ma: false, arima: false, ann: false, lstm: false }
    }

    fn names(&self) -> Vec<&'static str> {
        [("ha", self.ha), ("ma", self.ma), ("arima", self.arima), ("ann", self.ann), ("lstm", self.lstm)]
            .into_iter()
            .filter_map(|(n, on)| on.then_some(n))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub output: PathBuf,
    pub grid: GridSpec,
    pub source: Source,
    /// Longest gap, in buckets, bridged by carrying weather forward.
    pub max_fill: usize,
    /// Training share of the chronological split.
    pub split: f64,
    /// The full-variable network; the other two headline models derive from it.
    pub network: FclNetConfig,
    pub forest: ForestConfig,
    pub selection: SelectionRules,
    pub baselines: BaselineToggles,
    pub ma_window: usize,
    pub arima: ArimaOrder,
    pub ann: NeuralConfig,
    pub lstm: NeuralConfig,
    /// Hours of day rendered as heatmaps from the first test day.
    pub heatmap_hours: Vec<u32>,
    pub cache: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("run"),
            grid: GridSpec::default(),
            source: Source::Synthetic { scenario: Scenario::Default, buckets: 24 * 7 * 8 },
            max_fill: 3,
            split: 0.7,
            network: FclNetConfig::default(),
            forest: ForestConfig::default(),
            selection: SelectionRules::default(),
            baselines: BaselineToggles::all(),
            ma_window: 8,
            arima: ArimaOrder::default(),
            ann: NeuralConfig::ann(),
            lstm: NeuralConfig::lstm(),
            heatmap_hours: vec![0, 9],
            cache: true,
        }
    }
}

/// Seeds handed to each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub data: u64,
    pub network: u64,
    pub forest: u64,
    pub ann: u64,
    pub lstm: u64,
}

impl RunConfig {
    pub fn seeds(&self) -> StageSeeds {
        StageSeeds {
            data: derive_seed(self.seed, 1),
            network: derive_seed(self.seed, 2),
            forest: derive_seed(self.seed, 3),
            ann: derive_seed(self.seed, 4),
            lstm: derive_seed(self.seed, 5),
        }
    }

    /// Copy with every nested seed replaced by its derived value.
    pub fn with_derived_seeds(&self) -> Self {
        let s = self.seeds();
        let mut c = self.clone();
        c.network.train.seed = s.network;
        c.forest.seed = s.forest;
        c.ann.train.seed = s.ann;
        c.lstm.train.seed = s.lstm;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.network.validate()?;
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split {} must lie in (0, 1)", self.split));
        }
        if self.forest.trees == 0 || self.forest.tree.min_samples_leaf == 0 {
            return bad("forest needs trees and a positive leaf size".into());
        }
        if self.ma_window == 0 || self.ann.window == 0 || self.lstm.window == 0 || self.ann.hidden == 0 || self.lstm.hidden == 0 {
            return bad("baseline windows and sizes must be positive".into());
        }
        if let Source::Synthetic { buckets, .. } = self.source {
            if buckets < 200 {
                return bad(format!("synthetic runs need at least 200 buckets, got {buckets}"));
            }
        }
        if self.heatmap_hours.iter().any(|&h| h > 23) {
            return bad("heatmap hours must be 0..=23".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
        push("seed", self.seed.to_string());
        push("output", self.output.display().to_string());
        match &self.source {
            Source::Synthetic { scenario, buckets } => {
                push("scenario", scenario.name().into());
                push("buckets", buckets.to_string());
            }
            Source::Directory(p) => push("data_dir", p.display().to_string()),
            Source::Records { orders, weather } => {
                push("orders", orders.display().to_string());
                push("weather", weather.display().to_string());
            }
        }
        let g = &self.grid;
        push("grid.lon_min", g.lon_min.to_string());
        push("grid.lon_max", g.lon_max.to_string());
        push("grid.lat_min", g.lat_min.to_string());
        push("grid.lat_max", g.lat_max.to_string());
        push("grid.rows", g.rows.to_string());
        push("grid.cols", g.cols.to_string());
        push("grid.interval_minutes", g.interval_minutes.to_string());
        push("max_fill", self.max_fill.to_string());
        push("split", self.split.to_string());
        for (k, v) in self.network.to_kv() {
            push(&format!("network.{k}"), v);
        }
        push("forest.trees", self.forest.trees.to_string());
        push("forest.max_depth", self.forest.tree.max_depth.to_string());
        push("forest.min_samples_leaf", self.forest.tree.min_samples_leaf.to_string());
        push("forest.max_features", self.forest.tree.max_features.map_or("auto".into(), |v| v.to_string()));
        push("forest.seed", self.forest.seed.to_string());
        push("select.threshold", self.selection.threshold.to_string());
        push("select.cumulative", self.selection.cumulative.to_string());
        let names = self.baselines.names();
        push("baselines", if names.is_empty() { "none".into() } else { names.join(",") });
        push("ma.window", self.ma_window.to_string());
        push("arima.order", format!("{},{},{}", self.arima.p, self.arima.d, self.arima.q));
        for (name, n) in [("ann", &self.ann), ("lstm", &self.lstm)] {
            push(&format!("{name}.window"), n.window.to_string());
            push(&format!("{name}.hidden"), n.hidden.to_string());
            for (k, v) in n.train.to_kv("train.") {
                push(&format!("{name}.{k}"), v);
            }
        }
        push("heatmap.hours", self.heatmap_hours.iter().map(u32::to_string).collect::<Vec<_>>().join(","));
        push("cache", self.cache.to_string());
        kv
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_kv() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let bad = || PipelineError::Config(format!("bad value for {key}: {value:?}"));
        fn p<T: std::str::FromStr>(v: &str, bad: impl Fn() -> PipelineError) -> Result<T> {
            v.parse().map_err(|_| bad())
        }
        match key {
            "seed" => self.seed = p(value, bad)?,
            "output" => self.output = PathBuf::from(value),
            "scenario" => {
                let scenario = value.parse()?;
                let buckets = match self.source {
                    Source::Synthetic { buckets, .. } => buckets,
                    _ => RunConfig::default_buckets(),
                };
                self.source = Source::Synthetic { scenario, buckets };
            }
            "buckets" => {
                let buckets = p(value, bad)?;
                let scenario = match self.source {
                    Source::Synthetic { scenario, .. } => scenario,
                    _ => Scenario::Default,
                };
                self.source = Source::Synthetic { scenario, buckets };
            }
            "data_dir" => self.source = Source::Directory(PathBuf::from(value)),
            "orders" | "weather" => {
                let (mut orders, mut weather) = match &self.source {
                    Source::Records { orders, weather } => (orders.clone(), weather.clone()),
                    _ => (PathBuf::new(), PathBuf::new()),
                };
                if key == "orders" {
                    orders = PathBuf::from(value);
                } else {
                    weather = PathBuf::from(value);
                }
                self.source = Source::Records { orders, weather };
            }
            "grid.lon_min" => self.grid.lon_min = p(value, bad)?,
            "grid.lon_max" => self.grid.lon_max = p(value, bad)?,
            "grid.lat_min" => self.grid.lat_min = p(value, bad)?,
            "grid.lat_max" => self.grid.lat_max = p(value, bad)?,
            "grid.rows" => self.grid.rows = p(value, bad)?,
            "grid.cols" => self.grid.cols = p(value, bad)?,
            "grid.interval_minutes" => self.grid.interval_minutes = p(value, bad)?,
            "max_fill" => self.max_fill = p(value, bad)?,
            "split" => self.split = p(value, bad)?,
            "forest.trees" => self.forest.trees = p(value, bad)?,
            "forest.max_depth" => self.forest.tree.max_depth = p(value, bad)?,
            "forest.min_samples_leaf" => self.forest.tree.min_samples_leaf = p(value, bad)?,
            "forest.max_features" => self.forest.tree.max_features = if value == "auto" { None } else { Some(p(value, bad)?) },
            "forest.seed" => self.forest.seed = p(value, bad)?,
            "select.threshold" => self.selection.threshold = p(value, bad)?,
            "select.cumulative" => self.selection.cumulative = p(value, bad)?,
            "baselines" => {
                let mut t = BaselineToggles::none();
                for name in value.split(',').map(str::trim).filter(|s| !s.is_empty() && *s != "none") {
                    match name {
                        "ha" => t.ha = true,
                        "ma" => t.ma = true,
                        "arima" => t.arima = true,
                        "ann" => t.ann = true,
                        "lstm" => t.lstm = true,
                        "all" => t = BaselineToggles::all(),
                        _ => return Err(bad()),
                    }
                }
                self.baselines = t;
            }
            "ma.window" => self.ma_window = p(value, bad)?,
            "arima.order" => {
                let parts: Vec<usize> = value.split(',').map(|s| p(s.trim(), bad)).collect::<Result<_>>()?;
                let [p_, d, q] = parts[..] else { return Err(bad()) };
                self.arima = ArimaOrder { p: p_, d, q };
            }
            "heatmap.hours" => self.heatmap_hours = value.split(',').filter(|s| !s.trim().is_empty()).map(|s| p(s.trim(), bad)).collect::<Result<_>>()?,
            "cache" => self.cache = p(value, bad)?,
            _ => {
                if let Some(k) = key.strip_prefix("network.") {
                    if self.network.set(k, value)? {
                        return Ok(());
                    }
                }
                for (prefix, n) in [("ann.", &mut self.ann), ("lstm.", &mut self.lstm)] {
                    if let Some(k) = key.strip_prefix(prefix) {
                        match k {
                            "window" => n.window = p(value, bad)?,
                            "hidden" => n.hidden = p(value, bad)?,
                            _ => match k.strip_prefix("train.") {
                                Some(tk) if n.train.set(tk, value)? => {}
                                _ => return Err(PipelineError::Config(format!("unknown key {key:?}"))),
                            },
                        }
                        return Ok(());
                    }
                }
                return Err(PipelineError::Config(format!("unknown key {key:?}")));
            }
        }
        Ok(())
    }

    fn default_buckets() -> usize {
        24 * 7 * 8
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k, v)?;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig { seed: 11, baselines: BaselineToggles { ha: true, ma: false, arima: true, ann: false, lstm: true }, ..RunConfig::default() };
        c.network.ttr = None;
        c.forest.tree.max_features = Some(5);
        c.heatmap_hours = vec![3, 18];
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        let d = RunConfig { source: Source::Records { orders: "o.csv".into(), weather: "w.csv".into() }, ..RunConfig::default() };
        assert_eq!(RunConfig::parse(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn comments_and_errors() {
        let c = RunConfig::parse("# demo\nseed = 4 # master\nbaselines = none\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.baselines, BaselineToggles::none());
        assert!(RunConfig::parse("nonsense = 1").is_err());
        assert!(RunConfig::parse("seed").is_err());
        assert!(RunConfig::parse("split = 2").unwrap().validate().is_err());
    }

    #[test]
    fn seeds_derive_from_the_master_seed() {
        let a = RunConfig { seed: 1, ..RunConfig::default() }.with_derived_seeds();
        let b = RunConfig { seed: 2, ..RunConfig::default() }.with_derived_seeds();
        assert_ne!(a.network.train.seed, b.network.train.seed);
        assert_ne!(a.forest.seed, a.network.train.seed);
        assert_eq!(a, RunConfig { seed: 1, ..RunConfig::default() }.with_derived_seeds());
    }
}
