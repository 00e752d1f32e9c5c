//! One forest per grid cell over lagged spatial and city-wide variables,
//! aggregated importance and look-back window selection.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use super::{derive_seed, FeatureMatrix, ForestConfig, ForestError, RandomForest, Result};
use crate::data::Prepared;
use crate::model::FclNetConfig;

/// Variable categories. Demand and travel time rate are per cell; the rest
/// are city-wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Demand,
    Ttr,
    Hour,
    Week,
    Temperature,
    Humidity,
    WeatherState,
    WindSpeed,
    Visibility,
}

impl Category {
    /// Layout order.
    pub const ALL: [Category; 9] = [
        Category::Demand,
        Category::Ttr,
        Category::Hour,
        Category::Week,
        Category::Temperature,
        Category::Humidity,
        Category::WeatherState,
        Category::WindSpeed,
        Category::Visibility,
    ];

    /// Column order of the lag table.
    pub const TABLE: [Category; 9] = [
        Category::Demand,
        Category::Ttr,
        Category::Temperature,
        Category::Humidity,
        Category::WeatherState,
        Category::WindSpeed,
        Category::Visibility,
        Category::Hour,
        Category::Week,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::Demand => "d",
            Category::Ttr => "tau",
            Category::Hour => "h",
            Category::Week => "w",
            Category::Temperature => "at",
            Category::Humidity => "ah",
            Category::WeatherState => "as",
            Category::WindSpeed => "aw",
            Category::Visibility => "av",
        }
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, Category::Demand | Category::Ttr)
    }

    /// Calendar variables are known at the target time; everything else is
    /// observed up to the step before it.
    pub fn newest_offset(self) -> usize {
        match self {
            Category::Hour | Category::Week => 0,
            _ => 1,
        }
    }

    fn index(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).unwrap()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Category {
    type Err = ForestError;
    fn from_str(s: &str) -> Result<Self> {
        Category::ALL.into_iter().find(|c| c.code() == s).ok_or_else(|| ForestError::Invalid(format!("unknown category {s:?}")))
    }
}

/// Look-back window per category; 0 excludes the category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CategoryWindows(pub [usize; 9]);

impl CategoryWindows {
    pub fn uniform(k: usize) -> Self {
        Self([k; 9])
    }

    pub fn get(&self, c: Category) -> usize {
        self.0[c.index()]
    }

    pub fn set(&mut self, c: Category, k: usize) {
        self.0[c.index()] = k;
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// The network configuration with one branch per selected group. A
    /// vector branch covers its selected inputs with the largest of their
    /// windows. The demand branch is always kept.
    pub fn apply(&self, base: &FclNetConfig) -> FclNetConfig {
        let mut cfg = base.clone();
        let d = self.get(Category::Demand);
        if d > 0 {
            cfg.demand.window = d;
        }
        let t = self.get(Category::Ttr);
        cfg.ttr = (t > 0).then(|| {
            let mut b = base.ttr.clone().unwrap_or_else(|| base.demand.clone());
            b.window = t;
            b
        });
        let seq = |cats: &[Category], base: &Option<crate::model::SeqBranchConfig>, fallback: usize| {
            let inputs: Vec<usize> = (0..cats.len()).filter(|&i| self.get(cats[i]) > 0).collect();
            if inputs.is_empty() {
                return None;
            }
            let window = inputs.iter().map(|&i| self.get(cats[i])).max().unwrap();
            let mut b = base.clone().unwrap_or(crate::model::SeqBranchConfig { window, layers: 1, hidden: fallback, inputs: vec![] });
            b.window = window;
            b.inputs = inputs;
            Some(b)
        };
        cfg.calendar = seq(&[Category::Hour, Category::Week], &base.calendar, 16);
        cfg.weather = seq(
            &[Category::Temperature, Category::Humidity, Category::WeatherState, Category::WindSpeed, Category::Visibility],
            &base.weather,
            16,
        );
        cfg
    }
}

/// Scalar predictors per observation: cells times window for per-cell
/// categories plus the window for every city-wide one.
pub fn count_feature_dimension(rows: usize, cols: usize, windows: &CategoryWindows) -> usize {
    Category::ALL.iter().map(|&c| if c.is_spatial() { rows * cols * windows.get(c) } else { windows.get(c) }).sum()
}

/// One predictor: the category, how many steps before the target it is
/// taken, and the source cell for per-cell categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feature {
    pub category: Category,
    pub offset: usize,
    pub cell: Option<usize>,
}

impl Feature {
    /// Position within the category's window, 0 for the most recent lag.
    pub fn lag_index(&self) -> usize {
        self.offset - self.category.newest_offset()
    }
}

/// Flat predictor order: categories in [`Category::ALL`] order, then lag
/// from most recent, then source cell in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    pub rows: usize,
    pub cols: usize,
    pub windows: CategoryWindows,
    pub features: Vec<Feature>,
}

impl FeatureLayout {
    pub fn new(rows: usize, cols: usize, windows: CategoryWindows) -> Self {
        let mut features = Vec::new();
        for c in Category::ALL {
            for lag in 0..windows.get(c) {
                let offset = lag + c.newest_offset();
                if c.is_spatial() {
                    features.extend((0..rows * cols).map(|cell| Feature { category: c, offset, cell: Some(cell) }));
                } else {
                    features.push(Feature { category: c, offset, cell: None });
                }
            }
        }
        Self { rows, cols, windows, features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Earliest target index with every lag available.
    pub fn first_target(&self) -> usize {
        self.features.iter().map(|f| f.offset).max().unwrap_or(0)
    }

    pub fn value(&self, data: &Prepared, t: usize, f: &Feature) -> f64 {
        let s = t - f.offset;
        match f.category {
            Category::Demand => data.demand[s][f.cell.unwrap()],
            Category::Ttr => data.ttr[s][f.cell.unwrap()],
            Category::Hour => data.calendar[s][0],
            Category::Week => data.calendar[s][1],
            Category::Temperature => data.weather[s][0],
            Category::Humidity => data.weather[s][1],
            Category::WeatherState => data.weather[s][2],
            Category::WindSpeed => data.weather[s][3],
            Category::Visibility => data.weather[s][4],
        }
    }

    /// Design matrix for target indices `range`.
    pub fn design(&self, data: &Prepared, range: std::ops::Range<usize>) -> Result<FeatureMatrix> {
        if self.rows != data.rows || self.cols != data.cols {
            return Err(ForestError::Invalid(format!("layout for {}x{} but data is {}x{}", self.rows, self.cols, data.rows, data.cols)));
        }
        if range.start < self.first_target() || range.end > data.len() {
            return Err(ForestError::InsufficientHistory(format!("targets {range:?} need look-back {} within {} steps", self.first_target(), data.len())));
        }
        let mut out = Vec::with_capacity(range.len() * self.len());
        for t in range.clone() {
            out.extend(self.features.iter().map(|f| self.value(data, t, f)));
        }
        FeatureMatrix::new(range.len(), self.len(), out)
    }
}

/// Independent forests, one per target cell, sharing one design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialForest {
    pub layout: FeatureLayout,
    pub forests: Vec<RandomForest>,
    pub design: FeatureMatrix,
    /// Standardized demand per target cell, aligned with `design` rows.
    pub labels: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SpatialForest {
    /// Fits on the training slice of `data`. Cell `c` uses the master seed
    /// mixed with `c`, and tree `k` within it mixes in `k` again.
    pub fn fit(data: &Prepared, windows: CategoryWindows, cfg: &ForestConfig) -> Result<Self> {
        let layout = FeatureLayout::new(data.rows, data.cols, windows);
        if layout.is_empty() {
            return Err(ForestError::Invalid("no categories selected".into()));
        }
        let first = layout.first_target();
        if data.train_len < first + 2 {
            return Err(ForestError::InsufficientHistory(format!("{} training steps for a look-back of {first}", data.train_len)));
        }
        let range = first..data.train_len;
        let design = layout.design(data, range.clone())?;
        let labels: Vec<Vec<f64>> = (0..data.cells()).map(|c| range.clone().map(|t| data.demand[t][c]).collect()).collect();
        let forests = labels
            .par_iter()
            .enumerate()
            .map(|(c, y)| RandomForest::fit(&design, y, &ForestConfig { seed: derive_seed(cfg.seed, c as u64), ..cfg.clone() }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layout, forests, design, labels, seed: cfg.seed })
    }

    pub fn predict(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        let x = self.layout.design(data, t..t + 1)?;
        Ok(self.forests.iter().map(|f| f.predict(x.row(0))).collect())
    }

    /// Raw permutation importance per target cell.
    pub fn raw_importance(&self) -> Vec<Vec<f64>> {
        self.forests
            .par_iter()
            .enumerate()
            .map(|(c, f)| f.permutation_importance(&self.design, &self.labels[c], derive_seed(self.seed ^ 0x5eed, c as u64)))
            .collect()
    }

    pub fn importance(&self) -> ImportanceReport {
        ImportanceReport::from_raw(&self.layout, &self.raw_importance())
    }
}

/// Importance in percent of the total over all cells, features and lags,
/// after flooring negative raw values at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub rows: usize,
    pub cols: usize,
    pub windows: CategoryWindows,
    /// Per-cell categories: `[source cell][target cell][lag]`.
    pub spatial: [Vec<Vec<Vec<f64>>>; 2],
    /// City-wide categories in [`Category::ALL`] order after the two
    /// per-cell ones: `[target cell][lag]`.
    pub global: [Vec<Vec<f64>>; 7],
    /// True when every raw importance was zero, leaving nothing to normalize.
    pub degenerate: bool,
}

impl ImportanceReport {
    pub fn from_raw(layout: &FeatureLayout, raw: &[Vec<f64>]) -> Self {
        let cells = layout.rows * layout.cols;
        let w = layout.windows;
        let spatial = [Category::Demand, Category::Ttr].map(|c| vec![vec![vec![0.0; w.get(c)]; cells]; cells]);
        let global = [
            Category::Hour,
            Category::Week,
            Category::Temperature,
            Category::Humidity,
            Category::WeatherState,
            Category::WindSpeed,
            Category::Visibility,
        ]
        .map(|c| vec![vec![0.0; w.get(c)]; cells]);
        let mut rep = Self { rows: layout.rows, cols: layout.cols, windows: w, spatial, global, degenerate: false };
        let total: f64 = raw.iter().flatten().map(|v| v.max(0.0)).sum();
        rep.degenerate = total <= 0.0;
        let scale = if rep.degenerate { 0.0 } else { 100.0 / total };
        for (target, vi) in raw.iter().enumerate() {
            for (f, &v) in layout.features.iter().zip(vi) {
                let pct = v.max(0.0) * scale;
                let lag = f.lag_index();
                match f.category.index() {
                    i @ 0..=1 => rep.spatial[i][f.cell.unwrap()][target][lag] = pct,
                    i => rep.global[i - 2][target][lag] = pct,
                }
            }
        }
        rep
    }

    /// Percent per lag of one category summed over cells, most recent first.
    pub fn by_lag(&self, c: Category) -> Vec<f64> {
        let mut out = vec![0.0; self.windows.get(c)];
        let mut add = |v: &Vec<f64>| out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        match c.index() {
            i @ 0..=1 => self.spatial[i].iter().flatten().for_each(&mut add),
            i => self.global[i - 2].iter().for_each(&mut add),
        }
        out
    }

    pub fn category_total(&self, c: Category) -> f64 {
        self.by_lag(c).iter().sum()
    }

    /// Categories with their totals, largest first (ties in layout order).
    pub fn ranking(&self) -> Vec<(Category, f64)> {
        let mut r: Vec<(Category, f64)> = Category::ALL.iter().map(|&c| (c, self.category_total(c))).collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1));
        r
    }

    pub fn total(&self) -> f64 {
        Category::ALL.iter().map(|&c| self.category_total(c)).sum()
    }

    /// Lag table (one row per look-back step, oldest first, `-` where a
    /// category has no such lag) followed by category totals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# relative importance in percent, normalized over all cells")?;
        if self.degenerate {
            writeln!(w, "# all raw importances were zero")?;
        }
        let k = Category::ALL.iter().map(|&c| self.windows.get(c) + c.newest_offset()).max().unwrap_or(0);
        let header: Vec<&str> = Category::TABLE.iter().map(|c| c.code()).collect();
        writeln!(w, "lag,{}", header.join(","))?;
        let lags: Vec<Vec<f64>> = Category::TABLE.iter().map(|&c| self.by_lag(c)).collect();
        for offset in (0..=k).rev() {
            if offset == 0 && Category::TABLE.iter().all(|&c| c.newest_offset() > 0 || self.windows.get(c) == 0) {
                continue;
            }
            let label = if offset == 0 { "t".to_string() } else { format!("t-{offset}") };
            let cells: Vec<String> = Category::TABLE
                .iter()
                .zip(&lags)
                .map(|(&c, l)| match offset.checked_sub(c.newest_offset()).and_then(|i| l.get(i)) {
                    Some(v) => format!("{v:.3}"),
                    None => "-".into(),
                })
                .collect();
            if offset == k && cells.iter().all(|s| s == "-") {
                continue;
            }
            writeln!(w, "{label},{}", cells.join(","))?;
        }
        writeln!(w)?;
        writeln!(w, "category,percent")?;
        for c in Category::TABLE {
            writeln!(w, "{},{:.3}", c.code(), self.category_total(c))?;
        }
        Ok(())
    }
}

/// Window-selection rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionRules {
    /// Minimum category total, in percent, to keep a category.
    pub threshold: f64,
    /// Share of a kept category's importance its window must cover.
    pub cumulative: f64,
}

impl Default for SelectionRules {
    fn default() -> Self {
        Self { threshold: 3.0, cumulative: 0.9 }
    }
}

/// Keeps categories whose total reaches the threshold and gives each the
/// shortest window, counted from the most recent lag, covering the
/// cumulative share of its importance.
pub fn select_from_lags(by_lag: &[(Category, Vec<f64>)], rules: &SelectionRules) -> CategoryWindows {
    let mut out = CategoryWindows::default();
    for (c, lags) in by_lag {
        let total: f64 = lags.iter().sum();
        if total <= 0.0 || total < rules.threshold {
            continue;
        }
        let mut acc = 0.0;
        let mut window = lags.len();
        for (i, v) in lags.iter().enumerate() {
            acc += v;
            if acc >= rules.cumulative * total * (1.0 - 1e-12) {
                window = i + 1;
                break;
            }
        }
        out.set(*c, window);
    }
    out
}

pub fn select_features(report: &ImportanceReport, rules: &SelectionRules) -> CategoryWindows {
    let lags: Vec<(Category, Vec<f64>)> = Category::ALL.iter().map(|&c| (c, report.by_lag(c))).collect();
    select_from_lags(&lags, rules)
}
