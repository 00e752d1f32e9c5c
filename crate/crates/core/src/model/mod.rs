//! The four-branch fusion network.
//!
//! Demand and travel-time grids go through stacked conv-LSTM layers followed
//! by a sigmoid-activated convolution to one channel. Calendar and weather
//! vectors go through stacked LSTM layers followed by a sigmoid scalar
//! readout broadcast to the grid. The four `[rows, cols]` components are
//! combined by element-wise learned fusion matrices with no final activation.

mod checkpoint;
pub mod optim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use optim::{fit, EpochLog, TrainLog, TrainOptions, Trainable};

use crate::data::{DataError, Prepared};
use crate::layers::{
    convlstm_forward, glorot, join, lstm_forward, weight_penalty, Binder, ConvLstmCellParams, ConvLstmCellVars, LstmCellParams, LstmCellVars,
    ParamKind, Parameterized,
};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Calendar inputs: time-of-day class and weekend flag.
pub const CALENDAR_CHANNELS: [&str; 2] = ["hour", "week"];
/// Weather inputs.
pub const WEATHER_CHANNELS: [&str; 5] = ["temperature", "humidity", "state", "wind", "visibility"];

/// A stacked conv-LSTM branch over a grid variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBranchConfig {
    pub window: usize,
    pub layers: usize,
    pub channels: usize,
}

/// A stacked LSTM branch over a vector variable; `inputs` selects channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBranchConfig {
    pub window: usize,
    pub layers: usize,
    pub hidden: usize,
    pub inputs: Vec<usize>,
}

/// Network shape and training settings. Absent branches are simply left
/// out of the fusion, which gives the demand-only conv-LSTM and any
/// selected-variable variant from the same code.
#[derive(Debug, Clone, PartialEq)]
pub struct FclNetConfig {
    pub demand: ConvBranchConfig,
    pub ttr: Option<ConvBranchConfig>,
    pub calendar: Option<SeqBranchConfig>,
    pub weather: Option<SeqBranchConfig>,
    /// Odd square kernel extent for every convolution.
    pub kernel: usize,
    /// Train the demand branch alone first, then add the other branches
    /// with zero fusion weights and train everything jointly.
    pub pretrain_demand: bool,
    pub train: TrainOptions,
}

impl Default for FclNetConfig {
    /// Every branch with an eight-step window, two 8-channel conv-LSTM
    /// layers per grid branch and one 16-unit LSTM layer per vector branch.
    fn default() -> Self {
        Self::full(8)
    }
}

impl FclNetConfig {
    pub fn full(window: usize) -> Self {
        let conv = ConvBranchConfig { window, layers: 2, channels: 8 };
        Self {
            demand: conv.clone(),
            ttr: Some(conv),
            calendar: Some(SeqBranchConfig { window, layers: 1, hidden: 16, inputs: vec![0, 1] }),
            weather: Some(SeqBranchConfig { window, layers: 1, hidden: 16, inputs: vec![0, 1, 2, 3, 4] }),
            kernel: 3,
            pretrain_demand: true,
            train: TrainOptions::default(),
        }
    }

    /// The conv-LSTM benchmark: the demand branch alone.
    pub fn demand_only(window: usize) -> Self {
        Self { ttr: None, calendar: None, weather: None, ..Self::full(window) }
    }

    pub fn branch_count(&self) -> usize {
        1 + self.ttr.is_some() as usize + self.calendar.is_some() as usize + self.weather.is_some() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return bad(format!("kernel extent {} must be odd", self.kernel));
        }
        for (name, b) in [("demand", Some(&self.demand)), ("ttr", self.ttr.as_ref())] {
            if let Some(b) = b {
                if b.window == 0 || b.layers == 0 || b.channels == 0 {
                    return bad(format!("{name} branch needs positive window, layers and channels"));
                }
            }
        }
        for (name, b, n) in [("calendar", self.calendar.as_ref(), 2), ("weather", self.weather.as_ref(), 5)] {
            if let Some(b) = b {
                if b.window == 0 || b.layers == 0 || b.hidden == 0 || b.inputs.is_empty() {
                    return bad(format!("{name} branch needs positive window, layers, hidden units and inputs"));
                }
                if b.inputs.iter().any(|&i| i >= n) || (1..b.inputs.len()).any(|k| b.inputs[k] <= b.inputs[k - 1]) {
                    return bad(format!("{name} inputs must be increasing indices below {n}"));
                }
            }
        }
        self.train.validate()
    }

    /// Earliest target index with a complete history: grid and weather
    /// windows end one step before the target, the calendar window ends at it.
    pub fn first_target(&self) -> usize {
        let mut k = self.demand.window;
        if let Some(b) = &self.ttr {
            k = k.max(b.window);
        }
        if let Some(b) = &self.calendar {
            k = k.max(b.window - 1);
        }
        if let Some(b) = &self.weather {
            k = k.max(b.window);
        }
        k
    }

    /// Scalar predictors one observation feeds the network over an
    /// `rows × cols` grid.
    pub fn input_dimension(&self, rows: usize, cols: usize) -> usize {
        let cells = rows * cols;
        let mut n = self.demand.window * cells;
        if let Some(b) = &self.ttr {
            n += b.window * cells;
        }
        for b in [&self.calendar, &self.weather].into_iter().flatten() {
            n += b.window * b.inputs.len();
        }
        n
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = vec![("kernel".to_string(), self.kernel.to_string()), ("pretrain_demand".to_string(), self.pretrain_demand.to_string())];
        let conv = |kv: &mut Vec<(String, String)>, name: &str, b: &Option<ConvBranchConfig>| match b {
            Some(b) => {
                kv.push((format!("{name}.window"), b.window.to_string()));
                kv.push((format!("{name}.layers"), b.layers.to_string()));
                kv.push((format!("{name}.channels"), b.channels.to_string()));
            }
            None => kv.push((format!("{name}.window"), "0".into())),
        };
        conv(&mut kv, "demand", &Some(self.demand.clone()));
        conv(&mut kv, "ttr", &self.ttr);
        for (name, b) in [("calendar", &self.calendar), ("weather", &self.weather)] {
            match b {
                Some(b) => {
                    kv.push((format!("{name}.window"), b.window.to_string()));
                    kv.push((format!("{name}.layers"), b.layers.to_string()));
                    kv.push((format!("{name}.hidden"), b.hidden.to_string()));
                    kv.push((format!("{name}.inputs"), b.inputs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")));
                }
                None => kv.push((format!("{name}.window"), "0".into())),
            }
        }
        kv.extend(self.train.to_kv("train."));
        kv
    }

    /// Applies one `key=value` setting (keys as produced by [`Self::to_kv`]).
    /// A window of 0 removes an optional branch. Returns `false` for unknown
    /// keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || ModelError::Config(format!("bad value for {key}: {value:?}"));
        let num = || value.trim().parse::<usize>().map_err(|_| bad());
        if let Some(k) = key.strip_prefix("train.") {
            return self.train.set(k, value.trim());
        }
        if key == "kernel" {
            self.kernel = num()?;
            return Ok(true);
        }
        if key == "pretrain_demand" {
            self.pretrain_demand = value.trim().parse().map_err(|_| bad())?;
            return Ok(true);
        }
        let Some((branch, field)) = key.split_once('.') else { return Ok(false) };
        match branch {
            "demand" | "ttr" => {
                let slot = if branch == "demand" {
                    &mut self.demand
                } else {
                    let v = num();
                    if field == "window" && v.as_ref().is_ok_and(|&w| w == 0) {
                        self.ttr = None;
                        return Ok(true);
                    }
                    self.ttr.get_or_insert(ConvBranchConfig { window: 8, layers: 2, channels: 8 })
                };
                match field {
                    "window" => slot.window = num()?,
                    "layers" => slot.layers = num()?,
                    "channels" => slot.channels = num()?,
                    _ => return Ok(false),
                }
            }
            "calendar" | "weather" => {
                let (opt, all) = if branch == "calendar" { (&mut self.calendar, vec![0, 1]) } else { (&mut self.weather, vec![0, 1, 2, 3, 4]) };
                if field == "window" && num()? == 0 {
                    *opt = None;
                    return Ok(true);
                }
                let slot = opt.get_or_insert(SeqBranchConfig { window: 8, layers: 1, hidden: 16, inputs: all });
                match field {
                    "window" => slot.window = num()?,
                    "layers" => slot.layers = num()?,
                    "hidden" => slot.hidden = num()?,
                    "inputs" => {
                        slot.inputs = value.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
                    }
                    _ => return Ok(false),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Parameters of a grid branch: conv-LSTM stack, one-channel readout kernel
/// and bias, and the branch's fusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBranchParams {
    pub cells: Vec<ConvLstmCellParams>,
    pub w_out: Tensor,
    pub b_out: Tensor,
    pub fusion: Tensor,
}

/// Parameters of a vector branch: LSTM stack, scalar readout and fusion
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBranchParams {
    pub cells: Vec<LstmCellParams>,
    pub w_out: Tensor,
    pub b_out: Tensor,
    pub fusion: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FclNetParams {
    pub rows: usize,
    pub cols: usize,
    pub demand: ConvBranchParams,
    pub ttr: Option<ConvBranchParams>,
    pub calendar: Option<SeqBranchParams>,
    pub weather: Option<SeqBranchParams>,
}

impl ConvBranchParams {
    fn new<R: rand::Rng>(cfg: &ConvBranchConfig, rows: usize, cols: usize, kernel: usize, fusion: f64, rng: Option<&mut R>) -> Result<Self> {
        let k = (kernel, kernel);
        let mut cells = Vec::with_capacity(cfg.layers);
        let w_out;
        match rng {
            Some(rng) => {
                for l in 0..cfg.layers {
                    let cin = if l == 0 { 1 } else { cfg.channels };
                    cells.push(ConvLstmCellParams::init(rows, cols, k, cin, cfg.channels, rng)?);
                }
                let taps = kernel * kernel;
                w_out = Tensor::uniform(&[kernel, kernel, cfg.channels, 1], glorot(taps * cfg.channels, taps), rng);
            }
            None => {
                for l in 0..cfg.layers {
                    let cin = if l == 0 { 1 } else { cfg.channels };
                    cells.push(ConvLstmCellParams::zeros(rows, cols, k, cin, cfg.channels)?);
                }
                w_out = Tensor::zeros(&[kernel, kernel, cfg.channels, 1]);
            }
        }
        Ok(Self { cells, w_out, b_out: Tensor::zeros(&[1]), fusion: Tensor::filled(&[rows, cols], fusion) })
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor)) {
        for (l, c) in self.cells.iter().enumerate() {
            c.visit(&join(prefix, &format!("layer{l}")), f);
        }
        f(&join(prefix, "w_out"), ParamKind::Weight, &self.w_out);
        f(&join(prefix, "b_out"), ParamKind::Bias, &self.b_out);
        f(&join(prefix, "fusion"), ParamKind::Weight, &self.fusion);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor)) {
        for (l, c) in self.cells.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("layer{l}")), f);
        }
        f(&join(prefix, "w_out"), ParamKind::Weight, &mut self.w_out);
        f(&join(prefix, "b_out"), ParamKind::Bias, &mut self.b_out);
        f(&join(prefix, "fusion"), ParamKind::Weight, &mut self.fusion);
    }

    fn bind(&self, b: &mut Binder<'_>) -> ConvBranchVars {
        let cells = self.cells.iter().map(|c| c.bind(b)).collect();
        ConvBranchVars {
            cells,
            w_out: b.bind(&self.w_out, ParamKind::Weight),
            b_out: b.bind(&self.b_out, ParamKind::Bias),
            fusion: b.bind(&self.fusion, ParamKind::Weight),
        }
    }
}

impl SeqBranchParams {
    fn new<R: rand::Rng>(cfg: &SeqBranchConfig, rows: usize, cols: usize, fusion: f64, rng: Option<&mut R>) -> Self {
        let mut cells = Vec::with_capacity(cfg.layers);
        let w_out;
        match rng {
            Some(rng) => {
                for l in 0..cfg.layers {
                    let input = if l == 0 { cfg.inputs.len() } else { cfg.hidden };
                    cells.push(LstmCellParams::init(input, cfg.hidden, rng));
                }
                w_out = Tensor::uniform(&[1, cfg.hidden], glorot(cfg.hidden, 1), rng);
            }
            None => {
                for l in 0..cfg.layers {
                    let input = if l == 0 { cfg.inputs.len() } else { cfg.hidden };
                    cells.push(LstmCellParams::zeros(input, cfg.hidden));
                }
                w_out = Tensor::zeros(&[1, cfg.hidden]);
            }
        }
        Self { cells, w_out, b_out: Tensor::zeros(&[1]), fusion: Tensor::filled(&[rows, cols], fusion) }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor)) {
        for (l, c) in self.cells.iter().enumerate() {
            c.visit(&join(prefix, &format!("layer{l}")), f);
        }
        f(&join(prefix, "w_out"), ParamKind::Weight, &self.w_out);
        f(&join(prefix, "b_out"), ParamKind::Bias, &self.b_out);
        f(&join(prefix, "fusion"), ParamKind::Weight, &self.fusion);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor)) {
        for (l, c) in self.cells.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("layer{l}")), f);
        }
        f(&join(prefix, "w_out"), ParamKind::Weight, &mut self.w_out);
        f(&join(prefix, "b_out"), ParamKind::Bias, &mut self.b_out);
        f(&join(prefix, "fusion"), ParamKind::Weight, &mut self.fusion);
    }

    fn bind(&self, b: &mut Binder<'_>) -> SeqBranchVars {
        let cells = self.cells.iter().map(|c| c.bind(b)).collect();
        SeqBranchVars {
            cells,
            w_out: b.bind(&self.w_out, ParamKind::Weight),
            b_out: b.bind(&self.b_out, ParamKind::Bias),
            fusion: b.bind(&self.fusion, ParamKind::Weight),
        }
    }
}

impl FclNetParams {
    /// Glorot-initialized weights, zero peepholes and biases except the
    /// forget biases (1), fusion matrices at `1 / branch_count`.
    pub fn init(cfg: &FclNetConfig, rows: usize, cols: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        Self::build(cfg, rows, cols, 1.0 / cfg.branch_count() as f64, Some(&mut rng))
    }

    /// Every parameter zero except the fusion matrices, which are `fusion`.
    pub fn zeros(cfg: &FclNetConfig, rows: usize, cols: usize, fusion: f64) -> Result<Self> {
        cfg.validate()?;
        Self::build::<ChaCha8Rng>(cfg, rows, cols, fusion, None)
    }

    fn build<R: rand::Rng>(cfg: &FclNetConfig, rows: usize, cols: usize, fusion: f64, mut rng: Option<&mut R>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(ModelError::Config(format!("grid {rows}x{cols}")));
        }
        let demand = ConvBranchParams::new(&cfg.demand, rows, cols, cfg.kernel, fusion, rng.as_deref_mut())?;
        let ttr = match &cfg.ttr {
            Some(b) => Some(ConvBranchParams::new(b, rows, cols, cfg.kernel, fusion, rng.as_deref_mut())?),
            None => None,
        };
        let calendar = cfg.calendar.as_ref().map(|b| SeqBranchParams::new(b, rows, cols, fusion, rng.as_deref_mut()));
        let weather = cfg.weather.as_ref().map(|b| SeqBranchParams::new(b, rows, cols, fusion, rng.as_deref_mut()));
        Ok(Self { rows, cols, demand, ttr, calendar, weather })
    }

    pub fn bind(&self, tape: &mut Tape) -> (FclNetVars, Vec<(Var, ParamKind)>) {
        self.bind_with(Binder::new(tape))
    }

    /// Like [`Self::bind`] but reuses `leaves`, given in visiting order.
    pub fn bind_leaves(&self, tape: &mut Tape, leaves: &[Var]) -> (FclNetVars, Vec<(Var, ParamKind)>) {
        self.bind_with(Binder::with_leaves(tape, leaves))
    }

    fn bind_with(&self, mut b: Binder<'_>) -> (FclNetVars, Vec<(Var, ParamKind)>) {
        let vars = FclNetVars {
            rows: self.rows,
            cols: self.cols,
            demand: self.demand.bind(&mut b),
            ttr: self.ttr.as_ref().map(|p| p.bind(&mut b)),
            calendar: self.calendar.as_ref().map(|p| p.bind(&mut b)),
            weather: self.weather.as_ref().map(|p| p.bind(&mut b)),
        };
        (vars, b.vars)
    }
}

impl Parameterized for FclNetParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor)) {
        self.demand.visit(&join(prefix, "demand"), f);
        if let Some(p) = &self.ttr {
            p.visit(&join(prefix, "ttr"), f);
        }
        if let Some(p) = &self.calendar {
            p.visit(&join(prefix, "calendar"), f);
        }
        if let Some(p) = &self.weather {
            p.visit(&join(prefix, "weather"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor)) {
        self.demand.visit_mut(&join(prefix, "demand"), f);
        if let Some(p) = &mut self.ttr {
            p.visit_mut(&join(prefix, "ttr"), f);
        }
        if let Some(p) = &mut self.calendar {
            p.visit_mut(&join(prefix, "calendar"), f);
        }
        if let Some(p) = &mut self.weather {
            p.visit_mut(&join(prefix, "weather"), f);
        }
    }
}

pub struct ConvBranchVars {
    pub cells: Vec<ConvLstmCellVars>,
    pub w_out: Var,
    pub b_out: Var,
    pub fusion: Var,
}

pub struct SeqBranchVars {
    pub cells: Vec<LstmCellVars>,
    pub w_out: Var,
    pub b_out: Var,
    pub fusion: Var,
}

pub struct FclNetVars {
    pub rows: usize,
    pub cols: usize,
    pub demand: ConvBranchVars,
    pub ttr: Option<ConvBranchVars>,
    pub calendar: Option<SeqBranchVars>,
    pub weather: Option<SeqBranchVars>,
}

/// Inputs for one prediction. Grid windows hold `rows·cols` values per step
/// in row-major order, oldest first; vector windows hold the selected
/// channels per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub demand: Vec<Vec<f64>>,
    pub ttr: Vec<Vec<f64>>,
    pub calendar: Vec<Vec<f64>>,
    pub weather: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl FclNetConfig {
    /// Builds the observation for target index `t` from standardized data.
    pub fn sample(&self, data: &Prepared, t: usize) -> Result<Sample> {
        if t < self.first_target() || t >= data.len() {
            return Err(ModelError::InsufficientHistory(format!("target index {t} needs {} steps of history", self.first_target())));
        }
        let grid = |frames: &[Vec<f64>], k: usize| frames[t - k..t].to_vec();
        let pick = |v: &[f64], inputs: &[usize]| inputs.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Ok(Sample {
            demand: grid(&data.demand, self.demand.window),
            ttr: self.ttr.as_ref().map_or_else(Vec::new, |b| grid(&data.ttr, b.window)),
            calendar: self.calendar.as_ref().map_or_else(Vec::new, |b| (t + 1 - b.window..=t).map(|s| pick(&data.calendar[s], &b.inputs)).collect()),
            weather: self.weather.as_ref().map_or_else(Vec::new, |b| (t - b.window..t).map(|s| pick(&data.weather[s], &b.inputs)).collect()),
            target: data.demand[t].clone(),
        })
    }

    pub fn samples(&self, data: &Prepared, range: std::ops::Range<usize>) -> Result<Vec<Sample>> {
        range.map(|t| self.sample(data, t)).collect()
    }
}

fn conv_branch(tape: &mut Tape, frames: &[Vec<f64>], v: &ConvBranchVars, rows: usize, cols: usize) -> crate::tensor::Result<Var> {
    let mut seq: Vec<Var> = frames
        .iter()
        .map(|f| Tensor::new(vec![rows, cols, 1], f.clone()).map(|t| tape.constant(t)))
        .collect::<crate::tensor::Result<_>>()?;
    for cell in &v.cells {
        seq = convlstm_forward(tape, &seq, cell)?;
    }
    let last = *seq.last().expect("non-empty window");
    let out = tape.conv2d(last, v.w_out, Some(v.b_out))?;
    let out = tape.sigmoid(out)?;
    let out = tape.squeeze(out)?;
    tape.hadamard(v.fusion, out)
}

fn seq_branch(tape: &mut Tape, steps: &[Vec<f64>], v: &SeqBranchVars, rows: usize, cols: usize) -> crate::tensor::Result<Var> {
    let mut seq: Vec<Var> = steps.iter().map(|s| tape.constant(Tensor::vector(s.clone()))).collect();
    for cell in &v.cells {
        seq = lstm_forward(tape, &seq, cell)?;
    }
    let last = *seq.last().expect("non-empty window");
    let out = tape.affine(v.w_out, last, v.b_out)?;
    let out = tape.sigmoid(out)?;
    let out = tape.repeat_scalar(out, rows, cols)?;
    let out = tape.squeeze(out)?;
    tape.hadamard(v.fusion, out)
}

/// Fused `[rows, cols]` prediction in standardized units.
pub fn forward(tape: &mut Tape, vars: &FclNetVars, cfg: &FclNetConfig, s: &Sample) -> crate::tensor::Result<Var> {
    let cells = vars.rows * vars.cols;
    let mismatch = |what: &str| TensorError::InvalidArgument(format!("{what} window does not match the configuration"));
    if s.demand.len() != cfg.demand.window || s.demand.iter().any(|f| f.len() != cells) {
        return Err(mismatch("demand"));
    }
    let mut terms = vec![conv_branch(tape, &s.demand, &vars.demand, vars.rows, vars.cols)?];
    if let (Some(b), Some(v)) = (&cfg.ttr, &vars.ttr) {
        if s.ttr.len() != b.window || s.ttr.iter().any(|f| f.len() != cells) {
            return Err(mismatch("travel-time"));
        }
        terms.push(conv_branch(tape, &s.ttr, v, vars.rows, vars.cols)?);
    }
    for (name, b, v, steps) in [("calendar", &cfg.calendar, &vars.calendar, &s.calendar), ("weather", &cfg.weather, &vars.weather, &s.weather)] {
        if let (Some(b), Some(v)) = (b, v) {
            if steps.len() != b.window || steps.iter().any(|x| x.len() != b.inputs.len()) {
                return Err(mismatch(name));
            }
            terms.push(seq_branch(tape, steps, v, vars.rows, vars.cols)?);
        }
    }
    crate::layers::add_all(tape, &terms)
}

/// Squared Frobenius error plus `alpha` times the squared norm of every
/// weight (biases excluded).
pub fn loss(tape: &mut Tape, prediction: Var, target: Var, params: &[(Var, ParamKind)], alpha: f64) -> crate::tensor::Result<Var> {
    if alpha < 0.0 {
        return Err(TensorError::InvalidArgument(format!("alpha {alpha} < 0")));
    }
    let diff = tape.sub(target, prediction)?;
    let err = tape.sum_squares(diff)?;
    if alpha == 0.0 {
        return Ok(err);
    }
    match weight_penalty(tape, params)? {
        Some(p) => {
            let p = tape.scale(p, alpha)?;
            tape.add(err, p)
        }
        None => Ok(err),
    }
}

/// A configured network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FclNet {
    pub config: FclNetConfig,
    pub params: FclNetParams,
}

impl Parameterized for FclNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor)) {
        self.params.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor)) {
        self.params.visit_mut(prefix, f);
    }
}

impl Trainable for FclNet {
    type Sample = Sample;

    fn sample_error(&self, s: &Sample) -> crate::tensor::Result<f64> {
        let pred = self.predict_sample(s)?;
        Ok(pred.iter().zip(&s.target).map(|(p, y)| (p - y) * (p - y)).sum())
    }

    fn sample_grad(&self, s: &Sample) -> crate::tensor::Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let (vars, bound) = self.params.bind(&mut tape);
        let pred = forward(&mut tape, &vars, &self.config, s)?;
        let target = tape.constant(Tensor::new(vec![self.params.rows, self.params.cols], s.target.clone())?);
        let l = loss(&mut tape, pred, target, &bound, 0.0)?;
        let err = tape.value(l).data()[0];
        tape.backward(l)?;
        let mut grad = Vec::with_capacity(self.params.parameter_count());
        for &(v, _) in &bound {
            match tape.grad(v) {
                Some(g) => grad.extend_from_slice(g),
                None => grad.extend(std::iter::repeat(0.0).take(tape.value(v).len())),
            }
        }
        Ok((err, grad))
    }

    fn outputs_per_sample(&self) -> usize {
        self.params.rows * self.params.cols
    }
}

impl FclNet {
    pub fn new(config: FclNetConfig, rows: usize, cols: usize) -> Result<Self> {
        let params = FclNetParams::init(&config, rows, cols)?;
        Ok(Self { config, params })
    }

    /// Standardized prediction for prepared inputs.
    pub fn predict_sample(&self, s: &Sample) -> crate::tensor::Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (vars, _) = self.params.bind(&mut tape);
        let pred = forward(&mut tape, &vars, &self.config, s)?;
        Ok(tape.value(pred).data().to_vec())
    }

    /// Standardized prediction for target index `t`.
    pub fn predict_standardized(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        let s = self.config.sample(data, t)?;
        Ok(self.predict_sample(&s)?)
    }

    /// Prediction in demand units: inverse min-max transform, clipped at 0.
    pub fn predict(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        let z = self.predict_standardized(data, t)?;
        Ok(z.into_iter().map(|v| data.scaling.demand.invert(v).max(0.0)).collect())
    }

    /// Trains on the training slice of `data` and keeps the parameters with
    /// the best validation error.
    /// With `pretrain_demand` and at least one exogenous branch, the demand
    /// branch is first trained alone and the returned log covers the joint
    /// stage only.
    pub fn train(config: FclNetConfig, data: &Prepared) -> Result<(Self, TrainLog)> {
        Self::train_from(config, data, None)
    }

    /// As [`Self::train`], reusing `base` as the pretrained demand branch when
    /// it is the demand-only network this configuration would train first.
    pub fn train_from(config: FclNetConfig, data: &Prepared, base: Option<&FclNet>) -> Result<(Self, TrainLog)> {
        config.validate()?;
        let mut model = Self::new(config, data.rows, data.cols)?;
        if model.config.pretrain_demand && model.config.branch_count() > 1 {
            let alone = FclNetConfig { ttr: None, calendar: None, weather: None, ..model.config.clone() };
            let demand = match base {
                Some(b) if b.config == alone && b.params.rows == data.rows && b.params.cols == data.cols => b.params.demand.clone(),
                _ => Self::train(alone, data)?.0.params.demand,
            };
            model.params.demand = demand;
            let p = &mut model.params;
            let exo = [p.ttr.as_mut().map(|b| &mut b.fusion), p.calendar.as_mut().map(|b| &mut b.fusion), p.weather.as_mut().map(|b| &mut b.fusion)];
            for f in exo.into_iter().flatten() {
                f.data_mut().fill(0.0);
            }
        }
        let log = model.fit(data)?;
        Ok((model, log))
    }

    /// Continues training from the current parameters.
    pub fn fit(&mut self, data: &Prepared) -> Result<TrainLog> {
        let first = self.config.first_target();
        if data.train_len <= first + 1 {
            return Err(ModelError::InsufficientHistory(format!("{} training steps for a look-back of {first}", data.train_len)));
        }
        let samples = self.config.samples(data, first..data.train_len)?;
        let opts = self.config.train.clone();
        fit(self, &samples, &opts)
    }
}

#[cfg(test)]
mod tests;
