//! Per-cell neural baselines trained with the shared optimizer: a
//! one-hidden-layer network over the flattened look-back window and a
//! single-layer LSTM over per-step variables.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BaselineError, Forecaster, Result};
use crate::data::Prepared;
use crate::forest::{derive_seed, CategoryWindows, Feature, FeatureLayout};
use crate::layers::{glorot, join, lstm_forward, Binder, LstmCellParams, ParamKind, Parameterized};
use crate::model::{fit, TrainLog, TrainOptions, Trainable};
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Every variable of one cell over a `window`-step look-back, in the
/// forest's feature order (per-cell categories taken at `cell`).
pub fn cell_features(data: &Prepared, cell: usize, t: usize, window: usize) -> Vec<f64> {
    let layout = FeatureLayout::new(1, 1, CategoryWindows::uniform(window));
    layout.features.iter().map(|f| layout.value(data, t, &Feature { cell: f.cell.map(|_| cell), ..*f })).collect()
}

/// Variables per step of [`cell_sequence`].
pub const STEP_INPUTS: usize = 9;

/// `window` steps of `[d, tau, h, w, at, ah, as, aw, av]` for one cell;
/// step `s` pairs observations at `t - window + s` with calendar values one
/// step later, so the last step carries the target's calendar.
pub fn cell_sequence(data: &Prepared, cell: usize, t: usize, window: usize) -> Vec<Vec<f64>> {
    (0..window)
        .map(|s| {
            let u = t - window + s;
            let mut v = vec![data.demand[u][cell], data.ttr[u][cell], data.calendar[u + 1][0], data.calendar[u + 1][1]];
            v.extend_from_slice(&data.weather[u]);
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralConfig {
    pub window: usize,
    pub hidden: usize,
    pub train: TrainOptions,
}

impl NeuralConfig {
    pub fn ann() -> Self {
        Self { window: 8, hidden: 64, train: TrainOptions::default() }
    }

    pub fn lstm() -> Self {
        Self { window: 8, hidden: 16, train: TrainOptions::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hidden == 0 {
            return Err(BaselineError::Invalid(format!("window {} and hidden {} must be positive", self.window, self.hidden)));
        }
        self.train.validate()?;
        Ok(())
    }
}

fn gather_grads(tape: &Tape, vars: &[(Var, ParamKind)]) -> Vec<f64> {
    let mut grad = Vec::new();
    for &(v, _) in vars {
        match tape.grad(v) {
            Some(g) => grad.extend_from_slice(g),
            None => grad.extend(std::iter::repeat(0.0).take(tape.value(v).len())),
        }
    }
    grad
}

fn squared_error(tape: &mut Tape, pred: Var, target: f64) -> crate::tensor::Result<Var> {
    let y = tape.constant(Tensor::vector(vec![target]));
    let diff = tape.sub(pred, y)?;
    tape.sum_squares(diff)
}

/// Sigmoid hidden layer and linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl AnnParams {
    pub fn init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w1: Tensor::uniform(&[hidden, inputs], glorot(inputs, hidden), &mut rng),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::uniform(&[1, hidden], glorot(hidden, 1), &mut rng),
            b2: Tensor::zeros(&[1]),
        }
    }

    fn forward(&self, tape: &mut Tape, x: &[f64]) -> crate::tensor::Result<(Var, Vec<(Var, ParamKind)>)> {
        let mut b = Binder::new(tape);
        let w1 = b.bind(&self.w1, ParamKind::Weight);
        let b1 = b.bind(&self.b1, ParamKind::Bias);
        let w2 = b.bind(&self.w2, ParamKind::Weight);
        let b2 = b.bind(&self.b2, ParamKind::Bias);
        let vars = b.vars;
        let x = tape.constant(Tensor::vector(x.to_vec()));
        let h = tape.affine(w1, x, b1)?;
        let h = tape.sigmoid(h)?;
        Ok((tape.affine(w2, h, b2)?, vars))
    }

    pub fn predict(&self, x: &[f64]) -> crate::tensor::Result<f64> {
        let mut tape = Tape::new();
        let (out, _) = self.forward(&mut tape, x)?;
        Ok(tape.value(out).data()[0])
    }
}

impl Parameterized for AnnParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor)) {
        f(&join(prefix, "w1"), ParamKind::Weight, &self.w1);
        f(&join(prefix, "b1"), ParamKind::Bias, &self.b1);
        f(&join(prefix, "w2"), ParamKind::Weight, &self.w2);
        f(&join(prefix, "b2"), ParamKind::Bias, &self.b2);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor)) {
        f(&join(prefix, "w1"), ParamKind::Weight, &mut self.w1);
        f(&join(prefix, "b1"), ParamKind::Bias, &mut self.b1);
        f(&join(prefix, "w2"), ParamKind::Weight, &mut self.w2);
        f(&join(prefix, "b2"), ParamKind::Bias, &mut self.b2);
    }
}

impl Trainable for AnnParams {
    type Sample = (Vec<f64>, f64);

    fn sample_error(&self, s: &Self::Sample) -> std::result::Result<f64, TensorError> {
        Ok((self.predict(&s.0)? - s.1).powi(2))
    }

    fn sample_grad(&self, s: &Self::Sample) -> std::result::Result<(f64, Vec<f64>), TensorError> {
        let mut tape = Tape::new();
        let (out, vars) = self.forward(&mut tape, &s.0)?;
        let l = squared_error(&mut tape, out, s.1)?;
        let err = tape.value(l).data()[0];
        tape.backward(l)?;
        Ok((err, gather_grads(&tape, &vars)))
    }

    fn outputs_per_sample(&self) -> usize {
        1
    }
}

/// Single LSTM layer followed by a linear scalar readout.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLstmParams {
    pub cell: LstmCellParams,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl CellLstmParams {
    pub fn init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = LstmCellParams::init(inputs, hidden, &mut rng);
        Self { cell, w_out: Tensor::uniform(&[1, hidden], glorot(hidden, 1), &mut rng), b_out: Tensor::zeros(&[1]) }
    }

    fn forward(&self, tape: &mut Tape, steps: &[Vec<f64>]) -> crate::tensor::Result<(Var, Vec<(Var, ParamKind)>)> {
        let mut b = Binder::new(tape);
        let cell = self.cell.bind(&mut b);
        let w = b.bind(&self.w_out, ParamKind::Weight);
        let bias = b.bind(&self.b_out, ParamKind::Bias);
        let vars = b.vars;
        let xs: Vec<Var> = steps.iter().map(|s| tape.constant(Tensor::vector(s.clone()))).collect();
        let hs = lstm_forward(tape, &xs, &cell)?;
        let last = *hs.last().ok_or_else(|| TensorError::InvalidArgument("empty sequence".into()))?;
        Ok((tape.affine(w, last, bias)?, vars))
    }

    pub fn predict(&self, steps: &[Vec<f64>]) -> crate::tensor::Result<f64> {
        let mut tape = Tape::new();
        let (out, _) = self.forward(&mut tape, steps)?;
        Ok(tape.value(out).data()[0])
    }
}

impl Parameterized for CellLstmParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor)) {
        self.cell.visit(&join(prefix, "cell"), f);
        f(&join(prefix, "w_out"), ParamKind::Weight, &self.w_out);
        f(&join(prefix, "b_out"), ParamKind::Bias, &self.b_out);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor)) {
        self.cell.visit_mut(&join(prefix, "cell"), f);
        f(&join(prefix, "w_out"), ParamKind::Weight, &mut self.w_out);
        f(&join(prefix, "b_out"), ParamKind::Bias, &mut self.b_out);
    }
}

impl Trainable for CellLstmParams {
    type Sample = (Vec<Vec<f64>>, f64);

    fn sample_error(&self, s: &Self::Sample) -> std::result::Result<f64, TensorError> {
        Ok((self.predict(&s.0)? - s.1).powi(2))
    }

    fn sample_grad(&self, s: &Self::Sample) -> std::result::Result<(f64, Vec<f64>), TensorError> {
        let mut tape = Tape::new();
        let (out, vars) = self.forward(&mut tape, &s.0)?;
        let l = squared_error(&mut tape, out, s.1)?;
        let err = tape.value(l).data()[0];
        tape.backward(l)?;
        Ok((err, gather_grads(&tape, &vars)))
    }

    fn outputs_per_sample(&self) -> usize {
        1
    }
}

fn check_history(data: &Prepared, window: usize) -> Result<()> {
    if data.train_len < window + 2 {
        return Err(BaselineError::InsufficientHistory(format!("{} training steps for a look-back of {window}", data.train_len)));
    }
    Ok(())
}

/// Trains one model per cell; cell `c` uses the seed mixed with `c` for
/// both initialization and shuffling.
fn fit_cells<M, I, S>(data: &Prepared, cfg: &NeuralConfig, init: I, sample: S) -> Result<(Vec<M>, Vec<TrainLog>)>
where
    M: Trainable + Send,
    M::Sample: Send,
    I: Fn(u64) -> M + Sync,
    S: Fn(usize, usize) -> M::Sample + Sync,
{
    cfg.validate()?;
    check_history(data, cfg.window)?;
    let fitted: Vec<(M, TrainLog)> = (0..data.cells())
        .into_par_iter()
        .map(|c| {
            let seed = derive_seed(cfg.train.seed, c as u64);
            let mut model = init(seed);
            let samples: Vec<M::Sample> = (cfg.window..data.train_len).map(|t| sample(c, t)).collect();
            let log = fit(&mut model, &samples, &TrainOptions { seed, ..cfg.train.clone() })?;
            Ok((model, log))
        })
        .collect::<Result<_>>()?;
    Ok(fitted.into_iter().unzip())
}

/// One feed-forward network per cell over the flattened look-back window.
#[derive(Debug, Clone, PartialEq)]
pub struct Ann {
    pub window: usize,
    pub models: Vec<AnnParams>,
}

impl Ann {
    pub fn fit(data: &Prepared, cfg: &NeuralConfig) -> Result<(Self, Vec<TrainLog>)> {
        let inputs = crate::forest::count_feature_dimension(1, 1, &CategoryWindows::uniform(cfg.window));
        let (models, logs) = fit_cells(data, cfg, |seed| AnnParams::init(inputs, cfg.hidden, seed), |c, t| (cell_features(data, c, t, cfg.window), data.demand[t][c]))?;
        Ok((Self { window: cfg.window, models }, logs))
    }
}

impl Forecaster for Ann {
    fn forecast(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        if t < self.window || t >= data.len() {
            return Err(BaselineError::InsufficientHistory(format!("target {t}")));
        }
        self.models
            .iter()
            .enumerate()
            .map(|(c, m)| m.predict(&cell_features(data, c, t, self.window)).map_err(|e| BaselineError::Model(e.into())))
            .collect()
    }

    fn first_target(&self) -> usize {
        self.window
    }
}

/// One LSTM per cell over that cell's own variables only.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLstm {
    pub window: usize,
    pub models: Vec<CellLstmParams>,
}

impl CellLstm {
    pub fn fit(data: &Prepared, cfg: &NeuralConfig) -> Result<(Self, Vec<TrainLog>)> {
        let (models, logs) = fit_cells(data, cfg, |seed| CellLstmParams::init(STEP_INPUTS, cfg.hidden, seed), |c, t| (cell_sequence(data, c, t, cfg.window), data.demand[t][c]))?;
        Ok((Self { window: cfg.window, models }, logs))
    }
}

impl Forecaster for CellLstm {
    fn forecast(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        if t < self.window || t >= data.len() {
            return Err(BaselineError::InsufficientHistory(format!("target {t}")));
        }
        self.models
            .iter()
            .enumerate()
            .map(|(c, m)| m.predict(&cell_sequence(data, c, t, self.window)).map_err(|e| BaselineError::Model(e.into())))
            .collect()
    }

    fn first_target(&self) -> usize {
        self.window
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, GridSpec, Scenario};
    use crate::forest::count_feature_dimension;
    use crate::tensor::grad_check;
    use rand::Rng;

    fn small() -> Prepared {
        let grid = GridSpec { rows: 2, cols: 1, ..GridSpec::default() };
        Prepared::new(&synthesize(&grid, 24 * 10, 5, Scenario::Default).unwrap(), 0.7).unwrap()
    }

    #[test]
    fn input_shapes_match_the_contract() {
        let data = small();
        assert_eq!(cell_features(&data, 1, 20, 8).len(), count_feature_dimension(1, 1, &CategoryWindows::uniform(8)));
        let seq = cell_sequence(&data, 1, 20, 8);
        assert_eq!((seq.len(), seq[0].len()), (8, STEP_INPUTS));
        assert_eq!(seq[7][0], data.demand[19][1]);
        assert_eq!(seq[7][2], data.calendar[20][0]);
    }

    #[test]
    fn ann_gradient_matches_finite_differences() {
        let p = AnnParams::init(4, 3, 1);
        let x = vec![0.1, 0.5, -0.3, 0.9];
        let rel = grad_check(
            |tape, vars| {
                let h = tape.constant(Tensor::vector(x.clone()));
                let h = tape.affine(vars[0], h, vars[1])?;
                let h = tape.sigmoid(h)?;
                let out = tape.affine(vars[2], h, vars[3])?;
                squared_error(tape, out, 0.4)
            },
            &[p.w1.clone(), p.b1.clone(), p.w2.clone(), p.b2.clone()],
            1e-5,
        )
        .unwrap();
        assert!(rel < 1e-6, "{rel}");
        let (err, g) = p.sample_grad(&(x.clone(), 0.4)).unwrap();
        assert_eq!(g.len(), p.parameter_count());
        assert!((err - p.sample_error(&(x, 0.4)).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn ann_learns_a_linear_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let make = |rng: &mut ChaCha8Rng| {
            let x: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
            let y = x.iter().sum::<f64>() / 6.0;
            (x, y)
        };
        let train: Vec<_> = (0..400).map(|_| make(&mut rng)).collect();
        let test: Vec<_> = (0..200).map(|_| make(&mut rng)).collect();
        let mut m = AnnParams::init(6, 16, 3);
        let opts = TrainOptions { batch_size: 16, learning_rate: 1e-2, max_epochs: 150, patience: 20, ..TrainOptions::default() };
        fit(&mut m, &train, &opts).unwrap();
        let mean = test.iter().map(|s| s.1).sum::<f64>() / test.len() as f64;
        let ss_res: f64 = test.iter().map(|s| (m.predict(&s.0).unwrap() - s.1).powi(2)).sum();
        let ss_tot: f64 = test.iter().map(|s| (s.1 - mean).powi(2)).sum();
        assert!(1.0 - ss_res / ss_tot > 0.95, "{}", 1.0 - ss_res / ss_tot);
    }

    #[test]
    fn zero_epochs_keep_the_initialization() {
        let data = small();
        let cfg = NeuralConfig { train: TrainOptions { max_epochs: 0, seed: 4, ..TrainOptions::default() }, ..NeuralConfig::ann() };
        let (ann, _) = Ann::fit(&data, &cfg).unwrap();
        let inputs = count_feature_dimension(1, 1, &CategoryWindows::uniform(8));
        assert_eq!(ann.models[1], AnnParams::init(inputs, 64, derive_seed(4, 1)));
    }

    #[test]
    fn lstm_learns_a_constant_and_is_deterministic() {
        let samples: Vec<(Vec<Vec<f64>>, f64)> = (0..60).map(|i| (vec![vec![(i % 7) as f64 / 7.0; 3]; 4], 0.6)).collect();
        let opts = TrainOptions { batch_size: 8, learning_rate: 1e-2, max_epochs: 50, patience: 50, ..TrainOptions::default() };
        let mut a = CellLstmParams::init(3, 4, 1);
        let mut b = a.clone();
        let la = fit(&mut a, &samples, &opts).unwrap();
        let lb = fit(&mut b, &samples, &opts).unwrap();
        assert_eq!(la.epochs[0].train_loss, lb.epochs[0].train_loss);
        assert!(la.best_validation_rmse < 0.01, "{}", la.best_validation_rmse);
    }

    #[test]
    fn neural_baselines_ignore_test_values() {
        let data = small();
        let mut perturbed = data.clone();
        for t in perturbed.test_range() {
            perturbed.demand[t].iter_mut().for_each(|v| *v += 1.0);
        }
        let cfg = NeuralConfig { window: 3, hidden: 4, train: TrainOptions { max_epochs: 2, ..TrainOptions::default() } };
        assert_eq!(CellLstm::fit(&data, &cfg).unwrap().0, CellLstm::fit(&perturbed, &cfg).unwrap().0);
        assert_eq!(Ann::fit(&data, &cfg).unwrap().0, Ann::fit(&perturbed, &cfg).unwrap().0);
    }
}
