//! Acceptance suite: one line per criterion, then a nonzero exit if any
//! criterion failed.
//!
//! cargo test --release --test acceptance

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use chrono::Duration as Hours;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use fclnet::baselines::MovingAverage;
use fclnet::data::{
    correlation_profile, synthesize, synthetic_start, Dataset, Explanatory, GridSeries, GridSpec, Prepared, Scenario, WeatherObs,
};
use fclnet::eval::{evaluate, metrics, Scale};
use fclnet::forest::{
    count_feature_dimension, select_features, Category, CategoryWindows, FeatureMatrix, ForestConfig, Node, RandomForest, RegressionTree,
    SelectionRules, SpatialForest, TreeConfig,
};
use fclnet::layers::{convlstm_forward, convlstm_step, lstm_forward, lstm_step, Binder, ConvLstmCellParams, LstmCellParams, Parameterized};
use fclnet::model::{forward, loss, Checkpoint, FclNet, FclNetConfig};
use fclnet::pipeline::{importance_windows, run, RunConfig};
use fclnet::tensor::{grad_check, Tape, Tensor, Var};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn randomize(p: &mut dyn Parameterized, limit: f64, rng: &mut ChaCha8Rng) {
    p.visit_mut("", &mut |_, _, t| {
        let shape = t.shape().to_vec();
        *t = Tensor::uniform(&shape, limit, rng);
    });
}

fn tensors(p: &dyn Parameterized) -> Vec<Tensor> {
    let mut out = Vec::new();
    p.visit("", &mut |_, _, t| out.push(t.clone()));
    out
}

// 1. gradient correctness

fn gradients() -> Outcome {
    const EPS: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: Vec<(&str, f64)> = Vec::new();

    // dense sigmoid layer
    let params = vec![Tensor::uniform(&[4, 3], 1.0, &mut rng), Tensor::uniform(&[4], 1.0, &mut rng)];
    let x = Tensor::uniform(&[3], 1.0, &mut rng);
    let err = grad_check(
        |tape, v| {
            let xv = tape.constant(x.clone());
            let z = tape.affine(v[0], xv, v[1])?;
            let s = tape.sigmoid(z)?;
            tape.sum_squares(s)
        },
        &params,
        EPS,
    )
    .map_err(e2s)?;
    worst.push(("dense", err));

    // convolution with bias and tanh
    let params = vec![Tensor::uniform(&[4, 5, 2], 1.0, &mut rng), Tensor::uniform(&[3, 3, 2, 3], 1.0, &mut rng), Tensor::uniform(&[3], 1.0, &mut rng)];
    let err = grad_check(
        |tape, v| {
            let y = tape.conv2d(v[0], v[1], Some(v[2]))?;
            let y = tape.tanh(y)?;
            tape.sum_squares(y)
        },
        &params,
        EPS,
    )
    .map_err(e2s)?;
    worst.push(("conv2d", err));

    // peephole LSTM over a sequence
    let mut cell = LstmCellParams::init(3, 4, &mut rng);
    randomize(&mut cell, 0.5, &mut rng);
    let xs: Vec<Tensor> = (0..4).map(|_| Tensor::uniform(&[3], 1.0, &mut rng)).collect();
    let err = grad_check(
        |tape, v| {
            let p = cell.bind(&mut Binder::with_leaves(tape, v));
            let seq: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
            let hs = lstm_forward(tape, &seq, &p)?;
            tape.sum_squares(*hs.last().unwrap())
        },
        &tensors(&cell),
        EPS,
    )
    .map_err(e2s)?;
    worst.push(("lstm", err));

    // stacked conv-LSTM layers
    let mut l1 = ConvLstmCellParams::init(3, 4, (3, 3), 1, 2, &mut rng).map_err(e2s)?;
    let mut l2 = ConvLstmCellParams::init(3, 4, (3, 3), 2, 2, &mut rng).map_err(e2s)?;
    randomize(&mut l1, 0.5, &mut rng);
    randomize(&mut l2, 0.5, &mut rng);
    let n1 = tensors(&l1).len();
    let mut params = tensors(&l1);
    params.extend(tensors(&l2));
    let xs: Vec<Tensor> = (0..3).map(|_| Tensor::uniform(&[3, 4, 1], 1.0, &mut rng)).collect();
    let err = grad_check(
        |tape, v| {
            let p1 = l1.bind(&mut Binder::with_leaves(tape, &v[..n1]));
            let p2 = l2.bind(&mut Binder::with_leaves(tape, &v[n1..]));
            let seq: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
            let h1 = convlstm_forward(tape, &seq, &p1)?;
            let h2 = convlstm_forward(tape, &h1, &p2)?;
            tape.sum_squares(*h2.last().unwrap())
        },
        &params,
        EPS,
    )
    .map_err(e2s)?;
    worst.push(("conv-lstm", err));

    // the fused network on a 3x3 grid with two-step windows and one layer per branch
    let mut cfg = FclNetConfig::full(2);
    cfg.demand.layers = 1;
    cfg.demand.channels = 2;
    cfg.ttr = Some(cfg.demand.clone());
    for b in [&mut cfg.calendar, &mut cfg.weather].into_iter().flatten() {
        b.hidden = 3;
    }
    let ds = synthesize(&GridSpec::with_size(3, 3), 24 * 14, 3, Scenario::Default).map_err(e2s)?;
    let data = Prepared::new(&ds, 0.7).map_err(e2s)?;
    let mut net = FclNet::new(cfg.clone(), 3, 3).map_err(e2s)?;
    randomize(&mut net.params, 0.5, &mut rng);
    let s = cfg.sample(&data, 60).map_err(e2s)?;
    let err = grad_check(
        |tape, v| {
            let (vars, bound) = net.params.bind_leaves(tape, v);
            let pred = forward(tape, &vars, &cfg, &s)?;
            let target = tape.constant(Tensor::matrix(3, 3, s.target.clone())?);
            loss(tape, pred, target, &bound, 0.01)
        },
        &tensors(&net.params),
        EPS,
    )
    .map_err(e2s)?;
    worst.push(("fcl-net", err));

    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    ensure(max < 1e-4, format!("max relative error {max:.2e} ({detail})"))?;
    Ok(detail)
}

// 2. conv-LSTM on a 1x1 grid with 1x1 kernels is an LSTM

fn degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut max = 0.0f64;
    for _ in 0..100 {
        let mut lstm = LstmCellParams::zeros(1, 1);
        randomize(&mut lstm, 2.0, &mut rng);
        let mut conv = ConvLstmCellParams::zeros(1, 1, (1, 1), 1, 1).map_err(e2s)?;
        let w = |t: &Tensor| t.reshape(&[1, 1, 1, 1]);
        let p = |t: &Tensor| t.reshape(&[1, 1, 1]);
        conv.w_xi = w(&lstm.w_xi).map_err(e2s)?;
        conv.w_hi = w(&lstm.w_hi).map_err(e2s)?;
        conv.w_xf = w(&lstm.w_xf).map_err(e2s)?;
        conv.w_hf = w(&lstm.w_hf).map_err(e2s)?;
        conv.w_xc = w(&lstm.w_xc).map_err(e2s)?;
        conv.w_hc = w(&lstm.w_hc).map_err(e2s)?;
        conv.w_xo = w(&lstm.w_xo).map_err(e2s)?;
        conv.w_ho = w(&lstm.w_ho).map_err(e2s)?;
        conv.w_ci = p(&lstm.w_ci).map_err(e2s)?;
        conv.w_cf = p(&lstm.w_cf).map_err(e2s)?;
        conv.w_co = p(&lstm.w_co).map_err(e2s)?;
        conv.b_i = lstm.b_i.clone();
        conv.b_f = lstm.b_f.clone();
        conv.b_c = lstm.b_c.clone();
        conv.b_o = lstm.b_o.clone();

        let (x, h, c): (f64, f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
        let mut tape = Tape::new();
        let lv = lstm.bind(&mut Binder::new(&mut tape));
        let cv = conv.bind(&mut Binder::new(&mut tape));
        let vec1 = |tape: &mut Tape, v: f64| tape.constant(Tensor::vector(vec![v]));
        let grid1 = |tape: &mut Tape, v: f64| tape.constant(Tensor::new(vec![1, 1, 1], vec![v]).unwrap());
        let (lx, lh, lc) = (vec1(&mut tape, x), vec1(&mut tape, h), vec1(&mut tape, c));
        let (gx, gh, gc) = (grid1(&mut tape, x), grid1(&mut tape, h), grid1(&mut tape, c));
        let (h1, c1) = lstm_step(&mut tape, lx, lh, lc, &lv).map_err(e2s)?;
        let (h2, c2) = convlstm_step(&mut tape, gx, gh, gc, &cv).map_err(e2s)?;
        max = max.max((tape.value(h1).data()[0] - tape.value(h2).data()[0]).abs());
        max = max.max((tape.value(c1).data()[0] - tape.value(c2).data()[0]).abs());
    }
    ensure(max <= 1e-12, format!("max difference {max:.2e}"))?;
    Ok(format!("100 draws, max difference {max:.1e}"))
}

// 3. brute-force oracles

fn conv_oracle(x: &[f64], [m, n, cin]: [usize; 3], k: &[f64], [kh, kw, cout]: [usize; 3], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n * cout];
    for i in 0..m {
        for j in 0..n {
            for o in 0..cout {
                let mut s = b[o];
                for a in 0..kh {
                    for bb in 0..kw {
                        let r = i as isize + a as isize - (kh / 2) as isize;
                        let c = j as isize + bb as isize - (kw / 2) as isize;
                        if r < 0 || c < 0 || r >= m as isize || c >= n as isize {
                            continue;
                        }
                        for ch in 0..cin {
                            s += x[(r as usize * n + c as usize) * cin + ch] * k[((a * kw + bb) * cin + ch) * cout + o];
                        }
                    }
                }
                out[(i * n + j) * cout + o] = s;
            }
        }
    }
    out
}

fn walk(nodes: &[Node], row: &[f64]) -> f64 {
    let mut i = 0;
    loop {
        match &nodes[i] {
            Node::Leaf(v) => return *v,
            Node::Split { feature, threshold, left, right } => i = if row[*feature] <= *threshold { *left } else { *right },
        }
    }
}

fn tree_mean(trees: &[RegressionTree], row: &[f64]) -> f64 {
    let mut s = 0.0;
    for t in trees {
        s += walk(t.nodes(), row);
    }
    s / trees.len() as f64
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = [0.0f64; 4];
    const N: usize = 25;
    for _ in 0..N {
        // convolution
        let (m, n, cin, cout) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..4), rng.gen_range(1..4));
        let (kh, kw) = (2 * rng.gen_range(0..3) + 1, 2 * rng.gen_range(0..3) + 1);
        let x = Tensor::uniform(&[m, n, cin], 1.0, &mut rng);
        let k = Tensor::uniform(&[kh, kw, cin, cout], 1.0, &mut rng);
        let b = Tensor::uniform(&[cout], 1.0, &mut rng);
        let want = conv_oracle(x.data(), [m, n, cin], k.data(), [kh, kw, cout], b.data());
        let mut tape = Tape::new();
        let (xv, kv, bv) = (tape.constant(x), tape.constant(k), tape.constant(b));
        let y = tape.conv2d(xv, kv, Some(bv)).map_err(e2s)?;
        for (a, w) in tape.value(y).data().iter().zip(&want) {
            worst[0] = worst[0].max((a - w).abs());
        }

        // forest prediction and per-tree out-of-bag error
        let (rows, cols) = (rng.gen_range(30..60), rng.gen_range(2..6));
        let xs: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = xs.iter().map(|r| r[0] * 2.0 - r[1] + 0.3 * rng.gen_range(-1.0..1.0)).collect();
        let fm = FeatureMatrix::from_rows(&xs).map_err(e2s)?;
        let cfg = ForestConfig { trees: 6, tree: TreeConfig { max_depth: 5, min_samples_leaf: 2, max_features: None }, seed: rng.gen() };
        let forest = RandomForest::fit(&fm, &y, &cfg).map_err(e2s)?;
        for r in &xs {
            worst[1] = worst[1].max((forest.predict(r) - tree_mean(&forest.trees, r)).abs());
        }
        for k in 0..forest.trees.len() {
            let oob = &forest.oob[k];
            let got = forest.oob_error(k, &fm, &y);
            if oob.is_empty() {
                ensure(got.is_none(), "out-of-bag error reported for an empty set")?;
                continue;
            }
            let mut s = 0.0;
            for &i in oob {
                let e = y[i] - walk(forest.trees[k].nodes(), &xs[i]);
                s += e * e;
            }
            let want = s / oob.len() as f64;
            worst[2] = worst[2].max((got.ok_or("missing out-of-bag error")? - want).abs());
        }

        // metrics
        let len = rng.gen_range(5..50);
        let truth: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
        let r = metrics(&truth, &pred).map_err(e2s)?;
        let mean = truth.iter().sum::<f64>() / len as f64;
        let (mut sse, mut sst, mut sae) = (0.0, 0.0, 0.0);
        for i in 0..len {
            sse += (truth[i] - pred[i]) * (truth[i] - pred[i]);
            sst += (truth[i] - mean) * (truth[i] - mean);
            sae += (truth[i] - pred[i]).abs();
        }
        worst[3] = worst[3]
            .max((r.rmse - (sse / len as f64).sqrt()).abs())
            .max((r.r2 - (1.0 - sse / sst)).abs())
            .max((r.mae - sae / len as f64).abs());
    }
    let detail = format!("{N} instances each; conv2d {:.1e}, forest {:.1e}, oob {:.1e}, metrics {:.1e}", worst[0], worst[1], worst[2], worst[3]);
    ensure(worst.iter().all(|&w| w <= 1e-12), detail.clone())?;
    Ok(detail)
}

// 4 and 5. networks on synthetic cities

fn network_config() -> FclNetConfig {
    let mut full = FclNetConfig::full(6);
    full.demand.layers = 1;
    full.demand.channels = 6;
    full.ttr = Some(full.demand.clone());
    for b in [&mut full.calendar, &mut full.weather].into_iter().flatten() {
        b.hidden = 8;
    }
    full.train.max_epochs = 60;
    full.train.batch_size = 8;
    full.train.learning_rate = 1e-3;
    full
}

struct Experiment {
    data: Prepared,
    conv: FclNet,
    full: FclNet,
    rmse_conv: f64,
    rmse_full: f64,
    rmse_ma: f64,
}

fn experiment(scenario: Scenario) -> Result<Experiment, String> {
    let ds = synthesize(&GridSpec::default(), 24 * 7 * 6, 1, scenario).map_err(e2s)?;
    let data = Prepared::new(&ds, 0.7).map_err(e2s)?;
    let full_cfg = network_config();
    let conv_cfg = FclNetConfig { ttr: None, calendar: None, weather: None, ..full_cfg.clone() };
    let (conv, _) = FclNet::train(conv_cfg, &data).map_err(e2s)?;
    let (full, _) = FclNet::train_from(full_cfg, &data, Some(&conv)).map_err(e2s)?;
    let rmse = |m: &dyn fclnet::baselines::Forecaster| evaluate(m, &data, Scale::Standardized).map(|r| r.rmse).map_err(e2s);
    let (rmse_conv, rmse_full, rmse_ma) = (rmse(&conv)?, rmse(&full)?, rmse(&MovingAverage::default())?);
    Ok(Experiment { data, conv, full, rmse_conv, rmse_full, rmse_ma })
}

static DEFAULT_RUN: OnceLock<Result<Experiment, String>> = OnceLock::new();

fn default_run() -> Result<&'static Experiment, String> {
    DEFAULT_RUN.get_or_init(|| experiment(Scenario::Default)).as_ref().map_err(Clone::clone)
}

fn exogenous_benefit() -> Outcome {
    let d = default_run()?;
    let gain = 1.0 - d.rmse_full / d.rmse_conv;
    let a = experiment(Scenario::DemandOnly)?;
    let ablation_gain = 1.0 - a.rmse_full / a.rmse_conv;
    let detail = format!(
        "default: fcl-net {:.4}, conv-lstm {:.4}, ma {:.4}, gain {:.1}%; demand-only: fcl-net {:.4}, conv-lstm {:.4}, gain {:.1}%",
        d.rmse_full,
        d.rmse_conv,
        d.rmse_ma,
        100.0 * gain,
        a.rmse_full,
        a.rmse_conv,
        100.0 * ablation_gain
    );
    ensure(gain >= 0.15 && d.rmse_full < d.rmse_ma && d.rmse_conv < d.rmse_ma && ablation_gain < 0.05, detail.clone())?;
    Ok(detail)
}

fn selection_cost() -> Outcome {
    let d = default_run()?;
    let cfg = ForestConfig { trees: 20, seed: 1, ..ForestConfig::default() };
    let forest = SpatialForest::fit(&d.data, importance_windows(&d.full.config), &cfg).map_err(e2s)?;
    let windows = select_features(&forest.importance(), &SelectionRules::default());
    let selected_cfg = windows.apply(&d.full.config);
    let (selected, _) = FclNet::train_from(selected_cfg, &d.data, Some(&d.conv)).map_err(e2s)?;
    let rmse = evaluate(&selected, &d.data, Scale::Standardized).map_err(e2s)?.rmse;
    let loss = rmse / d.rmse_full - 1.0;
    let detail = format!("windows {}; selected {:.4} vs full {:.4} ({:+.1}%)", fclnet::pipeline::windows_text(&windows), rmse, d.rmse_full, 100.0 * loss);
    ensure(loss < 0.05, detail.clone())?;
    Ok(detail)
}

// 6. feature counts

fn feature_counts() -> Outcome {
    let full = count_feature_dimension(7, 7, &CategoryWindows::uniform(8));
    let mut sel = CategoryWindows::uniform(0);
    sel.set(Category::Demand, 4);
    sel.set(Category::Ttr, 8);
    sel.set(Category::Hour, 2);
    sel.set(Category::Temperature, 2);
    let selected = count_feature_dimension(7, 7, &sel);
    ensure(full == 840 && selected == 592, format!("{full} and {selected}"))?;
    Ok(format!("{full} and {selected}"))
}

// 7. importance on a city driven by lag-1 demand and lag-1 travel time rate

fn importance_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (rows, cols, len) = (3, 3, 24 * 7 * 4);
    let grid = GridSpec::with_size(rows, cols);
    let times: Vec<_> = (0..len).map(|t| synthetic_start() + Hours::hours(t as i64)).collect();
    let mut demand = GridSeries::zeros(rows, cols, times.clone());
    let mut ttr = GridSeries::zeros(rows, cols, times);
    for t in 0..len {
        for c in 0..rows * cols {
            ttr.frames[t][c] = rng.gen_range(0.5..1.5);
            let noise: f64 = StandardNormal.sample(&mut rng);
            demand.frames[t][c] = if t == 0 { 20.0 } else { (4.0 + 0.6 * demand.frames[t - 1][c] + 8.0 * ttr.frames[t - 1][c] + noise).max(0.0) };
        }
    }
    let weather = (0..len)
        .map(|_| WeatherObs {
            temperature: rng.gen_range(0.0..30.0),
            humidity: rng.gen_range(20.0..90.0),
            state: rng.gen_range(1..=5),
            wind_speed: rng.gen_range(0.0..10.0),
            visibility: rng.gen_range(1.0..20.0),
        })
        .collect();
    let ds = Dataset { grid, demand, ttr, weather };
    let data = Prepared::new(&ds, 0.7).map_err(e2s)?;
    let forest = SpatialForest::fit(&data, CategoryWindows::uniform(3), &ForestConfig { trees: 40, seed: 7, ..ForestConfig::default() }).map_err(e2s)?;
    let report = forest.importance();
    let ranking = report.ranking();
    let noise = report.category_total(Category::Visibility);
    let total = report.total();
    let detail = format!(
        "top {} {:.1}%, {} {:.1}%; visibility {:.2}%; total {total:.12}",
        ranking[0].0.code(),
        ranking[0].1,
        ranking[1].0.code(),
        ranking[1].1,
        noise
    );
    let top: Vec<Category> = ranking.iter().take(2).map(|r| r.0).collect();
    ensure(
        top.contains(&Category::Demand) && top.contains(&Category::Ttr) && noise < 5.0 && (total - 100.0).abs() <= 1e-9,
        detail.clone(),
    )?;
    Ok(detail)
}

// 8. correlation decays with distance

fn correlation_decay() -> Outcome {
    let ds = synthesize(&GridSpec::default(), 24 * 7 * 6, 1, Scenario::Default).map_err(e2s)?;
    let train = fclnet::data::chronological_split(ds.len(), 0.7).map_err(e2s)?;
    let profile = correlation_profile(&ds.demand.slice(0..train), &ds.ttr.slice(0..train), 1).map_err(e2s)?;
    let first: Vec<f64> = (0..3)
        .map(|b| profile.get(Explanatory::Demand, b, 1).map(|r| r.mean_corr).ok_or(format!("missing bin {b}")))
        .collect::<Result<_, _>>()?;
    let detail = format!("lag-1 demand by distance {:.4}, {:.4}, {:.4}", first[0], first[1], first[2]);
    ensure(first[0] >= first[1] && first[1] >= first[2], detail.clone())?;
    Ok(detail)
}

// 9. nothing fitted on the training slice sees the test slice

fn protocol_integrity() -> Outcome {
    let ds = synthesize(&GridSpec::with_size(4, 4), 24 * 7 * 3, 9, Scenario::Default).map_err(e2s)?;
    let a = Prepared::new(&ds, 0.7).map_err(e2s)?;
    let split = a.train_len;
    let max_train = a.timestamps[..split].iter().max().ok_or("empty training slice")?;
    let min_test = a.timestamps[split..].iter().min().ok_or("empty test slice")?;
    ensure(max_train < min_test, "training and test times overlap")?;

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut perturbed = ds.clone();
    for t in split..perturbed.len() {
        for v in perturbed.demand.frames[t].iter_mut() {
            *v = (*v * rng.gen_range(0.0..5.0)).round();
        }
        for v in perturbed.ttr.frames[t].iter_mut() {
            *v *= rng.gen_range(0.1..10.0);
        }
        let w = &mut perturbed.weather[t];
        w.temperature += rng.gen_range(-30.0..30.0);
        w.visibility *= rng.gen_range(0.0..3.0);
        w.humidity = rng.gen_range(0.0..100.0);
    }
    let b = Prepared::new(&perturbed, 0.7).map_err(e2s)?;
    ensure(a.scaling == b.scaling, "standardization bounds changed")?;
    ensure(a.time_of_day == b.time_of_day && a.hour_class == b.hour_class, "time-of-day classes changed")?;
    ensure(
        a.demand[..split] == b.demand[..split] && a.ttr[..split] == b.ttr[..split] && a.weather[..split] == b.weather[..split] && a.calendar == b.calendar,
        "training inputs changed",
    )?;
    ensure(a.demand[split..] != b.demand[split..], "perturbation had no effect")?;
    Ok(format!("split at {split} of {}; bounds and classes unchanged under test perturbation", a.len()))
}

// 10. a fixed master seed gives the same comparison table

fn determinism() -> Outcome {
    let text = "
seed = 5
scenario = default
buckets = 504
grid.rows = 3
grid.cols = 3
network.demand.window = 3
network.demand.layers = 1
network.demand.channels = 2
network.ttr.window = 3
network.ttr.layers = 1
network.ttr.channels = 2
network.calendar.window = 3
network.calendar.hidden = 4
network.weather.window = 3
network.weather.hidden = 4
network.train.max_epochs = 3
forest.trees = 4
ann.train.max_epochs = 2
lstm.train.max_epochs = 2
";
    let dir = tempfile::tempdir().map_err(e2s)?;
    let mut tables = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = RunConfig::parse(text).map_err(e2s)?;
        cfg.output = dir.path().join(name);
        let summary = run(&cfg).map_err(e2s)?;
        let file = std::fs::read_to_string(summary.dir.join("comparison.csv")).map_err(e2s)?;
        tables.push((summary.table.to_csv_string(), file, summary.table.rows.len()));
    }
    ensure(tables[0] == tables[1], "comparison tables differ")?;
    Ok(format!("{} models, identical tables", tables[0].2))
}

// 11. checkpoints reproduce predictions exactly

fn checkpoint_round_trip() -> Outcome {
    let ds = synthesize(&GridSpec::with_size(3, 3), 24 * 14, 11, Scenario::Default).map_err(e2s)?;
    let data = Prepared::new(&ds, 0.7).map_err(e2s)?;
    let mut cfg = FclNetConfig::full(3);
    cfg.demand.layers = 1;
    cfg.demand.channels = 2;
    cfg.ttr = Some(cfg.demand.clone());
    cfg.train.max_epochs = 3;
    let (model, _) = FclNet::train(cfg, &data).map_err(e2s)?;
    let dir = tempfile::tempdir().map_err(e2s)?;
    let path = dir.path().join("net.ckpt");
    let saved = Checkpoint { model, grid: ds.grid.clone(), scaling: data.scaling.clone() };
    saved.save(&path).map_err(e2s)?;
    let loaded = Checkpoint::load(&path).map_err(e2s)?;
    ensure(loaded == saved, "loaded checkpoint differs")?;
    let mut n = 0;
    for t in data.test_range() {
        ensure(saved.predict(&data, t).map_err(e2s)? == loaded.predict(&data, t).map_err(e2s)?, format!("prediction differs at {t}"))?;
        ensure(
            saved.model.predict_standardized(&data, t).map_err(e2s)? == loaded.model.predict_standardized(&data, t).map_err(e2s)?,
            format!("standardized prediction differs at {t}"),
        )?;
        n += 1;
    }
    Ok(format!("{n} test steps bit-identical"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("gradient correctness", gradients, Duration::from_secs(120)),
        ("conv-lstm degeneracy", degeneracy, Duration::MAX),
        ("oracle equivalence", oracles, Duration::MAX),
        ("exogenous-variable benefit", exogenous_benefit, Duration::from_secs(30 * 60)),
        ("feature-selection cost", selection_cost, Duration::MAX),
        ("feature-count arithmetic", feature_counts, Duration::MAX),
        ("importance sanity", importance_sanity, Duration::MAX),
        ("correlation profile", correlation_decay, Duration::MAX),
        ("protocol integrity", protocol_integrity, Duration::MAX),
        ("run determinism", determinism, Duration::MAX),
        ("checkpoint round trip", checkpoint_round_trip, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > budget => Err(format!("{d}; took {took:.0?}, budget {budget:.0?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {:2} {name}: PASS ({detail}) [{took:.1?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:2} {name}: FAIL ({detail}) [{took:.1?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
