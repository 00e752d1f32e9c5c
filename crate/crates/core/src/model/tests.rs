use super::*;
use crate::data::{synthesize, Dataset, GridSpec, Scenario};
use crate::tensor::grad_check;

fn tiny_config() -> FclNetConfig {
    let mut c = FclNetConfig::full(2);
    c.demand = ConvBranchConfig { window: 2, layers: 1, channels: 2 };
    c.ttr = Some(c.demand.clone());
    for b in [&mut c.calendar, &mut c.weather].into_iter().flatten() {
        b.hidden = 3;
    }
    c
}

fn tiny_data(seed: u64) -> Prepared {
    let ds = synthesize(&GridSpec::with_size(3, 3), 24 * 14, seed, Scenario::Default).unwrap();
    Prepared::new(&ds, 0.7).unwrap()
}

fn set_fusion(p: &mut FclNetParams, values: [f64; 4]) {
    p.demand.fusion = Tensor::filled(&[p.rows, p.cols], values[0]);
    if let Some(b) = &mut p.ttr {
        b.fusion = Tensor::filled(&[p.rows, p.cols], values[1]);
    }
    if let Some(b) = &mut p.calendar {
        b.fusion = Tensor::filled(&[p.rows, p.cols], values[2]);
    }
    if let Some(b) = &mut p.weather {
        b.fusion = Tensor::filled(&[p.rows, p.cols], values[3]);
    }
}

#[test]
fn zero_weights_with_unit_fusion_give_two_everywhere() {
    let cfg = FclNetConfig::full(3);
    let params = FclNetParams::zeros(&cfg, 7, 7, 1.0).unwrap();
    let net = FclNet { config: cfg, params };
    let data = {
        let ds = synthesize(&GridSpec::default(), 24 * 10, 1, Scenario::Default).unwrap();
        Prepared::new(&ds, 0.8).unwrap()
    };
    let out = net.predict_standardized(&data, 50).unwrap();
    assert_eq!(out.len(), 49);
    assert!(out.iter().all(|&v| v == 2.0), "{out:?}");
}

#[test]
fn zeroed_fusion_isolates_the_demand_branch() {
    let data = tiny_data(3);
    let cfg = tiny_config();
    let mut net = FclNet::new(cfg.clone(), 3, 3).unwrap();
    set_fusion(&mut net.params, [1.0, 0.0, 0.0, 0.0]);
    let s = cfg.sample(&data, 40).unwrap();
    let base = net.predict_sample(&s).unwrap();

    let mut alone = FclNet { config: FclNetConfig { ttr: None, calendar: None, weather: None, ..cfg.clone() }, params: net.params.clone() };
    alone.params.ttr = None;
    alone.params.calendar = None;
    alone.params.weather = None;
    let only = alone.predict_sample(&Sample { ttr: vec![], calendar: vec![], weather: vec![], ..s.clone() }).unwrap();
    assert_eq!(base, only);

    let mut perturbed = s.clone();
    perturbed.ttr.iter_mut().flatten().for_each(|v| *v = 1.0 - *v);
    perturbed.calendar.iter_mut().flatten().for_each(|v| *v += 0.37);
    perturbed.weather.iter_mut().flatten().for_each(|v| *v = -*v);
    assert_eq!(net.predict_sample(&perturbed).unwrap(), base);
}

#[test]
fn window_mismatch_is_an_error() {
    let cfg = tiny_config();
    let net = FclNet::new(cfg.clone(), 3, 3).unwrap();
    let mut s = cfg.sample(&tiny_data(1), 30).unwrap();
    s.demand.pop();
    assert!(net.predict_sample(&s).is_err());
}

#[test]
fn loss_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
    let zero = tape.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
    let l = loss(&mut tape, zero, x, &[], 0.0).unwrap();
    assert_eq!(tape.value(l).data(), &[1.0]);
    let l = loss(&mut tape, x, x, &[], 0.0).unwrap();
    assert_eq!(tape.value(l).data(), &[0.0]);
    let w = tape.leaf(Tensor::vector(vec![2.0]));
    let b = tape.leaf(Tensor::vector(vec![5.0]));
    let l = loss(&mut tape, x, x, &[(w, ParamKind::Weight), (b, ParamKind::Bias)], 0.1).unwrap();
    assert!((tape.value(l).data()[0] - 0.4).abs() < 1e-15);
}

#[test]
fn end_to_end_gradient_check() {
    let data = tiny_data(5);
    let cfg = tiny_config();
    let net = FclNet::new(cfg.clone(), 3, 3).unwrap();
    let s = cfg.sample(&data, 60).unwrap();
    let mut leaves = Vec::new();
    net.params.visit("", &mut |_, _, t| leaves.push(t.clone()));
    let err = grad_check(
        |tape, vars| {
            let (v, bound) = net.params.bind_leaves(tape, vars);
            let pred = forward(tape, &v, &cfg, &s)?;
            let target = tape.constant(Tensor::matrix(3, 3, s.target.clone())?);
            loss(tape, pred, target, &bound, 0.01)
        },
        &leaves,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn sample_gradient_matches_bound_tape_order() {
    let data = tiny_data(2);
    let cfg = tiny_config();
    let net = FclNet::new(cfg.clone(), 3, 3).unwrap();
    let s = cfg.sample(&data, 50).unwrap();
    let (err, grad) = net.sample_grad(&s).unwrap();
    assert_eq!(grad.len(), net.params.parameter_count());
    assert!((err - net.sample_error(&s).unwrap()).abs() < 1e-12);
    // one central difference on the demand fusion matrix
    let mut flat = optim::flatten(&net);
    let names: Vec<String> = {
        let mut v = Vec::new();
        net.params.visit("", &mut |n, _, t| v.extend(std::iter::repeat(n.to_string()).take(t.len())));
        v
    };
    let k = names.iter().position(|n| n == "demand.fusion").unwrap();
    let h = 1e-6;
    let mut probe = net.clone();
    flat[k] += h;
    optim::unflatten(&mut probe, &flat);
    let up = probe.sample_error(&s).unwrap();
    flat[k] -= 2.0 * h;
    optim::unflatten(&mut probe, &flat);
    let down = probe.sample_error(&s).unwrap();
    assert!(((up - down) / (2.0 * h) - grad[k]).abs() < 1e-6);
}

fn quick(cfg: &mut FclNetConfig, epochs: usize) {
    cfg.train.max_epochs = epochs;
    cfg.train.patience = epochs;
    cfg.train.batch_size = 16;
}

#[test]
fn training_is_deterministic() {
    let data = tiny_data(7);
    let mut cfg = tiny_config();
    quick(&mut cfg, 2);
    let (a, la) = FclNet::train(cfg.clone(), &data).unwrap();
    let (b, lb) = FclNet::train(cfg, &data).unwrap();
    assert_eq!(la.epochs[0].train_loss, lb.epochs[0].train_loss);
    assert_eq!(a, b);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = tiny_data(7);
    let mut cfg = tiny_config();
    quick(&mut cfg, 2);
    cfg.train.learning_rate = 0.0;
    let init = FclNet::new(cfg, 3, 3).unwrap();
    let mut trained = init.clone();
    trained.fit(&data).unwrap();
    assert_eq!(trained.params, init.params);
}

#[test]
fn pretrained_fusion_starts_from_the_demand_network() {
    let data = tiny_data(7);
    let mut cfg = tiny_config();
    quick(&mut cfg, 3);
    let alone_cfg = FclNetConfig { ttr: None, calendar: None, weather: None, ..cfg.clone() };
    let (alone, alone_log) = FclNet::train(alone_cfg, &data).unwrap();
    let (full, log) = FclNet::train(cfg, &data).unwrap();
    assert!(log.best_validation_rmse <= alone_log.best_validation_rmse);
    if log.best_epoch == 0 {
        assert_eq!(full.params.demand, alone.params.demand);
    }
}

#[test]
fn best_validation_parameters_are_restored() {
    let data = tiny_data(8);
    let mut cfg = tiny_config();
    quick(&mut cfg, 6);
    let (net, log) = FclNet::train(cfg.clone(), &data).unwrap();
    assert!(log.epochs.iter().all(|e| e.train_loss.is_finite() && e.validation_rmse.is_finite()));
    let samples = cfg.samples(&data, cfg.first_target()..data.train_len).unwrap();
    let n_fit = optim::validation_split(samples.len(), cfg.train.validation_fraction);
    let val = optim::rmse(&net, &samples[n_fit..]).unwrap();
    for e in &log.epochs {
        assert!(val <= e.validation_rmse + 1e-12);
    }
    assert_eq!(val, log.best_validation_rmse);
}

#[test]
fn constant_demand_is_learned() {
    let mut ds: Dataset = synthesize(&GridSpec::with_size(3, 3), 24 * 14, 4, Scenario::Default).unwrap();
    ds.demand.frames.iter_mut().flatten().for_each(|v| *v = 5.0);
    let data = Prepared::new(&ds, 0.7).unwrap();
    let mut cfg = tiny_config();
    quick(&mut cfg, 50);
    cfg.train.batch_size = 8;
    let (net, log) = FclNet::train(cfg.clone(), &data).unwrap();
    assert!(log.epochs.len() <= 50);
    let samples = cfg.samples(&data, cfg.first_target()..data.train_len).unwrap();
    let rmse = optim::rmse(&net, &samples).unwrap();
    assert!(rmse < 0.01, "{rmse}");
    let p = net.predict(&data, data.len() - 1).unwrap();
    assert!(p.iter().all(|v| (v - 5.0).abs() < 1e-12));
}

#[test]
fn heavy_penalty_shrinks_weights() {
    let data = tiny_data(9);
    let mut cfg = tiny_config();
    quick(&mut cfg, 3);
    cfg.train.alpha = 0.0;
    let (free, _) = FclNet::train(cfg.clone(), &data).unwrap();
    cfg.train.alpha = 1e3;
    let (tight, _) = FclNet::train(cfg, &data).unwrap();
    assert!(tight.params.weight_norm_sq() < free.params.weight_norm_sq());
}

#[test]
fn prediction_is_inverse_transformed_and_clipped() {
    let data = tiny_data(10);
    let cfg = tiny_config();
    let net = FclNet::new(cfg, 3, 3).unwrap();
    let t = data.len() - 1;
    let z = net.predict_standardized(&data, t).unwrap();
    let y = net.predict(&data, t).unwrap();
    for (zi, yi) in z.iter().zip(&y) {
        assert_eq!(*yi, data.scaling.demand.invert(*zi).max(0.0));
    }
    assert!(net.predict(&data, 0).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let data = tiny_data(11);
    let mut cfg = tiny_config();
    cfg.weather.as_mut().unwrap().inputs = vec![0, 3];
    cfg.train.alpha = 1.0 / 3.0;
    let net = FclNet::new(cfg, 3, 3).unwrap();
    let ck = Checkpoint { model: net, grid: GridSpec::with_size(3, 3), scaling: data.scaling.clone() };
    let mut buf = Vec::new();
    ck.write(&mut buf).unwrap();
    let back = Checkpoint::read(&buf[..]).unwrap();
    assert_eq!(back, ck);
    for t in data.train_len..data.len() {
        let (a, b) = (ck.predict(&data, t).unwrap(), back.predict(&data, t).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn checkpoint_rejects_tampering() {
    let data = tiny_data(11);
    let net = FclNet::new(tiny_config(), 3, 3).unwrap();
    let ck = Checkpoint { model: net, grid: GridSpec::with_size(3, 3), scaling: data.scaling.clone() };
    let mut buf = Vec::new();
    ck.write(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(Checkpoint::read(text.replace("fclnet-checkpoint 1", "other").as_bytes()).is_err());
    let truncated: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    assert!(Checkpoint::read(truncated.as_bytes()).is_err());
}

#[test]
fn config_key_values_round_trip() {
    let mut cfg = FclNetConfig::full(4);
    cfg.ttr = None;
    cfg.weather = Some(SeqBranchConfig { window: 2, layers: 2, hidden: 5, inputs: vec![0] });
    cfg.train.learning_rate = 0.003;
    let mut back = FclNetConfig::default();
    for (k, v) in cfg.to_kv() {
        assert!(back.set(&k, &v).unwrap(), "{k}");
    }
    assert_eq!(back, cfg);
}

#[test]
fn input_dimension_counts() {
    let full = FclNetConfig::full(8);
    assert_eq!(full.input_dimension(7, 7), 8 * 49 * 2 + 8 * 2 + 8 * 5);
    assert_eq!(FclNetConfig::demand_only(8).input_dimension(7, 7), 8 * 49);
}
