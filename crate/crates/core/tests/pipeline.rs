//! End-to-end runs through the library pipeline.

use fclnet::eval::read_grid_csv;
use fclnet::pipeline::{cache_key, config_from_manifest, run, RunConfig, CONV_LSTM, FCLNET_FULL, FCLNET_SELECTED};

const TINY: &str = "
seed = 3
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
network.weather.window = 3
network.train.max_epochs = 2
forest.trees = 3
baselines = ha,ma
";

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse(TINY).unwrap();
    cfg.output = tmp.path().to_path_buf();
    let summary = run(&cfg).unwrap();
    for name in ["HA", "MA", CONV_LSTM, FCLNET_FULL, FCLNET_SELECTED] {
        let m = summary.table.get(name).unwrap_or_else(|| panic!("missing {name}"));
        assert!(m.rmse.is_finite() && m.n > 0);
    }
    assert!(summary.table.get("ARIMA").is_none());
    for f in ["comparison.csv", "comparison_demand.csv", "correlation.csv", "importance.csv", "train_logs.csv", "manifest.txt"] {
        assert!(summary.dir.join(f).is_file(), "{f}");
    }
    for f in ["conv_lstm.ckpt", "fclnet_full.ckpt", "fclnet_selected.ckpt"] {
        assert!(summary.dir.join("checkpoints").join(f).is_file(), "{f}");
    }
    let (rows, cols, values) = read_grid_csv(&summary.dir.join("heatmaps/truth_h09.csv")).unwrap();
    assert_eq!((rows, cols, values.len()), (3, 3, 9));
    assert!(summary.dir.join("cache").join(cache_key(&cfg.with_derived_seeds()).unwrap()).is_dir());
}

#[test]
fn manifest_reproduces_the_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse(TINY).unwrap();
    cfg.output = tmp.path().to_path_buf();
    let summary = run(&cfg).unwrap();
    let text = std::fs::read_to_string(summary.dir.join("manifest.txt")).unwrap();
    let back = config_from_manifest(&text).unwrap();
    assert_eq!(back.to_text(), cfg.with_derived_seeds().to_text());
}

#[test]
fn configuration_text_round_trips() {
    let cfg = RunConfig::parse(TINY).unwrap();
    assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    assert!(RunConfig::parse("no_such_key = 1").is_err());
    assert!(RunConfig::parse("split = 1.5").unwrap().validate().is_err());
}
