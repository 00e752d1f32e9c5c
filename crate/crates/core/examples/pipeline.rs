//! Every stage from one configuration: data, correlation, importance,
//! training, baselines, evaluation and report files.
//!
//! cargo run --release --example pipeline -- [out_dir]

use fclnet::pipeline::{run, windows_text, RunConfig};

const CONFIG: &str = "
seed = 42
scenario = default
buckets = 672
grid.rows = 4
grid.cols = 4
network.demand.window = 4
network.demand.layers = 1
network.demand.channels = 4
network.ttr.window = 4
network.ttr.layers = 1
network.ttr.channels = 4
network.calendar.window = 4
network.weather.window = 4
network.train.max_epochs = 15
forest.trees = 10
baselines = ha,ma,arima
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::parse(CONFIG)?;
    cfg.output = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("fclnet-pipeline"), Into::into);
    let summary = run(&cfg)?;
    print!("{}", summary.table.to_csv_string());
    println!("selected windows {}", windows_text(&summary.selected));
    for entry in std::fs::read_dir(&summary.dir)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
